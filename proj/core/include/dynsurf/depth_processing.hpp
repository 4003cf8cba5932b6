#pragma once

#include "dynsurf/config.hpp"
#include "dynsurf/image.hpp"

namespace dynsurf {

// Millimeter depth -> camera-frame vertex map. Pixels with depth outside
// [depth_min, depth_max] are marked invalid. Throws DimensionMismatch when
// the image size disagrees with the intrinsics.
void backproject(const DepthImage& depth, const CameraIntrinsics& k,
                 double depth_min, double depth_max,
                 Grid<Vec3>& vertices, Grid<uint8_t>& vertex_valid);

// Central-difference normals oriented toward the camera (n . v < 0).
// A pixel needs all four direct neighbors valid.
void estimate_normals(const Grid<Vec3>& vertices, const Grid<uint8_t>& vertex_valid,
                      Grid<Vec3>& normals, Grid<uint8_t>& normal_valid);

// Radial confidence falloff, c = exp(-gamma^2 / (2 phi^2)) with phi = 0.6 and
// gamma the radial pixel distance normalized by the farthest corner.
double compute_confidence(double px, double py, const CameraIntrinsics& k);

// Surfel radius r = sqrt(2) * d / (f * |n_z|), |n_z| clamped at cos(75 deg).
double compute_radius(double depth_m, double focal_px, double n_z);

// Optional 5x5 bilateral prefilter on millimeter depth.
Grid<uint16_t> bilateral_filter_depth(const Grid<uint16_t>& depth,
                                      double sigma_space_px, double sigma_depth_mm);

FrameMaps build_frame_maps(const DepthImage& depth, const CameraIntrinsics& k,
                           const PipelineConfig& cfg);

}  // namespace dynsurf
