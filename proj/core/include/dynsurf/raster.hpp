#pragma once

#include <span>

#include "dynsurf/config.hpp"
#include "dynsurf/image.hpp"
#include "dynsurf/warp_field.hpp"

namespace dynsurf {

// Surfel-index image used for projective association. Surfels are rendered
// as unsized points (one pixel each); the grid is the depth resolution times
// `factor`. Depth ties are broken toward the lower surfel index.
struct IndexMap {
  Grid<int32_t> indices;  // -1 = empty
  Grid<double> depth;     // camera-frame z of the stored surfel
  int factor = 1;

  int width() const { return indices.width(); }
  int height() const { return indices.height(); }
};

// Depth-resolution visibility prediction rendered from eligible surfels as
// opaque screen-space disks. vertices/normals/indices describe the winning
// splat per pixel and are mutually consistent.
struct ModelMaps {
  Grid<Vec3> vertices;    // world frame
  Grid<Vec3> normals;     // world frame
  Grid<int32_t> indices;  // -1 = empty
  Grid<double> depth;     // camera-frame z
  Grid<uint8_t> valid;

  int width() const { return vertices.width(); }
  int height() const { return vertices.height(); }
};

// Supersampled-pixel coordinate of a projected full-resolution position.
// Depth pixel u owns the factor x factor block starting at factor * u.
inline int supersample_coord(double full_res_coord, int factor) {
  return int(std::floor(factor * (full_res_coord + 0.5)));
}

IndexMap render_index_map(std::span<const Surfel> live, const Se3& pose,
                          const CameraIntrinsics& k, int factor);

// Renders surfels with confidence > delta_stable; while the model is in the
// bootstrap window after (re)initialization, or has no stable surfel yet,
// recently observed surfels are rendered as well.
ModelMaps render_model_maps(std::span<const Surfel> live, const Se3& pose,
                            const CameraIntrinsics& k, int t_now,
                            int t_last_reinit, const PipelineConfig& cfg);

}  // namespace dynsurf
