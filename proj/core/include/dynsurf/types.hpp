#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dynsurf/geometry.hpp"

namespace dynsurf {

struct CameraIntrinsics {
  double fx = 0, fy = 0;   // focal lengths, pixels
  double cx = 0, cy = 0;   // principal point, pixels
  int width = 0, height = 0;

  bool is_valid() const { return fx > 0 && fy > 0 && width > 0 && height > 0; }

  // Pixel-center convention: integer coordinates are pixel centers.
  Vec2 project(const Vec3& p_camera) const {
    return Vec2(fx * p_camera[0] / p_camera[2] + cx,
                fy * p_camera[1] / p_camera[2] + cy);
  }
  Vec3 backproject(double px, double py, double depth_m) const {
    return Vec3(depth_m * (px - cx) / fx, depth_m * (py - cy) / fy, depth_m);
  }
  double mean_focal() const { return 0.5 * (fx + fy); }

  // Distance from the principal point to the farthest image corner,
  // the normalizer for the radial confidence falloff.
  double max_radial_distance() const {
    double best = 0;
    for (int corner = 0; corner < 4; ++corner) {
      const double x = (corner & 1) ? double(width - 1) : 0.0;
      const double y = (corner & 2) ? double(height - 1) : 0.0;
      best = std::max(best, std::hypot(x - cx, y - cy));
    }
    return best;
  }
};

struct Surfel {
  Vec3 position = Vec3::Zero();   // meters
  Vec3 normal = Vec3::UnitZ();    // unit length
  double radius = 0;              // meters
  double confidence = 0;
  int32_t t_init = 0;
  int32_t t_observed = 0;
};

inline constexpr int kMaxSkinNeighbors = 8;

// Per-surfel nearest nodes and Gaussian weights. count == 0 marks a surfel
// with no supporting nodes (warped as identity until removed).
struct SkinningEntry {
  std::array<int32_t, kMaxSkinNeighbors> node_indices{};
  std::array<double, kMaxSkinNeighbors> weights{};
  int count = 0;

  double weight_sum() const {
    double s = 0;
    for (int i = 0; i < count; ++i) s += weights[i];
    return s;
  }
};

using SkinningTable = std::vector<SkinningEntry>;

// Two aligned surfel arrays: reference (undeformed) and live (deformed).
// reference[i], live[i] and skinning[i] describe the same surfel; radius,
// confidence and time stamps are shared and kept identical on both sides.
struct SurfelModel {
  std::vector<Surfel> reference;
  std::vector<Surfel> live;
  SkinningTable skinning;

  size_t size() const { return reference.size(); }
  bool consistent() const {
    return reference.size() == live.size() && live.size() == skinning.size();
  }
};

}  // namespace dynsurf
