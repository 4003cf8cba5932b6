#include "dynsurf/depth_processing.hpp"

#include <cmath>

#include "dynsurf/errors.hpp"

namespace dynsurf {

namespace {
constexpr double kConfidencePhi = 0.6;
const double kMinAbsNz = std::cos(75.0 * M_PI / 180.0);
}  // namespace

void backproject(const DepthImage& depth, const CameraIntrinsics& k,
                 double depth_min, double depth_max,
                 Grid<Vec3>& vertices, Grid<uint8_t>& vertex_valid) {
  if (depth.width() != k.width || depth.height() != k.height)
    throw DimensionMismatch("depth image size does not match intrinsics");

  vertices = Grid<Vec3>(k.width, k.height, Vec3::Zero());
  vertex_valid = Grid<uint8_t>(k.width, k.height, 0);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const uint16_t raw = depth.data(x, y);
      if (raw == 0) continue;
      const double d = raw * 1e-3;
      if (d < depth_min || d > depth_max) continue;
      vertices(x, y) = k.backproject(x, y, d);
      vertex_valid(x, y) = 1;
    }
  }
}

void estimate_normals(const Grid<Vec3>& vertices, const Grid<uint8_t>& vertex_valid,
                      Grid<Vec3>& normals, Grid<uint8_t>& normal_valid) {
  const int w = vertices.width();
  const int h = vertices.height();
  normals = Grid<Vec3>(w, h, Vec3::Zero());
  normal_valid = Grid<uint8_t>(w, h, 0);

  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!vertex_valid(x, y) || !vertex_valid(x - 1, y) || !vertex_valid(x + 1, y) ||
          !vertex_valid(x, y - 1) || !vertex_valid(x, y + 1))
        continue;
      const Vec3 tangent_u = vertices(x + 1, y) - vertices(x - 1, y);
      const Vec3 tangent_v = vertices(x, y + 1) - vertices(x, y - 1);
      Vec3 n = tangent_u.cross(tangent_v);
      const double len = n.norm();
      if (len < 1e-12) continue;
      n /= len;
      if (n.dot(vertices(x, y)) > 0) n = -n;  // face the camera
      normals(x, y) = n;
      normal_valid(x, y) = 1;
    }
  }
}

double compute_confidence(double px, double py, const CameraIntrinsics& k) {
  const double max_radial = k.max_radial_distance();
  const double gamma =
      max_radial > 0 ? std::hypot(px - k.cx, py - k.cy) / max_radial : 0.0;
  return std::exp(-(gamma * gamma) / (2.0 * kConfidencePhi * kConfidencePhi));
}

double compute_radius(double depth_m, double focal_px, double n_z) {
  const double nz = std::max(std::abs(n_z), kMinAbsNz);
  return std::sqrt(2.0) * depth_m / (focal_px * nz);
}

Grid<uint16_t> bilateral_filter_depth(const Grid<uint16_t>& depth,
                                      double sigma_space_px, double sigma_depth_mm) {
  const int w = depth.width();
  const int h = depth.height();
  Grid<uint16_t> out(w, h, 0);
  const double inv_2ss = 1.0 / (2.0 * sigma_space_px * sigma_space_px);
  const double inv_2sd = 1.0 / (2.0 * sigma_depth_mm * sigma_depth_mm);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const uint16_t center = depth(x, y);
      if (center == 0) continue;
      double weight_sum = 0, value_sum = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (!depth.in_bounds(nx, ny)) continue;
          const uint16_t sample = depth(nx, ny);
          if (sample == 0) continue;
          const double dd = double(sample) - double(center);
          const double w_bi =
              std::exp(-(dx * dx + dy * dy) * inv_2ss - dd * dd * inv_2sd);
          weight_sum += w_bi;
          value_sum += w_bi * sample;
        }
      }
      out(x, y) = uint16_t(std::lround(value_sum / weight_sum));
    }
  }
  return out;
}

FrameMaps build_frame_maps(const DepthImage& depth, const CameraIntrinsics& k,
                           const PipelineConfig& cfg) {
  FrameMaps maps;
  maps.intrinsics = k;
  maps.frame_index = depth.frame_index;

  DepthImage filtered;
  const DepthImage* source = &depth;
  if (cfg.bilateral_filter) {
    filtered.data = bilateral_filter_depth(depth.data, cfg.bilateral_sigma_space,
                                           cfg.bilateral_sigma_depth);
    filtered.frame_index = depth.frame_index;
    source = &filtered;
  }

  backproject(*source, k, cfg.depth_min, cfg.depth_max, maps.vertices, maps.vertex_valid);

  Grid<uint8_t> normal_valid;
  estimate_normals(maps.vertices, maps.vertex_valid, maps.normals, normal_valid);

  maps.confidence = Grid<double>(k.width, k.height, 0.0);
  maps.radius = Grid<double>(k.width, k.height, 0.0);
  maps.valid = Grid<uint8_t>(k.width, k.height, 0);
  maps.valid_count = 0;
  const double focal = k.mean_focal();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (!maps.vertex_valid(x, y) || !normal_valid(x, y)) continue;
      maps.valid(x, y) = 1;
      ++maps.valid_count;
      maps.confidence(x, y) = compute_confidence(x, y, k);
      maps.radius(x, y) = compute_radius(maps.vertices(x, y)[2], focal, maps.normals(x, y)[2]);
    }
  }
  return maps;
}

}  // namespace dynsurf
