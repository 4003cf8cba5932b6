#include "dynsurf/raster.hpp"

#include <cmath>
#include <limits>

namespace dynsurf {

IndexMap render_index_map(std::span<const Surfel> live, const Se3& pose,
                          const CameraIntrinsics& k, int factor) {
  IndexMap map;
  map.factor = factor;
  map.indices = Grid<int32_t>(k.width * factor, k.height * factor, -1);
  map.depth = Grid<double>(k.width * factor, k.height * factor,
                           std::numeric_limits<double>::infinity());

  const Se3 world_to_camera = pose.inverse();
  for (size_t i = 0; i < live.size(); ++i) {
    const Vec3 p_cam = world_to_camera.apply(live[i].position);
    if (p_cam[2] <= 0) continue;
    const Vec2 px = k.project(p_cam);
    const int sx = supersample_coord(px[0], factor);
    const int sy = supersample_coord(px[1], factor);
    if (!map.indices.in_bounds(sx, sy)) continue;
    if (p_cam[2] < map.depth(sx, sy)) {
      map.depth(sx, sy) = p_cam[2];
      map.indices(sx, sy) = int32_t(i);
    }
  }
  return map;
}

ModelMaps render_model_maps(std::span<const Surfel> live, const Se3& pose,
                            const CameraIntrinsics& k, int t_now,
                            int t_last_reinit, const PipelineConfig& cfg) {
  ModelMaps maps;
  maps.vertices = Grid<Vec3>(k.width, k.height, Vec3::Zero());
  maps.normals = Grid<Vec3>(k.width, k.height, Vec3::Zero());
  maps.indices = Grid<int32_t>(k.width, k.height, -1);
  maps.depth = Grid<double>(k.width, k.height, std::numeric_limits<double>::infinity());
  maps.valid = Grid<uint8_t>(k.width, k.height, 0);

  bool any_stable = false;
  for (const auto& s : live) {
    if (s.confidence > cfg.delta_stable) {
      any_stable = true;
      break;
    }
  }
  const bool bootstrap = (t_now - t_last_reinit <= cfg.delta_recent) || !any_stable;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Point channel: the surfel whose center projects to the pixel, nearest
  // center winning. It takes priority over the splat channel, which only
  // fills pixels no center lands on; occlusion between surfaces is resolved
  // by the point z-test since both surfaces carry roughly one center per
  // covered pixel.
  Grid<double> splat_depth(k.width, k.height, kInf);
  Grid<int32_t> splat_index(k.width, k.height, -1);
  Grid<double> point_depth(k.width, k.height, kInf);
  Grid<int32_t> point_index(k.width, k.height, -1);

  const Se3 world_to_camera = pose.inverse();
  const double focal = k.mean_focal();
  for (size_t i = 0; i < live.size(); ++i) {
    const Surfel& s = live[i];
    const bool stable = s.confidence > cfg.delta_stable;
    const bool recent = (t_now - s.t_observed) <= cfg.delta_recent;
    if (!stable && !(bootstrap && recent)) continue;

    const Vec3 p_cam = world_to_camera.apply(s.position);
    if (p_cam[2] <= 0) continue;
    const Vec3 n_cam = world_to_camera.rotate(s.normal);
    if (n_cam.dot(p_cam) >= 0) continue;  // back-facing

    const Vec2 px = k.project(p_cam);
    const int center_x = int(std::lround(px[0]));
    const int center_y = int(std::lround(px[1]));
    if (point_depth.in_bounds(center_x, center_y) &&
        p_cam[2] < point_depth(center_x, center_y)) {
      point_depth(center_x, center_y) = p_cam[2];
      point_index(center_x, center_y) = int32_t(i);
    }

    // Opaque constant-depth disk.
    const double radius_px = s.radius * focal / p_cam[2];
    const double r2 = radius_px * radius_px;
    auto write_splat = [&](int x, int y) {
      if (!splat_depth.in_bounds(x, y)) return;
      if (p_cam[2] < splat_depth(x, y)) {
        splat_depth(x, y) = p_cam[2];
        splat_index(x, y) = int32_t(i);
      }
    };
    for (int y = int(std::ceil(px[1] - radius_px)); y <= int(std::floor(px[1] + radius_px)); ++y) {
      for (int x = int(std::ceil(px[0] - radius_px)); x <= int(std::floor(px[0] + radius_px)); ++x) {
        const double dx = x - px[0];
        const double dy = y - px[1];
        if (dx * dx + dy * dy <= r2) write_splat(x, y);
      }
    }
    write_splat(center_x, center_y);  // sub-pixel splats keep their own pixel
  }

  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      int32_t winner = point_index(x, y);
      double depth = point_depth(x, y);
      if (winner < 0) {
        winner = splat_index(x, y);
        depth = splat_depth(x, y);
      }
      if (winner < 0) continue;
      maps.indices(x, y) = winner;
      maps.vertices(x, y) = live[winner].position;
      maps.normals(x, y) = live[winner].normal;
      maps.depth(x, y) = depth;
      maps.valid(x, y) = 1;
    }
  }
  return maps;
}

}  // namespace dynsurf
