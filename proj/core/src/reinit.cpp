#include "dynsurf/reinit.hpp"

#include <cmath>

#include "dynsurf/errors.hpp"

namespace dynsurf {

bool should_reinitialize(std::span<const SolverReport> reports,
                         std::span<const FusionOutcome> outcomes, int t_now,
                         int t_last_reinit, const PipelineConfig& cfg) {
  if (cfg.periodic_reinit_interval > 0 &&
      t_now - t_last_reinit >= cfg.periodic_reinit_interval)
    return true;

  if (int(reports.size()) < cfg.reinit_window || int(outcomes.size()) < cfg.reinit_window)
    return false;
  const size_t n = reports.size();
  for (int i = 0; i < cfg.reinit_window; ++i) {
    const auto& report = reports[n - 1 - i];
    const auto& outcome = outcomes[outcomes.size() - 1 - i];
    if (report.mean_residual <= cfg.reinit_energy_threshold) return false;
    if (outcome.appended <= cfg.reinit_append_threshold) return false;
  }
  return true;
}

ReinitResult clean_and_reset(SurfelModel& model, std::vector<WarpNode>& nodes,
                             const FrameMaps& frame, const Se3& pose,
                             const PipelineConfig& cfg) {
  const CameraIntrinsics& k = frame.intrinsics;
  const Se3 world_to_camera = pose.inverse();
  const double gate = cfg.delta_distance_reinit;

  std::vector<Surfel> survivors;
  survivors.reserve(model.size());
  ReinitResult result;

  for (size_t i = 0; i < model.size(); ++i) {
    const Surfel& s = model.live[i];
    const Vec3 p_cam = world_to_camera.apply(s.position);
    bool keep = true;

    // Only surfels that should be visible from this view can be
    // contradicted: in front of the camera, on the image, facing it.
    if (p_cam[2] > 0 && world_to_camera.rotate(s.normal).dot(p_cam) < 0) {
      const Vec2 px = k.project(p_cam);
      const int u = int(std::lround(px[0]));
      const int v = int(std::lround(px[1]));
      if (u >= 0 && u < k.width && v >= 0 && v < k.height) {
        bool corresponded = false;
        bool occluded = false;
        bool any_measurement = false;
        for (int dy = -1; dy <= 2 && !corresponded; ++dy) {
          for (int dx = -1; dx <= 2; ++dx) {
            const int x = u + dx, y = v + dy;
            if (!frame.vertex_valid.in_bounds(x, y) || !frame.vertex_valid(x, y)) continue;
            any_measurement = true;
            if (frame.vertices(x, y)[2] < p_cam[2] - gate) occluded = true;
            if (!frame.valid(x, y)) continue;
            const Vec3 v_depth = pose.apply(frame.vertices(x, y));
            if ((v_depth - s.position).norm() >= gate) continue;
            if (pose.rotate(frame.normals(x, y)).dot(s.normal) < cfg.delta_normal) continue;
            corresponded = true;
            break;
          }
        }
        keep = corresponded || occluded || !any_measurement;
      }
    }

    if (keep) {
      survivors.push_back(s);
    } else {
      ++result.removed;
    }
  }

  if (survivors.empty()) throw EmptyGeometry("clean_and_reset: no surfel survived");

  model.live = survivors;
  model.reference = std::move(survivors);
  result.survivors = int(model.live.size());

  auto [new_nodes, skinning] = init_warp_field(model.reference, cfg);
  nodes = std::move(new_nodes);
  model.skinning = std::move(skinning);
  return result;
}

}  // namespace dynsurf
