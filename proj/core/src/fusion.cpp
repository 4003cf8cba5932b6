#include "dynsurf/fusion.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace dynsurf {

FuseDepthResult fuse_depth(const FrameMaps& frame, SurfelModel& model,
                           const IndexMap& index_map, const Se3& pose, int t_now,
                           const PipelineConfig& cfg) {
  FuseDepthResult result;
  const int factor = index_map.factor;
  std::vector<uint8_t> fused_this_frame(model.size(), 0);

  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!frame.valid(x, y)) continue;
      const Vec3 v_depth = pose.apply(frame.vertices(x, y));
      const Vec3 n_depth = pose.rotate(frame.normals(x, y));

      // Candidates live in the factor x factor block owned by this pixel.
      int32_t best = -1;
      double best_confidence = 0;
      double best_d2 = 0;
      for (int sy = factor * y; sy < factor * (y + 1); ++sy) {
        for (int sx = factor * x; sx < factor * (x + 1); ++sx) {
          const int32_t idx = index_map.indices(sx, sy);
          if (idx < 0) continue;
          const Surfel& s = model.live[idx];
          const double d2 = (s.position - v_depth).squaredNorm();
          if (d2 >= cfg.delta_distance * cfg.delta_distance) continue;
          if (n_depth.dot(s.normal) < cfg.delta_normal) continue;
          const bool better =
              best < 0 || s.confidence > best_confidence ||
              (s.confidence == best_confidence &&
               (d2 < best_d2 || (d2 == best_d2 && idx < best)));
          if (better) {
            best = idx;
            best_confidence = s.confidence;
            best_d2 = d2;
          }
        }
      }

      if (best < 0) {
        AppendCandidate cand;
        cand.surfel.position = v_depth;
        cand.surfel.normal = n_depth;
        cand.surfel.radius = frame.radius(x, y);
        cand.surfel.confidence = frame.confidence(x, y);
        cand.surfel.t_init = t_now;
        cand.surfel.t_observed = t_now;
        cand.px = x;
        cand.py = y;
        result.candidates.push_back(cand);
        continue;
      }
      if (fused_this_frame[best]) continue;  // one writer per surfel per frame
      fused_this_frame[best] = 1;

      Surfel& s = model.live[best];
      const double c_old = s.confidence;
      const double c_depth = frame.confidence(x, y);
      const double c_new = c_old + c_depth;
      s.position = (c_old * s.position + c_depth * v_depth) / c_new;
      s.normal = ((c_old * s.normal + c_depth * n_depth) / c_new).normalized();
      s.radius = (c_old * s.radius + c_depth * frame.radius(x, y)) / c_new;
      s.confidence = c_new;
      s.t_observed = t_now;
      ++result.fused;
    }
  }
  return result;
}

std::optional<SkinningEntry> skin_appended(const Vec3& live_position,
                                           std::span<const Vec3> node_live_positions,
                                           std::span<const WarpNode> nodes,
                                           const PipelineConfig& cfg) {
  const int n = int(nodes.size());
  if (n == 0) return std::nullopt;

  struct Cand {
    double d2;
    int32_t index;
    bool operator<(const Cand& o) const {
      return d2 != o.d2 ? d2 < o.d2 : index < o.index;
    }
  };
  std::vector<Cand> cands;
  cands.reserve(n);
  for (int32_t j = 0; j < n; ++j)
    cands.push_back({(node_live_positions[j] - live_position).squaredNorm(), j});
  const int k = std::min(cfg.knn_k, n);
  std::partial_sort(cands.begin(), cands.begin() + k, cands.end());

  // Keep a neighbor only when its live distance to the closest node stays
  // proportional to the reference distance (ratio within 1 +/- epsilon).
  const int32_t node0 = cands[0].index;
  SkinningEntry entry;
  entry.node_indices[entry.count] = node0;
  entry.weights[entry.count] =
      skinning_weight(live_position, node_live_positions[node0], nodes[node0].sigma);
  ++entry.count;

  for (int m = 1; m < k; ++m) {
    const int32_t j = cands[m].index;
    const double live_pair = (node_live_positions[j] - node_live_positions[node0]).norm();
    const double ref_pair = (nodes[j].position - nodes[node0].position).norm();
    if (ref_pair <= 0) continue;
    const double ratio = live_pair / ref_pair;
    if (ratio <= 1.0 - cfg.epsilon || ratio >= 1.0 + cfg.epsilon) continue;
    entry.node_indices[entry.count] = j;
    entry.weights[entry.count] =
        skinning_weight(live_position, node_live_positions[j], nodes[j].sigma);
    ++entry.count;
  }

  if (entry.weight_sum() < cfg.delta_nn) return std::nullopt;
  return entry;
}

namespace {

// Inverse warp with weights re-evaluated at x over the entry's fixed node
// set; the strain probe below differentiates this map.
std::optional<Vec3> inverse_warp_reweighted(const Vec3& x, const SkinningEntry& entry,
                                            std::span<const WarpNode> nodes,
                                            std::span<const Vec3> node_live_positions) {
  std::array<DualQuaternion, kMaxSkinNeighbors> dqs;
  std::array<double, kMaxSkinNeighbors> weights;
  for (int m = 0; m < entry.count; ++m) {
    const int32_t j = entry.node_indices[m];
    dqs[m] = nodes[j].transform;
    weights[m] = skinning_weight(x, node_live_positions[j], nodes[j].sigma);
  }
  const auto blended = blend_dual_quaternions(std::span(dqs.data(), entry.count),
                                              std::span(weights.data(), entry.count));
  if (!blended) return std::nullopt;
  return blended->to_se3().inverse().apply(x);
}

}  // namespace

std::optional<Mat3> inverse_warp_strain(const Vec3& live_position,
                                        const SkinningEntry& entry,
                                        std::span<const WarpNode> nodes,
                                        std::span<const Vec3> node_live_positions) {
  if (entry.count == 0) return std::nullopt;
  constexpr double kProbeStep = 1e-3;  // 1 mm

  const auto center =
      inverse_warp_reweighted(live_position, entry, nodes, node_live_positions);
  if (!center) return std::nullopt;

  Mat3 strain;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 probe = live_position;
    probe[axis] += kProbeStep;
    const auto shifted = inverse_warp_reweighted(probe, entry, nodes, node_live_positions);
    if (!shifted) return std::nullopt;
    strain.col(axis) = (*shifted - *center) / kProbeStep;
  }
  return strain;
}

bool check_compressive(const Vec3& live_position, const SkinningEntry& entry,
                       std::span<const WarpNode> nodes,
                       std::span<const Vec3> node_live_positions,
                       const PipelineConfig& cfg) {
  const auto strain =
      inverse_warp_strain(live_position, entry, nodes, node_live_positions);
  if (!strain) return false;
  const Eigen::JacobiSVD<Mat3> svd(*strain);
  return svd.singularValues()[0] <= 1.0 + cfg.epsilon;
}

std::vector<uint8_t> remove_surfels(const SurfelModel& model, const IndexMap& index_map,
                                    const Se3& pose, const CameraIntrinsics& k, int t_now,
                                    const PipelineConfig& cfg) {
  std::vector<uint8_t> remove(model.size(), 0);
  const Se3 world_to_camera = pose.inverse();
  const int factor = index_map.factor;

  for (size_t i = 0; i < model.size(); ++i) {
    const Surfel& s = model.live[i];

    if (t_now - s.t_init > cfg.t_low_confid && s.confidence < cfg.delta_stable) {
      remove[i] = 1;
      continue;
    }

    // Duplicate collapse: a nearby stable, higher-confidence surfel on the
    // index map absorbs this one.
    const Vec3 p_cam = world_to_camera.apply(s.position);
    if (p_cam[2] <= 0) continue;
    const Vec2 px = k.project(p_cam);
    const int sx = supersample_coord(px[0], factor);
    const int sy = supersample_coord(px[1], factor);
    for (int dy = -1; dy <= 1 && !remove[i]; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = sx + dx, ny = sy + dy;
        if (!index_map.indices.in_bounds(nx, ny)) continue;
        const int32_t j = index_map.indices(nx, ny);
        if (j < 0 || size_t(j) == i) continue;
        const Surfel& other = model.live[j];
        if (other.confidence <= cfg.delta_stable) continue;
        if (other.confidence <= s.confidence) continue;
        if ((other.position - s.position).norm() >= cfg.delta_distance) continue;
        if (other.normal.dot(s.normal) < cfg.delta_normal) continue;
        remove[i] = 1;
        break;
      }
    }
  }
  return remove;
}

FusionOutcome apply_fusion(SurfelModel& model, const FrameMaps& frame,
                           std::vector<WarpNode>& nodes, const Se3& pose, int t_now,
                           const PipelineConfig& cfg) {
  FusionOutcome outcome;
  const CameraIntrinsics& k = frame.intrinsics;

  const IndexMap index_map =
      render_index_map(model.live, pose, k, cfg.supersample_factor);

  FuseDepthResult fuse = fuse_depth(frame, model, index_map, pose, t_now, cfg);
  outcome.fused = fuse.fused;

  std::vector<Vec3> node_live(nodes.size());
  for (size_t j = 0; j < nodes.size(); ++j) node_live[j] = nodes[j].live_position();

  std::vector<std::pair<Surfel, SkinningEntry>> accepted;
  accepted.reserve(fuse.candidates.size());
  for (const auto& cand : fuse.candidates) {
    const auto entry = skin_appended(cand.surfel.position, node_live, nodes, cfg);
    if (!entry) {
      ++outcome.low_support_rejected;
      continue;
    }
    if (cfg.compressive_check &&
        !check_compressive(cand.surfel.position, *entry, nodes, node_live, cfg)) {
      ++outcome.compressive_rejected;
      continue;
    }
    accepted.emplace_back(cand.surfel, *entry);
  }

  const size_t old_size = model.size();
  for (auto& [surfel, entry] : accepted) {
    model.live.push_back(surfel);
    model.reference.push_back(surfel);  // replaced by the inverse warp below
    model.skinning.push_back(entry);
  }
  outcome.appended = int(accepted.size());

  // Removal uses the pre-append index map; appended surfels are screened
  // against it through their own projection.
  const std::vector<uint8_t> remove_mask =
      remove_surfels(model, index_map, pose, k, t_now, cfg);

  size_t write = 0;
  std::vector<uint8_t> appended_flag(model.size(), 0);
  for (size_t i = old_size; i < model.size(); ++i) appended_flag[i] = 1;
  std::vector<uint8_t> compacted_appended;
  compacted_appended.reserve(model.size());
  for (size_t i = 0; i < model.size(); ++i) {
    if (remove_mask[i]) {
      ++outcome.removed;
      continue;
    }
    if (write != i) {
      model.live[write] = model.live[i];
      model.reference[write] = model.reference[i];
      model.skinning[write] = model.skinning[i];
    }
    compacted_appended.push_back(appended_flag[i]);
    ++write;
  }
  model.live.resize(write);
  model.reference.resize(write);
  model.skinning.resize(write);

  for (size_t i = 0; i < model.size(); ++i) {
    const auto back = inverse_warp_surfel(model.live[i], model.skinning[i], nodes);
    if (back) {
      model.reference[i] = *back;
    } else {
      model.reference[i] = model.live[i];
      ++outcome.degenerate_warps;
    }
  }

  std::vector<Surfel> appended_reference;
  for (size_t i = 0; i < model.size(); ++i)
    if (compacted_appended[i]) appended_reference.push_back(model.reference[i]);

  const int first_new_node = int(nodes.size());
  outcome.new_nodes = extend_warp_field(appended_reference, nodes, cfg);
  if (outcome.new_nodes > 0) {
    update_skinning_incremental(model.skinning, model.reference, nodes, first_new_node,
                                cfg);
  }
  return outcome;
}

}  // namespace dynsurf
