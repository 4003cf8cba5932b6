#include "dynsurf/warp_field.hpp"

#include <algorithm>
#include <array>

#include "dynsurf/errors.hpp"
#include "dynsurf/spatial_grid.hpp"

namespace dynsurf {

std::optional<DualQuaternion> blend_skinning_entry(const SkinningEntry& entry,
                                                   std::span<const WarpNode> nodes) {
  if (entry.count == 0) return std::nullopt;
  std::array<DualQuaternion, kMaxSkinNeighbors> dqs;
  std::array<double, kMaxSkinNeighbors> weights;
  for (int i = 0; i < entry.count; ++i) {
    dqs[i] = nodes[entry.node_indices[i]].transform;
    weights[i] = entry.weights[i];
  }
  return blend_dual_quaternions(std::span(dqs.data(), entry.count),
                                std::span(weights.data(), entry.count));
}

SkinningEntry skin_position(const Vec3& position, std::span<const WarpNode> nodes,
                            const PipelineConfig& cfg) {
  // Per-call grid construction; callers skinning many surfels use the bulk
  // path in init_warp_field instead.
  VoxelGrid grid(cfg.node_sigma);
  for (const auto& node : nodes) grid.add_point(node.position);
  const auto neighbors = grid.knn(position, cfg.knn_k);

  SkinningEntry entry;
  for (const auto& nb : neighbors) {
    entry.node_indices[entry.count] = nb.index;
    entry.weights[entry.count] =
        skinning_weight(position, nodes[nb.index].position, nodes[nb.index].sigma);
    ++entry.count;
  }
  return entry;
}

void compute_node_edges(std::vector<WarpNode>& nodes, int node_neighbor_k) {
  const int n = int(nodes.size());
  for (int j = 0; j < n; ++j) {
    std::vector<VoxelGrid::Neighbor> candidates;
    candidates.reserve(n - 1);
    for (int i = 0; i < n; ++i) {
      if (i == j) continue;
      candidates.push_back({(nodes[i].position - nodes[j].position).squaredNorm(), i});
    }
    const int k = std::min<int>(node_neighbor_k, int(candidates.size()));
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
    nodes[j].neighbors.clear();
    for (int i = 0; i < k; ++i) nodes[j].neighbors.push_back(candidates[i].index);
  }
}

namespace {

SkinningTable skin_positions_bulk(std::span<const Surfel> surfels,
                                  std::span<const WarpNode> nodes,
                                  const PipelineConfig& cfg) {
  VoxelGrid grid(cfg.node_sigma);
  grid.reserve(nodes.size());
  for (const auto& node : nodes) grid.add_point(node.position);

  SkinningTable table(surfels.size());
  for (size_t i = 0; i < surfels.size(); ++i) {
    const auto neighbors = grid.knn(surfels[i].position, cfg.knn_k);
    SkinningEntry& entry = table[i];
    for (const auto& nb : neighbors) {
      entry.node_indices[entry.count] = nb.index;
      entry.weights[entry.count] = skinning_weight(
          surfels[i].position, nodes[nb.index].position, nodes[nb.index].sigma);
      ++entry.count;
    }
  }
  return table;
}

}  // namespace

std::pair<std::vector<WarpNode>, SkinningTable> init_warp_field(
    std::span<const Surfel> reference_surfels, const PipelineConfig& cfg) {
  if (reference_surfels.empty())
    throw EmptyGeometry("init_warp_field: no reference surfels");

  std::vector<WarpNode> nodes;
  VoxelGrid accepted(cfg.node_sigma);
  for (const auto& surfel : reference_surfels) {
    if (accepted.has_point_within(surfel.position, cfg.node_sigma)) continue;
    accepted.add_point(surfel.position);
    WarpNode node;
    node.position = surfel.position;
    node.sigma = cfg.node_sigma;
    nodes.push_back(std::move(node));
  }

  compute_node_edges(nodes, cfg.node_neighbor_k);
  SkinningTable table = skin_positions_bulk(reference_surfels, nodes, cfg);
  return {std::move(nodes), std::move(table)};
}

std::optional<Surfel> forward_warp_surfel(const Surfel& reference,
                                          const SkinningEntry& entry,
                                          std::span<const WarpNode> nodes) {
  const auto blended = blend_skinning_entry(entry, nodes);
  if (!blended) return std::nullopt;
  const Se3 warp = blended->to_se3();
  Surfel live = reference;
  live.position = warp.apply(reference.position);
  live.normal = warp.rotate(reference.normal);
  return live;
}

std::optional<Surfel> inverse_warp_surfel(const Surfel& live,
                                          const SkinningEntry& entry,
                                          std::span<const WarpNode> nodes) {
  const auto blended = blend_skinning_entry(entry, nodes);
  if (!blended) return std::nullopt;
  const Se3 inverse = blended->to_se3().inverse();
  Surfel reference = live;
  reference.position = inverse.apply(live.position);
  reference.normal = inverse.rotate(live.normal);
  return reference;
}

int forward_warp(SurfelModel& model, std::span<const WarpNode> nodes) {
  int degenerate = 0;
  for (size_t i = 0; i < model.size(); ++i) {
    const auto warped = forward_warp_surfel(model.reference[i], model.skinning[i], nodes);
    if (warped) {
      model.live[i] = *warped;
    } else {
      model.live[i] = model.reference[i];
      ++degenerate;
    }
  }
  return degenerate;
}

int extend_warp_field(std::span<const Surfel> appended_reference_surfels,
                      std::vector<WarpNode>& nodes, const PipelineConfig& cfg) {
  if (appended_reference_surfels.empty()) return 0;

  const int existing_count = int(nodes.size());
  VoxelGrid occupancy(cfg.node_sigma);
  occupancy.reserve(nodes.size());
  for (const auto& node : nodes) occupancy.add_point(node.position);

  VoxelGrid existing_only = occupancy;

  int appended = 0;
  for (const auto& surfel : appended_reference_surfels) {
    if (occupancy.has_point_within(surfel.position, cfg.node_sigma)) continue;
    occupancy.add_point(surfel.position);

    WarpNode node;
    node.position = surfel.position;
    node.sigma = cfg.node_sigma;
    // Seed the transform from nearby pre-existing nodes so extension does
    // not introduce a warp discontinuity.
    if (existing_count > 0) {
      const auto neighbors = existing_only.knn(surfel.position, cfg.knn_k);
      std::array<DualQuaternion, kMaxSkinNeighbors> dqs;
      std::array<double, kMaxSkinNeighbors> weights;
      int count = 0;
      for (const auto& nb : neighbors) {
        dqs[count] = nodes[nb.index].transform;
        weights[count] = skinning_weight(surfel.position, nodes[nb.index].position,
                                         nodes[nb.index].sigma);
        ++count;
      }
      const auto blended = blend_dual_quaternions(std::span(dqs.data(), count),
                                                  std::span(weights.data(), count));
      if (blended) node.transform = *blended;
    }
    nodes.push_back(std::move(node));
    ++appended;
  }

  if (appended > 0) compute_node_edges(nodes, cfg.node_neighbor_k);
  return appended;
}

void update_skinning_incremental(SkinningTable& table,
                                 std::span<const Surfel> reference_surfels,
                                 std::span<const WarpNode> nodes,
                                 int first_new_node, const PipelineConfig& cfg) {
  const int total_nodes = int(nodes.size());
  if (first_new_node >= total_nodes) return;

  struct Slot {
    double d2;
    int32_t index;
    double weight;
    bool operator<(const Slot& o) const {
      return d2 != o.d2 ? d2 < o.d2 : index < o.index;
    }
  };

  for (size_t i = 0; i < table.size(); ++i) {
    SkinningEntry& entry = table[i];
    const Vec3& pos = reference_surfels[i].position;

    std::array<Slot, kMaxSkinNeighbors> slots;
    int count = entry.count;
    for (int m = 0; m < count; ++m) {
      const int32_t idx = entry.node_indices[m];
      slots[m] = Slot{(nodes[idx].position - pos).squaredNorm(), idx, entry.weights[m]};
    }
    std::sort(slots.begin(), slots.begin() + count);

    bool changed = false;
    for (int32_t j = first_new_node; j < total_nodes; ++j) {
      const Slot cand{(nodes[j].position - pos).squaredNorm(), j,
                      skinning_weight(pos, nodes[j].position, nodes[j].sigma)};
      if (count < cfg.knn_k) {
        slots[count++] = cand;
        std::sort(slots.begin(), slots.begin() + count);
        changed = true;
      } else if (cand < slots[count - 1]) {
        slots[count - 1] = cand;
        std::sort(slots.begin(), slots.begin() + count);
        changed = true;
      }
    }
    if (!changed) continue;

    entry.count = count;
    for (int m = 0; m < count; ++m) {
      entry.node_indices[m] = slots[m].index;
      entry.weights[m] = slots[m].weight;
    }
  }
}

}  // namespace dynsurf
