#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dynsurf/config.hpp"
#include "dynsurf/types.hpp"

namespace dynsurf {

// One deformation-graph node. `position` is fixed in the reference frame;
// `transform` carries the node's SE(3) value as a unit dual quaternion.
struct WarpNode {
  Vec3 position = Vec3::Zero();
  double sigma = 0.025;
  DualQuaternion transform;
  std::vector<int32_t> neighbors;

  Vec3 live_position() const { return transform.apply_point(position); }
};

// Blend of the entry's node transforms with its stored weights.
std::optional<DualQuaternion> blend_skinning_entry(const SkinningEntry& entry,
                                                   std::span<const WarpNode> nodes);

// Greedy sigma-spaced subsampling of the reference surfels into nodes
// (identity transforms), node edges, and per-surfel skinning. Throws
// EmptyGeometry on an empty surfel array.
std::pair<std::vector<WarpNode>, SkinningTable> init_warp_field(
    std::span<const Surfel> reference_surfels, const PipelineConfig& cfg);

// knn_k nearest nodes with Gaussian weights for one reference position.
SkinningEntry skin_position(const Vec3& position, std::span<const WarpNode> nodes,
                            const PipelineConfig& cfg);

// Rebuilds every node's neighbor list as its node_neighbor_k nearest nodes.
void compute_node_edges(std::vector<WarpNode>& nodes, int node_neighbor_k);

// Warps one reference surfel to the live frame; radius, confidence and time
// stamps are copied unchanged. nullopt when the blend is degenerate or the
// entry is empty.
std::optional<Surfel> forward_warp_surfel(const Surfel& reference,
                                          const SkinningEntry& entry,
                                          std::span<const WarpNode> nodes);

// Maps a live surfel back through the inverse of the blended transform.
std::optional<Surfel> inverse_warp_surfel(const Surfel& live,
                                          const SkinningEntry& entry,
                                          std::span<const WarpNode> nodes);

// Rewrites model.live from model.reference under the current node
// transforms. Surfels with a degenerate blend keep their reference pose;
// returns how many did.
int forward_warp(SurfelModel& model, std::span<const WarpNode> nodes);

// Appends nodes covering the given reference surfels (greedy, spacing
// node_sigma against existing and new nodes). New node transforms are
// blended from their knn_k nearest pre-existing nodes, identity when the
// blend degenerates. Recomputes all edges when anything was added. Returns
// the number of appended nodes.
int extend_warp_field(std::span<const Surfel> appended_reference_surfels,
                      std::vector<WarpNode>& nodes, const PipelineConfig& cfg);

// Brute-force comparison of every surfel's neighbor set against the nodes
// appended at indices >= first_new_node. Displaced or inserted entries get
// Gaussian weights from reference-frame distances; surviving entries keep
// their stored weights.
void update_skinning_incremental(SkinningTable& table,
                                 std::span<const Surfel> reference_surfels,
                                 std::span<const WarpNode> nodes,
                                 int first_new_node, const PipelineConfig& cfg);

}  // namespace dynsurf
