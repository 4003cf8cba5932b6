#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dynsurf/config.hpp"
#include "dynsurf/image.hpp"
#include "dynsurf/raster.hpp"
#include "dynsurf/warp_field.hpp"

namespace dynsurf {

struct FusionOutcome {
  int fused = 0;
  int appended = 0;
  int removed = 0;
  int compressive_rejected = 0;
  int low_support_rejected = 0;
  int new_nodes = 0;
  int degenerate_warps = 0;
};

struct AppendCandidate {
  Surfel surfel;  // world frame, live
  int px = 0, py = 0;
};

struct FuseDepthResult {
  int fused = 0;
  std::vector<AppendCandidate> candidates;
};

// Per-pixel confidence-weighted fusion of the depth frame into the live
// surfels through the supersampled index map. Pixels without a gated
// correspondence emit append candidates. Updates model.live in place.
FuseDepthResult fuse_depth(const FrameMaps& frame, SurfelModel& model,
                           const IndexMap& index_map, const Se3& pose, int t_now,
                           const PipelineConfig& cfg);

// Live-frame skinning of an append candidate with the pairwise-consistency
// ratio test against the closest node. nullopt when the surviving weight sum
// falls below delta_nn (low node support).
std::optional<SkinningEntry> skin_appended(const Vec3& live_position,
                                           std::span<const Vec3> node_live_positions,
                                           std::span<const WarpNode> nodes,
                                           const PipelineConfig& cfg);

// Finite-difference strain of the inverse warp around a live position: the
// entry's node set is held fixed while the Gaussian weights are re-evaluated
// at the probe positions (1 mm forward differences). nullopt when a probe
// blend degenerates.
std::optional<Mat3> inverse_warp_strain(const Vec3& live_position,
                                        const SkinningEntry& entry,
                                        std::span<const WarpNode> nodes,
                                        std::span<const Vec3> node_live_positions);

// Returns false (discard) when the strain's largest singular value exceeds
// 1 + epsilon, or when the strain is undefined.
bool check_compressive(const Vec3& live_position, const SkinningEntry& entry,
                       std::span<const WarpNode> nodes,
                       std::span<const Vec3> node_live_positions,
                       const PipelineConfig& cfg);

// Removal mask (1 = remove): surfels unstable past t_low_confid, and
// duplicates collapsed onto a nearby stable higher-confidence surfel found
// through the index map.
std::vector<uint8_t> remove_surfels(const SurfelModel& model, const IndexMap& index_map,
                                    const Se3& pose, const CameraIntrinsics& k, int t_now,
                                    const PipelineConfig& cfg);

// Full per-frame geometry update: fuse, screen and append candidates, remove
// bad surfels, compact, rebuild the reference array by inverse warping, then
// extend the warp field over the appended reference surfels and refresh the
// skinning against the new nodes.
FusionOutcome apply_fusion(SurfelModel& model, const FrameMaps& frame,
                           std::vector<WarpNode>& nodes, const Se3& pose, int t_now,
                           const PipelineConfig& cfg);

}  // namespace dynsurf
