#pragma once

#include <span>
#include <vector>

#include "dynsurf/config.hpp"
#include "dynsurf/fusion.hpp"
#include "dynsurf/solver.hpp"

namespace dynsurf {

// Distress trigger: every frame of the window shows both a large mean
// point-to-plane residual and a large append count; or the periodic schedule
// fires. The windows must hold the most recent frames since the last
// (re)initialization, oldest first.
bool should_reinitialize(std::span<const SolverReport> reports,
                         std::span<const FusionOutcome> outcomes, int t_now,
                         int t_last_reinit, const PipelineConfig& cfg);

struct ReinitResult {
  int removed = 0;
  int survivors = 0;
};

// Discards live surfels that should be visible but are contradicted by the
// depth frame (occluded surfels are kept), resets the reference array to the
// cleaned live array, and re-initializes the warp field on it. Throws
// EmptyGeometry when nothing survives.
ReinitResult clean_and_reset(SurfelModel& model, std::vector<WarpNode>& nodes,
                             const FrameMaps& frame, const Se3& pose,
                             const PipelineConfig& cfg);

}  // namespace dynsurf
