#pragma once

#include <deque>
#include <string>
#include <vector>

#include "dynsurf/config.hpp"
#include "dynsurf/fusion.hpp"
#include "dynsurf/image.hpp"
#include "dynsurf/reinit.hpp"
#include "dynsurf/solver.hpp"
#include "dynsurf/warp_field.hpp"

namespace dynsurf {

struct FrameStats {
  int frame = 0;
  bool skipped = false;
  int valid_pixels = 0;
  int surfel_count = 0;
  int node_count = 0;
  RigidAlignResult rigid;
  SolverReport solver;
  FusionOutcome fusion;
  bool reinit = false;
  int reinit_removed = 0;
  Se3 pose;

  // Wall-clock times; kept out of the metrics log so runs stay
  // byte-comparable, written to the separate timings log instead.
  double depth_ms = 0, rigid_ms = 0, solve_ms = 0, fusion_ms = 0, reinit_ms = 0,
         total_ms = 0;
};

// Frame-by-frame reconstruction state: surfel model, warp field, camera
// pose. Frame 0 initializes; later frames run rigid alignment, the
// non-rigid solver, fusion and the reinitialization check.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg);

  FrameStats process_frame(const DepthImage& depth);

  const PipelineConfig& config() const { return cfg_; }
  const SurfelModel& model() const { return model_; }
  const std::vector<WarpNode>& nodes() const { return nodes_; }
  const Se3& pose() const { return pose_; }
  bool initialized() const { return initialized_; }
  int last_reinit_frame() const { return t_last_reinit_; }

 private:
  PipelineConfig cfg_;
  SurfelModel model_;
  std::vector<WarpNode> nodes_;
  Se3 pose_;
  bool initialized_ = false;
  int t_last_reinit_ = 0;
  std::deque<SolverReport> report_window_;
  std::deque<FusionOutcome> outcome_window_;

  void initialize_from_frame(const FrameMaps& maps);
};

struct PipelineOptions {
  std::string output_dir;
  int ply_every = 10;   // also exports the final model; 0 = final only, -1 = never
  bool log_nodes = false;
  bool debug_dump_maps = false;
};

struct SequenceSummary {
  int frames_processed = 0;
  int frames_skipped = 0;
  int reinit_count = 0;
  int final_surfel_count = 0;
};

// Runs the pipeline over input_dir/frame-%06d.png, writing metrics.jsonl,
// timings.jsonl and PLY exports into the output directory. Throws
// MissingInput when no frames are present; corrupt frames are skipped and
// logged.
SequenceSummary process_sequence(const std::string& input_dir, const PipelineConfig& cfg,
                                 const PipelineOptions& options);

// One metrics line (deterministic fields only).
std::string frame_stats_to_json(const FrameStats& stats);

}  // namespace dynsurf
