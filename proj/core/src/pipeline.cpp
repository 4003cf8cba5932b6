#include "dynsurf/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include <json.hpp>

#include "dynsurf/depth_processing.hpp"
#include "dynsurf/errors.hpp"
#include "dynsurf/ply_io.hpp"
#include "dynsurf/png_io.hpp"
#include "dynsurf/raster.hpp"

namespace dynsurf {

namespace {

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start_)
        .count();
  }
  void restart() { start_ = std::chrono::steady_clock::now(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

Pipeline::Pipeline(const PipelineConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (!cfg_.intrinsics.is_valid()) throw ConfigError("pipeline: invalid intrinsics");
}

void Pipeline::initialize_from_frame(const FrameMaps& maps) {
  std::vector<Surfel> surfels;
  surfels.reserve(maps.valid_count);
  for (int y = 0; y < maps.height(); ++y) {
    for (int x = 0; x < maps.width(); ++x) {
      if (!maps.valid(x, y)) continue;
      Surfel s;
      s.position = pose_.apply(maps.vertices(x, y));
      s.normal = pose_.rotate(maps.normals(x, y));
      s.radius = maps.radius(x, y);
      s.confidence = maps.confidence(x, y);
      s.t_init = maps.frame_index;
      s.t_observed = maps.frame_index;
      surfels.push_back(s);
    }
  }
  if (surfels.empty())
    throw EmptyGeometry("initialization frame has no valid depth pixels");

  model_ = SurfelModel{};
  model_.reference = surfels;
  model_.live = std::move(surfels);
  auto [nodes, skinning] = init_warp_field(model_.reference, cfg_);
  nodes_ = std::move(nodes);
  model_.skinning = std::move(skinning);

  t_last_reinit_ = maps.frame_index;
  report_window_.clear();
  outcome_window_.clear();
  initialized_ = true;
}

FrameStats Pipeline::process_frame(const DepthImage& depth) {
  FrameStats stats;
  stats.frame = depth.frame_index;
  const StopWatch total;

  StopWatch phase;
  const FrameMaps maps = build_frame_maps(depth, cfg_.intrinsics, cfg_);
  stats.depth_ms = phase.ms();
  stats.valid_pixels = maps.valid_count;

  if (!initialized_) {
    pose_ = Se3::identity();
    initialize_from_frame(maps);
    stats.surfel_count = int(model_.size());
    stats.node_count = int(nodes_.size());
    stats.pose = pose_;
    stats.total_ms = total.ms();
    return stats;
  }

  const int t_now = depth.frame_index;

  phase.restart();
  const ModelMaps model_maps =
      render_model_maps(model_.live, pose_, cfg_.intrinsics, t_now, t_last_reinit_, cfg_);
  stats.rigid = rigid_align(maps, model_maps, pose_);
  pose_ = stats.rigid.pose;
  stats.rigid_ms = phase.ms();

  phase.restart();
  stats.solver = solve_nonrigid(nodes_, model_, maps, pose_, t_now, t_last_reinit_, cfg_);
  stats.solve_ms = phase.ms();

  phase.restart();
  forward_warp(model_, nodes_);
  stats.fusion = apply_fusion(model_, maps, nodes_, pose_, t_now, cfg_);
  stats.fusion_ms = phase.ms();

  report_window_.push_back(stats.solver);
  outcome_window_.push_back(stats.fusion);
  while (int(report_window_.size()) > cfg_.reinit_window) report_window_.pop_front();
  while (int(outcome_window_.size()) > cfg_.reinit_window) outcome_window_.pop_front();

  phase.restart();
  const std::vector<SolverReport> reports(report_window_.begin(), report_window_.end());
  const std::vector<FusionOutcome> outcomes(outcome_window_.begin(), outcome_window_.end());
  if (should_reinitialize(reports, outcomes, t_now, t_last_reinit_, cfg_)) {
    stats.reinit = true;
    try {
      const ReinitResult result = clean_and_reset(model_, nodes_, maps, pose_, cfg_);
      stats.reinit_removed = result.removed;
    } catch (const EmptyGeometry&) {
      // Nothing survived the cleaning; fall back to a fresh initialization
      // from the current frame.
      stats.reinit_removed = int(model_.size());
      initialize_from_frame(maps);
    }
    t_last_reinit_ = t_now;
    report_window_.clear();
    outcome_window_.clear();
  }
  stats.reinit_ms = phase.ms();

  stats.surfel_count = int(model_.size());
  stats.node_count = int(nodes_.size());
  stats.pose = pose_;
  stats.total_ms = total.ms();
  return stats;
}

std::string frame_stats_to_json(const FrameStats& stats) {
  nlohmann::ordered_json line;
  line["frame"] = stats.frame;
  line["skipped"] = stats.skipped;
  if (stats.skipped) return line.dump();

  line["valid_pixels"] = stats.valid_pixels;
  line["surfel_count"] = stats.surfel_count;
  line["node_count"] = stats.node_count;
  line["fused"] = stats.fusion.fused;
  line["appended"] = stats.fusion.appended;
  line["removed"] = stats.fusion.removed;
  line["compressive_rejected"] = stats.fusion.compressive_rejected;
  line["low_support_rejected"] = stats.fusion.low_support_rejected;
  line["new_nodes"] = stats.fusion.new_nodes;
  line["degenerate_warps"] = stats.fusion.degenerate_warps;
  line["gn_iters"] = stats.solver.iterations;
  line["correspondences"] = stats.solver.correspondences;
  line["initial_energy"] = stats.solver.initial_energy;
  line["final_energy"] = stats.solver.final_energy;
  line["mean_residual"] = stats.solver.mean_residual;
  line["rigid_pairs"] = stats.rigid.correspondences;
  line["rigid_residual"] = stats.rigid.mean_residual;
  line["rigid_low_confidence"] = stats.rigid.low_confidence;
  line["reinit"] = stats.reinit;
  line["reinit_removed"] = stats.reinit_removed;
  const Quat q = quat_from_matrix(stats.pose.rotation);
  line["pose"] = {q[0], q[1], q[2], q[3], stats.pose.translation[0],
                  stats.pose.translation[1], stats.pose.translation[2]};
  return line.dump();
}

namespace {

std::string timings_to_json(const FrameStats& stats) {
  nlohmann::ordered_json line;
  line["frame"] = stats.frame;
  line["depth_ms"] = stats.depth_ms;
  line["rigid_ms"] = stats.rigid_ms;
  line["solve_ms"] = stats.solve_ms;
  line["fusion_ms"] = stats.fusion_ms;
  line["reinit_ms"] = stats.reinit_ms;
  line["total_ms"] = stats.total_ms;
  return line.dump();
}

void dump_normal_map(const FrameMaps& maps, const std::string& path) {
  Grid<std::array<uint8_t, 3>> rgb(maps.width(), maps.height(), {0, 0, 0});
  for (int y = 0; y < maps.height(); ++y) {
    for (int x = 0; x < maps.width(); ++x) {
      if (!maps.valid(x, y)) continue;
      const Vec3& n = maps.normals(x, y);
      rgb(x, y) = {uint8_t(127.5 * (n[0] + 1.0)), uint8_t(127.5 * (n[1] + 1.0)),
                   uint8_t(127.5 * (n[2] + 1.0))};
    }
  }
  write_rgb_png(path, rgb);
}

}  // namespace

SequenceSummary process_sequence(const std::string& input_dir, const PipelineConfig& cfg,
                                 const PipelineOptions& options) {
  namespace fs = std::filesystem;

  if (!fs::is_directory(input_dir)) throw MissingInput("not a directory: " + input_dir);
  const std::regex frame_re("frame-([0-9]{6})\\.png");
  std::vector<std::pair<int, std::string>> frames;
  for (const auto& entry : fs::directory_iterator(input_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch match;
    if (std::regex_match(name, match, frame_re))
      frames.emplace_back(std::stoi(match[1].str()), entry.path().string());
  }
  if (frames.empty()) throw MissingInput("no frame-%06d.png files in " + input_dir);
  std::sort(frames.begin(), frames.end());

  const std::string out_dir = options.output_dir.empty() ? input_dir + "/out"
                                                         : options.output_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create output directory: " + out_dir);

  std::ofstream metrics(out_dir + "/metrics.jsonl");
  std::ofstream timings(out_dir + "/timings.jsonl");
  if (!metrics || !timings) throw IoFailure("cannot open log files in " + out_dir);
  std::ofstream nodes_log;
  if (options.log_nodes) {
    nodes_log.open(out_dir + "/nodes.jsonl");
    if (!nodes_log) throw IoFailure("cannot open nodes.jsonl in " + out_dir);
  }

  Pipeline pipeline(cfg);
  SequenceSummary summary;

  for (const auto& [index, path] : frames) {
    DepthImage depth;
    depth.frame_index = index;
    FrameStats stats;
    try {
      depth.data = read_depth_png(path);
      if (depth.width() != cfg.intrinsics.width || depth.height() != cfg.intrinsics.height)
        throw CorruptFrame("frame size mismatch: " + path);
      stats = pipeline.process_frame(depth);
    } catch (const CorruptFrame& err) {
      std::cerr << "warning: skipping frame " << index << ": " << err.what() << "\n";
      stats = FrameStats{};
      stats.frame = index;
      stats.skipped = true;
      ++summary.frames_skipped;
      metrics << frame_stats_to_json(stats) << "\n";
      continue;
    }

    ++summary.frames_processed;
    if (stats.reinit) ++summary.reinit_count;
    metrics << frame_stats_to_json(stats) << "\n";
    timings << timings_to_json(stats) << "\n";

    if (options.log_nodes) {
      nlohmann::ordered_json line;
      line["frame"] = stats.frame;
      line["node_count"] = int(pipeline.nodes().size());
      nlohmann::json positions = nlohmann::json::array();
      for (const auto& node : pipeline.nodes())
        positions.push_back({node.position[0], node.position[1], node.position[2]});
      line["positions"] = std::move(positions);
      nodes_log << line.dump() << "\n";
    }
    if (options.debug_dump_maps) {
      const FrameMaps maps = build_frame_maps(depth, cfg.intrinsics, cfg);
      char name[48];
      std::snprintf(name, sizeof(name), "debug-normals-%06d.png", index);
      dump_normal_map(maps, out_dir + "/" + name);
    }
    if (options.ply_every > 0 && index % options.ply_every == 0 &&
        pipeline.model().size() > 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "model-%06d.ply", index);
      export_pointcloud(pipeline.model(), ModelSide::kLive, out_dir + "/" + name);
    }
  }

  if (options.ply_every >= 0 && pipeline.model().size() > 0) {
    export_pointcloud(pipeline.model(), ModelSide::kLive, out_dir + "/final_live.ply");
    export_pointcloud(pipeline.model(), ModelSide::kReference,
                      out_dir + "/final_reference.ply");
  }
  summary.final_surfel_count = int(pipeline.model().size());
  return summary;
}

}  // namespace dynsurf
