// Command-line front end: batch reconstruction over a depth PNG sequence,
// synthetic sequence generation, and metrics-log invariant checking.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "dynsurf/config.hpp"
#include "dynsurf/errors.hpp"
#include "dynsurf/pipeline.hpp"
#include "dynsurf/synth.hpp"

namespace {

using dynsurf::PipelineConfig;

struct ConfigOverrides {
  std::map<std::string, std::string> values;

  void add_flags(CLI::App* app) {
    for (const auto& key : dynsurf::config_keys()) {
      app->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { values[key] = v; },
          "override config key '" + key + "'");
    }
  }

  void apply(PipelineConfig& cfg) const {
    for (const auto& [key, value] : values) dynsurf::apply_config_entry(cfg, key, value);
  }
};

int run_command(const std::string& input_dir, const std::string& output_dir,
                const ConfigOverrides& overrides, int ply_every, bool log_nodes,
                bool debug_dump_maps) {
  PipelineConfig cfg;
  const std::string cfg_path = input_dir + "/config.cfg";
  if (std::filesystem::exists(cfg_path)) cfg = dynsurf::load_config_file(cfg_path);
  overrides.apply(cfg);
  cfg.validate();

  dynsurf::PipelineOptions options;
  options.output_dir = output_dir.empty() ? input_dir + "/out" : output_dir;
  options.ply_every = ply_every;
  options.log_nodes = log_nodes;
  options.debug_dump_maps = debug_dump_maps;

  const dynsurf::SequenceSummary summary =
      dynsurf::process_sequence(input_dir, cfg, options);
  std::cout << "processed " << summary.frames_processed << " frames ("
            << summary.frames_skipped << " skipped), " << summary.reinit_count
            << " reinitializations, " << summary.final_surfel_count
            << " final surfels\n";
  return 0;
}

int synth_command(const std::string& scenario, const std::string& output_dir, int frames,
                  double noise_mm, uint32_t seed, const ConfigOverrides& overrides) {
  PipelineConfig cfg;
  cfg.intrinsics = dynsurf::default_synth_intrinsics();
  overrides.apply(cfg);

  const dynsurf::SyntheticSequence seq(dynsurf::parse_scenario(scenario), frames,
                                       cfg.intrinsics, noise_mm, seed);
  seq.write_to_directory(output_dir, cfg);
  std::cout << "wrote " << seq.frame_count() << " frames to " << output_dir << "\n";
  return 0;
}

int check_command(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in) {
    std::cerr << "cannot open " << metrics_path << "\n";
    return 2;
  }

  struct Check {
    bool ok = true;
    std::string detail;
  };
  std::map<std::string, Check> checks;
  auto fail = [&](const std::string& name, const std::string& detail) {
    auto& check = checks[name];
    if (check.ok) {
      check.ok = false;
      check.detail = detail;
    }
  };
  auto touch = [&](const std::string& name) { checks[name]; };

  std::string line;
  int line_no = 0;
  long prev_count = -1;
  int prev_frame = -1;
  int prev_nodes = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const std::exception& err) {
      fail("parse", "line " + std::to_string(line_no) + ": " + err.what());
      continue;
    }
    touch("parse");

    const int frame = row.value("frame", -1);
    touch("frames_increasing");
    if (frame <= prev_frame) fail("frames_increasing", "line " + std::to_string(line_no));
    prev_frame = frame;
    if (row.value("skipped", false)) continue;

    const long count = row.value("surfel_count", -1L);
    const long appended = row.value("appended", 0L);
    const long removed = row.value("removed", 0L);
    const long reinit_removed = row.value("reinit_removed", 0L);
    const long valid_pixels = row.value("valid_pixels", 0L);
    const long fused = row.value("fused", 0L);
    const int node_count = row.value("node_count", 0);

    touch("counts_nonnegative");
    if (count < 0 || appended < 0 || removed < 0 || reinit_removed < 0 || fused < 0)
      fail("counts_nonnegative", "line " + std::to_string(line_no));

    touch("appended_within_valid_pixels");
    if (appended > valid_pixels)
      fail("appended_within_valid_pixels", "line " + std::to_string(line_no));

    touch("surfel_count_accounting");
    if (prev_count >= 0 && count != prev_count + appended - removed - reinit_removed)
      fail("surfel_count_accounting", "line " + std::to_string(line_no));
    prev_count = count;

    touch("energy_nonincreasing");
    const double initial = row.value("initial_energy", 0.0);
    const double final_e = row.value("final_energy", 0.0);
    if (final_e > initial + 1e-12 * std::max(1.0, initial))
      fail("energy_nonincreasing", "line " + std::to_string(line_no));

    touch("nodes_monotonic_between_reinits");
    const bool reinit = row.value("reinit", false);
    if (!reinit && prev_nodes >= 0 && node_count < prev_nodes)
      fail("nodes_monotonic_between_reinits", "line " + std::to_string(line_no));
    prev_nodes = node_count;
  }

  if (line_no == 0) {
    std::cerr << "empty metrics log\n";
    return 2;
  }

  bool all_ok = true;
  for (const auto& [name, check] : checks) {
    std::cout << (check.ok ? "PASS" : "FAIL") << "  " << name;
    if (!check.ok) std::cout << "  (" << check.detail << ")";
    std::cout << "\n";
    all_ok = all_ok && check.ok;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surfel-based dynamic scene reconstruction from depth sequences"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "process a depth PNG sequence");
  std::string input_dir, output_dir;
  int ply_every = 10;
  bool log_nodes = false, debug_dump_maps = false;
  run->add_option("--input", input_dir, "directory with frame-%06d.png and config.cfg")
      ->required();
  run->add_option("--output", output_dir, "output directory (default <input>/out)");
  run->add_option("--ply_every", ply_every,
                  "export the live model every N frames (0 = final only, -1 = never)");
  run->add_flag("--log_nodes", log_nodes, "write nodes.jsonl with per-frame node positions");
  run->add_flag("--debug_dump_maps", debug_dump_maps, "dump per-frame normal maps as PNG");
  ConfigOverrides run_overrides;
  run_overrides.add_flags(run);

  auto* synth = app.add_subcommand("synth", "generate a synthetic depth sequence");
  std::string scenario, synth_out;
  int frames = 0;
  double noise_mm = 0.0;
  uint32_t seed = 20240901;
  synth
      ->add_option("--scenario", scenario,
                   "static_plane | rigid_orbit | bending_sheet | articulated_two_part | "
                   "open_to_close | tangential_slide | turntable")
      ->required();
  synth->add_option("--output", synth_out, "output directory")->required();
  synth->add_option("--frames", frames, "frame count (0 = scenario default)");
  synth->add_option("--noise", noise_mm, "additive depth noise sigma, millimeters");
  synth->add_option("--seed", seed, "noise RNG seed");
  ConfigOverrides synth_overrides;
  synth_overrides.add_flags(synth);

  auto* check = app.add_subcommand("check", "verify invariants over a metrics log");
  std::string metrics_path;
  check->add_option("--metrics", metrics_path, "path to metrics.jsonl")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return run_command(input_dir, output_dir, run_overrides, ply_every, log_nodes,
                         debug_dump_maps);
    if (synth->parsed())
      return synth_command(scenario, synth_out, frames, noise_mm, seed, synth_overrides);
    if (check->parsed()) return check_command(metrics_path);
  } catch (const dynsurf::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
