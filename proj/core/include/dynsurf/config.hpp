#pragma once

#include <map>
#include <string>

#include "dynsurf/types.hpp"

namespace dynsurf {

// Pipeline parameters. Distances are meters, times are frame counts.
struct PipelineConfig {
  // Warp field
  double node_sigma = 0.025;       // node sampling distance / Gaussian support
  int knn_k = 4;                   // nodes per surfel
  int node_neighbor_k = 8;         // edges per node

  // Solver
  double lambda = 5.0;             // regularizer balance
  int max_gn_iters = 10;

  // Fusion
  double delta_distance = 0.001;   // fusion distance gate
  double delta_normal = 0.85;      // fusion normal dot gate
  double epsilon = 0.2;            // intrinsic deformation bound
  double delta_stable = 10.0;      // stable confidence threshold
  int t_low_confid = 30;           // max unstable period
  int delta_recent = 2;            // recently-observed window
  double delta_nn = 0.03;          // min skinning weight sum for appending
  int supersample_factor = 4;      // fusion index map supersampling
  bool compressive_check = true;   // ablation switch for the strain rejection

  // Depth processing
  double depth_min = 0.1;
  double depth_max = 5.0;
  bool bilateral_filter = false;
  double bilateral_sigma_space = 4.5;    // pixels
  double bilateral_sigma_depth = 30.0;   // millimeters

  // Reinitialization
  double reinit_energy_threshold = 0.005;  // mean residual, meters
  int reinit_append_threshold = 3000;      // appended surfels per frame
  int reinit_window = 3;                   // consecutive distressed frames
  int periodic_reinit_interval = 0;        // frames; 0 disables
  double delta_distance_reinit = 0.010;    // cleaning correspondence gate

  // Camera; normally read from the sequence config file.
  CameraIntrinsics intrinsics;

  void validate() const;  // throws ConfigError
};

// Plain-text key-value configuration ("key value" or "key = value" lines,
// '#' comments). Unknown keys throw; missing keys keep defaults.
PipelineConfig load_config_file(const std::string& path);
void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                        const std::string& value);
void save_config_file(const PipelineConfig& cfg, const std::string& path);

// All recognized keys; each one is also a CLI flag of the same name.
std::vector<std::string> config_keys();

}  // namespace dynsurf
