#pragma once

#include <string>
#include <vector>

#include "dynsurf/config.hpp"
#include "dynsurf/image.hpp"
#include "dynsurf/types.hpp"

namespace dynsurf {

// Synthetic depth sequences with analytically known deformation and exact
// point-to-surface distance, standing in for recorded sensor data.
enum class ScenarioKind {
  kStaticPlane,
  kRigidOrbit,
  kBendingSheet,
  kArticulatedTwoPart,
  kOpenToClose,
  kTangentialSlide,
  kTurntable,
};

ScenarioKind parse_scenario(const std::string& name);  // throws UnknownScenario
std::string scenario_name(ScenarioKind kind);

CameraIntrinsics default_synth_intrinsics();  // 160x120, f = 140 px

class SyntheticSequence {
 public:
  // frames == 0 selects the scenario default length.
  SyntheticSequence(ScenarioKind kind, int frames, const CameraIntrinsics& k,
                    double noise_sigma_mm = 0.0, uint32_t seed = 20240901);

  ScenarioKind kind() const { return kind_; }
  int frame_count() const { return frames_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  double noise_sigma_mm() const { return noise_sigma_mm_; }

  // Camera-to-world pose; frame 0 is the identity.
  Se3 camera_pose(int t) const;

  // Millimeter-quantized depth render (0 = no hit / out of range).
  DepthImage render_depth(int t) const;

  // Unsigned distance to the true deformed surface at frame t.
  double surface_distance(const Vec3& p_world, int t) const;

  // Two-part scenarios expose per-part distances and the contact phase.
  int part_count() const;
  double part_distance(const Vec3& p_world, int t, int part) const;
  double part_gap(int t) const;    // surface-to-surface gap, meters
  bool in_contact(int t) const;    // gap below the contact threshold

  // Dense surface sampling at roughly `spacing` meters (test oracle).
  std::vector<Vec3> sample_surface(int t, double spacing) const;

  // Writes frame-%06d.png, config.cfg (base config + these intrinsics) and
  // ground_truth.json into `dir`.
  void write_to_directory(const std::string& dir, const PipelineConfig& base_cfg) const;

 private:
  ScenarioKind kind_;
  int frames_;
  CameraIntrinsics intrinsics_;
  double noise_sigma_mm_;
  uint32_t seed_;

  double normalized_time(int t) const;
};

struct DistanceStats {
  double mean = 0;
  double max = 0;
  int counted = 0;
};

// Distance of the live model to the true surface over stable surfels
// (confidence > delta_stable); falls back to all surfels when none are
// stable yet.
DistanceStats model_surface_distance(const SurfelModel& model,
                                     const SyntheticSequence& seq, int t,
                                     double delta_stable);

}  // namespace dynsurf
