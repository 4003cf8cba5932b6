#pragma once

#include <span>
#include <vector>

#include "dynsurf/config.hpp"
#include "dynsurf/image.hpp"
#include "dynsurf/raster.hpp"
#include "dynsurf/warp_field.hpp"

namespace dynsurf {

// Projective association gates (point-to-plane tracking).
inline constexpr double kCorrespondenceDistanceGate = 0.03;  // meters
inline constexpr double kCorrespondenceNormalGate = 0.7;     // dot product

// Rigid pre-alignment: coarse-to-fine source subsampling, 10 iterations total.
inline constexpr int kRigidPyramidLevels = 3;
inline constexpr int kRigidMinCorrespondences = 100;

struct CorrespondencePair {
  int32_t surfel_index = -1;  // model surfel (index map channel)
  int px = 0, py = 0;         // depth pixel
  Vec3 v_model = Vec3::Zero();  // live model vertex at association (world)
  Vec3 v_depth = Vec3::Zero();  // depth vertex (world)
  Vec3 n_depth = Vec3::Zero();  // depth normal (world)
};

struct RigidAlignResult {
  Se3 pose;
  int correspondences = 0;
  double mean_residual = 0;  // mean |point-to-plane|, meters
  bool low_confidence = false;
};

struct SolverReport {
  int iterations = 0;          // accepted Gauss-Newton steps
  double initial_energy = 0;   // total energy at first association
  double final_energy = 0;     // total energy after the last accepted step
  double mean_residual = 0;    // mean |point-to-plane| at the final state
  int correspondences = 0;
};

// Projective point-to-plane ICP of the depth frame against the rendered
// model maps (both fixed, rendered under init_pose). Returns init_pose with
// low_confidence set when fewer than kRigidMinCorrespondences pairs survive
// the gates at the finest level.
RigidAlignResult rigid_align(const FrameMaps& frame, const ModelMaps& model_maps,
                             const Se3& init_pose);

// Per-pixel projective association of frame and model maps at equal
// resolution; `pose` places depth vertices and normals in the world frame.
std::vector<CorrespondencePair> find_correspondences(const FrameMaps& frame,
                                                     const ModelMaps& model_maps,
                                                     const Se3& pose);

// Gauss-Newton estimation of the node transforms. Each iteration re-renders
// the model, re-associates, builds the normal equations over per-node twist
// increments and applies them to the dual quaternions; steps that increase
// the total energy are rejected and terminate the loop.
SolverReport solve_nonrigid(std::vector<WarpNode>& nodes, const SurfelModel& model,
                            const FrameMaps& frame, const Se3& pose, int t_now,
                            int t_last_reinit, const PipelineConfig& cfg);

// Internals exposed for the derivative tests.
namespace solver_detail {

// Signed weights and the raw blended dual quaternion of a skinning entry,
// matching blend_dual_quaternions (sign correction against the first term).
struct BlendState {
  Eigen::Vector4d real_sum;
  Eigen::Vector4d dual_sum;
  std::array<double, kMaxSkinNeighbors> signed_weights;
  int count = 0;
  bool degenerate = true;
};
BlendState make_blend_state(const SkinningEntry& entry, std::span<const WarpNode> nodes);

// Warped point y = normalize(b) applied to p_ref.
Vec3 warp_point(const BlendState& state, const Vec3& p_ref);

// d y / d b, a 3x8 matrix over the raw blend coefficients (real, dual).
Eigen::Matrix<double, 3, 8> warped_point_blend_jacobian(const BlendState& state,
                                                        const Vec3& p_ref);

// d y / d twist of the entry node in `slot` (3x6, columns = omega, then t).
Eigen::Matrix<double, 3, 6> warped_point_node_jacobian(
    const Eigen::Matrix<double, 3, 8>& dy_db, const BlendState& state,
    const SkinningEntry& entry, std::span<const WarpNode> nodes, int slot);

// Regularizer residual T_j p_j - T_i p_j and its two 3x6 Jacobians.
Vec3 reg_residual(const Se3& t_j, const Se3& t_i, const Vec3& p_j);
Eigen::Matrix<double, 3, 6> reg_jacobian_j(const Se3& t_j, const Vec3& p_j);
Eigen::Matrix<double, 3, 6> reg_jacobian_i(const Se3& t_i, const Vec3& p_j);

double data_energy(std::span<const CorrespondencePair> pairs, const SurfelModel& model,
                   std::span<const WarpNode> nodes);
double reg_energy(std::span<const WarpNode> nodes);

// Symmetry and per-node-block positive semidefiniteness of the normal
// matrix; throws Error on violation.
void assert_normal_equations(const Eigen::MatrixXd& h);

}  // namespace solver_detail

}  // namespace dynsurf
