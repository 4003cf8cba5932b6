#include "dynsurf/solver.hpp"

#include <gtest/gtest.h>

#include <random>

#include "dynsurf/depth_processing.hpp"
#include "dynsurf/errors.hpp"
#include "dynsurf/synth.hpp"
#include "test_util.hpp"

namespace dynsurf {
namespace {

using solver_detail::BlendState;
using solver_detail::make_blend_state;
using solver_detail::warp_point;
using solver_detail::warped_point_blend_jacobian;
using solver_detail::warped_point_node_jacobian;
using testing::make_se3;
using testing::make_surfel;
using testing::random_point;
using testing::random_se3;

struct RandomRig {
  std::vector<WarpNode> nodes;
  SurfelModel model;
};

RandomRig make_random_rig(std::mt19937& rng, int node_count, int surfel_count) {
  RandomRig rig;
  rig.nodes.resize(node_count);
  for (auto& node : rig.nodes) {
    node.position = random_point(rng, 0.2);
    node.sigma = 0.05;
    node.transform = DualQuaternion::from_se3(random_se3(rng, 0.5, 0.1));
  }
  compute_node_edges(rig.nodes, std::min(4, node_count - 1));

  std::uniform_real_distribution<double> weight(0.05, 1.0);
  for (int i = 0; i < surfel_count; ++i) {
    const Surfel s = make_surfel(random_point(rng, 0.25));
    SkinningEntry entry;
    const int k = 1 + int(rng() % std::min(4, node_count));
    std::vector<int> chosen;
    while (int(chosen.size()) < k) {
      const int j = int(rng() % node_count);
      if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) chosen.push_back(j);
    }
    for (const int j : chosen) {
      entry.node_indices[entry.count] = j;
      entry.weights[entry.count] = weight(rng);
      ++entry.count;
    }
    rig.model.reference.push_back(s);
    rig.model.live.push_back(s);
    rig.model.skinning.push_back(entry);
  }
  return rig;
}

// Applies a twist to one node, the same chart the solver uses.
std::vector<WarpNode> perturb_node(const std::vector<WarpNode>& nodes, int j,
                                   const Eigen::Matrix<double, 6, 1>& xi) {
  std::vector<WarpNode> out = nodes;
  out[j].transform = dq_increment(xi.head<3>(), xi.tail<3>()) * out[j].transform;
  return out;
}

TEST(WarpJacobian, BlendDerivativeIsScaleOrthogonal) {
  // y(b) is invariant to positive scaling of b, so dy/db * b = 0.
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomRig rig = make_random_rig(rng, 6, 3);
    const SkinningEntry& entry = rig.model.skinning[0];
    const Vec3 p = rig.model.reference[0].position;
    const BlendState state = make_blend_state(entry, rig.nodes);
    ASSERT_FALSE(state.degenerate);
    const auto dy_db = warped_point_blend_jacobian(state, p);
    Eigen::Matrix<double, 8, 1> b;
    b << state.real_sum, state.dual_sum;
    EXPECT_LT((dy_db * b).norm(), 1e-9);
  }
}

TEST(WarpJacobian, MatchesCentralFiniteDifferences) {
  std::mt19937 rng(17);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const RandomRig rig = make_random_rig(rng, 8, 10);
    for (size_t si = 0; si < rig.model.size(); ++si) {
      const SkinningEntry& entry = rig.model.skinning[si];
      const Vec3 p_ref = rig.model.reference[si].position;
      const BlendState state = make_blend_state(entry, rig.nodes);
      ASSERT_FALSE(state.degenerate);
      const auto dy_db = warped_point_blend_jacobian(state, p_ref);

      for (int m = 0; m < entry.count; ++m) {
        const int j = entry.node_indices[m];
        const Eigen::Matrix<double, 3, 6> analytic =
            warped_point_node_jacobian(dy_db, state, entry, rig.nodes, m);

        Eigen::Matrix<double, 3, 6> fd;
        for (int col = 0; col < 6; ++col) {
          Eigen::Matrix<double, 6, 1> xi = Eigen::Matrix<double, 6, 1>::Zero();
          xi[col] = h;
          const auto plus = perturb_node(rig.nodes, j, xi);
          xi[col] = -h;
          const auto minus = perturb_node(rig.nodes, j, xi);
          const Vec3 yp = warp_point(make_blend_state(entry, plus), p_ref);
          const Vec3 ym = warp_point(make_blend_state(entry, minus), p_ref);
          fd.col(col) = (yp - ym) / (2.0 * h);
        }
        const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
        EXPECT_LT((analytic - fd).cwiseAbs().maxCoeff() / scale, 1e-4)
            << "trial " << trial << " surfel " << si << " slot " << m;
      }
    }
  }
}

TEST(RegJacobian, MatchesCentralFiniteDifferences) {
  std::mt19937 rng(23);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const RandomRig rig = make_random_rig(rng, 6, 1);
    const int j = int(rng() % rig.nodes.size());
    int i = int(rng() % rig.nodes.size());
    if (i == j) i = (i + 1) % rig.nodes.size();
    const Vec3& p_j = rig.nodes[j].position;

    const auto an_j = solver_detail::reg_jacobian_j(rig.nodes[j].transform.to_se3(), p_j);
    const auto an_i = solver_detail::reg_jacobian_i(rig.nodes[i].transform.to_se3(), p_j);

    for (int col = 0; col < 6; ++col) {
      Eigen::Matrix<double, 6, 1> xi = Eigen::Matrix<double, 6, 1>::Zero();
      xi[col] = h;
      auto plus = perturb_node(rig.nodes, j, xi);
      xi[col] = -h;
      auto minus = perturb_node(rig.nodes, j, xi);
      const Vec3 fd_j = (solver_detail::reg_residual(plus[j].transform.to_se3(),
                                                     plus[i].transform.to_se3(), p_j) -
                         solver_detail::reg_residual(minus[j].transform.to_se3(),
                                                     minus[i].transform.to_se3(), p_j)) /
                        (2.0 * h);
      EXPECT_LT((an_j.col(col) - fd_j).norm() / std::max(1.0, fd_j.norm()), 1e-4);

      xi[col] = h;
      plus = perturb_node(rig.nodes, i, xi);
      xi[col] = -h;
      minus = perturb_node(rig.nodes, i, xi);
      const Vec3 fd_i = (solver_detail::reg_residual(plus[j].transform.to_se3(),
                                                     plus[i].transform.to_se3(), p_j) -
                         solver_detail::reg_residual(minus[j].transform.to_se3(),
                                                     minus[i].transform.to_se3(), p_j)) /
                        (2.0 * h);
      EXPECT_LT((an_i.col(col) - fd_i).norm() / std::max(1.0, fd_i.norm()), 1e-4);
    }
  }
}

TEST(RegEnergy, ZeroIffRigidOnEdges) {
  std::mt19937 rng(31);
  const Se3 rigid = random_se3(rng, 0.7, 0.2);
  std::vector<WarpNode> nodes(2);
  nodes[0].position = Vec3(0, 0, 0);
  nodes[1].position = Vec3(0.05, 0, 0);
  nodes[0].neighbors = {1};
  nodes[1].neighbors = {0};
  nodes[0].transform = nodes[1].transform = DualQuaternion::from_se3(rigid);
  EXPECT_NEAR(solver_detail::reg_energy(nodes), 0.0, 1e-18);

  nodes[1].transform =
      DualQuaternion::from_se3(make_se3(Vec3::Zero(), Vec3(0.001, 0, 0)) * rigid);
  EXPECT_GT(solver_detail::reg_energy(nodes), 1e-10);
}

TEST(NormalEquationsCheck, RejectsAsymmetry) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(6, 6);
  h(0, 1) = 0.5;  // symmetric counterpart missing
  EXPECT_THROW(solver_detail::assert_normal_equations(h), Error);
}

class SolverSceneTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg_ = testing::test_config();
    seq_ = std::make_unique<SyntheticSequence>(ScenarioKind::kRigidOrbit, 5,
                                               cfg_.intrinsics);
    frame_ = build_frame_maps(seq_->render_depth(0), cfg_.intrinsics, cfg_);
    // Model surfels straight from the frame: identical positions, stable.
    for (int y = 0; y < frame_.height(); ++y) {
      for (int x = 0; x < frame_.width(); ++x) {
        if (!frame_.valid(x, y)) continue;
        Surfel s = make_surfel(frame_.vertices(x, y), frame_.normals(x, y),
                               frame_.radius(x, y), 20.0);
        model_.reference.push_back(s);
        model_.live.push_back(s);
      }
    }
    auto [nodes, skinning] = init_warp_field(model_.reference, cfg_);
    nodes_ = std::move(nodes);
    model_.skinning = std::move(skinning);
  }

  PipelineConfig cfg_;
  std::unique_ptr<SyntheticSequence> seq_;
  FrameMaps frame_;
  SurfelModel model_;
  std::vector<WarpNode> nodes_;
};

TEST_F(SolverSceneTest, RigidAlignFixedPoint) {
  const ModelMaps maps =
      render_model_maps(model_.live, Se3::identity(), cfg_.intrinsics, 1, 0, cfg_);
  const RigidAlignResult result = rigid_align(frame_, maps, Se3::identity());
  EXPECT_FALSE(result.low_confidence);
  EXPECT_GE(result.correspondences, kRigidMinCorrespondences);
  EXPECT_LT((result.pose.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(result.pose.translation.norm(), 1e-6);
}

TEST_F(SolverSceneTest, RigidAlignRecoversSmallTranslation) {
  // Moving the model by t is equivalent to moving the camera by t.
  const Vec3 shift(0.005, 0, 0);
  SurfelModel moved = model_;
  for (auto& s : moved.live) s.position += shift;
  const ModelMaps maps =
      render_model_maps(moved.live, Se3::identity(), cfg_.intrinsics, 1, 0, cfg_);
  const RigidAlignResult result = rigid_align(frame_, maps, Se3::identity());
  ASSERT_FALSE(result.low_confidence);
  EXPECT_LT((result.pose.translation - shift).norm(), 0.5e-3);
  const double angle =
      std::acos(std::clamp((result.pose.rotation.trace() - 1.0) / 2.0, -1.0, 1.0));
  EXPECT_LT(angle, 0.2 * M_PI / 180.0);
}

TEST_F(SolverSceneTest, RigidAlignInsufficientOnEmptyFrame) {
  DepthImage empty;
  empty.data = Grid<uint16_t>(cfg_.intrinsics.width, cfg_.intrinsics.height, 0);
  const FrameMaps empty_maps = build_frame_maps(empty, cfg_.intrinsics, cfg_);
  const ModelMaps maps =
      render_model_maps(model_.live, Se3::identity(), cfg_.intrinsics, 1, 0, cfg_);
  const Se3 init = make_se3(Vec3(0, 0.01, 0), Vec3(0.002, 0, 0));
  const RigidAlignResult result = rigid_align(empty_maps, maps, init);
  EXPECT_TRUE(result.low_confidence);
  EXPECT_LT((result.pose.rotation - init.rotation).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((result.pose.translation - init.translation).norm(), 1e-15);
}

TEST_F(SolverSceneTest, CorrespondencesCoverMutuallyValidPixels) {
  const ModelMaps maps =
      render_model_maps(model_.live, Se3::identity(), cfg_.intrinsics, 1, 0, cfg_);
  int mutual = 0;
  for (int y = 0; y < frame_.height(); ++y)
    for (int x = 0; x < frame_.width(); ++x)
      if (frame_.valid(x, y) && maps.valid(x, y)) ++mutual;
  const auto pairs = find_correspondences(frame_, maps, Se3::identity());
  EXPECT_EQ(int(pairs.size()), mutual);
  EXPECT_GT(mutual, 500);
}

TEST(SolverGates, DisplacedPlaneYieldsNoCorrespondences) {
  // A fronto-parallel plane pushed 10 cm along the view direction: every
  // projective candidate fails the distance gate.
  const PipelineConfig cfg = testing::test_config();
  const SyntheticSequence seq(ScenarioKind::kStaticPlane, 2, cfg.intrinsics);
  const FrameMaps frame = build_frame_maps(seq.render_depth(0), cfg.intrinsics, cfg);
  SurfelModel model;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!frame.valid(x, y)) continue;
      const Surfel s = make_surfel(frame.vertices(x, y) + Vec3(0, 0, 0.10),
                                   frame.normals(x, y), frame.radius(x, y), 20.0);
      model.live.push_back(s);
    }
  }
  const ModelMaps maps =
      render_model_maps(model.live, Se3::identity(), cfg.intrinsics, 1, 0, cfg);
  const auto pairs = find_correspondences(frame, maps, Se3::identity());
  EXPECT_EQ(pairs.size(), 0u);
}

TEST_F(SolverSceneTest, NormalGateSplitsFlippedSide) {
  // Hand-built model maps: a copy of the frame with normals flipped on the
  // right half image.
  ModelMaps maps;
  maps.vertices = frame_.vertices;
  maps.normals = frame_.normals;
  maps.depth = Grid<double>(frame_.width(), frame_.height(), 0.0);
  maps.indices = Grid<int32_t>(frame_.width(), frame_.height(), 0);
  maps.valid = frame_.valid;
  for (int y = 0; y < frame_.height(); ++y)
    for (int x = frame_.width() / 2; x < frame_.width(); ++x)
      maps.normals(x, y) = -maps.normals(x, y);

  const auto pairs = find_correspondences(frame_, maps, Se3::identity());
  ASSERT_GT(pairs.size(), 0u);
  for (const auto& pair : pairs) EXPECT_LT(pair.px, frame_.width() / 2);
}

TEST_F(SolverSceneTest, NonrigidFixedPointLeavesNodesUntouched) {
  const std::vector<WarpNode> before = nodes_;
  const SolverReport report =
      solve_nonrigid(nodes_, model_, frame_, Se3::identity(), 1, 0, cfg_);
  EXPECT_GT(report.correspondences, 500);
  EXPECT_NEAR(report.initial_energy, 0.0, 1e-18);
  EXPECT_LE(report.final_energy, report.initial_energy + 1e-18);
  for (size_t j = 0; j < nodes_.size(); ++j) {
    EXPECT_LT((nodes_[j].transform.real - before[j].transform.real).norm(), 1e-6);
    EXPECT_LT((nodes_[j].transform.dual - before[j].transform.dual).norm(), 1e-6);
  }
}

TEST(SolverRigidityLimit, HugeLambdaEqualizesConnectedGraph) {
  // Plane scene: one connected node graph. The model is tilted against the
  // observation, so the solver must move; with lambda -> 1e6 the motion is
  // forced to be globally rigid.
  const PipelineConfig base = testing::test_config();
  const SyntheticSequence seq(ScenarioKind::kStaticPlane, 2, base.intrinsics);
  const FrameMaps frame = build_frame_maps(seq.render_depth(0), base.intrinsics, base);

  const Se3 tilt = make_se3(Vec3(0.8 * M_PI / 180.0, 0, 0), Vec3(0, 0, 0.003));
  SurfelModel model;
  // Central window only: keeps the connected graph small enough for a
  // dense 6N solve in test time.
  for (int y = frame.height() / 4; y < 3 * frame.height() / 4; ++y) {
    for (int x = frame.width() / 4; x < 3 * frame.width() / 4; ++x) {
      if (!frame.valid(x, y)) continue;
      const Surfel s = make_surfel(tilt.apply(frame.vertices(x, y)),
                                   tilt.rotate(frame.normals(x, y)),
                                   frame.radius(x, y), 20.0);
      model.reference.push_back(s);
      model.live.push_back(s);
    }
  }
  auto [nodes, skinning] = init_warp_field(model.reference, base);
  model.skinning = std::move(skinning);

  PipelineConfig big_lambda = base;
  big_lambda.lambda = 1e6;
  const SolverReport report =
      solve_nonrigid(nodes, model, frame, Se3::identity(), 1, 0, big_lambda);
  EXPECT_GE(report.iterations, 1);
  EXPECT_LE(report.final_energy, report.initial_energy);

  // Rigidity limit: all node transforms agree pairwise.
  double worst = 0;
  for (size_t a = 0; a < nodes.size(); ++a) {
    for (size_t b = a + 1; b < nodes.size(); ++b) {
      const double direct = (nodes[a].transform.real - nodes[b].transform.real).norm() +
                            (nodes[a].transform.dual - nodes[b].transform.dual).norm();
      const double flipped = (nodes[a].transform.real + nodes[b].transform.real).norm() +
                             (nodes[a].transform.dual + nodes[b].transform.dual).norm();
      worst = std::max(worst, std::min(direct, flipped));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST_F(SolverSceneTest, TracksSmallDeformation) {
  // Shift the observed frame by 2 mm along z and let the solver follow.
  FrameMaps shifted = frame_;
  for (int y = 0; y < shifted.height(); ++y)
    for (int x = 0; x < shifted.width(); ++x)
      if (shifted.valid(x, y)) shifted.vertices(x, y)[2] += 0.002;

  const SolverReport report =
      solve_nonrigid(nodes_, model_, shifted, Se3::identity(), 1, 0, cfg_);
  EXPECT_GE(report.iterations, 1);
  EXPECT_LE(report.iterations, cfg_.max_gn_iters);
  EXPECT_LT(report.final_energy, report.initial_energy);
  EXPECT_LT(report.mean_residual, 1e-3);
}

}  // namespace
}  // namespace dynsurf
