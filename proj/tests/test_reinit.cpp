#include "dynsurf/reinit.hpp"

#include <gtest/gtest.h>

#include "dynsurf/depth_processing.hpp"
#include "dynsurf/errors.hpp"
#include "dynsurf/synth.hpp"
#include "test_util.hpp"

namespace dynsurf {
namespace {

using testing::make_surfel;

SolverReport report_with_residual(double residual) {
  SolverReport r;
  r.mean_residual = residual;
  return r;
}

FusionOutcome outcome_with_appends(int appended) {
  FusionOutcome o;
  o.appended = appended;
  return o;
}

TEST(ShouldReinitialize, CalmWindowsStayFalse) {
  const PipelineConfig cfg = testing::test_config();
  std::vector<SolverReport> reports(3, report_with_residual(0.0));
  std::vector<FusionOutcome> outcomes(3, outcome_with_appends(0));
  EXPECT_FALSE(should_reinitialize(reports, outcomes, 10, 0, cfg));
}

TEST(ShouldReinitialize, SustainedDistressTriggers) {
  const PipelineConfig cfg = testing::test_config();  // 5 mm / 3000 / window 3
  std::vector<SolverReport> reports(3, report_with_residual(0.010));
  std::vector<FusionOutcome> outcomes(3, outcome_with_appends(8000));
  EXPECT_TRUE(should_reinitialize(reports, outcomes, 10, 0, cfg));
}

TEST(ShouldReinitialize, PartialWindowStaysFalse) {
  const PipelineConfig cfg = testing::test_config();
  std::vector<SolverReport> reports(2, report_with_residual(0.010));
  std::vector<FusionOutcome> outcomes(2, outcome_with_appends(8000));
  EXPECT_FALSE(should_reinitialize(reports, outcomes, 10, 0, cfg));
}

TEST(ShouldReinitialize, OneCalmFrameBreaksTheStreak) {
  const PipelineConfig cfg = testing::test_config();
  std::vector<SolverReport> reports(3, report_with_residual(0.010));
  std::vector<FusionOutcome> outcomes(3, outcome_with_appends(8000));
  reports[1] = report_with_residual(0.001);
  EXPECT_FALSE(should_reinitialize(reports, outcomes, 10, 0, cfg));
}

TEST(ShouldReinitialize, PeriodicScheduleFires) {
  PipelineConfig cfg = testing::test_config();
  cfg.periodic_reinit_interval = 5;
  std::vector<SolverReport> reports(3, report_with_residual(0.0));
  std::vector<FusionOutcome> outcomes(3, outcome_with_appends(0));
  EXPECT_FALSE(should_reinitialize(reports, outcomes, 9, 5, cfg));
  EXPECT_TRUE(should_reinitialize(reports, outcomes, 10, 5, cfg));
}

class CleanAndResetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg_ = testing::test_config();
    seq_ = std::make_unique<SyntheticSequence>(ScenarioKind::kStaticPlane, 2,
                                               cfg_.intrinsics);
    frame_ = build_frame_maps(seq_->render_depth(0), cfg_.intrinsics, cfg_);
  }

  void build_model_from_frame() {
    model_ = SurfelModel{};
    for (int y = 0; y < frame_.height(); ++y) {
      for (int x = 0; x < frame_.width(); ++x) {
        if (!frame_.valid(x, y)) continue;
        const Surfel s = make_surfel(frame_.vertices(x, y), frame_.normals(x, y),
                                     frame_.radius(x, y), 15.0, 0);
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

TEST_F(CleanAndResetTest, ExactFrameKeepsEverythingBitwise) {
  build_model_from_frame();
  const size_t before = model_.size();
  const ReinitResult result =
      clean_and_reset(model_, nodes_, frame_, Se3::identity(), cfg_);
  EXPECT_EQ(result.removed, 0);
  EXPECT_EQ(model_.size(), before);
  ASSERT_TRUE(model_.consistent());
  for (size_t i = 0; i < model_.size(); ++i) {
    EXPECT_EQ(model_.reference[i].position[0], model_.live[i].position[0]);
    EXPECT_EQ(model_.reference[i].position[1], model_.live[i].position[1]);
    EXPECT_EQ(model_.reference[i].position[2], model_.live[i].position[2]);
  }
}

TEST_F(CleanAndResetTest, PhantomInFreeSpaceRemovedOccludedKept) {
  build_model_from_frame();
  const size_t plane_count = model_.size();
  // Phantom in front of the plane: depth measures through it -> removed.
  const Surfel phantom_front = make_surfel(Vec3(0, 0, 0.90), Vec3(0, 0, -1), 0.004, 15.0, 0);
  // Surfel behind the plane: occluded by nearer depth -> kept.
  const Surfel behind = make_surfel(Vec3(0, 0, 1.10), Vec3(0, 0, -1), 0.004, 15.0, 0);
  for (const Surfel& s : {phantom_front, behind}) {
    model_.reference.push_back(s);
    model_.live.push_back(s);
    model_.skinning.push_back({});
  }

  const ReinitResult result =
      clean_and_reset(model_, nodes_, frame_, Se3::identity(), cfg_);
  EXPECT_EQ(result.removed, 1);
  EXPECT_EQ(model_.size(), plane_count + 1);
  bool behind_kept = false;
  for (const auto& s : model_.live)
    if ((s.position - behind.position).norm() < 1e-12) behind_kept = true;
  EXPECT_TRUE(behind_kept);
}

TEST_F(CleanAndResetTest, BackfacingAndOffImageSurfelsKept) {
  build_model_from_frame();
  const size_t plane_count = model_.size();
  const Surfel backfacing = make_surfel(Vec3(0.02, 0, 0.90), Vec3(0, 0, 1), 0.004, 15.0, 0);
  const Surfel off_image = make_surfel(Vec3(5.0, 0, 1.0), Vec3(0, 0, -1), 0.004, 15.0, 0);
  const Surfel behind_camera = make_surfel(Vec3(0, 0, -0.5), Vec3(0, 0, -1), 0.004, 15.0, 0);
  for (const Surfel& s : {backfacing, off_image, behind_camera}) {
    model_.reference.push_back(s);
    model_.live.push_back(s);
    model_.skinning.push_back({});
  }
  const ReinitResult result =
      clean_and_reset(model_, nodes_, frame_, Se3::identity(), cfg_);
  EXPECT_EQ(result.removed, 0);
  EXPECT_EQ(model_.size(), plane_count + 3);
}

TEST_F(CleanAndResetTest, ResetStateIsIdentityWarp) {
  build_model_from_frame();
  clean_and_reset(model_, nodes_, frame_, Se3::identity(), cfg_);
  for (const auto& node : nodes_) {
    const Se3 t = node.transform.to_se3();
    EXPECT_LT((t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(t.translation.norm(), 1e-12);
  }
  SurfelModel copy = model_;
  EXPECT_EQ(forward_warp(copy, nodes_), 0);
  for (size_t i = 0; i < copy.size(); ++i)
    EXPECT_LT((copy.live[i].position - model_.reference[i].position).norm(), 1e-12);
}

TEST_F(CleanAndResetTest, NothingSurvivingThrowsEmptyGeometry) {
  // Model consists only of free-space phantoms.
  model_ = SurfelModel{};
  for (int i = 0; i < 20; ++i) {
    const Surfel s = make_surfel(Vec3(0.01 * i - 0.1, 0, 0.8), Vec3(0, 0, -1), 0.004,
                                 15.0, 0);
    model_.reference.push_back(s);
    model_.live.push_back(s);
    model_.skinning.push_back({});
  }
  nodes_.clear();
  EXPECT_THROW(clean_and_reset(model_, nodes_, frame_, Se3::identity(), cfg_),
               EmptyGeometry);
}

TEST_F(CleanAndResetTest, NeverIncreasesSurfelCount) {
  build_model_from_frame();
  for (int trial = 0; trial < 3; ++trial) {
    const size_t before = model_.size();
    clean_and_reset(model_, nodes_, frame_, Se3::identity(), cfg_);
    EXPECT_LE(model_.size(), before);
  }
}

}  // namespace
}  // namespace dynsurf
