#include "dynsurf/solver.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "dynsurf/errors.hpp"

namespace dynsurf {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v[2], v[1], v[2], 0, -v[0], -v[1], v[0], 0;
  return m;
}

// (0, v) as a quaternion column for the twist derivative.
Eigen::Matrix<double, 4, 3> pure_quat_basis() {
  Eigen::Matrix<double, 4, 3> b = Eigen::Matrix<double, 4, 3>::Zero();
  b(1, 0) = 1;
  b(2, 1) = 1;
  b(3, 2) = 1;
  return b;
}

}  // namespace

namespace solver_detail {

BlendState make_blend_state(const SkinningEntry& entry, std::span<const WarpNode> nodes) {
  BlendState state;
  state.real_sum.setZero();
  state.dual_sum.setZero();
  state.count = entry.count;
  if (entry.count == 0) return state;

  const Quat& pivot = nodes[entry.node_indices[0]].transform.real;
  for (int m = 0; m < entry.count; ++m) {
    const DualQuaternion& dq = nodes[entry.node_indices[m]].transform;
    const double sign = (pivot.dot(dq.real) < 0.0) ? -1.0 : 1.0;
    const double w = sign * entry.weights[m];
    state.signed_weights[m] = w;
    state.real_sum += w * dq.real;
    state.dual_sum += w * dq.dual;
  }
  state.degenerate = state.real_sum.norm() < kDegenerateBlendRealNorm;
  return state;
}

Vec3 warp_point(const BlendState& state, const Vec3& p_ref) {
  DualQuaternion raw;
  raw.real = state.real_sum;
  raw.dual = state.dual_sum;
  return raw.normalized().to_se3().apply(p_ref);
}

Eigen::Matrix<double, 3, 8> warped_point_blend_jacobian(const BlendState& state,
                                                        const Vec3& p_ref) {
  const Quat& br = state.real_sum;
  const Quat& bd = state.dual_sum;
  const double a = br.norm();
  const Quat r_hat = br / a;

  // Normalized components.
  const double rd = br.dot(bd);
  const Quat nr = br / a;
  const Quat nd = bd / a - (rd / (a * a * a)) * br;

  // dN/db. Real part depends only on b_real.
  const Mat4 dnr_dbr = (Mat4::Identity() - r_hat * r_hat.transpose()) / a;
  const double a3 = a * a * a;
  const double a5 = a3 * a * a;
  const Mat4 dnd_dbr = -(bd * br.transpose() + br * bd.transpose() + rd * Mat4::Identity()) / a3 +
                       (3.0 * rd / a5) * (br * br.transpose());
  const Mat4 dnd_dbd = Mat4::Identity() / a - (br * br.transpose()) / a3;

  // dy/dn for the unit dual quaternion n = (nr, nd):
  //   y = rot(nr) p + 2 vec(nd x conj(nr))
  const Mat4 conj = Eigen::Vector4d(1, -1, -1, -1).asDiagonal();
  const Quat p_quat(0, p_ref[0], p_ref[1], p_ref[2]);
  const Mat4 dy4_dnr = quat_right_matrix(quat_multiply(p_quat, quat_conjugate(nr))) +
                       quat_left_matrix(quat_multiply(nr, p_quat)) * conj +
                       2.0 * quat_left_matrix(nd) * conj;
  const Mat4 dy4_dnd = 2.0 * quat_right_matrix(quat_conjugate(nr));

  const auto rows = [](const Mat4& m) { return m.block<3, 4>(1, 0); };
  Eigen::Matrix<double, 3, 8> dy_db;
  dy_db.block<3, 4>(0, 0) = rows(dy4_dnr) * dnr_dbr + rows(dy4_dnd) * dnd_dbr;
  dy_db.block<3, 4>(0, 4) = rows(dy4_dnd) * dnd_dbd;
  return dy_db;
}

Eigen::Matrix<double, 3, 6> warped_point_node_jacobian(
    const Eigen::Matrix<double, 3, 8>& dy_db, const BlendState& state,
    const SkinningEntry& entry, std::span<const WarpNode> nodes, int slot) {
  const DualQuaternion& dq = nodes[entry.node_indices[slot]].transform;
  const double w = state.signed_weights[slot];
  const Eigen::Matrix<double, 4, 3> basis = pure_quat_basis();

  // b = sum_m w_m exp(xi_m) (x) dq_m; the left increment enters each part
  // as (0, d_omega)/2 (x) q resp. (0, d_t)/2 (x) q.
  Eigen::Matrix<double, 8, 6> db_dxi = Eigen::Matrix<double, 8, 6>::Zero();
  const Eigen::Matrix<double, 4, 3> dreal_domega = 0.5 * w * quat_right_matrix(dq.real) * basis;
  const Eigen::Matrix<double, 4, 3> ddual_domega = 0.5 * w * quat_right_matrix(dq.dual) * basis;
  const Eigen::Matrix<double, 4, 3> ddual_dt = 0.5 * w * quat_right_matrix(dq.real) * basis;
  db_dxi.block<4, 3>(0, 0) = dreal_domega;
  db_dxi.block<4, 3>(4, 0) = ddual_domega;
  db_dxi.block<4, 3>(4, 3) = ddual_dt;

  return dy_db * db_dxi;
}

Vec3 reg_residual(const Se3& t_j, const Se3& t_i, const Vec3& p_j) {
  return t_j.apply(p_j) - t_i.apply(p_j);
}

Eigen::Matrix<double, 3, 6> reg_jacobian_j(const Se3& t_j, const Vec3& p_j) {
  Eigen::Matrix<double, 3, 6> j;
  j.block<3, 3>(0, 0) = -skew(t_j.apply(p_j));
  j.block<3, 3>(0, 3) = Mat3::Identity();
  return j;
}

Eigen::Matrix<double, 3, 6> reg_jacobian_i(const Se3& t_i, const Vec3& p_j) {
  Eigen::Matrix<double, 3, 6> j;
  j.block<3, 3>(0, 0) = skew(t_i.apply(p_j));
  j.block<3, 3>(0, 3) = -Mat3::Identity();
  return j;
}

double data_energy(std::span<const CorrespondencePair> pairs, const SurfelModel& model,
                   std::span<const WarpNode> nodes) {
  double energy = 0;
  for (const auto& pair : pairs) {
    const BlendState state = make_blend_state(model.skinning[pair.surfel_index], nodes);
    if (state.degenerate) continue;
    const Vec3 v_model = warp_point(state, model.reference[pair.surfel_index].position);
    const double r = pair.n_depth.dot(v_model - pair.v_depth);
    energy += r * r;
  }
  return energy;
}

double reg_energy(std::span<const WarpNode> nodes) {
  std::vector<Se3> transforms(nodes.size());
  for (size_t j = 0; j < nodes.size(); ++j) transforms[j] = nodes[j].transform.to_se3();
  double energy = 0;
  for (size_t j = 0; j < nodes.size(); ++j) {
    for (const int32_t i : nodes[j].neighbors) {
      energy += reg_residual(transforms[j], transforms[i], nodes[j].position).squaredNorm();
    }
  }
  return energy;
}

void assert_normal_equations(const Eigen::MatrixXd& h) {
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (((h - h.transpose()).cwiseAbs().maxCoeff()) > 1e-9 * scale)
    throw Error("normal equations lost symmetry");
  for (int b = 0; b + 6 <= h.rows(); b += 6) {
    const Eigen::Matrix<double, 6, 6> block = h.block<6, 6>(b, b);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(block);
    if (eig.eigenvalues().minCoeff() < -1e-8 * scale)
      throw Error("normal equations diagonal block not PSD");
  }
}

}  // namespace solver_detail

RigidAlignResult rigid_align(const FrameMaps& frame, const ModelMaps& model_maps,
                             const Se3& init_pose) {
  // Source-pixel pyramid; association always reads the full-resolution
  // model maps rendered under init_pose.
  static constexpr int kIterations[kRigidPyramidLevels] = {4, 3, 3};

  const CameraIntrinsics& k = frame.intrinsics;
  const Se3 render_inv = init_pose.inverse();

  Se3 current = init_pose;
  int final_pairs = 0;
  double final_abs_residual = 0;

  for (int level = kRigidPyramidLevels - 1; level >= 0; --level) {
    const int stride = 1 << level;
    for (int iter = 0; iter < kIterations[level]; ++iter) {
      Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
      int pairs = 0;
      double abs_residual = 0;

      for (int y = 0; y < frame.height(); y += stride) {
        for (int x = 0; x < frame.width(); x += stride) {
          if (!frame.valid(x, y)) continue;
          const Vec3 v_world = current.apply(frame.vertices(x, y));
          const Vec3 p_render = render_inv.apply(v_world);
          if (p_render[2] <= 0) continue;
          const Vec2 px = k.project(p_render);
          const int u = int(std::lround(px[0]));
          const int v = int(std::lround(px[1]));
          if (!model_maps.valid.in_bounds(u, v) || !model_maps.valid(u, v)) continue;

          const Vec3& v_m = model_maps.vertices(u, v);
          const Vec3& n_m = model_maps.normals(u, v);
          if ((v_world - v_m).norm() >= kCorrespondenceDistanceGate) continue;
          if (current.rotate(frame.normals(x, y)).dot(n_m) <= kCorrespondenceNormalGate)
            continue;

          const double r = n_m.dot(v_world - v_m);
          Eigen::Matrix<double, 6, 1> j;
          j.head<3>() = v_world.cross(n_m);
          j.tail<3>() = n_m;
          h += j * j.transpose();
          g += j * r;
          ++pairs;
          abs_residual += std::abs(r);
        }
      }

      if (level == 0) {
        final_pairs = pairs;
        final_abs_residual = abs_residual;
      }
      if (pairs < 6) continue;
      const Eigen::Matrix<double, 6, 1> xi = h.ldlt().solve(-g);
      if (!xi.allFinite()) continue;
      current = se3_increment(xi.head<3>(), xi.tail<3>(), current);
    }
  }

  RigidAlignResult result;
  result.correspondences = final_pairs;
  if (final_pairs < kRigidMinCorrespondences) {
    result.pose = init_pose;
    result.low_confidence = true;
    result.mean_residual = final_pairs > 0 ? final_abs_residual / final_pairs : 0.0;
    return result;
  }
  result.pose = current;
  result.mean_residual = final_abs_residual / final_pairs;
  return result;
}

std::vector<CorrespondencePair> find_correspondences(const FrameMaps& frame,
                                                     const ModelMaps& model_maps,
                                                     const Se3& pose) {
  std::vector<CorrespondencePair> pairs;
  if (frame.width() != model_maps.width() || frame.height() != model_maps.height())
    throw DimensionMismatch("find_correspondences: map resolutions differ");

  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!frame.valid(x, y) || !model_maps.valid(x, y)) continue;
      const Vec3 v_depth = pose.apply(frame.vertices(x, y));
      const Vec3 n_depth = pose.rotate(frame.normals(x, y));
      const Vec3& v_model = model_maps.vertices(x, y);
      if ((v_model - v_depth).norm() >= kCorrespondenceDistanceGate) continue;
      if (model_maps.normals(x, y).dot(n_depth) <= kCorrespondenceNormalGate) continue;

      CorrespondencePair pair;
      pair.surfel_index = model_maps.indices(x, y);
      pair.px = x;
      pair.py = y;
      pair.v_model = v_model;
      pair.v_depth = v_depth;
      pair.n_depth = n_depth;
      pairs.push_back(pair);
    }
  }
  return pairs;
}

namespace {

using solver_detail::BlendState;

std::vector<WarpNode> apply_increments(const std::vector<WarpNode>& nodes,
                                       const Eigen::VectorXd& delta) {
  std::vector<WarpNode> out = nodes;
  for (size_t j = 0; j < out.size(); ++j) {
    const Vec3 omega = delta.segment<3>(6 * j);
    const Vec3 t = delta.segment<3>(6 * j + 3);
    out[j].transform = (dq_increment(omega, t) * out[j].transform).normalized();
  }
  return out;
}

double total_energy(std::span<const CorrespondencePair> pairs, const SurfelModel& model,
                    std::span<const WarpNode> nodes, double lambda) {
  return solver_detail::data_energy(pairs, model, nodes) +
         lambda * solver_detail::reg_energy(nodes);
}

}  // namespace

SolverReport solve_nonrigid(std::vector<WarpNode>& nodes, const SurfelModel& model,
                            const FrameMaps& frame, const Se3& pose, int t_now,
                            int t_last_reinit, const PipelineConfig& cfg) {
  SolverReport report;
  const int n = int(nodes.size());
  if (n == 0 || model.size() == 0) return report;
  const int dim = 6 * n;

  SurfelModel work;
  work.reference = model.reference;
  work.skinning = model.skinning;
  work.live.resize(model.size());

  Eigen::MatrixXd h(dim, dim);
  Eigen::VectorXd g(dim);
  std::vector<CorrespondencePair> pairs;
  std::vector<Se3> node_se3(n);
  double mu = 0;  // Levenberg-Marquardt damping, raised to the floor below

  for (int iter = 0; iter < cfg.max_gn_iters; ++iter) {
    forward_warp(work, nodes);
    const ModelMaps maps =
        render_model_maps(work.live, pose, frame.intrinsics, t_now, t_last_reinit, cfg);
    pairs = find_correspondences(frame, maps, pose);

    const double e_pre = total_energy(pairs, model, nodes, cfg.lambda);
    if (iter == 0) {
      report.initial_energy = e_pre;
      report.final_energy = e_pre;
    }

    h.setZero();
    g.setZero();

    for (const auto& pair : pairs) {
      const SkinningEntry& entry = model.skinning[pair.surfel_index];
      const BlendState state = solver_detail::make_blend_state(entry, nodes);
      if (state.degenerate) continue;
      const Vec3& p_ref = model.reference[pair.surfel_index].position;
      const Vec3 v_model = solver_detail::warp_point(state, p_ref);
      const double r = pair.n_depth.dot(v_model - pair.v_depth);

      const Eigen::Matrix<double, 3, 8> dy_db =
          solver_detail::warped_point_blend_jacobian(state, p_ref);
      std::array<Eigen::Matrix<double, 1, 6>, kMaxSkinNeighbors> rows;
      for (int m = 0; m < entry.count; ++m) {
        rows[m] = pair.n_depth.transpose() *
                  solver_detail::warped_point_node_jacobian(dy_db, state, entry, nodes, m);
      }
      for (int m1 = 0; m1 < entry.count; ++m1) {
        const int j1 = entry.node_indices[m1];
        g.segment<6>(6 * j1) += rows[m1].transpose() * r;
        for (int m2 = 0; m2 < entry.count; ++m2) {
          const int j2 = entry.node_indices[m2];
          h.block<6, 6>(6 * j1, 6 * j2) += rows[m1].transpose() * rows[m2];
        }
      }
    }

    for (int j = 0; j < n; ++j) node_se3[j] = nodes[j].transform.to_se3();
    for (int j = 0; j < n; ++j) {
      const Vec3& p_j = nodes[j].position;
      for (const int32_t i : nodes[j].neighbors) {
        const Vec3 r = solver_detail::reg_residual(node_se3[j], node_se3[i], p_j);
        const auto j_j = solver_detail::reg_jacobian_j(node_se3[j], p_j);
        const auto j_i = solver_detail::reg_jacobian_i(node_se3[i], p_j);
        h.block<6, 6>(6 * j, 6 * j) += cfg.lambda * j_j.transpose() * j_j;
        h.block<6, 6>(6 * i, 6 * i) += cfg.lambda * j_i.transpose() * j_i;
        h.block<6, 6>(6 * j, 6 * i) += cfg.lambda * j_j.transpose() * j_i;
        h.block<6, 6>(6 * i, 6 * j) += cfg.lambda * j_i.transpose() * j_j;
        g.segment<6>(6 * j) += cfg.lambda * j_j.transpose() * r;
        g.segment<6>(6 * i) += cfg.lambda * j_i.transpose() * r;
      }
    }

    if (g.lpNorm<Eigen::Infinity>() < 1e-14) break;  // already at a stationary point

    solver_detail::assert_normal_equations(h);

    // The graph can carry gauge freedom (weakly observed nodes, per-part
    // rotations the data term cannot see), so the floor damping is always
    // on; energy-increasing steps escalate it instead of aborting outright.
    const double mu_floor = 1e-6 * h.trace() / dim;
    mu = std::max(mu, mu_floor);
    bool accepted = false;
    double e_post = e_pre;
    std::vector<WarpNode> candidate;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += mu;
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      if (!delta.allFinite() ||
          (damped * delta + g).norm() > 1e-6 * (g.norm() + 1.0)) {
        mu = std::max(mu_floor, mu * 10.0);
        continue;
      }
      candidate = apply_increments(nodes, delta);
      e_post = total_energy(pairs, model, candidate, cfg.lambda);
      if (e_post <= e_pre) {
        accepted = true;
      } else {
        mu = std::max(mu_floor, mu * 10.0);  // reject, retry stiffer
      }
    }
    if (!accepted) break;  // keep the last good state

    mu = std::max(mu_floor, mu * 0.1);
    nodes = candidate;
    ++report.iterations;
    report.final_energy = e_post;
    if (e_pre - e_post < 1e-4 * std::max(e_pre, 1e-300)) break;  // converged
  }

  report.correspondences = int(pairs.size());
  double abs_sum = 0;
  int counted = 0;
  for (const auto& pair : pairs) {
    const BlendState state = solver_detail::make_blend_state(model.skinning[pair.surfel_index], nodes);
    if (state.degenerate) continue;
    const Vec3 v_model =
        solver_detail::warp_point(state, model.reference[pair.surfel_index].position);
    abs_sum += std::abs(pair.n_depth.dot(v_model - pair.v_depth));
    ++counted;
  }
  report.mean_residual = counted > 0 ? abs_sum / counted : 0.0;
  return report;
}

}  // namespace dynsurf
