#include "dynsurf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "dynsurf/errors.hpp"
#include "dynsurf/png_io.hpp"

namespace dynsurf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kContactGap = 0.03;

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

Mat3 rot_y(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

// Axis-aligned rectangle in a z = z0 plane.
struct RectZ {
  double z0, x0, x1, y0, y1;
};

struct SpherePrim {
  Vec3 center;
  double radius;
};

// Cylindrical sheet bent away from the camera: points
// (x, R sin(phi), z_front + R (1 - cos(phi))), |phi| <= half_angle,
// |x| <= half_width. Circle center sits at (y = 0, z = z_front + R).
struct SheetPrim {
  double half_width;
  double radius;
  double z_front;
  double half_angle;
};

struct Scene {
  std::vector<RectZ> rects;
  std::vector<SpherePrim> spheres;
  std::vector<SheetPrim> sheets;
};

double ray_rect(const Vec3& o, const Vec3& d, const RectZ& r) {
  if (std::abs(d[2]) < 1e-12) return kInf;
  const double s = (r.z0 - o[2]) / d[2];
  if (s <= 1e-9) return kInf;
  const double x = o[0] + s * d[0];
  const double y = o[1] + s * d[1];
  if (x < r.x0 || x > r.x1 || y < r.y0 || y > r.y1) return kInf;
  return s;
}

double ray_sphere(const Vec3& o, const Vec3& d, const SpherePrim& sph) {
  const Vec3 oc = o - sph.center;
  const double a = d.squaredNorm();
  const double b = 2.0 * oc.dot(d);
  const double c = oc.squaredNorm() - sph.radius * sph.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return kInf;
  const double sq = std::sqrt(disc);
  const double s1 = (-b - sq) / (2.0 * a);
  if (s1 > 1e-9) return s1;
  const double s2 = (-b + sq) / (2.0 * a);
  if (s2 > 1e-9) return s2;
  return kInf;
}

double ray_sheet(const Vec3& o, const Vec3& d, const SheetPrim& sheet) {
  const double cz = sheet.z_front + sheet.radius;
  const double vy = o[1];
  const double vz = o[2] - cz;
  const double a = d[1] * d[1] + d[2] * d[2];
  if (a < 1e-18) return kInf;
  const double b = 2.0 * (vy * d[1] + vz * d[2]);
  const double c = vy * vy + vz * vz - sheet.radius * sheet.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return kInf;
  const double sq = std::sqrt(disc);
  for (const double s : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
    if (s <= 1e-9) continue;
    const Vec3 hit = o + s * d;
    const double phi = std::atan2(hit[1], cz - hit[2]);
    if (std::abs(phi) > sheet.half_angle) continue;
    if (std::abs(hit[0]) > sheet.half_width) continue;
    return s;
  }
  return kInf;
}

double dist_rect(const Vec3& p, const RectZ& r) {
  const double dx = p[0] - std::clamp(p[0], r.x0, r.x1);
  const double dy = p[1] - std::clamp(p[1], r.y0, r.y1);
  const double dz = p[2] - r.z0;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double dist_sphere(const Vec3& p, const SpherePrim& s) {
  return std::abs((p - s.center).norm() - s.radius);
}

double dist_sheet(const Vec3& p, const SheetPrim& sheet) {
  const double cz = sheet.z_front + sheet.radius;
  const double phi = std::atan2(p[1], cz - p[2]);
  const double dx = std::max(0.0, std::abs(p[0]) - sheet.half_width);
  if (std::abs(phi) <= sheet.half_angle) {
    const double rho = std::hypot(p[1], p[2] - cz);
    return std::hypot(dx, rho - sheet.radius);
  }
  const double edge = std::copysign(sheet.half_angle, phi);
  const double ey = sheet.radius * std::sin(edge);
  const double ez = cz - sheet.radius * std::cos(edge);
  return std::hypot(dx, std::hypot(p[1] - ey, p[2] - ez));
}

double scene_raycast(const Vec3& o, const Vec3& d, const Scene& scene) {
  double best = kInf;
  for (const auto& r : scene.rects) best = std::min(best, ray_rect(o, d, r));
  for (const auto& s : scene.spheres) best = std::min(best, ray_sphere(o, d, s));
  for (const auto& sh : scene.sheets) best = std::min(best, ray_sheet(o, d, sh));
  return best;
}

double scene_distance(const Vec3& p, const Scene& scene) {
  double best = kInf;
  for (const auto& r : scene.rects) best = std::min(best, dist_rect(p, r));
  for (const auto& s : scene.spheres) best = std::min(best, dist_sphere(p, s));
  for (const auto& sh : scene.sheets) best = std::min(best, dist_sheet(p, sh));
  return best;
}

void sample_rect(const RectZ& r, double spacing, std::vector<Vec3>& out) {
  for (double x = r.x0 + 0.5 * spacing; x < r.x1; x += spacing)
    for (double y = r.y0 + 0.5 * spacing; y < r.y1; y += spacing)
      out.emplace_back(x, y, r.z0);
}

void sample_sphere(const SpherePrim& s, double spacing, std::vector<Vec3>& out) {
  const int n_theta = std::max(2, int(std::ceil(M_PI * s.radius / spacing)));
  for (int i = 0; i < n_theta; ++i) {
    const double theta = M_PI * (i + 0.5) / n_theta;
    const double ring = s.radius * std::sin(theta);
    const int n_phi = std::max(1, int(std::ceil(2.0 * M_PI * ring / spacing)));
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * M_PI * j / n_phi;
      out.push_back(s.center + Vec3(ring * std::cos(phi), s.radius * std::cos(theta),
                                    ring * std::sin(phi)));
    }
  }
}

void sample_sheet(const SheetPrim& sh, double spacing, std::vector<Vec3>& out) {
  const double cz = sh.z_front + sh.radius;
  const int nx = std::max(1, int(std::ceil(2.0 * sh.half_width / spacing)));
  const int np = std::max(1, int(std::ceil(2.0 * sh.half_angle * sh.radius / spacing)));
  for (int i = 0; i < nx; ++i) {
    const double x = -sh.half_width + (i + 0.5) * 2.0 * sh.half_width / nx;
    for (int j = 0; j < np; ++j) {
      const double phi = -sh.half_angle + (j + 0.5) * 2.0 * sh.half_angle / np;
      out.emplace_back(x, sh.radius * std::sin(phi), cz - sh.radius * std::cos(phi));
    }
  }
}

// Scenario parameters (world frame; the camera starts at the origin looking
// along +z).
constexpr double kOrbitStepRad = 0.4 * M_PI / 180.0;
const Vec3 kOrbitPivot(0.0, 0.0, 1.1);

constexpr double kSheetHalfWidth = 0.18;    // x half-extent, meters
constexpr double kSheetHalfArc = 0.135;     // arc half-length, meters
constexpr double kSheetZ = 0.95;
constexpr double kSheetMaxAngle = 55.0 * M_PI / 180.0;

constexpr double kCloseSphereRadius = 0.055;

constexpr double kSlideEdgeStart = -0.35;
constexpr double kSlideEdgeTravel = 0.852;
constexpr double kSlideLowZ = 1.0;
constexpr double kSlideHighZ = 0.96;
constexpr double kSlideHalfHeight = 0.20;
constexpr double kSlideHalfWidth = 1.2;

const Vec3 kTurntableAxisPoint(0.0, 0.0, 1.1);

double open_close_gap(double u) {
  // close -> reopen -> close; the sequence ends nearly touching.
  if (u <= 0.57) return 0.18 + (0.008 - 0.18) * smoothstep(u / 0.57);
  if (u <= 0.78) return 0.008 + (0.05 - 0.008) * smoothstep((u - 0.57) / 0.21);
  return 0.05 + (0.008 - 0.05) * smoothstep((u - 0.78) / 0.22);
}

double bending_angle(double u) {
  constexpr double lead = 0.1;  // flat lead-in while the model bootstraps
  if (u <= lead) return 0.0;
  return kSheetMaxAngle * smoothstep((u - lead) / (1.0 - lead));
}

int default_frames(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kStaticPlane: return 10;
    case ScenarioKind::kRigidOrbit: return 50;
    case ScenarioKind::kBendingSheet: return 100;
    case ScenarioKind::kArticulatedTwoPart: return 60;
    case ScenarioKind::kOpenToClose: return 96;
    case ScenarioKind::kTangentialSlide: return 72;
    case ScenarioKind::kTurntable: return 360;
  }
  return 60;
}

}  // namespace

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "static_plane") return ScenarioKind::kStaticPlane;
  if (name == "rigid_orbit") return ScenarioKind::kRigidOrbit;
  if (name == "bending_sheet") return ScenarioKind::kBendingSheet;
  if (name == "articulated_two_part") return ScenarioKind::kArticulatedTwoPart;
  if (name == "open_to_close") return ScenarioKind::kOpenToClose;
  if (name == "tangential_slide") return ScenarioKind::kTangentialSlide;
  if (name == "turntable") return ScenarioKind::kTurntable;
  throw UnknownScenario("unknown scenario: " + name);
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kStaticPlane: return "static_plane";
    case ScenarioKind::kRigidOrbit: return "rigid_orbit";
    case ScenarioKind::kBendingSheet: return "bending_sheet";
    case ScenarioKind::kArticulatedTwoPart: return "articulated_two_part";
    case ScenarioKind::kOpenToClose: return "open_to_close";
    case ScenarioKind::kTangentialSlide: return "tangential_slide";
    case ScenarioKind::kTurntable: return "turntable";
  }
  return "unknown";
}

CameraIntrinsics default_synth_intrinsics() {
  CameraIntrinsics k;
  k.fx = k.fy = 140.0;
  k.width = 160;
  k.height = 120;
  k.cx = (k.width - 1) / 2.0;
  k.cy = (k.height - 1) / 2.0;
  return k;
}

SyntheticSequence::SyntheticSequence(ScenarioKind kind, int frames,
                                     const CameraIntrinsics& k, double noise_sigma_mm,
                                     uint32_t seed)
    : kind_(kind),
      frames_(frames > 0 ? frames : default_frames(kind)),
      intrinsics_(k),
      noise_sigma_mm_(noise_sigma_mm),
      seed_(seed) {}

double SyntheticSequence::normalized_time(int t) const {
  return frames_ > 1 ? double(t) / double(frames_ - 1) : 0.0;
}

namespace {

Scene scene_at(ScenarioKind kind, double u, int t) {
  Scene scene;
  switch (kind) {
    case ScenarioKind::kStaticPlane: {
      scene.rects.push_back({1.0, -0.4, 0.4, -0.3, 0.3});
      break;
    }
    case ScenarioKind::kRigidOrbit: {
      scene.spheres.push_back({Vec3(-0.11, -0.03, 1.15), 0.10});
      scene.spheres.push_back({Vec3(0.10, 0.05, 1.05), 0.08});
      scene.spheres.push_back({Vec3(0.0, -0.09, 0.93), 0.065});
      break;
    }
    case ScenarioKind::kBendingSheet: {
      const double alpha = bending_angle(u);
      if (alpha < 1e-6) {
        scene.rects.push_back(
            {kSheetZ, -kSheetHalfWidth, kSheetHalfWidth, -kSheetHalfArc, kSheetHalfArc});
      } else {
        scene.sheets.push_back(
            {kSheetHalfWidth, kSheetHalfArc / alpha, kSheetZ, alpha});
      }
      break;
    }
    case ScenarioKind::kArticulatedTwoPart: {
      scene.spheres.push_back({Vec3(-0.085, 0.0, 1.0), 0.06});
      const double beta = (60.0 * M_PI / 180.0) * smoothstep(u);
      const Vec3 hinge(0.03, 0.0, 1.0);
      scene.spheres.push_back({hinge + rot_z(beta) * Vec3(0.10, 0.0, 0.0), 0.05});
      break;
    }
    case ScenarioKind::kOpenToClose: {
      const double gap = open_close_gap(u);
      const double xc = kCloseSphereRadius + 0.5 * gap;
      scene.spheres.push_back({Vec3(-xc, 0.0, 1.0), kCloseSphereRadius});
      scene.spheres.push_back({Vec3(xc, 0.0, 1.0), kCloseSphereRadius});
      break;
    }
    case ScenarioKind::kTangentialSlide: {
      const double edge = kSlideEdgeStart + kSlideEdgeTravel * u;
      scene.rects.push_back({kSlideLowZ, -kSlideHalfWidth, kSlideHalfWidth,
                             -kSlideHalfHeight, kSlideHalfHeight});
      scene.rects.push_back(
          {kSlideHighZ, edge, kSlideHalfWidth, -kSlideHalfHeight, kSlideHalfHeight});
      break;
    }
    case ScenarioKind::kTurntable: {
      const double theta = 4.0 * M_PI * u;  // two revolutions
      const Mat3 spin = rot_y(theta);
      scene.spheres.push_back(
          {kTurntableAxisPoint + spin * Vec3(0.07, 0.01, 0.0), 0.05});
      scene.spheres.push_back(
          {kTurntableAxisPoint + spin * (rot_y(140.0 * M_PI / 180.0) * Vec3(0.09, -0.025, 0.0)),
           0.04});
      break;
    }
  }
  (void)t;
  return scene;
}

}  // namespace

Se3 SyntheticSequence::camera_pose(int t) const {
  if (kind_ != ScenarioKind::kRigidOrbit) return Se3::identity();
  Se3 pose;
  pose.rotation = rot_y(kOrbitStepRad * t);
  pose.translation = kOrbitPivot - pose.rotation * kOrbitPivot;
  return pose;
}

DepthImage SyntheticSequence::render_depth(int t) const {
  const Scene scene = scene_at(kind_, normalized_time(t), t);
  const Se3 pose = camera_pose(t);
  const CameraIntrinsics& k = intrinsics_;

  DepthImage depth;
  depth.frame_index = t;
  depth.data = Grid<uint16_t>(k.width, k.height, 0);

  std::mt19937 rng(seed_ + uint32_t(t) * 2654435761u);
  std::normal_distribution<double> noise(0.0, noise_sigma_mm_);

  const Vec3 origin = pose.translation;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = pose.rotation * dir_cam;
      const double s = scene_raycast(origin, dir, scene);
      if (!std::isfinite(s)) continue;
      double mm = s * 1000.0;
      if (noise_sigma_mm_ > 0) mm += noise(rng);
      const long value = std::lround(mm);
      if (value < 100 || value > 5000) continue;
      depth.data(x, y) = uint16_t(value);
    }
  }
  return depth;
}

double SyntheticSequence::surface_distance(const Vec3& p_world, int t) const {
  return scene_distance(p_world, scene_at(kind_, normalized_time(t), t));
}

int SyntheticSequence::part_count() const {
  return (kind_ == ScenarioKind::kOpenToClose ||
          kind_ == ScenarioKind::kArticulatedTwoPart)
             ? 2
             : 1;
}

double SyntheticSequence::part_distance(const Vec3& p_world, int t, int part) const {
  const Scene scene = scene_at(kind_, normalized_time(t), t);
  if (part_count() == 2) return dist_sphere(p_world, scene.spheres[part]);
  return scene_distance(p_world, scene);
}

double SyntheticSequence::part_gap(int t) const {
  if (part_count() != 2) return kInf;
  const Scene scene = scene_at(kind_, normalized_time(t), t);
  const auto& a = scene.spheres[0];
  const auto& b = scene.spheres[1];
  return (a.center - b.center).norm() - a.radius - b.radius;
}

bool SyntheticSequence::in_contact(int t) const { return part_gap(t) < kContactGap; }

std::vector<Vec3> SyntheticSequence::sample_surface(int t, double spacing) const {
  const Scene scene = scene_at(kind_, normalized_time(t), t);
  std::vector<Vec3> out;
  for (const auto& r : scene.rects) sample_rect(r, spacing, out);
  for (const auto& s : scene.spheres) sample_sphere(s, spacing, out);
  for (const auto& sh : scene.sheets) sample_sheet(sh, spacing, out);
  return out;
}

void SyntheticSequence::write_to_directory(const std::string& dir,
                                           const PipelineConfig& base_cfg) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create directory: " + dir);

  for (int t = 0; t < frames_; ++t) {
    const DepthImage depth = render_depth(t);
    char name[32];
    std::snprintf(name, sizeof(name), "frame-%06d.png", t);
    write_depth_png(dir + "/" + name, depth.data);
  }

  PipelineConfig cfg = base_cfg;
  cfg.intrinsics = intrinsics_;
  save_config_file(cfg, dir + "/config.cfg");

  nlohmann::json gt;
  gt["scenario"] = scenario_name(kind_);
  gt["frames"] = frames_;
  gt["noise_sigma_mm"] = noise_sigma_mm_;
  gt["seed"] = seed_;
  gt["intrinsics"] = {{"fx", intrinsics_.fx}, {"fy", intrinsics_.fy},
                      {"cx", intrinsics_.cx}, {"cy", intrinsics_.cy},
                      {"width", intrinsics_.width}, {"height", intrinsics_.height}};
  nlohmann::json poses = nlohmann::json::array();
  for (int t = 0; t < frames_; ++t) {
    const Se3 pose = camera_pose(t);
    const Quat q = quat_from_matrix(pose.rotation);
    poses.push_back({q[0], q[1], q[2], q[3], pose.translation[0], pose.translation[1],
                     pose.translation[2]});
  }
  gt["poses"] = std::move(poses);

  std::ofstream out(dir + "/ground_truth.json");
  if (!out) throw IoFailure("cannot write ground_truth.json");
  out << gt.dump(2) << "\n";
}

DistanceStats model_surface_distance(const SurfelModel& model,
                                     const SyntheticSequence& seq, int t,
                                     double delta_stable) {
  DistanceStats stats;
  bool any_stable = false;
  for (const auto& s : model.live)
    if (s.confidence > delta_stable) {
      any_stable = true;
      break;
    }

  double sum = 0;
  for (const auto& s : model.live) {
    if (any_stable && s.confidence <= delta_stable) continue;
    const double d = seq.surface_distance(s.position, t);
    sum += d;
    stats.max = std::max(stats.max, d);
    ++stats.counted;
  }
  stats.mean = stats.counted > 0 ? sum / stats.counted : 0.0;
  return stats;
}

}  // namespace dynsurf
