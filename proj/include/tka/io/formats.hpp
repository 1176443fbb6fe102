// Copyright 2026 The tkaslam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <numbers>
#include <tuple>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tka/baselines.hpp"
#include "tka/energy/contours.hpp"
#include "tka/energy/state.hpp"
#include "tka/energy/terms.hpp"
#include "tka/error.hpp"
#include "tka/geom/camera.hpp"
#include "tka/resection.hpp"
#include "tka/solver/least_squares.hpp"

// JSON files exchanged by the command-line tool. Every document carries a
// "schema" tag; readers name the file and the JSON path of any violation.
namespace tka::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kContoursSchema = "contours/1";
inline constexpr const char* kIntrinsicsSchema = "intrinsics/1";
inline constexpr const char* kAnatomySchema = "anatomy/1";
inline constexpr const char* kPosesSchema = "poses/1";
inline constexpr const char* kStateSchema = "state/1";
inline constexpr const char* kReportSchema = "report/1";
inline constexpr const char* kRunSchema = "run/1";
inline constexpr const char* kAnatomyConvention = "x=medial-lateral y=anterior-posterior z=mechanical";
/// Contour SD assumed when a file gives no covariances, px.
inline constexpr double kDefaultContourSd = 2.0;

/// Cursor into a parsed document that remembers where it is for error messages.
class Node {
 public:
  Node(const Json& j, std::string file, std::string path = "") : j_(&j), file_(std::move(file)), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kInvalidInput, file_ + ": " + (path_.empty() ? "document" : path_) + ": " + what);
  }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node operator[](const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    const auto it = j_->find(key);
    if (it == j_->end()) Node(*j_, file_, join(key)).fail("missing required field");
    return Node(*it, file_, join(key));
  }

  Node operator[](std::size_t i) const {
    if (!j_->is_array()) fail("expected an array");
    if (i >= j_->size()) fail("index " + std::to_string(i) + " out of range");
    return Node((*j_)[i], file_, path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }

  int integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<int>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  template <int N>
  Eigen::Matrix<double, N, 1> vec() const {
    if (size() != N) fail("expected " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = (*this)[static_cast<std::size_t>(i)].number();
    return v;
  }

  void expect_schema(const char* schema) const {
    if ((*this)["schema"].string() != schema) (*this)["schema"].fail(std::string("expected \"") + schema + "\"");
  }

  const std::string& file() const { return file_; }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* j_;
  std::string file_;
  std::string path_;
};

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kInvalidInput, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

// ---- small values

inline Json to_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }
inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json to_json(const RigidPose& p) {
  Json R = Json::array();
  for (int r = 0; r < 3; ++r) R.push_back(Json::array({p.rotation(r, 0), p.rotation(r, 1), p.rotation(r, 2)}));
  return {{"rotation", R}, {"translation", to_json(p.translation)}};
}

inline RigidPose pose_from(const Node& n) {
  RigidPose p;
  const Node R = n["rotation"];
  if (R.size() != 3) R.fail("expected 3 rows");
  for (std::size_t r = 0; r < 3; ++r) p.rotation.row(static_cast<Eigen::Index>(r)) = R[r].vec<3>().transpose();
  p.translation = n["translation"].vec<3>();
  if ((p.rotation.transpose() * p.rotation - Mat3::Identity()).norm() > 1e-6 || p.rotation.determinant() < 0.0)
    R.fail("not a rotation matrix");
  // Re-orthonormalize so text round-off never accumulates.
  const Eigen::JacobiSVD<Mat3> svd(p.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  p.rotation = svd.matrixU() * svd.matrixV().transpose();
  return p;
}

// ---- intrinsics

inline Json to_json(const PinholeCamera& c) {
  return {{"schema", kIntrinsicsSchema}, {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx},
          {"cy", c.cy},                  {"width", c.width}, {"height", c.height}};
}

inline PinholeCamera intrinsics_from(const Node& n) {
  n.expect_schema(kIntrinsicsSchema);
  PinholeCamera c;
  c.fx = n["fx"].number();
  c.fy = n["fy"].number();
  c.cx = n["cx"].number();
  c.cy = n["cy"].number();
  c.width = n["width"].integer();
  c.height = n["height"].integer();
  try {
    c.validate();
  } catch (const Error& e) {
    n.fail(e.what());
  }
  return c;
}

// ---- contours

inline Json to_json(const ContourSet& set) {
  Json images = Json::array();
  auto points = [](const std::vector<Vec2>& v) {
    Json a = Json::array();
    for (const auto& p : v) a.push_back(to_json(p));
    return a;
  };
  auto covs = [](const std::vector<Mat2>& v) {
    Json a = Json::array();
    for (const auto& c : v) a.push_back(Json::array({c(0, 0), c(0, 1), c(1, 0), c(1, 1)}));
    return a;
  };
  for (const auto& im : set.images) {
    Json j = {{"camera_id", im.camera_id}, {"width", im.width}, {"height", im.height}};
    j["tibia"] = points(im.tibia);
    for (int l = 0; l < kPinCount; ++l) j["pin" + std::to_string(l + 1)] = points(im.pins[l]);
    j["tibia_cov"] = covs(im.tibia_cov);
    for (int l = 0; l < kPinCount; ++l) j["pin" + std::to_string(l + 1) + "_cov"] = covs(im.pin_cov[l]);
    images.push_back(std::move(j));
  }
  return {{"schema", kContoursSchema}, {"images", images}};
}

/// Covariance arrays are optional; missing ones default to (2 px)^2 I.
inline ContourSet contours_from(const Node& n) {
  n.expect_schema(kContoursSchema);
  ContourSet set;
  const Node images = n["images"];
  auto read = [](const Node& im, const std::string& key, std::vector<Vec2>& pts, std::vector<Mat2>& cov) {
    const Node a = im[key];
    for (std::size_t i = 0; i < a.size(); ++i) pts.push_back(a[i].vec<2>());
    if (im.has(key + "_cov")) {
      const Node c = im[key + "_cov"];
      if (c.size() != pts.size()) c.fail("expected one covariance per point");
      for (std::size_t i = 0; i < c.size(); ++i) {
        const Eigen::Vector4d v = c[i].vec<4>();
        Mat2 m;
        m << v[0], v[1], v[2], v[3];
        cov.push_back(m);
      }
    } else {
      cov.assign(pts.size(), kDefaultContourSd * kDefaultContourSd * Mat2::Identity());
    }
    if (pts.empty()) a.fail("contour is empty");
  };
  for (std::size_t k = 0; k < images.size(); ++k) {
    const Node im = images[k];
    ImageContours c;
    c.camera_id = im["camera_id"].integer();
    c.width = im["width"].integer();
    c.height = im["height"].integer();
    read(im, "tibia", c.tibia, c.tibia_cov);
    for (int l = 0; l < kPinCount; ++l) read(im, "pin" + std::to_string(l + 1), c.pins[l], c.pin_cov[l]);
    set.images.push_back(std::move(c));
  }
  return set;
}

// ---- anatomy

struct Anatomy {
  AnatomyFrame frame;
  /// Pins of the planned (ideal) resection, initial guess for the pin poses.
  std::array<RigidPose, kPinCount> ideal_pins;
};

inline Json to_json(const Anatomy& a) {
  return {{"schema", kAnatomySchema},
          {"convention", kAnatomyConvention},
          {"mechanical", to_json(a.frame.mechanical)},
          {"anterior_posterior", to_json(a.frame.anterior_posterior)},
          {"medial_lateral", to_json(a.frame.medial_lateral)},
          {"ideal_pins", Json::array({to_json(a.ideal_pins[0]), to_json(a.ideal_pins[1])})}};
}

inline Anatomy anatomy_from(const Node& n) {
  n.expect_schema(kAnatomySchema);
  if (n["convention"].string() != kAnatomyConvention)
    n["convention"].fail(std::string("unsupported convention, expected \"") + kAnatomyConvention + "\"");
  Anatomy a;
  a.frame.mechanical = n["mechanical"].vec<3>();
  a.frame.anterior_posterior = n["anterior_posterior"].vec<3>();
  a.frame.medial_lateral = n["medial_lateral"].vec<3>();
  try {
    a.frame.validate();
  } catch (const Error& e) {
    n.fail(e.what());
  }
  const Node pins = n["ideal_pins"];
  if (pins.size() != kPinCount) pins.fail("expected 2 pin poses");
  for (std::size_t l = 0; l < kPinCount; ++l) a.ideal_pins[l] = pose_from(pins[l]);
  return a;
}

// ---- initial poses

struct InitialPoses {
  std::vector<RigidPose> cameras;
  /// Camera-frame depth at which every contour point is back-projected, mm.
  double depth = 500.0;
  std::optional<std::array<RigidPose, kPinCount>> pins;
};

inline Json to_json(const InitialPoses& p) {
  Json cams = Json::array();
  for (const auto& c : p.cameras) cams.push_back(to_json(c));
  Json j = {{"schema", kPosesSchema}, {"cameras", cams}, {"depth", p.depth}};
  if (p.pins) j["pins"] = Json::array({to_json((*p.pins)[0]), to_json((*p.pins)[1])});
  return j;
}

inline InitialPoses poses_from(const Node& n) {
  n.expect_schema(kPosesSchema);
  InitialPoses p;
  const Node cams = n["cameras"];
  for (std::size_t k = 0; k < cams.size(); ++k) p.cameras.push_back(pose_from(cams[k]));
  p.depth = n["depth"].number();
  if (!(p.depth > kMinDepth)) n["depth"].fail("must be positive");
  if (n.has("pins")) {
    const Node pins = n["pins"];
    if (pins.size() != kPinCount) pins.fail("expected 2 pin poses");
    p.pins = std::array<RigidPose, kPinCount>{pose_from(pins[0]), pose_from(pins[1])};
  }
  return p;
}

/// Cameras from the pose file, pins from the pose file or else the ideal plan,
/// every contour point back-projected at the common depth.
inline RegistrationState initial_state(const InitialPoses& poses, const Anatomy& anatomy, const ContourSet& contours,
                                       const PinholeCamera& cam) {
  if (poses.cameras.size() != contours.image_count())
    throw Error(ErrorCode::kLengthMismatch, "pose file has " + std::to_string(poses.cameras.size()) +
                                                " cameras, contour file has " +
                                                std::to_string(contours.image_count()) + " images");
  RegistrationState s;
  s.cameras = poses.cameras;
  s.pins = poses.pins ? *poses.pins : anatomy.ideal_pins;
  for (std::size_t k = 0; k < contours.image_count(); ++k) {
    const auto& im = contours.images[k];
    const RigidPose& C = s.cameras[k];
    std::vector<Vec3> tp;
    for (const auto& px : im.tibia) tp.push_back(back_project(cam, C, px, poses.depth));
    s.tibia_points.push_back(std::move(tp));
    std::array<std::vector<Vec3>, kPinCount> pp;
    for (int l = 0; l < kPinCount; ++l)
      for (const auto& px : im.pins[l]) pp[l].push_back(s.pins[l].apply_inverse(back_project(cam, C, px, poses.depth)));
    s.pin_points.push_back(std::move(pp));
  }
  return s;
}

// ---- state dump

inline Json to_json(const RegistrationState& s) {
  Json cams = Json::array();
  for (const auto& c : s.cameras) cams.push_back(to_json(c));
  Json tibia = Json::array();
  Json pins = Json::array();
  for (std::size_t k = 0; k < s.image_count(); ++k) {
    Json t = Json::array();
    for (const auto& p : s.tibia_points[k]) t.push_back(to_json(p));
    tibia.push_back(std::move(t));
    Json per = Json::array();
    for (int l = 0; l < kPinCount; ++l) {
      Json a = Json::array();
      for (const auto& p : s.pin_points[k][l]) a.push_back(to_json(p));
      per.push_back(std::move(a));
    }
    pins.push_back(std::move(per));
  }
  return {{"schema", kStateSchema},
          {"cameras", cams},
          {"pins", Json::array({to_json(s.pins[0]), to_json(s.pins[1])})},
          {"tibia_points", tibia},
          {"pin_points", pins}};
}

inline RegistrationState state_from(const Node& n) {
  n.expect_schema(kStateSchema);
  RegistrationState s;
  const Node cams = n["cameras"];
  for (std::size_t k = 0; k < cams.size(); ++k) s.cameras.push_back(pose_from(cams[k]));
  const Node pins = n["pins"];
  if (pins.size() != kPinCount) pins.fail("expected 2 pin poses");
  for (std::size_t l = 0; l < kPinCount; ++l) s.pins[l] = pose_from(pins[l]);
  const Node tibia = n["tibia_points"];
  const Node pp = n["pin_points"];
  if (tibia.size() != s.cameras.size()) tibia.fail("expected one array per camera");
  if (pp.size() != s.cameras.size()) pp.fail("expected one array per camera");
  for (std::size_t k = 0; k < s.cameras.size(); ++k) {
    std::vector<Vec3> t;
    for (std::size_t i = 0; i < tibia[k].size(); ++i) t.push_back(tibia[k][i].vec<3>());
    s.tibia_points.push_back(std::move(t));
    if (pp[k].size() != kPinCount) pp[k].fail("expected 2 pin arrays");
    std::array<std::vector<Vec3>, kPinCount> a;
    for (std::size_t l = 0; l < kPinCount; ++l)
      for (std::size_t j = 0; j < pp[k][l].size(); ++j) a[l].push_back(pp[k][l][j].vec<3>());
    s.pin_points.push_back(std::move(a));
  }
  return s;
}

// ---- run configuration

struct RunConfig {
  std::filesystem::path tibia_mesh, pin_mesh, contours, intrinsics, anatomy, poses;
  /// Full initial state; overrides the pose file's cameras, pins and depth.
  std::optional<std::filesystem::path> initial_state;
  /// Ground-truth state for evaluation, optional.
  std::optional<std::filesystem::path> ground_truth;
  Method method = Method::kProposed;
  EnergyOptions energy;
  SolverConfig solver;
  ContourBudget budget;
  std::filesystem::path output = "out";
};

inline Json to_json(const RunConfig& c, const std::filesystem::path& base = {}) {
  auto rel = [&](const std::filesystem::path& p) {
    return (base.empty() ? p : std::filesystem::relative(p, base)).generic_string();
  };
  Json j = {{"schema", kRunSchema},
            {"tibia_mesh", rel(c.tibia_mesh)},
            {"pin_mesh", rel(c.pin_mesh)},
            {"contours", rel(c.contours)},
            {"intrinsics", rel(c.intrinsics)},
            {"anatomy", rel(c.anatomy)},
            {"poses", rel(c.poses)}};
  if (c.initial_state) j["initial_state"] = rel(*c.initial_state);
  if (c.ground_truth) j["ground_truth"] = rel(*c.ground_truth);
  j["method"] = std::string(method_name(c.method));
  j["weights"] = {{"reprojection", c.energy.weights.reprojection},
                  {"backprojection", c.energy.weights.backprojection},
                  {"modelprojection", c.energy.weights.modelprojection}};
  j["energy"] = {{"point_sigma", c.energy.point_sigma},
                 {"contour_sigma", c.energy.contour_sigma},
                 {"max_silhouette_points", c.energy.max_silhouette_points}};
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"energy_tolerance", c.solver.energy_tolerance},
                 {"step_tolerance", c.solver.step_tolerance},
                 {"initial_damping", c.solver.initial_damping},
                 {"damping_scale", c.solver.damping_scale},
                 {"linear_solver", c.solver.linear_solver == LinearSolver::kSchur ? "schur" : "dense"}};
  j["budget"] = {{"tibia", c.budget.tibia}, {"per_pin", c.budget.per_pin}};
  j["output"] = c.output.generic_string();
  return j;
}

/// Paths are resolved against the directory of the config file. Sections other
/// than the file paths are optional and default to the library defaults.
inline RunConfig run_config_from(const Node& n, const std::filesystem::path& base) {
  n.expect_schema(kRunSchema);
  RunConfig c;
  auto path = [&](const char* key) {
    const std::filesystem::path p = base / n[key].string();
    if (!std::filesystem::exists(p)) n[key].fail("file not found: " + p.string());
    return p;
  };
  c.tibia_mesh = path("tibia_mesh");
  c.pin_mesh = path("pin_mesh");
  c.contours = path("contours");
  c.intrinsics = path("intrinsics");
  c.anatomy = path("anatomy");
  c.poses = path("poses");
  if (n.has("initial_state")) c.initial_state = path("initial_state");
  if (n.has("ground_truth")) c.ground_truth = path("ground_truth");
  if (n.has("method")) {
    const auto m = parse_method(n["method"].string());
    if (!m) n["method"].fail("unknown method");
    c.method = *m;
  }
  if (n.has("weights")) {
    const Node w = n["weights"];
    c.energy.weights = {w["reprojection"].number(), w["backprojection"].number(), w["modelprojection"].number()};
    try {
      c.energy.weights.validate();
    } catch (const Error& e) {
      w.fail(e.what());
    }
  }
  if (n.has("energy")) {
    const Node e = n["energy"];
    if (e.has("point_sigma")) c.energy.point_sigma = e["point_sigma"].number();
    if (e.has("contour_sigma")) c.energy.contour_sigma = e["contour_sigma"].number();
    if (e.has("max_silhouette_points"))
      c.energy.max_silhouette_points = static_cast<std::size_t>(e["max_silhouette_points"].integer());
    if (!(c.energy.point_sigma > 0) || !(c.energy.contour_sigma > 0)) e.fail("sigmas must be positive");
  }
  if (n.has("solver")) {
    const Node s = n["solver"];
    if (s.has("max_iterations")) c.solver.max_iterations = s["max_iterations"].integer();
    if (s.has("energy_tolerance")) c.solver.energy_tolerance = s["energy_tolerance"].number();
    if (s.has("step_tolerance")) c.solver.step_tolerance = s["step_tolerance"].number();
    if (s.has("initial_damping")) c.solver.initial_damping = s["initial_damping"].number();
    if (s.has("damping_scale")) c.solver.damping_scale = s["damping_scale"].number();
    if (s.has("linear_solver")) {
      const std::string ls = s["linear_solver"].string();
      if (ls != "schur" && ls != "dense") s["linear_solver"].fail("expected \"schur\" or \"dense\"");
      c.solver.linear_solver = ls == "schur" ? LinearSolver::kSchur : LinearSolver::kDense;
    }
    try {
      c.solver.validate();
    } catch (const Error& e) {
      s.fail(e.what());
    }
  }
  if (n.has("budget")) {
    const Node b = n["budget"];
    c.budget.tibia = static_cast<std::size_t>(b["tibia"].integer());
    c.budget.per_pin = static_cast<std::size_t>(b["per_pin"].integer());
  }
  if (n.has("output")) c.output = base / n["output"].string();
  return c;
}

// ---- report

struct Evaluation {
  double dctr_deg = 0.0;
  double dstr_deg = 0.0;
  double max_camera_rotation_deg = 0.0;
  double max_camera_translation_mm = 0.0;
};

inline Evaluation evaluate(const RegistrationState& estimate, const RegistrationState& truth,
                           const ResectionReport& est, const ResectionReport& ref) {
  Evaluation e;
  std::tie(e.dctr_deg, e.dstr_deg) = evaluate_plane_error(est, ref);
  if (estimate.image_count() != truth.image_count())
    throw Error(ErrorCode::kLengthMismatch, "ground truth has a different number of cameras");
  for (std::size_t k = 0; k < estimate.image_count(); ++k) {
    e.max_camera_rotation_deg = std::max(
        e.max_camera_rotation_deg, rotation_distance(estimate.cameras[k], truth.cameras[k]) * 180.0 / std::numbers::pi);
    // Camera centres, the clinically meaningful position of the source.
    const Vec3 c0 = estimate.cameras[k].inverse().translation;
    const Vec3 c1 = truth.cameras[k].inverse().translation;
    e.max_camera_translation_mm = std::max(e.max_camera_translation_mm, (c0 - c1).norm());
  }
  return e;
}

inline Json report_json(const ResectionReport& r, Method method, const SolveOutcome& out,
                        const std::optional<Evaluation>& eval) {
  Json j = {{"schema", kReportSchema},
            {"summary", r.summary()},
            {"ctr_deg", r.ctr_deg},
            {"str_deg", r.str_deg},
            {"passes", r.passes},
            {"tolerance_deg", kClinicalToleranceDeg},
            {"plane", {{"point", to_json(r.plane.point)}, {"normal", to_json(r.plane.normal)}, {"rms_mm", r.plane.rms}}},
            {"method", std::string(method_name(method))},
            {"solver",
             {{"converged", out.converged},
              {"termination", out.termination},
              {"iterations", out.iterations},
              {"initial_energy", out.energies.front()},
              {"final_energy", out.final_energy()},
              {"warnings", out.warnings}}}};
  if (eval)
    j["evaluation"] = {{"ctr_error_deg", eval->dctr_deg},
                       {"str_error_deg", eval->dstr_deg},
                       {"max_camera_rotation_error_deg", eval->max_camera_rotation_deg},
                       {"max_camera_translation_error_mm", eval->max_camera_translation_mm}};
  return j;
}

/// One line per linearization attempt: iteration, E, lambda, |delta|, accepted.
inline std::string iteration_log(const SolveOutcome& out) {
  std::ostringstream os;
  os << "# iteration energy lambda step_norm accepted\n";
  char buf[160];
  for (const auto& r : out.log) {
    std::snprintf(buf, sizeof buf, "%d %.12g %.6g %.6g %d\n", r.iteration, r.energy, r.damping, r.step_norm,
                  r.accepted ? 1 : 0);
    os << buf;
  }
  return os.str();
}

}  // namespace tka::io
