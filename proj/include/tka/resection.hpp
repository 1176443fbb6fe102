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

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "tka/error.hpp"
#include "tka/geom/mesh.hpp"
#include "tka/geom/pose.hpp"

namespace tka {

/// Tibial anatomy axes in the tibia-model frame. Right-handed as
/// medial_lateral x anterior_posterior = mechanical.
struct AnatomyFrame {
  Vec3 mechanical = Vec3::UnitZ();
  Vec3 anterior_posterior = Vec3::UnitY();
  Vec3 medial_lateral = Vec3::UnitX();

  void validate() const {
    constexpr double tol = 1e-6;
    for (const Vec3* v : {&mechanical, &anterior_posterior, &medial_lateral})
      if (!v->allFinite() || std::abs(v->norm() - 1.0) > tol)
        throw Error(ErrorCode::kInvalidInput, "anatomy axes must be unit vectors");
    if (std::abs(mechanical.dot(anterior_posterior)) > tol || std::abs(mechanical.dot(medial_lateral)) > tol ||
        std::abs(anterior_posterior.dot(medial_lateral)) > tol)
      throw Error(ErrorCode::kInvalidInput, "anatomy axes must be pairwise orthogonal");
    if (medial_lateral.cross(anterior_posterior).dot(mechanical) < 0.0)
      throw Error(ErrorCode::kInvalidInput, "anatomy axes must be right-handed");
  }

  bool same_as(const AnatomyFrame& o, double tol = 1e-9) const {
    return (mechanical - o.mechanical).norm() <= tol &&
           (anterior_posterior - o.anterior_posterior).norm() <= tol &&
           (medial_lateral - o.medial_lateral).norm() <= tol;
  }
};

struct ResectionPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  /// RMS point-to-plane distance of the fitted vertices, mm.
  double rms = 0.0;
};

/// Total-least-squares plane through every vertex of both posed pin meshes.
/// The normal is flipped into the hemisphere of `up`.
inline ResectionPlane fit_resection_plane(const TriangleMesh& pin_mesh,
                                          const std::array<RigidPose, 2>& pins,
                                          const Vec3& up = Vec3::UnitZ()) {
  if (pin_mesh.empty()) throw Error(ErrorCode::kEmptyMesh, "pin mesh has no triangles");
  Vec3 mean = Vec3::Zero();
  std::size_t count = 0;
  for (const auto& pose : pins)
    for (const auto& v : pin_mesh.vertices()) {
      mean += pose.apply(v);
      ++count;
    }
  mean /= static_cast<double>(count);
  Mat3 cov = Mat3::Zero();
  for (const auto& pose : pins)
    for (const auto& v : pin_mesh.vertices()) {
      const Vec3 d = pose.apply(v) - mean;
      cov += d * d.transpose();
    }
  cov /= static_cast<double>(count);
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (ev[1] <= 1e-9 * ev[2] || ev[1] - ev[0] <= 1e-6 * ev[1])
    throw Error(ErrorCode::kDegeneratePins, "pin vertices do not determine a plane (coincident or collinear pins)");
  ResectionPlane plane;
  plane.point = mean;
  plane.normal = es.eigenvectors().col(0).normalized();
  if (plane.normal.dot(up) < 0.0) plane.normal = -plane.normal;
  plane.rms = std::sqrt(std::max(ev[0], 0.0));
  return plane;
}

/// Coronal and sagittal resection angles of `normal`, degrees. Positive CTR
/// tips the normal toward +medial_lateral, positive STR toward +anterior_posterior.
/// The normal is first flipped into the +mechanical hemisphere.
inline std::pair<double, double> compute_ctr_str(const Vec3& normal, const AnatomyFrame& frame) {
  constexpr double deg = 180.0 / std::numbers::pi;
  const double s = normal.dot(frame.mechanical) < 0.0 ? -1.0 : 1.0;
  const double m = s * normal.dot(frame.mechanical);
  const double x = s * normal.dot(frame.medial_lateral);
  const double y = s * normal.dot(frame.anterior_posterior);
  if (std::hypot(m, x) < 1e-9) throw Error(ErrorCode::kZeroProjection, "normal is orthogonal to the coronal plane");
  if (std::hypot(m, y) < 1e-9) throw Error(ErrorCode::kZeroProjection, "normal is orthogonal to the sagittal plane");
  return {std::atan2(x, m) * deg, std::atan2(y, m) * deg};
}

struct ResectionReport {
  ResectionPlane plane;
  double ctr_deg = 0.0;
  double str_deg = 0.0;
  bool passes = false;
  AnatomyFrame frame;

  /// e.g. "CTR=+1.6° STR=-1.2° PASS"
  std::string summary() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "CTR=%+.1f° STR=%+.1f° %s", ctr_deg, str_deg, passes ? "PASS" : "FAIL");
    return buf;
  }
};

inline constexpr double kClinicalToleranceDeg = 3.0;

inline ResectionReport make_report(const ResectionPlane& plane, const AnatomyFrame& frame) {
  frame.validate();
  ResectionReport r;
  r.plane = plane;
  r.frame = frame;
  std::tie(r.ctr_deg, r.str_deg) = compute_ctr_str(plane.normal, frame);
  r.passes = std::abs(r.ctr_deg) <= kClinicalToleranceDeg && std::abs(r.str_deg) <= kClinicalToleranceDeg;
  return r;
}

inline ResectionReport make_report(const TriangleMesh& pin_mesh, const std::array<RigidPose, 2>& pins,
                                   const AnatomyFrame& frame) {
  frame.validate();
  return make_report(fit_resection_plane(pin_mesh, pins, frame.mechanical), frame);
}

/// Signed (estimated - truth) differences of CTR and STR, degrees.
inline std::pair<double, double> evaluate_plane_error(const ResectionReport& estimated,
                                                      const ResectionReport& truth) {
  if (!estimated.frame.same_as(truth.frame))
    throw Error(ErrorCode::kFrameMismatch, "reports use different anatomy frames");
  return {estimated.ctr_deg - truth.ctr_deg, estimated.str_deg - truth.str_deg};
}

}  // namespace tka
