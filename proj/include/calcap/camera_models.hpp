#pragma once

#include <array>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace calcap {

using Point2 = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;

/// OpenCV-style pinhole with radial (k1, k2, k3) and tangential (p1, p2) terms.
struct PinholeIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, p1 = 0.0, p2 = 0.0;

  static constexpr int kNumParams = 9;
  std::array<double, kNumParams> to_array() const { return {fx, fy, cx, cy, k1, k2, k3, p1, p2}; }
  static PinholeIntrinsics from_array(std::span<const double> p) {
    return {p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]};
  }
};

/// Double-Sphere fisheye model with sphere offset `xi` and blend `alpha`.
struct DoubleSphereIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  double xi = 0.0, alpha = 0.5;

  static constexpr int kNumParams = 6;
  std::array<double, kNumParams> to_array() const { return {fx, fy, cx, cy, xi, alpha}; }
  static DoubleSphereIntrinsics from_array(std::span<const double> p) {
    return {p[0], p[1], p[2], p[3], p[4], p[5]};
  }
};

enum class CameraModel { Pinhole, DoubleSphere };

std::string to_string(CameraModel model);
CameraModel camera_model_from_string(const std::string& name);

using Intrinsics = std::variant<PinholeIntrinsics, DoubleSphereIntrinsics>;

CameraModel model_of(const Intrinsics& k);
int num_params(CameraModel model);
std::vector<double> intrinsics_to_vector(const Intrinsics& k);
Intrinsics intrinsics_from_vector(CameraModel model, std::span<const double> p);
void validate_intrinsics(const Intrinsics& k);

constexpr double kPinholeMinDepth = 1e-6;

Point2 pinhole_project(const PinholeIntrinsics& k, const Point3& p);
/// Returns the unit-depth ray (x', y', 1) for a pixel.
Point3 pinhole_unproject(const PinholeIntrinsics& k, const Point2& px, double tol = 1e-10, int max_iter = 50);

bool ds_valid(const DoubleSphereIntrinsics& k, const Point3& p);
Point2 ds_project(const DoubleSphereIntrinsics& k, const Point3& p);
/// Returns a unit direction.
Point3 ds_unproject(const DoubleSphereIntrinsics& k, const Point2& px);

/// Model dispatch. Both throw calcap::Error when the point/pixel is outside
/// the model's domain.
Point2 project(const Intrinsics& k, const Point3& p);
Point3 unproject(const Intrinsics& k, const Point2& px);
/// Non-throwing projection used inside the optimizer; false when invalid.
bool try_project(const Intrinsics& k, const Point3& p, Point2& out);

/// Rigid transform taking board/world coordinates into a camera frame.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  Point3 operator*(const Point3& p) const { return rotation * p + translation; }
};

Point3 pose_transform(const Pose& t, const Point3& p);
/// (a * b)(p) == a(b(p)).
Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& t);

/// Rotation angle of a^-1 * b in radians.
double rotation_angle_between(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

Eigen::Vector3d quaternion_to_axis_angle(const Eigen::Quaterniond& q);
Eigen::Quaterniond axis_angle_to_quaternion(const Eigen::Vector3d& aa);
/// Rodrigues rotation of `p` by the axis-angle vector `aa`, with a first-order
/// expansion near zero.
Point3 rotate_axis_angle(const double* aa, const Point3& p);

/// 6-vector [axis-angle, translation] parameterization used by the solver.
std::array<double, 6> pose_to_params(const Pose& t);
Pose pose_from_params(std::span<const double> p);

}  // namespace calcap
