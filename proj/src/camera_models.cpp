#include "calcap/camera_models.hpp"

#include <cmath>
#include <limits>

#include "calcap/error.hpp"

namespace calcap {

std::string to_string(CameraModel model) {
  return model == CameraModel::Pinhole ? "pinhole" : "double_sphere";
}

CameraModel camera_model_from_string(const std::string& name) {
  if (name == "pinhole") return CameraModel::Pinhole;
  if (name == "double_sphere") return CameraModel::DoubleSphere;
  throw Error(ErrorCode::InvalidConfig, "unknown camera model '" + name + "'");
}

CameraModel model_of(const Intrinsics& k) {
  return std::holds_alternative<PinholeIntrinsics>(k) ? CameraModel::Pinhole : CameraModel::DoubleSphere;
}

int num_params(CameraModel model) {
  return model == CameraModel::Pinhole ? PinholeIntrinsics::kNumParams : DoubleSphereIntrinsics::kNumParams;
}

std::vector<double> intrinsics_to_vector(const Intrinsics& k) {
  return std::visit(
      [](const auto& in) {
        const auto a = in.to_array();
        return std::vector<double>(a.begin(), a.end());
      },
      k);
}

Intrinsics intrinsics_from_vector(CameraModel model, std::span<const double> p) {
  if (static_cast<int>(p.size()) != num_params(model)) {
    throw Error(ErrorCode::InvalidConfig, "wrong parameter count for " + to_string(model));
  }
  if (model == CameraModel::Pinhole) return PinholeIntrinsics::from_array(p);
  return DoubleSphereIntrinsics::from_array(p);
}

void validate_intrinsics(const Intrinsics& k) {
  for (double v : intrinsics_to_vector(k)) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvariantViolation, "non-finite intrinsic parameter");
  }
  std::visit(
      [](const auto& in) {
        if (!(in.fx > 0.0) || !(in.fy > 0.0)) {
          throw Error(ErrorCode::InvariantViolation, "focal lengths must be positive");
        }
      },
      k);
  if (const auto* ds = std::get_if<DoubleSphereIntrinsics>(&k)) {
    if (!(ds->alpha > 0.0 && ds->alpha < 1.0)) {
      throw Error(ErrorCode::InvariantViolation, "double-sphere alpha must lie in (0, 1)");
    }
  }
}

// ---------------------------------------------------------------- pinhole

namespace {

struct Distortion {
  double rad;
  double dx;
  double dy;
};

Distortion distortion_terms(const PinholeIntrinsics& k, double x, double y) {
  const double r2 = x * x + y * y;
  const double rad = 1.0 + r2 * (k.k1 + r2 * (k.k2 + r2 * k.k3));
  const double dx = 2.0 * k.p1 * x * y + k.p2 * (r2 + 2.0 * x * x);
  const double dy = k.p1 * (r2 + 2.0 * y * y) + 2.0 * k.p2 * x * y;
  return {rad, dx, dy};
}

bool pinhole_project_raw(const PinholeIntrinsics& k, const Point3& p, Point2& out) {
  if (!(p.z() > kPinholeMinDepth)) return false;
  const double x = p.x() / p.z();
  const double y = p.y() / p.z();
  const Distortion d = distortion_terms(k, x, y);
  out.x() = k.fx * (x * d.rad + d.dx) + k.cx;
  out.y() = k.fy * (y * d.rad + d.dy) + k.cy;
  return std::isfinite(out.x()) && std::isfinite(out.y());
}

}  // namespace

Point2 pinhole_project(const PinholeIntrinsics& k, const Point3& p) {
  Point2 out;
  if (!pinhole_project_raw(k, p, out)) {
    throw Error(ErrorCode::BehindCamera, "point depth " + std::to_string(p.z()) + " not in front of the camera");
  }
  return out;
}

Point3 pinhole_unproject(const PinholeIntrinsics& k, const Point2& px, double tol, int max_iter) {
  if (!px.allFinite()) throw Error(ErrorCode::NoConvergence, "non-finite pixel");
  const double xd = (px.x() - k.cx) / k.fx;
  const double yd = (px.y() - k.cy) / k.fy;
  double x = xd, y = yd;
  double step = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const Distortion d = distortion_terms(k, x, y);
    const double nx = (xd - d.dx) / d.rad;
    const double ny = (yd - d.dy) / d.rad;
    if (!std::isfinite(nx) || !std::isfinite(ny)) {
      throw Error(ErrorCode::NoConvergence, "undistortion diverged");
    }
    step = std::hypot(nx - x, ny - y);
    x = nx;
    y = ny;
    if (step < tol) break;
  }
  if (step > 1e-6) {
    throw Error(ErrorCode::NoConvergence, "undistortion did not converge (last step " + std::to_string(step) + ")");
  }
  return {x, y, 1.0};
}

// ---------------------------------------------------------- double sphere

bool ds_valid(const DoubleSphereIntrinsics& k, const Point3& p) {
  const double w1 = k.alpha <= 0.5 ? k.alpha / (1.0 - k.alpha) : (1.0 - k.alpha) / k.alpha;
  const double w2 = (w1 + k.xi) / std::sqrt(2.0 * w1 * k.xi + k.xi * k.xi + 1.0);
  const double d1 = p.norm();
  return p.z() > -w2 * d1;
}

namespace {

bool ds_project_raw(const DoubleSphereIntrinsics& k, const Point3& p, Point2& out) {
  if (!ds_valid(k, p)) return false;
  const double d1 = p.norm();
  const double zs = k.xi * d1 + p.z();
  const double d2 = std::sqrt(p.x() * p.x() + p.y() * p.y() + zs * zs);
  const double denom = k.alpha * d2 + (1.0 - k.alpha) * zs;
  if (!(denom > 0.0)) return false;
  out.x() = k.fx * p.x() / denom + k.cx;
  out.y() = k.fy * p.y() / denom + k.cy;
  return std::isfinite(out.x()) && std::isfinite(out.y());
}

}  // namespace

Point2 ds_project(const DoubleSphereIntrinsics& k, const Point3& p) {
  Point2 out;
  if (!ds_project_raw(k, p, out)) {
    throw Error(ErrorCode::OutsideValidRegion, "point outside the double-sphere projection region");
  }
  return out;
}

Point3 ds_unproject(const DoubleSphereIntrinsics& k, const Point2& px) {
  const double mx = (px.x() - k.cx) / k.fx;
  const double my = (px.y() - k.cy) / k.fy;
  const double r2 = mx * mx + my * my;
  if (k.alpha > 0.5 && r2 > 1.0 / (2.0 * k.alpha - 1.0)) {
    throw Error(ErrorCode::OutsideDomain, "pixel outside the double-sphere unprojection domain");
  }
  const double root = std::sqrt(1.0 - (2.0 * k.alpha - 1.0) * r2);
  const double mz = (1.0 - k.alpha * k.alpha * r2) / (k.alpha * root + 1.0 - k.alpha);
  const double disc = mz * mz + (1.0 - k.xi * k.xi) * r2;
  if (!(disc >= 0.0) || !std::isfinite(mz)) {
    throw Error(ErrorCode::OutsideDomain, "pixel outside the double-sphere unprojection domain");
  }
  const double s = (mz * k.xi + std::sqrt(disc)) / (mz * mz + r2);
  Point3 dir(s * mx, s * my, s * mz - k.xi);
  return dir.normalized();
}

// ----------------------------------------------------------------- dispatch

Point2 project(const Intrinsics& k, const Point3& p) {
  if (const auto* ph = std::get_if<PinholeIntrinsics>(&k)) return pinhole_project(*ph, p);
  return ds_project(std::get<DoubleSphereIntrinsics>(k), p);
}

Point3 unproject(const Intrinsics& k, const Point2& px) {
  if (const auto* ph = std::get_if<PinholeIntrinsics>(&k)) return pinhole_unproject(*ph, px).normalized();
  return ds_unproject(std::get<DoubleSphereIntrinsics>(k), px);
}

bool try_project(const Intrinsics& k, const Point3& p, Point2& out) {
  if (const auto* ph = std::get_if<PinholeIntrinsics>(&k)) return pinhole_project_raw(*ph, p, out);
  return ds_project_raw(std::get<DoubleSphereIntrinsics>(k), p, out);
}

// -------------------------------------------------------------------- poses

Point3 pose_transform(const Pose& t, const Point3& p) { return t.rotation * p + t.translation; }

Pose pose_compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose pose_inverse(const Pose& t) {
  Pose out;
  out.rotation = t.rotation.conjugate().normalized();
  out.translation = -(out.rotation * t.translation);
  return out;
}

double rotation_angle_between(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  return Eigen::AngleAxisd(a.conjugate() * b).angle();
}

Eigen::Vector3d quaternion_to_axis_angle(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond n = q.normalized();
  if (n.w() < 0.0) n.coeffs() = -n.coeffs();
  const double sin_half = n.vec().norm();
  if (sin_half < 1e-12) return 2.0 * n.vec();
  const double angle = 2.0 * std::atan2(sin_half, n.w());
  return n.vec() * (angle / sin_half);
}

Eigen::Quaterniond axis_angle_to_quaternion(const Eigen::Vector3d& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * aa.x(), 0.5 * aa.y(), 0.5 * aa.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, aa / angle));
}

Point3 rotate_axis_angle(const double* aa, const Point3& p) {
  const Eigen::Vector3d w(aa[0], aa[1], aa[2]);
  const double theta2 = w.squaredNorm();
  if (theta2 > std::numeric_limits<double>::epsilon()) {
    const double theta = std::sqrt(theta2);
    const Eigen::Vector3d axis = w / theta;
    const double c = std::cos(theta), s = std::sin(theta);
    return p * c + axis.cross(p) * s + axis * (axis.dot(p) * (1.0 - c));
  }
  return p + w.cross(p);
}

std::array<double, 6> pose_to_params(const Pose& t) {
  const Eigen::Vector3d aa = quaternion_to_axis_angle(t.rotation);
  return {aa.x(), aa.y(), aa.z(), t.translation.x(), t.translation.y(), t.translation.z()};
}

Pose pose_from_params(std::span<const double> p) {
  Pose out;
  out.rotation = axis_angle_to_quaternion(Eigen::Vector3d(p[0], p[1], p[2]));
  out.translation = Eigen::Vector3d(p[3], p[4], p[5]);
  return out;
}

}  // namespace calcap
