#include "calcap/calib_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "calcap/error.hpp"

namespace calcap {

TargetGeometry TargetGeometry::grid(int rows, int cols, double spacing) {
  if (rows < 2 || cols < 2 || !(spacing > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "target needs at least 2x2 corners and positive spacing");
  }
  TargetGeometry g;
  g.rows = rows;
  g.cols = cols;
  g.spacing = spacing;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) g.points.emplace_back(i * spacing, j * spacing, 0.0);
  }
  return g;
}

// ------------------------------------------------------------- homography

namespace {

// Similarity taking points to zero mean and mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  if (!(dist > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "all points coincide");
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

bool collinear(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d ev = es.eigenvalues();
  return !(ev(1) > 0.0) || ev(0) <= 1e-12 * ev(1);
}

}  // namespace

Eigen::Matrix3d estimate_homography(const std::vector<Eigen::Vector2d>& board, const std::vector<Point2>& pixels) {
  if (board.size() != pixels.size()) {
    throw Error(ErrorCode::InvalidConfig, "homography needs matched point lists");
  }
  if (board.size() < 4) {
    throw Error(ErrorCode::DegenerateConfiguration, "homography needs at least 4 correspondences");
  }
  std::vector<Eigen::Vector2d> px(pixels.begin(), pixels.end());
  if (collinear(board) || collinear(px)) {
    throw Error(ErrorCode::DegenerateConfiguration, "correspondences are collinear");
  }
  const Eigen::Matrix3d tb = normalizing_transform(board);
  const Eigen::Matrix3d tp = normalizing_transform(px);
  const int n = static_cast<int>(board.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d b = tb * board[i].homogeneous();
    const Eigen::Vector3d p = tp * px[i].homogeneous();
    const double x = b.x(), y = b.y(), u = p.x(), v = p.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv.size() >= 9 && sv(7) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "homography is not uniquely determined");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d out = tp.inverse() * hn * tb;
  if (std::abs(out(2, 2)) > 1e-12) out /= out(2, 2);
  return out;
}

// ------------------------------------------------------- Zhang-style init

namespace {

Eigen::Matrix<double, 6, 1> v_ij(const Eigen::Matrix3d& h, int i, int j) {
  // Columns h_i, h_j of H (0-based).
  const Eigen::Vector3d a = h.col(i), b = h.col(j);
  Eigen::Matrix<double, 6, 1> v;
  v << a(0) * b(0), a(0) * b(1) + a(1) * b(0), a(1) * b(1), a(2) * b(0) + a(0) * b(2), a(2) * b(1) + a(1) * b(2),
      a(2) * b(2);
  return v;
}

}  // namespace

Eigen::Matrix3d camera_matrix(const PinholeIntrinsics& k) {
  Eigen::Matrix3d m;
  m << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  return m;
}

PinholeIntrinsics init_pinhole_intrinsics(const std::vector<Eigen::Matrix3d>& homographies) {
  if (homographies.size() < 3) {
    throw Error(ErrorCode::NotEnoughViews, "closed-form intrinsics need at least 3 views, got " +
                                                std::to_string(homographies.size()));
  }
  // Condition: scale pixel coordinates by the typical magnitude of the
  // homographies' translation column.
  std::vector<double> mags;
  for (const auto& h : homographies) {
    if (!h.allFinite() || std::abs(h(2, 2)) < 1e-300) continue;
    mags.push_back(std::max(std::abs(h(0, 2) / h(2, 2)), std::abs(h(1, 2) / h(2, 2))));
  }
  double s = 1.0;
  if (!mags.empty()) {
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    s = std::max(mags[mags.size() / 2], 1.0);
  }
  Eigen::Matrix3d n = Eigen::Matrix3d::Identity();
  n(0, 0) = n(1, 1) = 1.0 / s;

  const int m = static_cast<int>(homographies.size());
  Eigen::MatrixXd v(2 * m, 6);
  for (int i = 0; i < m; ++i) {
    Eigen::Matrix3d h = n * homographies[i];
    h /= h.norm();
    v.row(2 * i) = v_ij(h, 0, 1).transpose();
    v.row(2 * i + 1) = (v_ij(h, 0, 0) - v_ij(h, 1, 1)).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(4) < 1e-12 * sv(0)) {
    throw Error(ErrorCode::IllConditioned, "view homographies do not constrain the intrinsics");
  }
  Eigen::VectorXd b = svd.matrixV().col(5);
  Eigen::Matrix3d bm;
  bm << b(0), b(1), b(3), b(1), b(2), b(4), b(3), b(4), b(5);
  if (bm(0, 0) < 0.0) bm = -bm;
  Eigen::LLT<Eigen::Matrix3d> llt(bm);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::IllConditioned, "image of the absolute conic is not positive definite");
  }
  // B = K^-T K^-1 = L L^T with L lower-triangular, so K^-1 = L^T up to scale.
  const Eigen::Matrix3d kinv = llt.matrixL().transpose();
  Eigen::Matrix3d kn = kinv.inverse();
  kn /= kn(2, 2);
  const Eigen::Matrix3d k = n.inverse() * kn;
  PinholeIntrinsics out;
  out.fx = k(0, 0);
  out.fy = k(1, 1);
  out.cx = k(0, 2);
  out.cy = k(1, 2);
  if (!(out.fx > 0.0) || !(out.fy > 0.0) || !std::isfinite(out.cx) || !std::isfinite(out.cy)) {
    throw Error(ErrorCode::IllConditioned, "closed-form intrinsics are not physical");
  }
  return out;
}

Pose pose_from_homography(const Eigen::Matrix3d& k, const Eigen::Matrix3d& h) {
  if (!h.allFinite() || !k.allFinite()) throw Error(ErrorCode::IllConditioned, "non-finite homography");
  const double scale = h.norm();
  if (!(scale > 0.0) || std::abs(h.determinant()) <= 1e-12 * scale * scale * scale) {
    throw Error(ErrorCode::IllConditioned, "homography is singular");
  }
  const Eigen::Matrix3d m = k.inverse() * h;
  const double n1 = m.col(0).norm();
  if (!(n1 > 0.0)) throw Error(ErrorCode::IllConditioned, "homography is singular");
  double lambda = 1.0 / n1;
  if (m(2, 2) * lambda < 0.0) lambda = -lambda;
  const Eigen::Vector3d t = lambda * m.col(2);
  if (!(t.z() > 0.0)) throw Error(ErrorCode::BehindCamera, "board plane is not in front of the camera");
  Eigen::Matrix3d r;
  r.col(0) = lambda * m.col(0);
  r.col(1) = lambda * m.col(1);
  r.col(2) = r.col(0).cross(r.col(1));
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Pose out;
  out.rotation = Eigen::Quaterniond(svd.matrixU() * d * svd.matrixV().transpose()).normalized();
  out.translation = t;
  return out;
}

DoubleSphereInit init_double_sphere(const std::vector<ViewCorrespondences>& views, ImageSize image_size,
                                    double assumed_fov_deg) {
  if (!(assumed_fov_deg > 0.0) || !std::isfinite(assumed_fov_deg)) {
    throw Error(ErrorCode::InvalidConfig, "assumed field of view must be positive");
  }
  if (image_size.width <= 0 || image_size.height <= 0) {
    throw Error(ErrorCode::InvalidConfig, "double-sphere init needs the image size");
  }
  DoubleSphereInit out;
  const double fov = assumed_fov_deg * M_PI / 180.0;
  out.intrinsics.fx = out.intrinsics.fy = image_size.width / fov;
  out.intrinsics.cx = image_size.width / 2.0;
  out.intrinsics.cy = image_size.height / 2.0;
  out.intrinsics.xi = 0.0;
  out.intrinsics.alpha = 0.5;
  for (const auto& view : views) {
    std::vector<Eigen::Vector2d> board;
    std::vector<Point2> normalized;
    for (std::size_t i = 0; i < view.pixels.size(); ++i) {
      Point3 dir;
      try {
        dir = ds_unproject(out.intrinsics, view.pixels[i]);
      } catch (const Error&) {
        continue;
      }
      if (!(dir.z() > 1e-3)) continue;
      board.push_back(view.board[i]);
      normalized.emplace_back(dir.x() / dir.z(), dir.y() / dir.z());
    }
    try {
      const Eigen::Matrix3d h = estimate_homography(board, normalized);
      out.poses[view.view_id] = pose_from_homography(Eigen::Matrix3d::Identity(), h);
    } catch (const Error&) {
      // View left without an initial pose; callers drop it.
    }
  }
  return out;
}

// ------------------------------------------------------------- residuals

bool predict(const CalibrationProblem& problem, const CalibrationState& state, const Observation& obs,
             Point2& out) {
  if (obs.corner_id < 0 || obs.corner_id >= static_cast<int>(problem.target.points.size())) return false;
  const auto kit = state.intrinsics.find(obs.camera_id);
  if (kit == state.intrinsics.end()) return false;
  const Point3& p = problem.target.points[obs.corner_id];
  Point3 pc;
  const auto bit = state.board_poses.find(obs.view_id);
  const auto eit = state.extrinsics.find(obs.camera_id);
  if (bit != state.board_poses.end() && eit != state.extrinsics.end()) {
    pc = eit->second * (bit->second * p);
  } else {
    const auto lit = state.local_board_poses.find({obs.camera_id, obs.view_id});
    if (lit == state.local_board_poses.end()) return false;
    pc = lit->second * p;
  }
  return try_project(kit->second, pc, out);
}

namespace {

struct Accumulated {
  double sum_sq = 0.0;
  std::size_t n = 0;
  std::map<std::string, std::map<int, std::pair<double, std::size_t>>> per_view;
  std::map<std::string, std::pair<double, std::size_t>> per_camera;
};

Accumulated accumulate(const CalibrationProblem& problem, const CalibrationState& state) {
  Accumulated acc;
  for (const auto& obs : problem.observations) {
    Point2 pred;
    if (!predict(problem, state, obs, pred)) continue;
    const double e = (pred - obs.pixel).squaredNorm();
    acc.sum_sq += e;
    ++acc.n;
    auto& v = acc.per_view[obs.camera_id][obs.view_id];
    v.first += e;
    ++v.second;
    auto& c = acc.per_camera[obs.camera_id];
    c.first += e;
    ++c.second;
  }
  return acc;
}

void fill_statistics(const CalibrationProblem& problem, CalibrationResult& result) {
  const Accumulated acc = accumulate(problem, result.state);
  result.n_observations = acc.n;
  result.rms_px = acc.n ? std::sqrt(acc.sum_sq / (2.0 * acc.n)) : 0.0;
  result.per_view_rms.clear();
  result.per_camera_rms.clear();
  for (const auto& [cam, views] : acc.per_view) {
    for (const auto& [view, s] : views) result.per_view_rms[cam][view] = std::sqrt(s.first / (2.0 * s.second));
  }
  for (const auto& [cam, s] : acc.per_camera) result.per_camera_rms[cam] = std::sqrt(s.first / (2.0 * s.second));
}

// Observations the state can explain, in input order.
std::vector<const Observation*> explained(const CalibrationProblem& problem, const CalibrationState& state) {
  std::vector<const Observation*> out;
  for (const auto& obs : problem.observations) {
    if (obs.corner_id < 0 || obs.corner_id >= static_cast<int>(problem.target.points.size())) continue;
    if (!state.intrinsics.count(obs.camera_id)) continue;
    const bool joint = state.board_poses.count(obs.view_id) && state.extrinsics.count(obs.camera_id);
    if (joint || state.local_board_poses.count({obs.camera_id, obs.view_id})) out.push_back(&obs);
  }
  return out;
}

struct BlockIndex {
  std::map<std::string, int> intrinsics;
  std::map<std::string, int> extrinsics;
  std::map<int, int> board;
  std::map<CameraView, int> local;
};

LeastSquaresProblem build(const CalibrationProblem& problem, const CalibrationState& state,
                          const RefineOptions& options, BlockIndex& index) {
  LeastSquaresProblem ls;
  const auto obs_list = explained(problem, state);
  const std::string reference = problem.cameras.empty() ? std::string() : problem.cameras.front();

  auto pose_vec = [](const Pose& p) {
    const auto a = pose_to_params(p);
    return std::vector<double>(a.begin(), a.end());
  };

  for (const Observation* obs : obs_list) {
    const std::string& cam = obs->camera_id;
    if (!index.intrinsics.count(cam)) {
      index.intrinsics[cam] =
          ls.add_parameter_block(intrinsics_to_vector(state.intrinsics.at(cam)), !options.optimize_intrinsics);
    }
    const bool joint = state.board_poses.count(obs->view_id) && state.extrinsics.count(cam);
    std::vector<int> blocks{index.intrinsics[cam]};
    if (joint) {
      if (!index.extrinsics.count(cam)) {
        const bool fixed = cam == reference || !options.optimize_extrinsics;
        index.extrinsics[cam] = ls.add_parameter_block(pose_vec(state.extrinsics.at(cam)), fixed);
      }
      if (!index.board.count(obs->view_id)) {
        index.board[obs->view_id] = ls.add_parameter_block(pose_vec(state.board_poses.at(obs->view_id)));
      }
      blocks.push_back(index.extrinsics[cam]);
      blocks.push_back(index.board[obs->view_id]);
    } else {
      const CameraView key{cam, obs->view_id};
      if (!index.local.count(key)) {
        index.local[key] = ls.add_parameter_block(pose_vec(state.local_board_poses.at(key)));
      }
      blocks.push_back(index.local[key]);
    }
    const CameraModel model = model_of(state.intrinsics.at(cam));
    const Point3 corner = problem.target.points[obs->corner_id];
    const Point2 measured = obs->pixel;
    ls.add_residual_block(blocks, 2, [model, corner, measured, joint](const double* const* p, double* r) {
      Point3 x;
      if (joint) {
        const Point3 in_ref = rotate_axis_angle(p[2], corner) + Point3(p[2][3], p[2][4], p[2][5]);
        x = rotate_axis_angle(p[1], in_ref) + Point3(p[1][3], p[1][4], p[1][5]);
      } else {
        x = rotate_axis_angle(p[1], corner) + Point3(p[1][3], p[1][4], p[1][5]);
      }
      Point2 px;
      bool ok;
      if (model == CameraModel::Pinhole) {
        ok = try_project(PinholeIntrinsics::from_array({p[0], PinholeIntrinsics::kNumParams}), x, px);
      } else {
        const auto k = DoubleSphereIntrinsics::from_array({p[0], DoubleSphereIntrinsics::kNumParams});
        ok = k.alpha > 0.0 && k.alpha < 1.0 && try_project(k, x, px);
      }
      if (!ok) return false;
      r[0] = px.x() - measured.x();
      r[1] = px.y() - measured.y();
      return true;
    });
  }
  return ls;
}

CalibrationState read_back(const LeastSquaresProblem& ls, const CalibrationState& init, const BlockIndex& index) {
  CalibrationState out = init;
  for (const auto& [cam, b] : index.intrinsics) {
    const auto v = ls.block_values(b);
    out.intrinsics[cam] = intrinsics_from_vector(model_of(init.intrinsics.at(cam)), v);
  }
  for (const auto& [cam, b] : index.extrinsics) out.extrinsics[cam] = pose_from_params(ls.block_values(b));
  for (const auto& [view, b] : index.board) out.board_poses[view] = pose_from_params(ls.block_values(b));
  for (const auto& [key, b] : index.local) out.local_board_poses[key] = pose_from_params(ls.block_values(b));
  return out;
}

}  // namespace

double rms_reprojection(const CalibrationProblem& problem, const CalibrationState& state) {
  const Accumulated acc = accumulate(problem, state);
  return acc.n ? std::sqrt(acc.sum_sq / (2.0 * acc.n)) : 0.0;
}

LeastSquaresProblem build_least_squares(const CalibrationProblem& problem, const CalibrationState& state,
                                        const RefineOptions& options) {
  BlockIndex index;
  return build(problem, state, options, index);
}

CalibrationResult refine_lm(const CalibrationProblem& problem, const CalibrationState& init,
                            const SolverConfig& config, const RefineOptions& options) {
  BlockIndex index;
  LeastSquaresProblem ls = build(problem, init, options, index);
  if (ls.num_residual_blocks() == 0) {
    throw Error(ErrorCode::NotEnoughViews, "no observations are explained by the initial state");
  }
  LmConfig lm = config.lm;
  if (config.huber) lm.huber_delta = config.huber_delta_px;
  const LmSummary summary = LevenbergMarquardt(lm).solve(ls);

  CalibrationResult result;
  result.state = read_back(ls, init, index);
  result.trace = summary.trace;
  result.termination = summary.termination;
  fill_statistics(problem, result);
  if (!std::isfinite(result.rms_px) ||
      (summary.termination == Termination::LambdaBound && result.rms_px > config.stall_rms_px)) {
    throw Error(ErrorCode::DivergedOrStalled, "optimizer stalled at RMS " + std::to_string(result.rms_px) +
                                                  " px after " + std::to_string(summary.iterations) +
                                                  " iterations");
  }
  for (const auto& [cam, k] : result.state.intrinsics) {
    try {
      validate_intrinsics(k);
    } catch (const Error& e) {
      throw Error(ErrorCode::DivergedOrStalled, "refined intrinsics are invalid: " + std::string(e.what()), cam);
    }
  }
  return result;
}

// --------------------------------------------------------- per-camera stage

CalibrationResult calibrate_camera(const CalibrationProblem& problem, const std::string& camera_id,
                                   const SolverConfig& config, const std::set<int>* usable_views) {
  const auto mit = problem.models.find(camera_id);
  const CameraModel model = mit == problem.models.end() ? CameraModel::Pinhole : mit->second;

  std::map<int, ViewCorrespondences> by_view;
  for (const auto& obs : problem.observations) {
    if (obs.camera_id != camera_id) continue;
    if (usable_views && !usable_views->count(obs.view_id)) continue;
    if (obs.corner_id < 0 || obs.corner_id >= static_cast<int>(problem.target.points.size())) {
      throw Error(ErrorCode::MalformedObservations, "corner id " + std::to_string(obs.corner_id) + " not on target",
                  camera_id);
    }
    auto& v = by_view[obs.view_id];
    v.view_id = obs.view_id;
    v.board.push_back(problem.target.points[obs.corner_id].head<2>());
    v.pixels.push_back(obs.pixel);
  }

  CalibrationState state;
  if (model == CameraModel::Pinhole) {
    std::vector<Eigen::Matrix3d> hs;
    std::vector<int> ids;
    for (const auto& [view, corr] : by_view) {
      try {
        hs.push_back(estimate_homography(corr.board, corr.pixels));
        ids.push_back(view);
      } catch (const Error&) {
        // Degenerate view; skipped.
      }
    }
    if (static_cast<int>(hs.size()) < config.min_views) {
      throw Error(ErrorCode::NotEnoughViews,
                  "camera has " + std::to_string(hs.size()) + " usable views, need " + std::to_string(config.min_views),
                  camera_id);
    }
    const PinholeIntrinsics k = init_pinhole_intrinsics(hs);
    const Eigen::Matrix3d km = camera_matrix(k);
    for (std::size_t i = 0; i < hs.size(); ++i) {
      try {
        state.local_board_poses[{camera_id, ids[i]}] = pose_from_homography(km, hs[i]);
      } catch (const Error&) {
      }
    }
    state.intrinsics[camera_id] = k;
  } else {
    std::vector<ViewCorrespondences> views;
    for (const auto& [view, corr] : by_view) views.push_back(corr);
    const auto sz = problem.image_sizes.find(camera_id);
    if (sz == problem.image_sizes.end()) {
      throw Error(ErrorCode::InvalidConfig, "double-sphere camera needs an image size", camera_id);
    }
    const DoubleSphereInit init = init_double_sphere(views, sz->second, config.assumed_fov_deg);
    for (const auto& [view, pose] : init.poses) state.local_board_poses[{camera_id, view}] = pose;
    state.intrinsics[camera_id] = init.intrinsics;
  }
  if (static_cast<int>(state.local_board_poses.size()) < config.min_views) {
    throw Error(ErrorCode::NotEnoughViews,
                "camera has " + std::to_string(state.local_board_poses.size()) + " initialized views, need " +
                    std::to_string(config.min_views),
                camera_id);
  }

  // Views whose initial pose puts corners outside the model would make the
  // starting point invalid; drop them before refinement.
  CalibrationProblem single = problem;
  single.observations.clear();
  for (const auto& obs : problem.observations) {
    if (obs.camera_id != camera_id || !state.local_board_poses.count({camera_id, obs.view_id})) continue;
    single.observations.push_back(obs);
  }
  std::set<int> invalid;
  for (const auto& obs : single.observations) {
    Point2 px;
    if (!predict(single, state, obs, px)) invalid.insert(obs.view_id);
  }
  for (int v : invalid) state.local_board_poses.erase({camera_id, v});
  std::erase_if(single.observations, [&](const Observation& o) { return invalid.count(o.view_id) > 0; });
  if (static_cast<int>(state.local_board_poses.size()) < config.min_views) {
    throw Error(ErrorCode::NotEnoughViews, "too few views with a valid initial pose", camera_id);
  }

  CalibrationResult result = refine_lm(single, state, config, {true, false});
  result.stages.push_back({"intrinsics:" + camera_id, result.trace, result.termination});
  return result;
}

// ------------------------------------------------------------ extrinsics

Eigen::Quaterniond average_quaternions(const std::vector<Eigen::Quaterniond>& qs) {
  if (qs.empty()) throw Error(ErrorCode::InvalidConfig, "cannot average zero rotations");
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (const auto& q : qs) {
    const Eigen::Vector4d v = q.normalized().coeffs();
    m += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(m);
  Eigen::Vector4d v = es.eigenvectors().col(3);
  if (v.dot(qs.front().normalized().coeffs()) < 0.0) v = -v;
  Eigen::Quaterniond out;
  out.coeffs() = v;
  return out.normalized();
}

CalibrationResult solve_extrinsics(const CalibrationProblem& problem, const CalibrationState& per_camera,
                                   const std::set<int>& synchronized_views, const SolverConfig& config) {
  if (problem.cameras.empty()) throw Error(ErrorCode::InvalidConfig, "no cameras");
  const std::string& reference = problem.cameras.front();
  const int nc = static_cast<int>(problem.cameras.size());
  std::map<std::string, int> cam_index;
  for (int i = 0; i < nc; ++i) cam_index[problem.cameras[i]] = i;

  // Synchronized views and the cameras with a per-camera pose for each.
  std::map<int, std::vector<int>> seen_by;
  for (const auto& [key, pose] : per_camera.local_board_poses) {
    if (!synchronized_views.count(key.second)) continue;
    const auto it = cam_index.find(key.first);
    if (it != cam_index.end()) seen_by[key.second].push_back(it->second);
  }
  std::map<std::pair<int, int>, std::vector<int>> edges;  // (a < b) -> shared views
  for (auto& [view, cams] : seen_by) {
    std::sort(cams.begin(), cams.end());
    for (std::size_t i = 0; i < cams.size(); ++i) {
      for (std::size_t j = i + 1; j < cams.size(); ++j) edges[{cams[i], cams[j]}].push_back(view);
    }
  }
  if (edges.empty()) {
    throw Error(ErrorCode::InsufficientSharedViews, "no synchronized view is shared by two cameras");
  }

  // Averaged relative pose T_b<-a for every edge.
  std::map<std::pair<int, int>, Pose> relative;
  for (const auto& [edge, views] : edges) {
    std::vector<Eigen::Quaterniond> qs;
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    for (int v : views) {
      const Pose& ta = per_camera.local_board_poses.at({problem.cameras[edge.first], v});
      const Pose& tb = per_camera.local_board_poses.at({problem.cameras[edge.second], v});
      const Pose rel = pose_compose(tb, pose_inverse(ta));
      qs.push_back(rel.rotation);
      t += rel.translation;
    }
    Pose avg;
    avg.rotation = average_quaternions(qs);
    avg.translation = t / static_cast<double>(views.size());
    relative[edge] = avg;
  }

  // Maximum spanning tree (by shared-view count) grown from the reference.
  std::vector<std::optional<Pose>> from_ref(nc);
  from_ref[0] = Pose::identity();
  using Item = std::tuple<std::size_t, int, int>;  // weight, from, to
  auto cmp = [](const Item& a, const Item& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    return std::make_pair(std::get<1>(a), std::get<2>(a)) > std::make_pair(std::get<1>(b), std::get<2>(b));
  };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> frontier(cmp);
  auto push_edges = [&](int from) {
    for (const auto& [edge, views] : edges) {
      if (edge.first == from && !from_ref[edge.second]) frontier.emplace(views.size(), from, edge.second);
      if (edge.second == from && !from_ref[edge.first]) frontier.emplace(views.size(), from, edge.first);
    }
  };
  push_edges(0);
  while (!frontier.empty()) {
    const auto [w, from, to] = frontier.top();
    frontier.pop();
    if (from_ref[to]) continue;
    const Pose rel = from < to ? relative.at({from, to}) : pose_inverse(relative.at({to, from}));  // T_to<-from
    from_ref[to] = pose_compose(rel, *from_ref[from]);
    push_edges(to);
  }

  // Components of the co-visibility graph, for the error message.
  std::vector<int> comp(nc, -1);
  int n_comp = 0;
  for (int s = 0; s < nc; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack{s};
    comp[s] = n_comp;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      for (const auto& [edge, views] : edges) {
        int other = -1;
        if (edge.first == c) other = edge.second;
        if (edge.second == c) other = edge.first;
        if (other >= 0 && comp[other] < 0) {
          comp[other] = n_comp;
          stack.push_back(other);
        }
      }
    }
    ++n_comp;
  }
  if (n_comp > 1) {
    std::string msg = "co-visibility graph has " + std::to_string(n_comp) + " components:";
    for (int k = 0; k < n_comp; ++k) {
      msg += " {";
      bool first = true;
      for (int c = 0; c < nc; ++c) {
        if (comp[c] != k) continue;
        msg += (first ? "" : ", ") + problem.cameras[c];
        first = false;
      }
      msg += "}";
    }
    throw Error(ErrorCode::DisconnectedGraph, msg);
  }

  CalibrationState state;
  state.intrinsics = per_camera.intrinsics;
  for (int c = 0; c < nc; ++c) state.extrinsics[problem.cameras[c]] = *from_ref[c];
  // Board poses in the reference frame, taken from the lowest-index camera
  // that observed the view.
  std::set<int> joint_views;
  for (const auto& [view, cams] : seen_by) {
    if (cams.size() < 2) continue;
    const std::string& cam = problem.cameras[cams.front()];
    state.board_poses[view] =
        pose_compose(pose_inverse(state.extrinsics.at(cam)), per_camera.local_board_poses.at({cam, view}));
    joint_views.insert(view);
  }

  const bool with_intrinsics = config.refine_intrinsics_with_extrinsics;
  CalibrationProblem joint = problem;
  joint.observations.clear();
  for (const auto& obs : problem.observations) {
    if (joint_views.count(obs.view_id) && per_camera.local_board_poses.count({obs.camera_id, obs.view_id})) {
      joint.observations.push_back(obs);
    } else if (with_intrinsics && per_camera.local_board_poses.count({obs.camera_id, obs.view_id})) {
      joint.observations.push_back(obs);
    }
  }
  if (with_intrinsics) {
    for (const auto& [key, pose] : per_camera.local_board_poses) {
      if (!joint_views.count(key.second)) state.local_board_poses[key] = pose;
    }
  }
  (void)reference;
  CalibrationResult result = refine_lm(joint, state, config, {with_intrinsics, true});
  result.stages.push_back({"extrinsics", result.trace, result.termination});
  return result;
}

CalibrationResult calibrate(const CalibrationProblem& problem, const SolverConfig& config,
                            const std::optional<ViewSelection>& selection) {
  if (problem.cameras.empty()) throw Error(ErrorCode::InvalidConfig, "no cameras to calibrate");
  CalibrationState per_camera;
  std::vector<CalibrationResult::Stage> stages;
  CalibrationResult last;
  for (const auto& cam : problem.cameras) {
    const std::set<int>* usable = nullptr;
    if (selection) {
      const auto it = selection->usable.find(cam);
      static const std::set<int> kEmpty;
      usable = it == selection->usable.end() ? &kEmpty : &it->second;
    }
    CalibrationResult r = calibrate_camera(problem, cam, config, usable);
    per_camera.intrinsics[cam] = r.state.intrinsics.at(cam);
    for (const auto& [key, pose] : r.state.local_board_poses) per_camera.local_board_poses[key] = pose;
    for (auto& s : r.stages) stages.push_back(std::move(s));
    last = std::move(r);
  }

  CalibrationResult result;
  if (problem.cameras.size() == 1) {
    result.state = per_camera;
    result.state.extrinsics[problem.cameras.front()] = Pose::identity();
    result.trace = last.trace;
    result.termination = last.termination;
  } else {
    std::set<int> synced;
    if (selection) {
      synced = selection->synchronized;
    } else {
      for (const auto& obs : problem.observations) synced.insert(obs.view_id);
    }
    CalibrationResult joint = solve_extrinsics(problem, per_camera, synced, config);
    result.state = joint.state;
    // Views outside the joint problem keep their per-camera poses.
    for (const auto& [key, pose] : per_camera.local_board_poses) {
      if (!result.state.board_poses.count(key.second) && !result.state.local_board_poses.count(key)) {
        result.state.local_board_poses[key] = pose;
      }
    }
    result.trace = joint.trace;
    result.termination = joint.termination;
    for (auto& s : joint.stages) stages.push_back(std::move(s));
  }
  result.stages = std::move(stages);
  CalibrationProblem used = problem;
  if (selection) {
    std::erase_if(used.observations, [&](const Observation& o) {
      const auto it = selection->usable.find(o.camera_id);
      return it == selection->usable.end() || !it->second.count(o.view_id);
    });
  }
  fill_statistics(used, result);
  return result;
}

}  // namespace calcap
