#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "calcap/camera_models.hpp"
#include "calcap/least_squares.hpp"

namespace calcap {

/// Planar target: corner (row i, col j) sits at (i * spacing, j * spacing, 0),
/// corner id i * cols + j.
struct TargetGeometry {
  int rows = 0;
  int cols = 0;
  double spacing = 0.0;
  std::vector<Point3> points;

  static TargetGeometry grid(int rows, int cols, double spacing);
};

struct Observation {
  std::string camera_id;
  int view_id = 0;
  int corner_id = 0;
  Point2 pixel = Point2::Zero();
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

struct CalibrationProblem {
  TargetGeometry target;
  std::vector<Observation> observations;
  std::vector<std::string> cameras;  // cameras.front() is the extrinsic reference
  std::map<std::string, CameraModel> models;
  std::map<std::string, ImageSize> image_sizes;  // required for double-sphere init
};

using CameraView = std::pair<std::string, int>;

struct CalibrationState {
  std::map<std::string, Intrinsics> intrinsics;
  /// camera_from_reference; the reference camera maps to identity.
  std::map<std::string, Pose> extrinsics;
  /// Board -> reference-camera frame, for views solved jointly.
  std::map<int, Pose> board_poses;
  /// Board -> camera frame, for views solved per camera.
  std::map<CameraView, Pose> local_board_poses;
};

struct CalibrationResult {
  CalibrationState state;
  double rms_px = 0.0;
  std::size_t n_observations = 0;
  std::map<std::string, std::map<int, double>> per_view_rms;
  std::map<std::string, double> per_camera_rms;
  std::vector<TraceEntry> trace;
  Termination termination = Termination::MaxIterations;
  struct Stage {
    std::string name;
    std::vector<TraceEntry> trace;
    Termination termination;
  };
  std::vector<Stage> stages;
};

struct SolverConfig {
  LmConfig lm;
  bool huber = false;
  double huber_delta_px = 1.0;
  bool refine_intrinsics_with_extrinsics = false;
  double assumed_fov_deg = 180.0;
  /// A run that ends on the lambda bound with RMS above this is reported as
  /// DivergedOrStalled.
  double stall_rms_px = 10.0;
  int min_views = 3;
};

/// Which views each camera may use, and which views are simultaneous across
/// cameras (fully synchronized trigger events).
struct ViewSelection {
  std::map<std::string, std::set<int>> usable;
  std::set<int> synchronized;
};

// ------------------------------------------------------------- linear init

/// Normalized DLT. Scaled so H(2,2) == 1 when |H(2,2)| > 1e-12.
Eigen::Matrix3d estimate_homography(const std::vector<Eigen::Vector2d>& board,
                                    const std::vector<Point2>& pixels);

/// Closed-form intrinsics from >= 3 plane homographies; distortion zeroed.
PinholeIntrinsics init_pinhole_intrinsics(const std::vector<Eigen::Matrix3d>& homographies);

Pose pose_from_homography(const Eigen::Matrix3d& k, const Eigen::Matrix3d& h);

Eigen::Matrix3d camera_matrix(const PinholeIntrinsics& k);

struct ViewCorrespondences {
  int view_id = 0;
  std::vector<Eigen::Vector2d> board;
  std::vector<Point2> pixels;
};

struct DoubleSphereInit {
  DoubleSphereIntrinsics intrinsics;
  std::map<int, Pose> poses;
};

DoubleSphereInit init_double_sphere(const std::vector<ViewCorrespondences>& views, ImageSize image_size,
                                    double assumed_fov_deg = 180.0);

// -------------------------------------------------------------- refinement

/// Predicted pixel for an observation under `state`; false when the pose is
/// unknown or the point is outside the model.
bool predict(const CalibrationProblem& problem, const CalibrationState& state, const Observation& obs,
             Point2& out);

/// sqrt(sum(du^2 + dv^2) / (2 N)) over observations with a known pose.
double rms_reprojection(const CalibrationProblem& problem, const CalibrationState& state);

struct RefineOptions {
  bool optimize_intrinsics = true;
  bool optimize_extrinsics = true;
};

/// Joint LM over everything in `init` that observations touch.
CalibrationResult refine_lm(const CalibrationProblem& problem, const CalibrationState& init,
                            const SolverConfig& config, const RefineOptions& options = {});

/// Builds the least-squares problem refine_lm solves (exposed for Jacobian
/// consistency checks).
LeastSquaresProblem build_least_squares(const CalibrationProblem& problem, const CalibrationState& state,
                                        const RefineOptions& options);

/// Initializes and refines intrinsics plus per-view poses for one camera.
CalibrationResult calibrate_camera(const CalibrationProblem& problem, const std::string& camera_id,
                                   const SolverConfig& config, const std::set<int>* usable_views = nullptr);

/// Extrinsics from per-camera results: co-visibility graph, pairwise averaged
/// relative poses chained along a spanning tree from the reference, then a
/// joint LM over extrinsics and board poses.
CalibrationResult solve_extrinsics(const CalibrationProblem& problem, const CalibrationState& per_camera,
                                   const std::set<int>& synchronized_views, const SolverConfig& config);

/// Full pipeline: every camera's intrinsics, then extrinsics when there are
/// at least two cameras.
CalibrationResult calibrate(const CalibrationProblem& problem, const SolverConfig& config,
                            const std::optional<ViewSelection>& selection = std::nullopt);

/// Quaternion average (principal eigenvector of the summed outer products).
Eigen::Quaterniond average_quaternions(const std::vector<Eigen::Quaterniond>& qs);

}  // namespace calcap
