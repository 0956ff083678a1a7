#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace calcap {

/// Residual callback: `params[i]` points at the i-th parameter block listed
/// when the residual block was added. Returns false when the parameters lie
/// outside the model's valid region.
using ResidualFn = std::function<bool(const double* const* params, double* residuals)>;

/// Dense-normal-equation nonlinear least squares over named parameter blocks,
/// with numerical (central-difference) Jacobians evaluated block-locally.
class LeastSquaresProblem {
 public:
  int add_parameter_block(const std::vector<double>& init, bool constant = false);
  void add_residual_block(std::vector<int> blocks, int n_residuals, ResidualFn fn);
  void set_constant(int block, bool constant);

  std::vector<double> block_values(int block) const;
  void set_block_values(int block, const std::vector<double>& v);

  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int num_residual_blocks() const { return static_cast<int>(residuals_.size()); }
  int num_residuals() const { return n_residuals_; }
  /// Number of free (non-constant) scalar parameters.
  int num_free_params() const;

  /// Stacked residual vector at the current (or given flat) parameters; empty
  /// optional when any block is invalid.
  std::optional<Eigen::VectorXd> residual_vector() const;
  std::optional<Eigen::VectorXd> residual_vector(const std::vector<double>& flat) const;

  /// Dense Jacobian w.r.t. free parameters. `central` selects central
  /// differences with step max(rel_step*|x|, 1e-9); otherwise forward
  /// differences with the same step rule.
  Eigen::MatrixXd dense_jacobian(bool central = true, double rel_step = 1e-6) const;

  const std::vector<double>& flat() const { return values_; }
  void set_flat(const std::vector<double>& v) { values_ = v; }

 private:
  friend class LevenbergMarquardt;

  struct Block {
    int offset;
    int size;
    bool constant;
    int free_offset;  // valid after index_free()
  };
  struct Residual {
    std::vector<int> blocks;
    int n_residuals;
    int row;
    ResidualFn fn;
  };

  bool eval_block(const Residual& r, const std::vector<double>& x, double* out) const;
  void index_free();

  std::vector<double> values_;
  std::vector<Block> blocks_;
  std::vector<Residual> residuals_;
  int n_residuals_ = 0;
  int n_free_ = 0;
};

struct LmConfig {
  double initial_lambda = 1e-3;
  double lambda_factor = 10.0;
  double max_lambda = 1e8;
  int max_iterations = 200;
  double relative_cost_tolerance = 1e-12;
  double gradient_tolerance = 1e-10;
  double relative_step = 1e-6;
  // Huber loss on each residual block's norm, applied when set (pixels).
  std::optional<double> huber_delta;
  int threads = 1;
};

struct TraceEntry {
  int iteration = 0;
  double cost = 0.0;
  double lambda = 0.0;
};

enum class Termination { RelativeCostChange, SmallGradient, LambdaBound, MaxIterations, ZeroCost };

std::string to_string(Termination t);

struct LmSummary {
  std::vector<TraceEntry> trace;  // initial cost, then every accepted step
  Termination termination = Termination::MaxIterations;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

class LevenbergMarquardt {
 public:
  explicit LevenbergMarquardt(LmConfig config) : config_(std::move(config)) {}

  /// Minimizes the summed (optionally Huber-weighted) squared residuals in
  /// place. Throws calcap::Error(InvariantViolation) when the starting point
  /// is invalid.
  LmSummary solve(LeastSquaresProblem& problem) const;

  /// Robustified cost at the given flat parameters (+inf when invalid).
  double cost(const LeastSquaresProblem& problem, const std::vector<double>& x) const;

 private:
  LmConfig config_;
};

}  // namespace calcap
