#include "calcap/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include <Eigen/Cholesky>

#include "calcap/error.hpp"

namespace calcap {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::RelativeCostChange: return "relative_cost_change";
    case Termination::SmallGradient: return "small_gradient";
    case Termination::LambdaBound: return "lambda_bound";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::ZeroCost: return "zero_cost";
  }
  return "unknown";
}

namespace {

// Static contiguous partition; each index is handled by exactly one thread
// and writes only its own output slot, so results do not depend on `threads`.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

double step_for(double x, double rel_step) { return std::max(rel_step * std::abs(x), 1e-9); }

}  // namespace

int LeastSquaresProblem::add_parameter_block(const std::vector<double>& init, bool constant) {
  Block b{static_cast<int>(values_.size()), static_cast<int>(init.size()), constant, -1};
  values_.insert(values_.end(), init.begin(), init.end());
  blocks_.push_back(b);
  return static_cast<int>(blocks_.size()) - 1;
}

void LeastSquaresProblem::add_residual_block(std::vector<int> blocks, int n_residuals, ResidualFn fn) {
  for (int b : blocks) {
    if (b < 0 || b >= num_blocks()) throw Error(ErrorCode::InvalidConfig, "unknown parameter block");
  }
  residuals_.push_back({std::move(blocks), n_residuals, n_residuals_, std::move(fn)});
  n_residuals_ += n_residuals;
}

void LeastSquaresProblem::set_constant(int block, bool constant) { blocks_.at(block).constant = constant; }

std::vector<double> LeastSquaresProblem::block_values(int block) const {
  const Block& b = blocks_.at(block);
  return {values_.begin() + b.offset, values_.begin() + b.offset + b.size};
}

void LeastSquaresProblem::set_block_values(int block, const std::vector<double>& v) {
  const Block& b = blocks_.at(block);
  std::copy(v.begin(), v.begin() + b.size, values_.begin() + b.offset);
}

int LeastSquaresProblem::num_free_params() const {
  int n = 0;
  for (const auto& b : blocks_) {
    if (!b.constant) n += b.size;
  }
  return n;
}

void LeastSquaresProblem::index_free() {
  n_free_ = 0;
  for (auto& b : blocks_) {
    b.free_offset = b.constant ? -1 : n_free_;
    if (!b.constant) n_free_ += b.size;
  }
}

bool LeastSquaresProblem::eval_block(const Residual& r, const std::vector<double>& x, double* out) const {
  const double* ptrs[8];
  std::vector<const double*> heap;
  const double** params = ptrs;
  if (r.blocks.size() > 8) {
    heap.resize(r.blocks.size());
    params = heap.data();
  }
  for (std::size_t i = 0; i < r.blocks.size(); ++i) params[i] = x.data() + blocks_[r.blocks[i]].offset;
  if (!r.fn(params, out)) return false;
  for (int i = 0; i < r.n_residuals; ++i) {
    if (!std::isfinite(out[i])) return false;
  }
  return true;
}

std::optional<Eigen::VectorXd> LeastSquaresProblem::residual_vector() const { return residual_vector(values_); }

std::optional<Eigen::VectorXd> LeastSquaresProblem::residual_vector(const std::vector<double>& flat) const {
  Eigen::VectorXd r(n_residuals_);
  for (const auto& res : residuals_) {
    if (!eval_block(res, flat, r.data() + res.row)) return std::nullopt;
  }
  return r;
}

Eigen::MatrixXd LeastSquaresProblem::dense_jacobian(bool central, double rel_step) const {
  auto self = *this;
  self.index_free();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_residuals_, self.n_free_);
  std::vector<double> x = values_;
  for (const auto& b : self.blocks_) {
    if (b.constant) continue;
    for (int k = 0; k < b.size; ++k) {
      const int idx = b.offset + k;
      const double x0 = x[idx];
      const double h = step_for(x0, rel_step);
      x[idx] = x0 + h;
      const auto plus = residual_vector(x);
      x[idx] = central ? x0 - h : x0;
      const auto minus = residual_vector(x);
      x[idx] = x0;
      if (!plus || !minus) throw Error(ErrorCode::InvariantViolation, "residual invalid near evaluation point");
      jac.col(b.free_offset + k) = (*plus - *minus) / (central ? 2.0 * h : h);
    }
  }
  return jac;
}

double LevenbergMarquardt::cost(const LeastSquaresProblem& problem, const std::vector<double>& x) const {
  const int n = problem.num_residual_blocks();
  std::vector<double> per_block(static_cast<std::size_t>(n));
  std::vector<char> ok(static_cast<std::size_t>(n), 1);
  parallel_for(n, config_.threads, [&](int i) {
    const auto& res = problem.residuals_[i];
    double buf[16];
    std::vector<double> heap;
    double* r = buf;
    if (res.n_residuals > 16) {
      heap.resize(res.n_residuals);
      r = heap.data();
    }
    if (!problem.eval_block(res, x, r)) {
      ok[i] = 0;
      return;
    }
    double s = 0.0;
    for (int k = 0; k < res.n_residuals; ++k) s += r[k] * r[k];
    if (config_.huber_delta) {
      const double d = *config_.huber_delta;
      per_block[i] = s <= d * d ? s : 2.0 * d * std::sqrt(s) - d * d;
    } else {
      per_block[i] = s;
    }
  });
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!ok[i]) return std::numeric_limits<double>::infinity();
    total += per_block[i];
  }
  return total;
}

LmSummary LevenbergMarquardt::solve(LeastSquaresProblem& problem) const {
  problem.index_free();
  const int n_free = problem.n_free_;
  const int n_blocks = problem.num_residual_blocks();
  LmSummary summary;

  std::vector<double> x = problem.values_;
  double cost = this->cost(problem, x);
  if (!std::isfinite(cost)) {
    throw Error(ErrorCode::InvariantViolation, "initial parameters produce invalid residuals");
  }
  summary.initial_cost = cost;
  double lambda = config_.initial_lambda;
  summary.trace.push_back({0, cost, lambda});
  if (n_free == 0 || cost == 0.0) {
    summary.termination = Termination::ZeroCost;
    summary.final_cost = cost;
    return summary;
  }

  // Per residual block: residual values and a dense local Jacobian over the
  // block's free parameters, filled in parallel then reduced sequentially.
  struct Local {
    std::vector<double> r;
    std::vector<double> jac;  // row-major n_residuals x n_cols
    std::vector<int> cols;    // free-parameter index of each column
  };
  std::vector<Local> locals(static_cast<std::size_t>(n_blocks));
  for (int i = 0; i < n_blocks; ++i) {
    const auto& res = problem.residuals_[i];
    auto& loc = locals[i];
    loc.r.resize(res.n_residuals);
    for (int b : res.blocks) {
      const auto& blk = problem.blocks_[b];
      if (blk.constant) continue;
      for (int k = 0; k < blk.size; ++k) loc.cols.push_back(blk.free_offset + k);
    }
    loc.jac.resize(static_cast<std::size_t>(res.n_residuals) * loc.cols.size());
  }

  Eigen::MatrixXd hessian(n_free, n_free);
  Eigen::VectorXd gradient(n_free);

  int iteration = 0;
  summary.termination = Termination::MaxIterations;
  bool done = false;
  while (!done && iteration < config_.max_iterations) {
    ++iteration;
    parallel_for(n_blocks, config_.threads, [&](int i) {
      const auto& res = problem.residuals_[i];
      auto& loc = locals[i];
      std::vector<double> xl = x;  // thread-private copy for perturbation
      problem.eval_block(res, xl, loc.r.data());
      std::vector<double> plus(res.n_residuals), minus(res.n_residuals);
      int col = 0;
      for (int b : res.blocks) {
        const auto& blk = problem.blocks_[b];
        if (blk.constant) continue;
        for (int k = 0; k < blk.size; ++k, ++col) {
          const int idx = blk.offset + k;
          const double x0 = xl[idx];
          const double h = step_for(x0, config_.relative_step);
          xl[idx] = x0 + h;
          const bool ok_plus = problem.eval_block(res, xl, plus.data());
          xl[idx] = x0 - h;
          const bool ok_minus = problem.eval_block(res, xl, minus.data());
          xl[idx] = x0;
          for (int row = 0; row < res.n_residuals; ++row) {
            double d = 0.0;
            if (ok_plus && ok_minus) {
              d = (plus[row] - minus[row]) / (2.0 * h);
            } else if (ok_plus) {
              d = (plus[row] - loc.r[row]) / h;
            } else if (ok_minus) {
              d = (loc.r[row] - minus[row]) / h;
            }
            loc.jac[static_cast<std::size_t>(row) * loc.cols.size() + col] = d;
          }
        }
      }
    });

    hessian.setZero();
    gradient.setZero();
    for (int i = 0; i < n_blocks; ++i) {
      const auto& loc = locals[i];
      const int nr = static_cast<int>(loc.r.size());
      const int nc = static_cast<int>(loc.cols.size());
      double weight = 1.0;
      if (config_.huber_delta) {
        double s = 0.0;
        for (double v : loc.r) s += v * v;
        const double d = *config_.huber_delta;
        if (s > d * d) weight = d / std::sqrt(s);
      }
      for (int a = 0; a < nc; ++a) {
        double g = 0.0;
        for (int row = 0; row < nr; ++row) g += loc.jac[row * nc + a] * loc.r[row];
        gradient[loc.cols[a]] += weight * g;
        for (int b = 0; b < nc; ++b) {
          double h = 0.0;
          for (int row = 0; row < nr; ++row) h += loc.jac[row * nc + a] * loc.jac[row * nc + b];
          hessian(loc.cols[a], loc.cols[b]) += weight * h;
        }
      }
    }

    if (gradient.lpNorm<Eigen::Infinity>() < config_.gradient_tolerance) {
      summary.termination = Termination::SmallGradient;
      break;
    }

    const Eigen::VectorXd diag = hessian.diagonal().cwiseMax(1e-12);
    while (true) {
      Eigen::MatrixXd damped = hessian;
      damped.diagonal() += lambda * diag;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      Eigen::VectorXd delta = ldlt.solve(-gradient);
      double new_cost = std::numeric_limits<double>::infinity();
      std::vector<double> candidate;
      if (ldlt.info() == Eigen::Success && delta.allFinite()) {
        candidate = x;
        for (const auto& blk : problem.blocks_) {
          if (blk.constant) continue;
          for (int k = 0; k < blk.size; ++k) candidate[blk.offset + k] += delta[blk.free_offset + k];
        }
        new_cost = this->cost(problem, candidate);
      }
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / cost;
        x = std::move(candidate);
        cost = new_cost;
        lambda /= config_.lambda_factor;
        summary.trace.push_back({iteration, cost, lambda});
        if (cost == 0.0) {
          summary.termination = Termination::ZeroCost;
          done = true;
        } else if (rel < config_.relative_cost_tolerance) {
          summary.termination = Termination::RelativeCostChange;
          done = true;
        }
        break;
      }
      lambda *= config_.lambda_factor;
      if (lambda > config_.max_lambda) {
        summary.termination = Termination::LambdaBound;
        done = true;
        break;
      }
    }
  }

  problem.values_ = x;
  summary.final_cost = cost;
  summary.iterations = iteration;
  return summary;
}

}  // namespace calcap
