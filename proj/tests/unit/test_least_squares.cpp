#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "calcap/error.hpp"
#include "calcap/least_squares.hpp"

using namespace calcap;

TEST(LeastSquares, LinearProblemMatchesNormalEquations) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  const int m = 30, n = 4;
  Eigen::MatrixXd a(m, n);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    b(i) = g(rng);
  }
  LeastSquaresProblem p;
  p.add_parameter_block(std::vector<double>(n, 0.0));
  for (int i = 0; i < m; ++i) {
    p.add_residual_block({0}, 1, [&, i](const double* const* x, double* r) {
      r[0] = b(i);
      for (int j = 0; j < n; ++j) r[0] -= a(i, j) * x[0][j];
      return true;
    });
  }
  const auto summary = LevenbergMarquardt(LmConfig{}).solve(p);
  const Eigen::VectorXd expected = a.colPivHouseholderQr().solve(b);
  const auto got = p.block_values(0);
  for (int j = 0; j < n; ++j) EXPECT_NEAR(got[static_cast<std::size_t>(j)], expected(j), 1e-8);
  EXPECT_NEAR(summary.final_cost, (a * expected - b).squaredNorm(), 1e-9);
  EXPECT_EQ(summary.trace.front().iteration, 0);
}

TEST(LeastSquares, RosenbrockConvergesWithMonotoneTrace) {
  LeastSquaresProblem p;
  p.add_parameter_block({-1.2, 1.0});
  p.add_residual_block({0}, 2, [](const double* const* x, double* r) {
    r[0] = 10.0 * (x[0][1] - x[0][0] * x[0][0]);
    r[1] = 1.0 - x[0][0];
    return true;
  });
  const auto s = LevenbergMarquardt(LmConfig{}).solve(p);
  EXPECT_NEAR(p.block_values(0)[0], 1.0, 1e-6);
  EXPECT_NEAR(p.block_values(0)[1], 1.0, 1e-6);
  for (std::size_t i = 1; i < s.trace.size(); ++i) EXPECT_LE(s.trace[i].cost, s.trace[i - 1].cost);
  EXPECT_NEAR(s.trace.front().cost, 19.36 + 4.84, 1e-12);
}

TEST(LeastSquares, ConstantBlocksStayPut) {
  LeastSquaresProblem p;
  const int a = p.add_parameter_block({3.0}, true);
  const int b = p.add_parameter_block({0.0});
  p.add_residual_block({a, b}, 1, [](const double* const* x, double* r) {
    r[0] = x[0][0] + x[1][0] - 5.0;
    return true;
  });
  EXPECT_EQ(p.num_free_params(), 1);
  LevenbergMarquardt(LmConfig{}).solve(p);
  EXPECT_EQ(p.block_values(a)[0], 3.0);
  EXPECT_NEAR(p.block_values(b)[0], 2.0, 1e-10);
}

TEST(LeastSquares, CentralJacobianMatchesForwardDifference) {
  LeastSquaresProblem p;
  p.add_parameter_block({0.3, -0.7, 1.1});
  p.add_parameter_block({2.0, 0.5});
  p.add_residual_block({0, 1}, 3, [](const double* const* x, double* r) {
    r[0] = std::sin(x[0][0]) * x[1][0] + x[0][2] * x[0][2];
    r[1] = std::exp(0.3 * x[0][1]) - x[1][1] * x[0][0];
    r[2] = x[0][0] * x[0][1] * x[0][2] / (1.0 + x[1][0] * x[1][0]);
    return true;
  });
  const Eigen::MatrixXd c = p.dense_jacobian(true, 1e-6);
  const Eigen::MatrixXd f = p.dense_jacobian(false, 1e-7);
  ASSERT_EQ(c.rows(), 3);
  ASSERT_EQ(c.cols(), 5);
  EXPECT_LT((c - f).norm() / c.norm(), 1e-4);
  // d r0 / d x00 = cos(0.3) * 2
  EXPECT_NEAR(c(0, 0), 2.0 * std::cos(0.3), 1e-8);
}

TEST(LeastSquares, InvalidStartThrows) {
  LeastSquaresProblem p;
  p.add_parameter_block({1.0});
  p.add_residual_block({0}, 1, [](const double* const*, double*) { return false; });
  EXPECT_THROW(LevenbergMarquardt(LmConfig{}).solve(p), Error);
}

TEST(LeastSquares, ZeroCostAtStart) {
  LeastSquaresProblem p;
  p.add_parameter_block({2.0});
  p.add_residual_block({0}, 1, [](const double* const* x, double* r) {
    r[0] = x[0][0] - 2.0;
    return true;
  });
  const auto s = LevenbergMarquardt(LmConfig{}).solve(p);
  EXPECT_EQ(s.termination, Termination::ZeroCost);
  EXPECT_EQ(s.trace.size(), 1u);
}

TEST(LeastSquares, HuberDownweightsOutlier) {
  // Location estimate with one gross outlier: plain LS gives the mean, Huber
  // stays near the inliers.
  std::vector<double> data = {1.0, 1.1, 0.9, 1.05, 0.95, 50.0};
  auto build = [&](LeastSquaresProblem& p) {
    p.add_parameter_block({0.0});
    for (double d : data)
      p.add_residual_block({0}, 1, [d](const double* const* x, double* r) {
        r[0] = x[0][0] - d;
        return true;
      });
  };
  LeastSquaresProblem plain, robust;
  build(plain);
  build(robust);
  LevenbergMarquardt(LmConfig{}).solve(plain);
  LmConfig cfg;
  cfg.huber_delta = 1.0;
  LevenbergMarquardt(cfg).solve(robust);
  EXPECT_NEAR(plain.block_values(0)[0], 55.0 / 6.0, 1e-8);
  EXPECT_LT(std::abs(robust.block_values(0)[0] - 1.0), 0.3);
}

TEST(LeastSquares, ThreadCountDoesNotChangeResult) {
  auto run = [](int threads) {
    LeastSquaresProblem p;
    p.add_parameter_block({0.5, 0.5});
    for (int i = 0; i < 40; ++i) {
      const double t = i * 0.1;
      const double y = 2.0 * std::exp(-0.7 * t);
      p.add_residual_block({0}, 1, [t, y](const double* const* x, double* r) {
        r[0] = x[0][0] * std::exp(-x[0][1] * t) - y;
        return true;
      });
    }
    LmConfig cfg;
    cfg.threads = threads;
    const auto s = LevenbergMarquardt(cfg).solve(p);
    return std::make_pair(p.block_values(0), s.final_cost);
  };
  const auto one = run(1);
  const auto four = run(4);
  EXPECT_EQ(one.first, run(1).first);
  EXPECT_NEAR(one.second, four.second, 1e-10);
  EXPECT_NEAR(one.first[0], 2.0, 1e-8);
  EXPECT_NEAR(one.first[1], 0.7, 1e-8);
}
