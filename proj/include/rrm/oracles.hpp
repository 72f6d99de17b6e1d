#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "rrm/error.hpp"
#include "rrm/netgen.hpp"
#include "rrm/rng.hpp"

namespace rrm {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

struct PowerAllocation {
  VectorXd p;
  double achieved_rate = 0.0;
  int iterations = 0;
};

struct EigenProblem {
  MatrixXcd r;
  int n = 0;

  // Throws ShapeError / DomainError unless r is n x n and Hermitian within
  // 1e-9 elementwise.
  void validate() const;
};

struct PacBound {
  std::int64_t m = 0;
  double b = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;
};

// Sum over users of log2(1 + g_kk p_k / (sum_{i != k} g_ki p_i + noise)).
// p must satisfy 0 <= p_i <= p_max (1e-12 slack for rounding).
double sum_rate(const NetworkInstance& net, const VectorXd& p);

// Gradient of sum_rate with respect to p, for feasible interior evaluation.
VectorXd sum_rate_grad(const NetworkInstance& net, const VectorXd& p);

// Scalar WMMSE block updates (receiver gain u, weight w, amplitude v) from a
// full-power start, v clipped to [0, sqrt(p_max)]. Stops when the sum-rate
// improvement drops below tol or after max_iters. If rate_trajectory is
// given it receives the sum rate after every iteration.
PowerAllocation wmmse(const NetworkInstance& net, int max_iters = 100, double tol = 1e-9,
                      std::vector<double>* rate_trajectory = nullptr);

// Exhaustive search over the uniform grid {0, p_max/(g-1), ..., p_max}^K.
// Ties break to the lexicographically smallest p. Guard: grid_points^k must
// not exceed 2e6 and k must be <= 6.
PowerAllocation brute_force(const NetworkInstance& net, int grid_points);

// 11 points for k <= 4, binary grid for k = 5..6.
int default_grid_points(int k);

struct PowerIterResult {
  double lambda_max = 0.0;
  VectorXcd v;
  int iterations = 0;
};

// Shifted power iteration on r + ||r||_F I, converging to the most positive
// eigenvalue. The returned vector is unit-norm with its first component of
// magnitude > 1e-12 given a nonnegative real part (sign flip only).
PowerIterResult power_iteration(const EigenProblem& problem, int iters = 1000, double tol = 1e-12);

PacBound hoeffding_bound(std::int64_t m, double b, double delta);

struct BoundedDist {
  enum class Kind { Constant, Bernoulli, Uniform01, Gaussian } kind = Kind::Uniform01;
  // Constant: the value. Bernoulli: success probability. Unused otherwise.
  double param = 0.0;

  double mean() const;
  // Range width b; throws DomainError for the unbounded kind.
  double width() const;
  double draw(SeededStream& rng) const;
};

// Fraction of trials in which the m-sample mean lands within the Hoeffding
// epsilon of the true mean.
double hoeffding_coverage(const BoundedDist& dist, std::int64_t m, double delta, int trials,
                          SeedKey key);

}  // namespace rrm
