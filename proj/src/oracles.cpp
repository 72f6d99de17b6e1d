#include "rrm/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rrm {

namespace {

constexpr double kFeasSlack = 1e-12;

void check_feasible(const NetworkInstance& net, const VectorXd& p) {
  if (p.size() != net.k)
    throw ShapeError("power vector length " + std::to_string(p.size()) +
                     " does not match k = " + std::to_string(net.k));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < -kFeasSlack || p[i] > net.p_max + kFeasSlack)
      throw DomainError("power " + std::to_string(p[i]) + " at user " + std::to_string(i) +
                        " outside [0, p_max]");
  }
}

}  // namespace

void EigenProblem::validate() const {
  if (n < 1) throw DomainError("EigenProblem: n must be >= 1");
  if (r.rows() != n || r.cols() != n)
    throw ShapeError("EigenProblem: r must be " + std::to_string(n) + "x" + std::to_string(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::complex<double> d = r(i, j) - std::conj(r(j, i));
      if (std::abs(d) > 1e-9)
        throw DomainError("EigenProblem: r is not Hermitian at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
    }
}

double sum_rate(const NetworkInstance& net, const VectorXd& p) {
  net.validate();
  check_feasible(net, p);
  double total = 0.0;
  for (int k = 0; k < net.k; ++k) {
    const double pk = std::clamp(p[k], 0.0, net.p_max);
    double interference = net.noise_power;
    for (int i = 0; i < net.k; ++i) {
      if (i == k) continue;
      interference += net.gains(k, i) * std::clamp(p[i], 0.0, net.p_max);
    }
    total += std::log2(1.0 + net.gains(k, k) * pk / interference);
  }
  if (!std::isfinite(total)) throw NumericError("sum_rate: non-finite result");
  return total;
}

VectorXd sum_rate_grad(const NetworkInstance& net, const VectorXd& p) {
  net.validate();
  check_feasible(net, p);
  VectorXd grad = VectorXd::Zero(net.k);
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  for (int k = 0; k < net.k; ++k) {
    const double pk = std::clamp(p[k], 0.0, net.p_max);
    double den = net.noise_power;
    for (int i = 0; i < net.k; ++i) {
      if (i == k) continue;
      den += net.gains(k, i) * std::clamp(p[i], 0.0, net.p_max);
    }
    const double full = den + net.gains(k, k) * pk;
    grad[k] += net.gains(k, k) / full * inv_ln2;
    for (int j = 0; j < net.k; ++j) {
      if (j == k) continue;
      grad[j] += (net.gains(k, j) / full - net.gains(k, j) / den) * inv_ln2;
    }
  }
  return grad;
}

namespace {

// Textbook scalar block updates (u, w, v) from a given amplitude start.
PowerAllocation wmmse_from(const NetworkInstance& net, VectorXd v, int max_iters, double tol,
                           std::vector<double>* rate_trajectory) {
  const int k = net.k;
  const double v_max = std::sqrt(net.p_max);
  VectorXd u(k), w(k), p(k);
  if (rate_trajectory) rate_trajectory->clear();

  double prev_rate = sum_rate(net, v.array().square());
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    p = v.array().square();
    for (int i = 0; i < k; ++i) {
      double received = net.noise_power;
      for (int j = 0; j < k; ++j) received += net.gains(i, j) * p[j];
      u[i] = std::sqrt(net.gains(i, i)) * v[i] / received;
      const double mse = 1.0 - u[i] * std::sqrt(net.gains(i, i)) * v[i];
      w[i] = 1.0 / mse;
      if (!std::isfinite(u[i]) || !std::isfinite(w[i]))
        throw NumericError("wmmse: non-finite update at iteration " + std::to_string(iter));
    }
    for (int j = 0; j < k; ++j) {
      double den = 0.0;
      for (int i = 0; i < k; ++i) den += w[i] * u[i] * u[i] * net.gains(i, j);
      if (den > 0.0) {
        const double num = w[j] * u[j] * std::sqrt(net.gains(j, j));
        v[j] = std::clamp(num / den, 0.0, v_max);
      }
      // den == 0 forces the numerator to 0 as well; keep v[j] unchanged.
      if (!std::isfinite(v[j]))
        throw NumericError("wmmse: non-finite amplitude at iteration " + std::to_string(iter));
    }
    const double rate = sum_rate(net, v.array().square());
    if (rate_trajectory) rate_trajectory->push_back(rate);
    const double gain = rate - prev_rate;
    prev_rate = rate;
    if (gain < tol) {
      ++iter;
      break;
    }
  }

  PowerAllocation out;
  out.p = v.array().square();
  for (int i = 0; i < k; ++i) out.p[i] = std::clamp(out.p[i], 0.0, net.p_max);
  out.achieved_rate = prev_rate;
  out.iterations = iter;
  return out;
}

// Greedy on/off link selection: repeatedly activate the user that raises the
// sum rate the most. O(K^4) rate evaluations, deterministic tie-break.
VectorXd greedy_binary_start(const NetworkInstance& net) {
  VectorXd p = VectorXd::Zero(net.k);
  double best = sum_rate(net, p);
  while (true) {
    int pick = -1;
    double pick_rate = best;
    for (int j = 0; j < net.k; ++j) {
      if (p[j] > 0.0) continue;
      p[j] = net.p_max;
      const double rate = sum_rate(net, p);
      p[j] = 0.0;
      if (rate > pick_rate) {
        pick_rate = rate;
        pick = j;
      }
    }
    if (pick < 0) break;
    p[pick] = net.p_max;
    best = pick_rate;
  }
  return p.array().sqrt();
}

}  // namespace

PowerAllocation wmmse(const NetworkInstance& net, int max_iters, double tol,
                      std::vector<double>* rate_trajectory) {
  net.validate();
  if (max_iters < 1) throw DomainError("wmmse: max_iters must be >= 1");
  if (!(tol > 0.0)) throw DomainError("wmmse: tol must be positive");

  // The block updates only descend into the local basin of their start, and
  // the all-on start sits in a poor basin whenever shutting users off is the
  // right move. Run the classic full-power start plus a greedy on/off start
  // and keep the better outcome; each start's own trajectory stays monotone.
  const double v_max = std::sqrt(net.p_max);
  std::vector<double> traj_full, traj_greedy;
  PowerAllocation full = wmmse_from(net, VectorXd::Constant(net.k, v_max), max_iters, tol,
                                    rate_trajectory ? &traj_full : nullptr);
  PowerAllocation greedy =
      wmmse_from(net, greedy_binary_start(net), max_iters, tol,
                 rate_trajectory ? &traj_greedy : nullptr);

  const bool take_greedy = greedy.achieved_rate > full.achieved_rate;
  if (rate_trajectory) *rate_trajectory = take_greedy ? traj_greedy : traj_full;
  return take_greedy ? greedy : full;
}

PowerAllocation brute_force(const NetworkInstance& net, int grid_points) {
  net.validate();
  if (grid_points < 2) throw DomainError("brute_force: grid_points must be >= 2");
  if (net.k > 6) throw SizeError("brute_force: k > 6 not supported");
  double combos = 1.0;
  for (int i = 0; i < net.k; ++i) combos *= grid_points;
  if (combos > 2e6)
    throw SizeError("brute_force: " + std::to_string(grid_points) + "^" + std::to_string(net.k) +
                    " grid evaluations exceed the 2e6 guard");

  std::vector<double> levels(grid_points);
  for (int t = 0; t < grid_points; ++t)
    levels[t] = net.p_max * static_cast<double>(t) / (grid_points - 1);

  VectorXd p = VectorXd::Zero(net.k);
  std::vector<int> idx(net.k, 0);
  PowerAllocation best;
  best.p = p;
  best.achieved_rate = sum_rate(net, p);

  const auto total = static_cast<std::int64_t>(combos);
  for (std::int64_t step = 1; step < total; ++step) {
    // Lexicographic order with index 0 most significant: increment from the
    // right so earlier-enumerated vectors are lexicographically smaller, and
    // strict improvement keeps the smallest argmax on ties.
    int pos = net.k - 1;
    while (++idx[pos] == grid_points) {
      idx[pos] = 0;
      --pos;
    }
    for (int i = 0; i < net.k; ++i) p[i] = levels[idx[i]];
    const double rate = sum_rate(net, p);
    if (rate > best.achieved_rate) {
      best.achieved_rate = rate;
      best.p = p;
    }
  }
  best.iterations = static_cast<int>(total);
  return best;
}

int default_grid_points(int k) {
  if (k <= 4) return 11;
  if (k <= 6) return 2;
  throw SizeError("default_grid_points: no default grid for k > 6");
}

PowerIterResult power_iteration(const EigenProblem& problem, int iters, double tol) {
  problem.validate();
  if (iters < 1) throw DomainError("power_iteration: iters must be >= 1");
  const int n = problem.n;

  // Shift by the Frobenius norm: every eigenvalue of r + shift*I is
  // nonnegative, so the iteration converges to the most positive eigenvalue
  // of r rather than the largest in magnitude.
  const double shift = problem.r.norm();
  MatrixXcd s = problem.r;
  for (int i = 0; i < n; ++i) s(i, i) += shift;

  VectorXcd v(n);
  for (int i = 0; i < n; ++i) v[i] = std::complex<double>(1.0 + 1e-3 * i, 0.0);
  v.normalize();

  double quotient = std::real(v.dot(problem.r * v));
  bool converged = false;
  int iter = 0;
  for (; iter < iters; ++iter) {
    VectorXcd next = s * v;
    const double norm = next.norm();
    if (norm <= 0.0) {
      // r = -shift * I exactly; any unit vector is an eigenvector.
      converged = true;
      break;
    }
    v = next / norm;
    const double q = std::real(v.dot(problem.r * v));
    const double change = std::abs(q - quotient);
    quotient = q;
    if (change <= tol * std::max(1.0, std::abs(q))) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged)
    throw ConvergenceError("power_iteration: quotient still moving after " +
                           std::to_string(iters) + " iterations");

  for (int i = 0; i < n; ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (std::real(v[i]) < 0.0) v = -v;
      break;
    }
  }

  PowerIterResult out;
  out.lambda_max = quotient;
  out.v = v;
  out.iterations = iter;
  return out;
}

PacBound hoeffding_bound(std::int64_t m, double b, double delta) {
  if (m < 1) throw DomainError("hoeffding_bound: m must be >= 1");
  if (!(b > 0.0)) throw DomainError("hoeffding_bound: b must be positive");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw DomainError("hoeffding_bound: delta must be in (0, 1)");
  PacBound out;
  out.m = m;
  out.b = b;
  out.delta = delta;
  out.epsilon = b * std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(m)));
  return out;
}

double BoundedDist::mean() const {
  switch (kind) {
    case Kind::Constant: return param;
    case Kind::Bernoulli: return param;
    case Kind::Uniform01: return 0.5;
    case Kind::Gaussian: return param;
  }
  throw DomainError("BoundedDist: unknown kind");
}

double BoundedDist::width() const {
  switch (kind) {
    case Kind::Constant: return 0.0;
    case Kind::Bernoulli: return 1.0;
    case Kind::Uniform01: return 1.0;
    case Kind::Gaussian: throw DomainError("BoundedDist: gaussian has unbounded support");
  }
  throw DomainError("BoundedDist: unknown kind");
}

double BoundedDist::draw(SeededStream& rng) const {
  switch (kind) {
    case Kind::Constant: return param;
    case Kind::Bernoulli: return rng.uniform() < param ? 1.0 : 0.0;
    case Kind::Uniform01: return rng.uniform();
    case Kind::Gaussian: return param + rng.gaussian();
  }
  throw DomainError("BoundedDist: unknown kind");
}

double hoeffding_coverage(const BoundedDist& dist, std::int64_t m, double delta, int trials,
                          SeedKey key) {
  if (trials < 100) throw DomainError("hoeffding_coverage: need at least 100 trials");
  if (m < 1) throw DomainError("hoeffding_coverage: m must be >= 1");
  const double width = dist.width();  // throws for unbounded distributions
  const double eps = width > 0.0 ? hoeffding_bound(m, width, delta).epsilon : 0.0;
  const double mu = dist.mean();

  int covered = 0;
  for (int t = 0; t < trials; ++t) {
    SeededStream rng(key.derive(streams::kTrial, t));
    double acc = 0.0;
    for (std::int64_t s = 0; s < m; ++s) acc += dist.draw(rng);
    if (std::abs(acc / static_cast<double>(m) - mu) <= eps) ++covered;
  }
  return static_cast<double>(covered) / trials;
}

}  // namespace rrm
