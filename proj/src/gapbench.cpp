#include "rrm/gapbench.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>
#include <vector>

#include "rrm/layers.hpp"

namespace rrm {

using nlohmann::json;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double median(std::vector<double> values) {
  if (values.empty()) return kNan;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Least-squares slope of y against x; NaN for fewer than two points or a
// degenerate x spread.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return kNan;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) return kNan;
  return sxy / sxx;
}

double mean_relative_gap(const MatrixXd& powers, const Dataset& set, const char* which) {
  if (set.instances.empty()) throw DomainError(std::string("measure_gaps: empty ") + which + " set");
  if (set.labels.size() != set.instances.size())
    throw DomainError(std::string("measure_gaps: ") + which + " set has no oracle labels");
  if (powers.cols() != static_cast<Eigen::Index>(set.instances.size()))
    throw ShapeError(std::string("measure_gaps: ") + which + " powers have " +
                     std::to_string(powers.cols()) + " columns for " +
                     std::to_string(set.instances.size()) + " instances");
  double acc = 0.0;
  for (std::size_t t = 0; t < set.instances.size(); ++t) {
    const NetworkInstance& inst = set.instances[t];
    const double oracle = sum_rate(inst, set.labels[t]);
    const double achieved = sum_rate(inst, powers.col(static_cast<Eigen::Index>(t)));
    acc += (oracle - achieved) / std::max(oracle, 1e-12);
  }
  return acc / static_cast<double>(set.instances.size());
}

// Run fn(0..n-1), each index exactly once, on up to `jobs` threads. Cell
// work is independent and deterministic per index, so the thread count
// never changes results. Non-Error exceptions are rethrown after the join.
void run_jobs(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  for (std::thread& t : workers) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

struct CellKeys {
  SeedKey train_data;
  SeedKey test_data;
  SeedKey mlp_init;
  SeedKey gnn_init;
  SeedKey shuffle;
};

CellKeys cell_keys(const SeedKey& base, int size, int seed) {
  const SeedKey cell = base.derive(static_cast<std::uint64_t>(size)).derive(
      static_cast<std::uint64_t>(seed));
  return {cell.derive(1), cell.derive(2), cell.derive(3), cell.derive(4), cell.derive(5)};
}

TrainConfig cell_train_config(const SweepConfig& config, const SeedKey& shuffle_key) {
  TrainConfig tc;
  tc.scheme = config.scheme;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch_size;
  tc.learning_rate = config.learning_rate;
  tc.seed = shuffle_key;
  return tc;
}

void validate_sweep_config(const SweepConfig& config) {
  if (config.seeds < 3) throw ConfigError("sweep: seeds must be >= 3");
  if (config.n_test < 1) throw ConfigError("sweep: n_test must be >= 1");
  if (config.oracle == LabelOracle::None) throw ConfigError("sweep: gaps need a label oracle");
}

// Trains the model in place on the cell's datasets; fills either gaps or the
// failure message. Divergence (and any other library error) marks the cell
// failed so the sweep can continue; programming errors still surface.
void run_cell(Model& model, const Dataset& train_set, const Dataset& test_set,
              const TrainConfig& tc, CellResult& cell) {
  try {
    train(model, train_set, tc);
    cell.gaps = measure_gaps(model, train_set, test_set);
    cell.failed = false;
  } catch (const Error& e) {
    cell.failed = true;
    cell.failure = e.what();
  }
}

struct AffineView {
  Eigen::Map<const MatrixXd> w;
  Eigen::Map<const VectorXd> b;
};

// The two-affine-layer parameter layout used by the eigen demo nets:
// weights column-major then bias, layers concatenated.
AffineView affine_view(const VectorXd& values, const std::vector<LayerSpec>& specs,
                       std::size_t index) {
  Eigen::Index offset = 0;
  for (std::size_t a = 0; a < index; ++a)
    offset += static_cast<Eigen::Index>(specs[a].out) * specs[a].in + specs[a].out;
  const LayerSpec& spec = specs[index];
  return {Eigen::Map<const MatrixXd>(values.data() + offset, spec.out, spec.in),
          Eigen::Map<const VectorXd>(values.data() + offset + spec.out * spec.in, spec.out)};
}

struct EigenNet {
  std::vector<LayerSpec> specs;
  VectorXd values;
};

EigenNet make_eigen_net(int n_dim, int hidden, SeedKey key) {
  std::vector<LayerSpec> specs = {{LayerKind::Affine, n_dim * n_dim, hidden},
                                  {LayerKind::Affine, hidden, n_dim}};
  ModelParams params = init_params(Arch::Mlp, specs, key);
  return {std::move(specs), std::move(params.values)};
}

struct EigenNetTape {
  MatrixXd x;
  MatrixXd a1;
  MatrixXd h1;
  MatrixXd out;
};

const MatrixXd& eigen_net_forward(const EigenNet& net, const MatrixXd& x, EigenNetTape& tape) {
  const AffineView l1 = affine_view(net.values, net.specs, 0);
  const AffineView l2 = affine_view(net.values, net.specs, 1);
  tape.x = x;
  tape.a1 = affine_forward(l1.w, l1.b, x);
  tape.h1 = relu_forward(tape.a1);
  tape.out = affine_forward(l2.w, l2.b, tape.h1);
  return tape.out;
}

VectorXd eigen_net_backward(const EigenNet& net, const EigenNetTape& tape, const MatrixXd& d_out) {
  const AffineView l1 = affine_view(net.values, net.specs, 0);
  const AffineView l2 = affine_view(net.values, net.specs, 1);
  const AffineGrads g2 = affine_backward(l2.w, tape.h1, d_out);
  const MatrixXd d_a1 = relu_backward(tape.a1, g2.dx);
  const AffineGrads g1 = affine_backward(l1.w, tape.x, d_a1);
  VectorXd grad(net.values.size());
  Eigen::Index off = 0;
  const auto put = [&grad, &off](const MatrixXd& dw, const VectorXd& db) {
    grad.segment(off, dw.size()) = Eigen::Map<const VectorXd>(dw.data(), dw.size());
    off += dw.size();
    grad.segment(off, db.size()) = db;
    off += db.size();
  };
  put(g1.dw, g1.db);
  put(g2.dw, g2.db);
  return grad;
}

// Epoch-loss divergence rule shared with the trainers: stop a demo case the
// moment its loss leaves the finite, bounded regime.
bool diverged(double loss) { return !std::isfinite(loss) || std::abs(loss) > 1e6; }

MatrixXd random_symmetric_inputs(int n_dim, int n_train, SeedKey key,
                                 std::vector<MatrixXd>& mats) {
  SeededStream rng(key);
  MatrixXd x(n_dim * n_dim, n_train);
  mats.resize(static_cast<std::size_t>(n_train));
  for (int t = 0; t < n_train; ++t) {
    MatrixXd a(n_dim, n_dim);
    for (int j = 0; j < n_dim; ++j)
      for (int i = 0; i < n_dim; ++i) a(i, j) = rng.gaussian();
    MatrixXd r = 0.5 * (a + a.transpose());
    mats[static_cast<std::size_t>(t)] = r;
    x.col(t) = Eigen::Map<const VectorXd>(r.data(), r.size());
  }
  return x;
}

VectorXd leading_eigenvector(const MatrixXd& r) {
  EigenProblem problem;
  problem.n = static_cast<int>(r.rows());
  problem.r = r.cast<std::complex<double>>();
  // The Frobenius shift slows the power ratio to (lam2+s)/(lam1+s), so random
  // draws with a modest spectral gap need far more than the default budget.
  const PowerIterResult res = power_iteration(problem, 200000, 1e-9);
  VectorXd v = res.v.real();
  const double norm = v.norm();
  if (norm <= 1e-12) throw NumericError("demo_loss_mismatch_eigen: degenerate eigenvector");
  return v / norm;
}

// Supervised case: two-sided MSE against +-v*. The analytic minimizer is
// the zero vector, so training reports how far the mean output norm falls.
EigenDemoSeedResult run_eigen_seed(int n_dim, int seed, const EigenDemoConfig& config) {
  EigenDemoSeedResult result;
  result.seed = seed;
  const SeedKey cell = config.key.derive(static_cast<std::uint64_t>(seed));

  std::vector<MatrixXd> mats;
  const MatrixXd x = random_symmetric_inputs(n_dim, config.n_train, cell.derive(1), mats);
  std::vector<VectorXd> stars(mats.size());
  for (std::size_t t = 0; t < mats.size(); ++t) stars[t] = leading_eigenvector(mats[t]);

  {
    EigenNet net = make_eigen_net(n_dim, config.hidden, cell.derive(2));
    AdamState opt;
    EigenNetTape tape;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const MatrixXd& out = eigen_net_forward(net, x, tape);
      double loss = 0.0;
      MatrixXd d_out(out.rows(), out.cols());
      for (Eigen::Index t = 0; t < out.cols(); ++t) {
        const VectorXd v = out.col(t);
        const VectorXd& star = stars[static_cast<std::size_t>(t)];
        loss += two_label_loss(v, star);
        d_out.col(t) = squared_error_grad(v, star) + squared_error_grad(v, -star);
      }
      loss /= static_cast<double>(out.cols());
      d_out /= static_cast<double>(out.cols());
      if (diverged(loss)) {
        result.diverged_supervised = true;
        break;
      }
      const VectorXd grad = eigen_net_backward(net, tape, d_out);
      adam_step(net.values, grad, opt, config.learning_rate);
    }
    EigenNetTape eval;
    const MatrixXd& out = eigen_net_forward(net, x, eval);
    result.mean_output_norm = out.colwise().norm().mean();
  }

  {
    // Unsupervised case on the fixed spectrum diag(3, 1, ..., 1): maximize
    // the Rayleigh quotient of the output, normalized into the unit ball.
    MatrixXd r = MatrixXd::Identity(n_dim, n_dim);
    r(0, 0) = 3.0;
    const Eigen::Map<const VectorXd> r_flat(r.data(), r.size());
    const MatrixXd xb = r_flat;

    EigenNet net = make_eigen_net(n_dim, config.hidden, cell.derive(3));
    AdamState opt;
    EigenNetTape tape;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const MatrixXd& out = eigen_net_forward(net, xb, tape);
      const VectorXd u = out.col(0);
      const double norm = u.norm();
      VectorXd du;
      double loss;
      if (norm <= 1.0) {
        loss = -u.dot(r * u);
        du = -2.0 * (r * u);
      } else {
        const double q = u.dot(r * u) / (norm * norm);
        loss = -q;
        du = (-2.0 / (norm * norm)) * (r * u - q * u);
      }
      if (diverged(loss)) {
        result.diverged_unsupervised = true;
        break;
      }
      const VectorXd grad = eigen_net_backward(net, tape, du);
      adam_step(net.values, grad, opt, config.learning_rate);
    }
    EigenNetTape eval;
    const VectorXd u = eigen_net_forward(net, xb, eval).col(0);
    const VectorXd v = u / std::max(1.0, u.norm());
    const double lambda_max = [&r, n_dim] {
      EigenProblem problem;
      problem.n = n_dim;
      problem.r = r.cast<std::complex<double>>();
      return power_iteration(problem).lambda_max;
    }();
    result.quotient_ratio = v.dot(r * v) / lambda_max;
  }
  return result;
}

void write_text_file(const std::string& path, const std::string& body, const char* who) {
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw Error(std::string(who) + ": cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw Error(std::string(who) + ": write to '" + path + "' failed");
}

json json_or_null(double value) {
  if (std::isfinite(value)) return value;
  return nullptr;
}

}  // namespace

GapReport measure_gaps_powers(const MatrixXd& train_powers, const MatrixXd& test_powers,
                              const Dataset& train_set, const Dataset& test_set) {
  if (train_set.meta.oracle != test_set.meta.oracle)
    throw DomainError("measure_gaps: train and test sets use different oracles");
  GapReport report;
  report.train_gap = mean_relative_gap(train_powers, train_set, "train");
  report.total_gap = mean_relative_gap(test_powers, test_set, "test");
  report.gen_gap = report.total_gap - report.train_gap;
  report.oracle_name = to_string(train_set.meta.oracle);
  report.n_train = static_cast<int>(train_set.instances.size());
  report.n_test = static_cast<int>(test_set.instances.size());
  report.seed = train_set.meta.seed;
  return report;
}

GapReport measure_gaps(const Model& model, const Dataset& train_set, const Dataset& test_set) {
  if (train_set.instances.empty() || test_set.instances.empty())
    throw DomainError("measure_gaps: empty train or test set");
  return measure_gaps_powers(batch_outputs(model, train_set.instances),
                             batch_outputs(model, test_set.instances), train_set, test_set);
}

PacEstimate estimate_pac_epsilon(const Model& model, int k, ChannelModel channel,
                                 LabelOracle oracle, double delta, int trials, SeedKey key) {
  if (!(delta > 0.0 && delta < 1.0))
    throw DomainError("estimate_pac_epsilon: delta must lie in (0, 1)");
  if (trials < 100) throw DomainError("estimate_pac_epsilon: trials must be >= 100");
  if (oracle == LabelOracle::None)
    throw DomainError("estimate_pac_epsilon: an oracle is required");

  std::vector<NetworkInstance> instances;
  instances.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t)
    instances.push_back(
        sample_instance(k, channel, key.derive(streams::kInstance, static_cast<std::uint64_t>(t))));
  const MatrixXd powers = batch_outputs(model, instances);

  std::vector<double> diffs(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    const NetworkInstance& inst = instances[static_cast<std::size_t>(t)];
    double oracle_rate = 0.0;
    try {
      const PowerAllocation alloc = oracle == LabelOracle::Wmmse
                                        ? wmmse(inst)
                                        : brute_force(inst, default_grid_points(k));
      oracle_rate = sum_rate(inst, alloc.p);
    } catch (const Error& e) {
      throw NumericError("estimate_pac_epsilon: oracle failed at trial " + std::to_string(t) +
                         ": " + e.what());
    }
    diffs[static_cast<std::size_t>(t)] = std::abs(sum_rate(inst, powers.col(t)) - oracle_rate);
  }
  std::sort(diffs.begin(), diffs.end());
  const int rank = std::clamp(
      static_cast<int>(std::ceil((1.0 - delta) * static_cast<double>(trials))), 1, trials);

  PacEstimate est;
  est.delta = delta;
  est.epsilon_hat = diffs[static_cast<std::size_t>(rank - 1)];
  est.trials = trials;
  return est;
}

EquivarianceWitness make_equivariance_witness(const MlpModel& mlp, const GnnModel& gnn,
                                              const NetworkInstance& instance,
                                              const std::vector<int>& perm) {
  EquivarianceWitness witness;
  witness.instance = instance;
  witness.perm = perm;
  const NetworkInstance permuted = permute_instance(instance, perm);
  const VectorXd mlp_base = permute_vector(mlp_forward(mlp, instance), perm);
  const VectorXd mlp_perm = mlp_forward(mlp, permuted);
  witness.mlp_deviation = (mlp_perm - mlp_base).cwiseAbs().maxCoeff();
  const VectorXd gnn_base = permute_vector(gnn_forward(gnn, build_graph(instance)), perm);
  const VectorXd gnn_perm = gnn_forward(gnn, build_graph(permuted));
  witness.gnn_deviation = (gnn_perm - gnn_base).cwiseAbs().maxCoeff();
  return witness;
}

ScalingReport sweep_k(const std::vector<int>& ks, int m_train, const SweepConfig& config) {
  validate_sweep_config(config);
  if (ks.empty()) throw DomainError("sweep_k: no user counts given");
  if (!std::is_sorted(ks.begin(), ks.end()) ||
      std::adjacent_find(ks.begin(), ks.end()) != ks.end())
    throw DomainError("sweep_k: user counts must be strictly ascending");
  if (m_train < 1) throw DomainError("sweep_k: m_train must be >= 1");

  struct Job {
    int k = 0;
    int seed = 0;
  };
  std::vector<Job> jobs;
  for (int k : ks)
    for (int s = 0; s < config.seeds; ++s) jobs.push_back({k, s});

  ScalingReport report;
  report.cells.resize(jobs.size() * 2);
  Model witness_mlp, witness_gnn;  // job 0's trained pair, kept for the witness

  run_jobs(static_cast<int>(jobs.size()), config.jobs, [&](int j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    const CellKeys keys = cell_keys(config.key, job.k, job.seed);
    const Dataset train_set =
        gen_dataset(m_train, job.k, config.channel, config.oracle, keys.train_data);
    const Dataset test_set =
        gen_dataset(config.n_test, job.k, config.channel, config.oracle, keys.test_data);
    const TrainConfig tc = cell_train_config(config, keys.shuffle);

    CellResult& mlp_cell = report.cells[static_cast<std::size_t>(j) * 2];
    mlp_cell = {job.k, job.seed, Arch::Mlp, false, {}, {}};
    Model mlp = make_mlp(job.k, config.mlp, keys.mlp_init);
    run_cell(mlp, train_set, test_set, tc, mlp_cell);

    CellResult& gnn_cell = report.cells[static_cast<std::size_t>(j) * 2 + 1];
    gnn_cell = {job.k, job.seed, Arch::Mpgnn, false, {}, {}};
    Model gnn = make_gnn(config.gnn, keys.gnn_init);
    run_cell(gnn, train_set, test_set, tc, gnn_cell);

    if (j == 0 && !mlp_cell.failed && !gnn_cell.failed) {
      witness_mlp = std::move(mlp);
      witness_gnn = std::move(gnn);
    }
  });

  std::vector<double> log_k, log_ratio;
  for (int k : ks) {
    ScalingRow row;
    row.k = k;
    std::vector<double> mlp_gaps, gnn_gaps;
    int both = 0;
    for (std::size_t c = 0; c < report.cells.size(); c += 2) {
      const CellResult& m = report.cells[c];
      const CellResult& g = report.cells[c + 1];
      if (m.size != k) continue;
      if (m.failed || g.failed) continue;
      mlp_gaps.push_back(m.gaps.total_gap);
      gnn_gaps.push_back(g.gaps.total_gap);
      ++both;
    }
    row.seeds_used = both;
    row.gap_mlp = median(mlp_gaps);
    row.gap_gnn = median(gnn_gaps);
    row.ratio = both > 0 ? row.gap_mlp / std::max(row.gap_gnn, 1e-12) : kNan;
    if (both > 0 && row.ratio > 0.0) {
      log_k.push_back(std::log(static_cast<double>(k)));
      log_ratio.push_back(std::log(row.ratio));
    }
    report.rows.push_back(row);
  }
  report.fitted_ratio_exponent = ls_slope(log_k, log_ratio);

  if (!report.cells[0].failed && !report.cells[1].failed) {
    const CellKeys keys = cell_keys(config.key, ks.front(), 0);
    const NetworkInstance witness_inst =
        sample_instance(ks.front(), config.channel, keys.test_data.derive(99));
    std::vector<int> perm(static_cast<std::size_t>(ks.front()));
    for (int i = 0; i < ks.front(); ++i) perm[static_cast<std::size_t>(i)] = i;
    std::rotate(perm.begin(), perm.begin() + 1, perm.end());
    report.witness = make_equivariance_witness(std::get<MlpModel>(witness_mlp),
                                               std::get<GnnModel>(witness_gnn), witness_inst,
                                               perm);
  }
  return report;
}

SampleComplexityReport sweep_m(const std::vector<int>& ms, int k, const SweepConfig& config) {
  validate_sweep_config(config);
  if (ms.empty()) throw DomainError("sweep_m: no sample counts given");
  if (!std::is_sorted(ms.begin(), ms.end()) ||
      std::adjacent_find(ms.begin(), ms.end()) != ms.end())
    throw DomainError("sweep_m: sample counts must be strictly ascending");
  if (k < 2) throw DomainError("sweep_m: k must be >= 2");

  struct Job {
    int m = 0;
    int seed = 0;
  };
  std::vector<Job> jobs;
  for (int m : ms)
    for (int s = 0; s < config.seeds; ++s) jobs.push_back({m, s});

  SampleComplexityReport report;
  report.cells.resize(jobs.size());

  run_jobs(static_cast<int>(jobs.size()), config.jobs, [&](int j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    // Key the data by seed only: a seed's train sets are nested across M and
    // its test set is shared, so rows differ in sample count alone.
    const CellKeys keys = cell_keys(config.key, 0, job.seed);
    const Dataset train_set =
        gen_dataset(job.m, k, config.channel, config.oracle, keys.train_data);
    const Dataset test_set =
        gen_dataset(config.n_test, k, config.channel, config.oracle, keys.test_data);
    const TrainConfig tc = cell_train_config(config, keys.shuffle.derive(
                                                          static_cast<std::uint64_t>(job.m)));

    CellResult& cell = report.cells[static_cast<std::size_t>(j)];
    cell = {job.m, job.seed, Arch::Mpgnn, false, {}, {}};
    Model gnn = make_gnn(config.gnn, keys.gnn_init);
    run_cell(gnn, train_set, test_set, tc, cell);
  });

  std::vector<double> log_m, log_gap;
  for (int m : ms) {
    SampleRow row;
    row.m = m;
    std::vector<double> gaps;
    for (const CellResult& cell : report.cells)
      if (cell.size == m && !cell.failed) gaps.push_back(cell.gaps.gen_gap);
    row.seeds_used = static_cast<int>(gaps.size());
    row.gen_gap_median = median(gaps);
    if (row.seeds_used > 0 && row.gen_gap_median > 0.0) {
      log_m.push_back(std::log(static_cast<double>(m)));
      log_gap.push_back(std::log(row.gen_gap_median));
    }
    report.rows.push_back(row);
  }
  report.fitted_slope = ls_slope(log_m, log_gap);
  return report;
}

double two_label_loss(const VectorXd& v_hat, const VectorXd& v_star) {
  if (v_hat.size() != v_star.size())
    throw ShapeError("two_label_loss: vector sizes " + std::to_string(v_hat.size()) + " vs " +
                     std::to_string(v_star.size()));
  return squared_error(v_hat, v_star) + squared_error(v_hat, -v_star);
}

EigenDemoReport demo_loss_mismatch_eigen(int n_dim, int seeds, const EigenDemoConfig& config) {
  if (n_dim < 2) throw DomainError("demo_loss_mismatch_eigen: n_dim must be >= 2");
  if (seeds < 1) throw DomainError("demo_loss_mismatch_eigen: seeds must be >= 1");
  if (config.epochs < 1 || config.n_train < 1 || config.hidden < 1 ||
      !(config.learning_rate > 0.0))
    throw ConfigError("demo_loss_mismatch_eigen: bad training configuration");

  EigenDemoReport report;
  report.n_dim = n_dim;
  report.loss_at_zero = two_label_loss(VectorXd::Zero(n_dim), VectorXd::Unit(n_dim, 0));
  report.per_seed.resize(static_cast<std::size_t>(seeds));
  for (int s = 0; s < seeds; ++s)
    report.per_seed[static_cast<std::size_t>(s)] = run_eigen_seed(n_dim, s, config);

  std::vector<double> norms, ratios;
  for (const EigenDemoSeedResult& r : report.per_seed) {
    if (!r.diverged_supervised) norms.push_back(r.mean_output_norm);
    if (!r.diverged_unsupervised) ratios.push_back(r.quotient_ratio);
  }
  report.median_output_norm = median(norms);
  report.median_quotient_ratio = median(ratios);
  return report;
}

PowerDemoReport demo_loss_mismatch_power() {
  const NetworkInstance inst = extreme_interference_instance();
  VectorXd label(5), all_three(5), other_cell(5);
  label << 1, 1, 0, 0, 0;
  all_three << 1, 1, 1, 0, 0;
  other_cell << 0, 0, 0, 1, 1;

  PowerDemoReport report;
  report.label_rate = sum_rate(inst, label);
  const auto add = [&](const std::string& name, const VectorXd& p) {
    PowerCandidate c;
    c.name = name;
    c.p = p;
    c.mse = squared_error(p, label);
    c.rate = sum_rate(inst, p);
    report.candidates.push_back(std::move(c));
  };
  add("label", label);
  add("first_cell_plus_drowned", all_three);
  add("second_cell", other_cell);

  const PowerCandidate& a = report.candidates[1];
  const PowerCandidate& b = report.candidates[2];
  report.inversion_holds = (a.mse < b.mse && a.rate < b.rate) ||
                           (b.mse < a.mse && b.rate < a.rate);
  return report;
}

void write_sweep_k_csv(const ScalingReport& report, const std::string& path) {
  std::string body = "k,seed,arch,train_gap,gen_gap,total_gap\n";
  char buf[256];
  for (const CellResult& cell : report.cells) {
    if (cell.failed) continue;
    std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.12g,%.12g,%.12g\n", cell.size, cell.seed,
                  to_string(cell.arch).c_str(), cell.gaps.train_gap, cell.gaps.gen_gap,
                  cell.gaps.total_gap);
    body += buf;
  }
  write_text_file(path, body, "write_sweep_k_csv");
}

void write_sweep_m_csv(const SampleComplexityReport& report, const std::string& path) {
  std::string body = "m,seed,gen_gap\n";
  char buf[128];
  for (const CellResult& cell : report.cells) {
    if (cell.failed) continue;
    std::snprintf(buf, sizeof(buf), "%d,%d,%.12g\n", cell.size, cell.seed, cell.gaps.gen_gap);
    body += buf;
  }
  write_text_file(path, body, "write_sweep_m_csv");
}

void write_eigen_demo_json(const EigenDemoReport& report, const std::string& path) {
  json doc;
  doc["n_dim"] = report.n_dim;
  doc["loss_at_zero"] = report.loss_at_zero;
  doc["median_output_norm"] = json_or_null(report.median_output_norm);
  doc["median_quotient_ratio"] = json_or_null(report.median_quotient_ratio);
  json seeds = json::array();
  for (const EigenDemoSeedResult& r : report.per_seed) {
    seeds.push_back({{"seed", r.seed},
                     {"mean_output_norm", json_or_null(r.mean_output_norm)},
                     {"quotient_ratio", json_or_null(r.quotient_ratio)},
                     {"diverged_supervised", r.diverged_supervised},
                     {"diverged_unsupervised", r.diverged_unsupervised}});
  }
  doc["per_seed"] = std::move(seeds);
  write_text_file(path, doc.dump(2) + "\n", "write_eigen_demo_json");
}

void write_power_demo_json(const PowerDemoReport& report, const std::string& path) {
  json doc;
  doc["label_rate"] = report.label_rate;
  doc["inversion_holds"] = report.inversion_holds;
  json cands = json::array();
  for (const PowerCandidate& c : report.candidates) {
    json row;
    row["name"] = c.name;
    row["p"] = std::vector<double>(c.p.data(), c.p.data() + c.p.size());
    row["mse"] = c.mse;
    row["rate"] = c.rate;
    cands.push_back(std::move(row));
  }
  doc["candidates"] = std::move(cands);
  write_text_file(path, doc.dump(2) + "\n", "write_power_demo_json");
}

}  // namespace rrm
