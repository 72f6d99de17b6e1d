#pragma once

#include <string>
#include <vector>

#include "rrm/models.hpp"
#include "rrm/netgen.hpp"
#include "rrm/oracles.hpp"
#include "rrm/training.hpp"

namespace rrm {

// Optimality-gap decomposition of a trained model against a label oracle,
// in relative sum-rate terms. By construction total_gap = train_gap +
// gen_gap exactly; the approximation part is absorbed into train_gap.
struct GapReport {
  double train_gap = 0.0;  // mean over the train set of (oracle - model) / oracle
  double gen_gap = 0.0;    // total_gap - train_gap
  double total_gap = 0.0;  // same mean over the test set
  std::string oracle_name;
  int n_train = 0;
  int n_test = 0;
  SeedKey seed;  // the train set's generator key
};

// Gap report from explicit power columns (one per instance). Oracle rates
// are recomputed from the label power vectors, never read from cached
// numbers. Both sets must be labeled by the same oracle; throws DomainError
// on empty sets or missing labels, ShapeError on mismatched columns.
GapReport measure_gaps_powers(const MatrixXd& train_powers, const MatrixXd& test_powers,
                              const Dataset& train_set, const Dataset& test_set);

// Same, with the powers produced by the model (batched evaluation).
GapReport measure_gaps(const Model& model, const Dataset& train_set, const Dataset& test_set);

// Empirical (1 - delta)-quantile of |model rate - oracle rate| over fresh
// instances: sorted ascending, entry ceil((1 - delta) * trials). delta -> 0
// gives the max observed difference.
struct PacEstimate {
  double delta = 0.0;
  double epsilon_hat = 0.0;
  int trials = 0;
};

// Draws `trials` fresh instances from the channel model, runs the named
// oracle on each, and compares achieved sum rates. Requires 0 < delta < 1
// and trials >= 100 (DomainError); oracle failures are rethrown with the
// trial index.
PacEstimate estimate_pac_epsilon(const Model& model, int k, ChannelModel channel,
                                 LabelOracle oracle, double delta, int trials, SeedKey key);

// Shared knobs for the scaling sweeps. Each (size, seed) cell derives all
// of its randomness from `key`, so cells are independent jobs; `jobs` = 0
// uses the hardware thread count.
struct SweepConfig {
  int seeds = 3;  // replicates per cell; must be >= 3
  int n_test = 500;
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;
  Scheme scheme = Scheme::Supervised;
  ChannelModel channel = ChannelModel::RayleighIid;
  LabelOracle oracle = LabelOracle::Wmmse;
  MlpConfig mlp;
  GnnConfig gnn;
  SeedKey key;
  int jobs = 0;
};

// One trained (size, seed, architecture) cell. Failed cells carry the
// error message and no gaps; the sweep continues without them.
struct CellResult {
  int size = 0;  // K for the user sweep, M for the sample sweep
  int seed = 0;
  Arch arch = Arch::Mlp;
  bool failed = false;
  std::string failure;
  GapReport gaps;
};

// A concrete demonstration that relabeling users moves the MLP's output but
// not the GNN's: deviation = max-abs difference between the model run on the
// permuted instance and the permuted model output.
struct EquivarianceWitness {
  NetworkInstance instance;
  std::vector<int> perm;
  double mlp_deviation = 0.0;
  double gnn_deviation = 0.0;
};

EquivarianceWitness make_equivariance_witness(const MlpModel& mlp, const GnnModel& gnn,
                                              const NetworkInstance& instance,
                                              const std::vector<int>& perm);

// User-count sweep: identical labeled datasets per cell feed an MLP and a
// GNN; rows hold the per-architecture medians over seeds and their ratio.
struct ScalingRow {
  int k = 0;
  double gap_mlp = 0.0;
  double gap_gnn = 0.0;
  double ratio = 0.0;  // gap_mlp / gap_gnn
  int seeds_used = 0;  // seeds where both architectures trained
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  // Least-squares slope of ln(ratio) vs ln(k); NaN with fewer than two rows.
  double fitted_ratio_exponent = 0.0;
  std::vector<CellResult> cells;
  EquivarianceWitness witness;  // from the first successful cell pair
};

// ks ascending, >= 3 seeds per cell, m_train fixed across K (DomainError /
// ConfigError otherwise). Training divergence marks the cell failed and the
// sweep continues.
ScalingReport sweep_k(const std::vector<int>& ks, int m_train, const SweepConfig& config);

// Training-set-size sweep at fixed K, GNN only. Train sets are nested draws
// (instance t depends only on the seed's stream), so rows differ in sample
// count alone; the test set is shared across sizes within a seed.
struct SampleRow {
  int m = 0;
  double gen_gap_median = 0.0;
  int seeds_used = 0;
};

struct SampleComplexityReport {
  std::vector<SampleRow> rows;
  // Least-squares slope of ln(median gen_gap) vs ln(m) over positive
  // medians; NaN with fewer than two usable rows.
  double fitted_slope = 0.0;
  std::vector<CellResult> cells;
};

SampleComplexityReport sweep_m(const std::vector<int>& ms, int k, const SweepConfig& config);

// Two-sided label loss ||v - v*||^2 + ||v + v*||^2. Its minimum over v is
// at v = 0 with value 2 ||v*||^2, which is what makes it a bad surrogate
// for an objective whose optima come in +- pairs.
double two_label_loss(const VectorXd& v_hat, const VectorXd& v_star);

struct EigenDemoConfig {
  int epochs = 400;
  double learning_rate = 1e-2;
  int n_train = 64;
  int hidden = 32;
  SeedKey key;
};

// One seed of the eigenvector surrogate-loss demonstration: a small MLP maps
// a flattened symmetric matrix to a vector. Supervised with the two-sided
// loss the outputs collapse toward zero; unsupervised on the Rayleigh
// quotient (output normalized into the unit ball) they reach the leading
// eigenvector.
struct EigenDemoSeedResult {
  int seed = 0;
  double mean_output_norm = 0.0;  // supervised case, mean over train inputs
  double quotient_ratio = 0.0;    // unsupervised case, vs the power-iteration oracle
  bool diverged_supervised = false;
  bool diverged_unsupervised = false;
};

struct EigenDemoReport {
  int n_dim = 0;
  std::vector<EigenDemoSeedResult> per_seed;
  double median_output_norm = 0.0;
  double median_quotient_ratio = 0.0;
  // The two-sided loss evaluated at v = 0 for a unit label; equals 2.
  double loss_at_zero = 0.0;
};

EigenDemoReport demo_loss_mismatch_eigen(int n_dim, int seeds, const EigenDemoConfig& config);

// Fixed 5-user stress channel: two candidate allocations whose squared
// errors against the oracle label rank opposite to their sum rates.
struct PowerCandidate {
  std::string name;
  VectorXd p;
  double mse = 0.0;
  double rate = 0.0;
};

struct PowerDemoReport {
  std::vector<PowerCandidate> candidates;  // label, then the two candidates
  double label_rate = 0.0;
  bool inversion_holds = false;  // lower-MSE candidate has the lower rate
};

PowerDemoReport demo_loss_mismatch_power();

// CSV/JSON artifacts. CSV headers: `k,seed,arch,train_gap,gen_gap,total_gap`
// and `m,seed,gen_gap`; one row per successful cell, cell order. Binary
// streams, LF newlines, %.12g floats, identical bytes for identical reports.
void write_sweep_k_csv(const ScalingReport& report, const std::string& path);
void write_sweep_m_csv(const SampleComplexityReport& report, const std::string& path);
void write_eigen_demo_json(const EigenDemoReport& report, const std::string& path);
void write_power_demo_json(const PowerDemoReport& report, const std::string& path);

}  // namespace rrm
