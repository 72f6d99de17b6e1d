#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "rrm/error.hpp"
#include "rrm/rng.hpp"
#include "rrm/training.hpp"

namespace rrm {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

// One narrowband MIMO detection problem: y = h x_true + noise.
struct MimoInstance {
  MatrixXcd h;      // m_rx x n_tx
  VectorXcd y;      // m_rx
  double sigma2 = 0.0;
  VectorXcd x_true; // n_tx, constellation symbols (training/eval only)

  // Throws ShapeError / DomainError on inconsistent dimensions, negative
  // sigma2, or x_true entries off the constellation.
  void validate() const;
};

enum class Constellation { Qpsk };

std::string to_string(Constellation c);
Constellation constellation_from_string(const std::string& name);

// Unit-energy QPSK alphabet, the enumeration order used everywhere.
const std::array<std::complex<double>, 4>& qpsk_points();

// Nearest constellation point per entry; boundary (zero) resolves to +.
VectorXcd qpsk_hard(const VectorXcd& x);

// Per-layer step sizes of the unrolled detector.
struct OampParams {
  int layers = 0;
  VectorXd gamma;
  VectorXd theta;
  Constellation constellation = Constellation::Qpsk;

  void validate() const;
};

// All layers initialized at gamma = theta = 1, the classical schedule.
OampParams default_oamp_params(int layers);

// Detector state after a layer. v2 and tau2 are clamped at 1e-12 from below;
// regularized records that the linear solve needed a ridge.
struct OampState {
  VectorXcd x;
  VectorXcd r;
  double v2 = 0.0;
  double tau2 = 0.0;
  bool regularized = false;
};

// One unrolled iteration: error-variance estimate from the residual, a
// trace-normalized LMMSE linear stage r = x + gamma W (y - Hx), effective
// noise tau2 from C = I - theta W H, then the posterior-mean denoiser.
OampState oamp_layer(const OampState& state, const MimoInstance& instance, double gamma_k,
                     double theta_k);

// Elementwise posterior mean under a uniform constellation prior and complex
// Gaussian noise of total variance tau2. Throws DomainError for tau2 <= 0.
VectorXcd mmse_denoiser(const VectorXcd& r, double tau2, Constellation c);

struct OampDetection {
  VectorXcd x_soft;
  VectorXcd x_hard;
  bool regularized = false;
};

// Runs params.layers unrolled iterations from x = 0.
OampDetection oamp_detect(const MimoInstance& instance, const OampParams& params);

// Classical baselines. ml_detect enumerates all 4^n_tx hypotheses (n_tx <= 8,
// SizeError above) and breaks ties toward the lowest hypothesis index.
VectorXcd lmmse_detect(const MimoInstance& instance);
VectorXcd ml_detect(const MimoInstance& instance);

// Rayleigh-faded instance: h entries CN(0,1), unit-energy QPSK symbols, and
// sigma2 = 10^(-snr_db/10), the per-transmitted-symbol SNR convention: dividing
// instead by the channel's average per-antenna gain would only shift snr_db.
MimoInstance sample_mimo(int n_tx, int m_rx, double snr_db, SeedKey key);

struct OampTrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 5e-3;
  OptimizerKind optimizer = OptimizerKind::AdaptiveMoment;
  SeedKey seed;
  // Tail fraction of the dataset held out for best-epoch selection.
  double holdout_fraction = 0.2;
  // When false, W is treated as constant w.r.t. v2 in the backward pass.
  bool full_gradient = true;
};

struct OampTrainReport {
  OampParams params;  // parameters from the best held-out epoch
  // Entry 0 is the initial parameters; entry e+1 follows epoch e.
  std::vector<double> holdout_mse;
  std::vector<double> train_mse;  // mean batch loss per epoch
  int best_epoch = 0;             // index into holdout_mse
  double wall_time = 0.0;
};

// Mean squared distance between the soft output and x_true, plus its exact
// gradient w.r.t. (gamma_0..gamma_{T-1}, theta_0..theta_{T-1}) by forward-mode
// differentiation through all layers.
std::pair<double, VectorXd> oamp_loss_grad(const MimoInstance& instance, const OampParams& params,
                                           bool full_gradient = true);

// Mini-batch training of (gamma, theta) on MSE, deterministic from
// config.seed; best-epoch selection never returns parameters worse on the
// holdout than the initialization. Throws DivergenceError with the epoch.
OampTrainReport train_oamp(const std::vector<MimoInstance>& data, int layers,
                           const OampTrainConfig& config);

using Detector = std::function<VectorXcd(const MimoInstance&)>;

Detector make_oamp_detector(OampParams params);

struct SerResult {
  double ser = 0.0;
  double ci_half_width = 0.0;  // 95% binomial normal-approximation
  long trials = 0;             // symbols counted
  long errors = 0;
};

// Monte-Carlo symbol error rate over fresh instances keyed by trial index.
// Detector outputs are hardened before comparison. n_trials >= 1000.
SerResult ser_eval(const Detector& detector, int n_tx, int m_rx, double snr_db, int n_trials,
                   SeedKey key);

struct PairedSer {
  SerResult a;
  SerResult b;
  double mean_diff = 0.0;      // per-symbol error indicator, a minus b
  double ci_half_width = 0.0;  // 95% CI of mean_diff over matched trials
};

// Both detectors on identical channels, symbols, and noise.
PairedSer ser_paired(const Detector& a, const Detector& b, int n_tx, int m_rx, double snr_db,
                     int n_trials, SeedKey key);

struct SerRow {
  double snr_db = 0.0;
  std::string detector;
  double ser = 0.0;
  double ci_half_width = 0.0;
  long trials = 0;
};

// CSV with header `snr_db,detector,ser,ci_half_width,trials`.
void write_ser_csv(const std::vector<SerRow>& rows, const std::string& path);

}  // namespace rrm
