#include "rrm/oamp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <utility>

namespace rrm {

namespace {

constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;
constexpr double kFloor = 1e-12;

}  // namespace

void MimoInstance::validate() const {
  if (h.rows() < 1 || h.cols() < 1) throw ShapeError("MimoInstance: empty channel matrix");
  if (y.size() != h.rows()) throw ShapeError("MimoInstance: y length does not match rows of h");
  if (x_true.size() != h.cols())
    throw ShapeError("MimoInstance: x_true length does not match columns of h");
  if (!std::isfinite(sigma2) || sigma2 < 0.0)
    throw DomainError("MimoInstance: sigma2 must be finite and >= 0");
  if (!h.allFinite() || !y.allFinite() || !x_true.allFinite())
    throw DomainError("MimoInstance: non-finite entries");
  for (Eigen::Index i = 0; i < x_true.size(); ++i) {
    double best = 1e300;
    for (const auto& c : qpsk_points()) best = std::min(best, std::abs(x_true[i] - c));
    if (best > 1e-9) throw DomainError("MimoInstance: x_true entry off the constellation");
  }
}

std::string to_string(Constellation c) {
  switch (c) {
    case Constellation::Qpsk: return "qpsk";
  }
  throw DomainError("unknown constellation");
}

Constellation constellation_from_string(const std::string& name) {
  if (name == "qpsk") return Constellation::Qpsk;
  throw ConfigError("unknown constellation '" + name + "'");
}

const std::array<std::complex<double>, 4>& qpsk_points() {
  static const std::array<std::complex<double>, 4> pts = {
      std::complex<double>(kInvSqrt2, kInvSqrt2), std::complex<double>(kInvSqrt2, -kInvSqrt2),
      std::complex<double>(-kInvSqrt2, kInvSqrt2), std::complex<double>(-kInvSqrt2, -kInvSqrt2)};
  return pts;
}

VectorXcd qpsk_hard(const VectorXcd& x) {
  VectorXcd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out[i] = {x[i].real() >= 0.0 ? kInvSqrt2 : -kInvSqrt2,
              x[i].imag() >= 0.0 ? kInvSqrt2 : -kInvSqrt2};
  return out;
}

void OampParams::validate() const {
  if (layers < 1) throw DomainError("OampParams: layers must be >= 1");
  if (gamma.size() != layers || theta.size() != layers)
    throw ShapeError("OampParams: gamma/theta length must equal layers");
  if (!gamma.allFinite() || !theta.allFinite())
    throw DomainError("OampParams: non-finite entries");
}

OampParams default_oamp_params(int layers) {
  if (layers < 1) throw DomainError("default_oamp_params: layers must be >= 1");
  OampParams p;
  p.layers = layers;
  p.gamma = VectorXd::Ones(layers);
  p.theta = VectorXd::Ones(layers);
  return p;
}

VectorXcd mmse_denoiser(const VectorXcd& r, double tau2, Constellation c) {
  if (!(tau2 > 0.0)) throw DomainError("mmse_denoiser: tau2 must be positive");
  if (c != Constellation::Qpsk) throw DomainError("mmse_denoiser: unsupported constellation");
  VectorXcd out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i)
    out[i] = {std::tanh(std::numbers::sqrt2 * r[i].real() / tau2) * kInvSqrt2,
              std::tanh(std::numbers::sqrt2 * r[i].imag() / tau2) * kInvSqrt2};
  return out;
}

namespace {

// Everything one layer computes, kept so the detector and the tangent
// propagation share a single forward implementation.
struct LayerCore {
  VectorXcd e;   // residual y - Hx
  double v2 = 0.0;
  bool v2_clamped = false;
  bool regularized = false;
  MatrixXcd g;   // H^H (v2 H H^H + sigma2 I)^-1, N x M
  MatrixXcd gh;  // g * H, N x N
  double tr = 0.0;
  double scale = 0.0;  // N / tr; W = scale * g
  MatrixXcd w;
  MatrixXcd wh;
  VectorXcd we;
  VectorXcd r;
  MatrixXcd c;   // I - theta W H
  double s = 0.0;
  double w2 = 0.0;  // Tr(W W^H)
  double tau2 = 0.0;
  bool tau2_clamped = false;
  VectorXcd x_next;
};

LayerCore layer_core(const VectorXcd& x, const MimoInstance& inst, double gamma_k,
                     double theta_k) {
  const Eigen::Index m = inst.h.rows();
  const Eigen::Index n = inst.h.cols();
  if (x.size() != n) throw ShapeError("oamp_layer: state size does not match the channel");
  if (!std::isfinite(gamma_k) || !std::isfinite(theta_k))
    throw DomainError("oamp_layer: non-finite step parameters");
  const double tr_hh = inst.h.squaredNorm();
  if (!(tr_hh > 0.0)) throw NumericError("oamp_layer: zero channel matrix");

  LayerCore c;
  c.e = inst.y - inst.h * x;
  const double v2_raw = (c.e.squaredNorm() - static_cast<double>(m) * inst.sigma2) / tr_hh;
  c.v2_clamped = !(v2_raw >= kFloor);
  c.v2 = c.v2_clamped ? kFloor : v2_raw;

  MatrixXcd a = c.v2 * (inst.h * inst.h.adjoint());
  a.diagonal().array() += inst.sigma2;
  Eigen::LLT<MatrixXcd> llt(a);
  if (llt.info() != Eigen::Success) {
    a.diagonal().array() += kFloor;
    llt.compute(a);
    c.regularized = true;
    if (llt.info() != Eigen::Success) throw NumericError("oamp_layer: linear stage is singular");
  }
  c.g = llt.solve(inst.h).adjoint();  // (A^-1 H)^H = H^H A^-1 for Hermitian A
  c.gh = c.g * inst.h;
  c.tr = c.gh.trace().real();
  if (!(c.tr > 0.0)) throw NumericError("oamp_layer: trace normalization failed");
  c.scale = static_cast<double>(n) / c.tr;
  c.w = c.scale * c.g;
  c.wh = c.scale * c.gh;
  c.we = c.w * c.e;
  c.r = x + gamma_k * c.we;
  c.c = MatrixXcd::Identity(n, n) - theta_k * c.wh;
  c.s = c.c.squaredNorm();
  c.w2 = c.w.squaredNorm();
  const double dn = static_cast<double>(n);
  // Per-entry variance of r - x_true = C (x_hat - x_true) + theta W noise, so
  // the denoiser's tau2 is the total complex error variance; anything smaller
  // leaves tanh overconfident and the detector well short of ML.
  const double tau2_raw =
      (c.s * c.v2 + theta_k * theta_k * inst.sigma2 * c.w2) / dn;
  c.tau2_clamped = !(tau2_raw >= kFloor);
  c.tau2 = c.tau2_clamped ? kFloor : tau2_raw;
  c.x_next = mmse_denoiser(c.r, c.tau2, Constellation::Qpsk);
  return c;
}

}  // namespace

OampState oamp_layer(const OampState& state, const MimoInstance& instance, double gamma_k,
                     double theta_k) {
  const LayerCore core = layer_core(state.x, instance, gamma_k, theta_k);
  OampState next;
  next.x = core.x_next;
  next.r = core.r;
  next.v2 = core.v2;
  next.tau2 = core.tau2;
  next.regularized = state.regularized || core.regularized;
  return next;
}

OampDetection oamp_detect(const MimoInstance& instance, const OampParams& params) {
  instance.validate();
  params.validate();
  OampState state;
  state.x = VectorXcd::Zero(instance.h.cols());
  for (int k = 0; k < params.layers; ++k)
    state = oamp_layer(state, instance, params.gamma[k], params.theta[k]);
  OampDetection det;
  det.x_soft = state.x;
  det.x_hard = qpsk_hard(state.x);
  det.regularized = state.regularized;
  return det;
}

VectorXcd lmmse_detect(const MimoInstance& instance) {
  const Eigen::Index n = instance.h.cols();
  MatrixXcd a = instance.h.adjoint() * instance.h;
  a.diagonal().array() += instance.sigma2;
  Eigen::LLT<MatrixXcd> llt(a);
  if (llt.info() != Eigen::Success) {
    a.diagonal().array() += kFloor;
    llt.compute(a);
    if (llt.info() != Eigen::Success) throw NumericError("lmmse_detect: singular system");
  }
  (void)n;
  return llt.solve(instance.h.adjoint() * instance.y);
}

VectorXcd ml_detect(const MimoInstance& instance) {
  const int n = static_cast<int>(instance.h.cols());
  if (n > 8) throw SizeError("ml_detect: exhaustive search limited to 8 transmit antennas");
  const auto& pts = qpsk_points();
  const long total = 1L << (2 * n);  // 4^n hypotheses
  VectorXcd x(n), best_x(n);
  double best = 1e300;
  for (long m = 0; m < total; ++m) {
    long idx = m;
    for (int j = 0; j < n; ++j) {
      x[j] = pts[idx & 3];
      idx >>= 2;
    }
    const double metric = (instance.y - instance.h * x).squaredNorm();
    if (metric < best) {  // strict: ties keep the lowest hypothesis index
      best = metric;
      best_x = x;
    }
  }
  return best_x;
}

MimoInstance sample_mimo(int n_tx, int m_rx, double snr_db, SeedKey key) {
  if (n_tx < 1 || m_rx < 1) throw DomainError("sample_mimo: antenna counts must be >= 1");
  if (!std::isfinite(snr_db)) throw DomainError("sample_mimo: snr_db must be finite");
  MimoInstance inst;
  inst.sigma2 = std::pow(10.0, -snr_db / 10.0);
  inst.h.resize(m_rx, n_tx);
  SeededStream hs(key.derive(streams::kChannel));
  for (int i = 0; i < m_rx; ++i)
    for (int j = 0; j < n_tx; ++j) inst.h(i, j) = hs.cgaussian();
  inst.x_true.resize(n_tx);
  SeededStream ss(key.derive(streams::kSymbol));
  for (int j = 0; j < n_tx; ++j) inst.x_true[j] = qpsk_points()[ss.below(4)];
  VectorXcd noise(m_rx);
  SeededStream ns(key.derive(streams::kNoise));
  const double sd = std::sqrt(inst.sigma2);
  for (int i = 0; i < m_rx; ++i) noise[i] = sd * ns.cgaussian();
  inst.y = inst.h * inst.x_true + noise;
  return inst;
}

std::pair<double, VectorXd> oamp_loss_grad(const MimoInstance& instance, const OampParams& params,
                                           bool full_gradient) {
  instance.validate();
  params.validate();
  const Eigen::Index n = instance.h.cols();
  const int layers = params.layers;
  const int np = 2 * layers;  // gammas then thetas
  const double tr_hh = instance.h.squaredNorm();
  using Cx = std::complex<double>;

  VectorXcd x = VectorXcd::Zero(n);
  MatrixXcd dx = MatrixXcd::Zero(n, np);
  for (int k = 0; k < layers; ++k) {
    const double gamma = params.gamma[k];
    const double theta = params.theta[k];
    const LayerCore core = layer_core(x, instance, gamma, theta);

    const MatrixXcd de = -(instance.h * dx);  // M x np
    Eigen::RowVectorXd dv2 = Eigen::RowVectorXd::Zero(np);
    if (!core.v2_clamped) dv2 = (2.0 / tr_hh) * (core.e.adjoint() * de).real();

    Eigen::RowVectorXd dgamma_row = Eigen::RowVectorXd::Zero(np);
    dgamma_row(k) = 1.0;
    Eigen::RowVectorXd dtheta_row = Eigen::RowVectorXd::Zero(np);
    dtheta_row(layers + k) = 1.0;

    // W = (N / tr) G with dG/dv2 = -G H G = -M1; everything reuses GH.
    MatrixXcd m1;
    VectorXcd m1e;
    MatrixXcd m1h;
    double tr_m1h = 0.0;
    Eigen::RowVectorXd dtr = Eigen::RowVectorXd::Zero(np);
    if (full_gradient) {
      m1 = core.gh * core.g;
      m1e = m1 * core.e;
      m1h = core.gh * core.gh;
      tr_m1h = core.gh.cwiseProduct(core.gh.transpose()).sum().real();
      dtr = -tr_m1h * dv2;
    }

    MatrixXcd dr = dx + gamma * (core.w * de);
    {
      const Eigen::RowVectorXd coef = dgamma_row - (gamma / core.tr) * dtr;
      dr.noalias() += core.we * coef.cast<Cx>();
      if (full_gradient)
        dr.noalias() += m1e * ((-gamma * core.scale) * dv2).cast<Cx>();
    }

    const Cx c_wh = (core.c.conjugate().cwiseProduct(core.wh)).sum();
    Eigen::RowVectorXd ds = (-2.0 * c_wh.real()) * dtheta_row;
    Eigen::RowVectorXd dw2 = Eigen::RowVectorXd::Zero(np);
    if (full_gradient) {
      const Cx c_m1h = (core.c.conjugate().cwiseProduct(m1h)).sum();
      ds += (2.0 * theta * core.scale * c_m1h.real()) * dv2;
      ds += (2.0 * theta * c_wh.real() / core.tr) * dtr;
      const double w_m1 = (core.w.conjugate().cwiseProduct(m1)).sum().real();
      dw2 = (-2.0 * core.scale * w_m1) * dv2 - (2.0 * core.w2 / core.tr) * dtr;
    }

    const double dn = static_cast<double>(n);
    Eigen::RowVectorXd dtau2 = Eigen::RowVectorXd::Zero(np);
    if (!core.tau2_clamped)
      dtau2 = (core.v2 / dn) * ds + (core.s / dn) * dv2 +
              (instance.sigma2 / dn) *
                  (2.0 * theta * core.w2 * dtheta_row + theta * theta * dw2);

    MatrixXcd dx_next(n, np);
    const double t2 = core.tau2;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double rr = core.r[i].real();
      const double ri = core.r[i].imag();
      const double ta = std::tanh(std::numbers::sqrt2 * rr / t2);
      const double tb = std::tanh(std::numbers::sqrt2 * ri / t2);
      const double sa = 1.0 - ta * ta;
      const double sb = 1.0 - tb * tb;
      for (int p = 0; p < np; ++p) {
        const double dre = sa * (dr(i, p).real() / t2 - rr * dtau2(p) / (t2 * t2));
        const double dim = sb * (dr(i, p).imag() / t2 - ri * dtau2(p) / (t2 * t2));
        dx_next(i, p) = {dre, dim};
      }
    }
    x = core.x_next;
    dx = std::move(dx_next);
  }

  const VectorXcd diff = x - instance.x_true;
  const double loss = diff.squaredNorm();
  const VectorXd grad = 2.0 * (diff.adjoint() * dx).real().transpose();
  return {loss, grad};
}

namespace {

OampParams params_from(const VectorXd& values, int layers) {
  OampParams p;
  p.layers = layers;
  p.gamma = values.head(layers);
  p.theta = values.tail(layers);
  return p;
}

double mean_soft_mse(const std::vector<MimoInstance>& data, int begin, int end,
                     const OampParams& params) {
  double acc = 0.0;
  for (int t = begin; t < end; ++t) {
    const OampDetection det = oamp_detect(data[t], params);
    acc += (det.x_soft - data[t].x_true).squaredNorm();
  }
  return acc / std::max(1, end - begin);
}

}  // namespace

OampTrainReport train_oamp(const std::vector<MimoInstance>& data, int layers,
                           const OampTrainConfig& config) {
  if (layers < 1) throw ConfigError("train_oamp: layers must be >= 1");
  if (config.epochs < 1) throw ConfigError("train_oamp: epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("train_oamp: batch_size must be >= 1");
  if (!(config.learning_rate > 0.0))
    throw ConfigError("train_oamp: learning_rate must be positive");
  if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0))
    throw ConfigError("train_oamp: holdout_fraction must be in [0, 1)");
  if (data.empty()) throw DomainError("train_oamp: dataset is empty");
  for (const auto& inst : data) inst.validate();

  const auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(data.size());
  // The tail of the dataset is the holdout; with none, select on the train set.
  const int n_hold =
      std::min(n - 1, static_cast<int>(std::llround(config.holdout_fraction * n)));
  const int n_train = n - n_hold;
  const int hold_begin = n_hold > 0 ? n_train : 0;
  const int hold_end = n_hold > 0 ? n : n_train;

  VectorXd values = VectorXd::Ones(2 * layers);
  AdamState adam;
  OampTrainReport report;
  report.params = params_from(values, layers);
  report.holdout_mse.push_back(mean_soft_mse(data, hold_begin, hold_end, report.params));
  report.best_epoch = 0;
  double best = report.holdout_mse[0];

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(
        n_train, config.seed.derive(streams::kShuffle, static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    for (int start = 0; start < n_train; start += config.batch_size) {
      const int size = std::min(config.batch_size, n_train - start);
      const OampParams current = params_from(values, layers);
      double loss = 0.0;
      VectorXd grad = VectorXd::Zero(values.size());
      for (int c = 0; c < size; ++c) {
        auto [l, g] = oamp_loss_grad(data[order[start + c]], current, config.full_gradient);
        loss += l;
        grad += g;
      }
      loss /= size;
      grad /= size;
      if (!std::isfinite(loss) || loss > 1e6)
        throw DivergenceError("train_oamp: loss " + std::to_string(loss) + " at epoch " +
                              std::to_string(epoch));
      if (config.optimizer == OptimizerKind::AdaptiveMoment)
        adam_step(values, grad, adam, config.learning_rate);
      else
        sgd_step(values, grad, config.learning_rate);
      epoch_loss += loss * size;
    }
    report.train_mse.push_back(epoch_loss / n_train);
    const OampParams current = params_from(values, layers);
    const double hold = mean_soft_mse(data, hold_begin, hold_end, current);
    report.holdout_mse.push_back(hold);
    if (hold < best) {
      best = hold;
      report.best_epoch = epoch + 1;
      report.params = current;
    }
  }
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Detector make_oamp_detector(OampParams params) {
  params.validate();
  return [params = std::move(params)](const MimoInstance& inst) {
    return oamp_detect(inst, params).x_soft;
  };
}

SerResult ser_eval(const Detector& detector, int n_tx, int m_rx, double snr_db, int n_trials,
                   SeedKey key) {
  if (n_trials < 1000) throw DomainError("ser_eval: n_trials must be >= 1000");
  long errors = 0;
  for (int t = 0; t < n_trials; ++t) {
    const MimoInstance inst =
        sample_mimo(n_tx, m_rx, snr_db, key.derive(streams::kTrial, static_cast<std::uint64_t>(t)));
    const VectorXcd hard = qpsk_hard(detector(inst));
    for (int j = 0; j < n_tx; ++j)
      if (hard[j] != inst.x_true[j]) ++errors;
  }
  SerResult res;
  res.trials = static_cast<long>(n_trials) * n_tx;
  res.errors = errors;
  res.ser = static_cast<double>(errors) / static_cast<double>(res.trials);
  res.ci_half_width = 1.96 * std::sqrt(res.ser * (1.0 - res.ser) / static_cast<double>(res.trials));
  return res;
}

PairedSer ser_paired(const Detector& a, const Detector& b, int n_tx, int m_rx, double snr_db,
                     int n_trials, SeedKey key) {
  if (n_trials < 1000) throw DomainError("ser_paired: n_trials must be >= 1000");
  long err_a = 0;
  long err_b = 0;
  double sum_d = 0.0;
  double sum_d2 = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    const MimoInstance inst =
        sample_mimo(n_tx, m_rx, snr_db, key.derive(streams::kTrial, static_cast<std::uint64_t>(t)));
    const VectorXcd ha = qpsk_hard(a(inst));
    const VectorXcd hb = qpsk_hard(b(inst));
    for (int j = 0; j < n_tx; ++j) {
      const int ea = ha[j] != inst.x_true[j] ? 1 : 0;
      const int eb = hb[j] != inst.x_true[j] ? 1 : 0;
      err_a += ea;
      err_b += eb;
      const double d = ea - eb;
      sum_d += d;
      sum_d2 += d * d;
    }
  }
  const long total = static_cast<long>(n_trials) * n_tx;
  PairedSer out;
  out.a.trials = out.b.trials = total;
  out.a.errors = err_a;
  out.b.errors = err_b;
  out.a.ser = static_cast<double>(err_a) / static_cast<double>(total);
  out.b.ser = static_cast<double>(err_b) / static_cast<double>(total);
  out.a.ci_half_width =
      1.96 * std::sqrt(out.a.ser * (1.0 - out.a.ser) / static_cast<double>(total));
  out.b.ci_half_width =
      1.96 * std::sqrt(out.b.ser * (1.0 - out.b.ser) / static_cast<double>(total));
  out.mean_diff = sum_d / static_cast<double>(total);
  if (total > 1) {
    const double var =
        (sum_d2 - static_cast<double>(total) * out.mean_diff * out.mean_diff) /
        static_cast<double>(total - 1);
    out.ci_half_width = 1.96 * std::sqrt(std::max(0.0, var) / static_cast<double>(total));
  }
  return out;
}

void write_ser_csv(const std::vector<SerRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw Error("write_ser_csv: cannot open '" + path + "' for writing");
  out << "snr_db,detector,ser,ci_half_width,trials\n";
  char buf[256];
  for (const SerRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.12g,%s,%.12g,%.12g,%ld\n", row.snr_db,
                  row.detector.c_str(), row.ser, row.ci_half_width, row.trials);
    out << buf;
  }
  if (!out) throw Error("write_ser_csv: write to '" + path + "' failed");
}

}  // namespace rrm
