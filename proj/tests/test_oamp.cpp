#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rrm/oamp.hpp"

using namespace rrm;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

MimoInstance identity_instance() {
  MimoInstance inst;
  inst.h = MatrixXcd::Identity(2, 2);
  inst.x_true.resize(2);
  inst.x_true << qpsk_points()[0], qpsk_points()[3];
  inst.y = inst.h * inst.x_true;
  inst.sigma2 = 1e-9;
  return inst;
}

// Posterior mean over the four constellation points under CN(0, tau2) noise,
// the definition the separable closed form must reproduce.
std::complex<double> posterior_mean_4point(std::complex<double> r, double tau2) {
  std::complex<double> num{0.0, 0.0};
  double den = 0.0;
  for (const auto& s : qpsk_points()) {
    const double w = std::exp(-std::norm(r - s) / tau2);
    num += w * s;
    den += w;
  }
  return num / den;
}

double worst_hybrid(const VectorXd& analytic, const VectorXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom =
        1e-6 + 1e-3 * std::max(std::abs(analytic(i)), std::abs(numeric(i)));
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("the constellation is unit-energy with sign-based hardening") {
  const auto& points = qpsk_points();
  REQUIRE(points.size() == 4);
  for (const auto& s : points) {
    CHECK(std::abs(s) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(s.real()) == doctest::Approx(kInvSqrt2).epsilon(1e-15));
  }

  VectorXcd soft(3);
  soft << std::complex<double>(0.3, -2.0), std::complex<double>(-0.01, 0.01),
      std::complex<double>(1.0, 1.0);
  const VectorXcd hard = qpsk_hard(soft);
  CHECK(hard(0) == std::complex<double>(kInvSqrt2, -kInvSqrt2));
  CHECK(hard(1) == std::complex<double>(-kInvSqrt2, kInvSqrt2));
  CHECK(hard(2) == std::complex<double>(kInvSqrt2, kInvSqrt2));

  // Constellation points are fixed points of hardening.
  VectorXcd exact(4);
  for (int i = 0; i < 4; ++i) exact(i) = points[i];
  const VectorXcd same = qpsk_hard(exact);
  for (int i = 0; i < 4; ++i) CHECK(same(i) == points[i]);
}

TEST_CASE("sampled problems reproduce pinned values") {
  const MimoInstance inst = sample_mimo(3, 4, 12.0, SeedKey{7, 3});
  CHECK_NOTHROW(inst.validate());
  CHECK(inst.h.rows() == 4);
  CHECK(inst.h.cols() == 3);
  CHECK(inst.y.size() == 4);
  CHECK(inst.x_true.size() == 3);

  CHECK(inst.sigma2 == doctest::Approx(0.063095734448).epsilon(1e-10));
  CHECK(inst.h(0, 0).real() == doctest::Approx(1.79753103025).epsilon(1e-10));
  CHECK(inst.h(0, 0).imag() == doctest::Approx(-0.167560388272).epsilon(1e-9));
  CHECK(inst.y(2).real() == doctest::Approx(-0.127041981391).epsilon(1e-9));
  CHECK(inst.y(2).imag() == doctest::Approx(-0.70597898701).epsilon(1e-9));
  CHECK(inst.x_true(0).real() == doctest::Approx(-kInvSqrt2).epsilon(1e-12));
  CHECK(inst.x_true(0).imag() == doctest::Approx(-kInvSqrt2).epsilon(1e-12));

  const MimoInstance again = sample_mimo(3, 4, 12.0, SeedKey{7, 3});
  CHECK((again.h.array() == inst.h.array()).all());
  CHECK((again.y.array() == inst.y.array()).all());

  CHECK_THROWS_AS(sample_mimo(0, 4, 12.0, SeedKey{7, 3}), DomainError);
  CHECK_THROWS_AS(sample_mimo(4, 0, 12.0, SeedKey{7, 3}), DomainError);
}

TEST_CASE("instance validation rejects inconsistent problems") {
  MimoInstance inst = identity_instance();
  CHECK_NOTHROW(inst.validate());

  MimoInstance bad = inst;
  bad.y.resize(3);
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  bad = identity_instance();
  bad.sigma2 = -1.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);

  bad = identity_instance();
  bad.x_true(0) = std::complex<double>(2.0, 0.0);
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("parameter validation and the classical default schedule") {
  const OampParams params = default_oamp_params(4);
  CHECK(params.layers == 4);
  CHECK((params.gamma.array() == 1.0).all());
  CHECK((params.theta.array() == 1.0).all());
  CHECK_NOTHROW(params.validate());

  OampParams bad = params;
  bad.gamma.resize(3);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  CHECK_THROWS_AS(default_oamp_params(0), DomainError);
}

TEST_CASE("a noiseless identity channel is decoded exactly by every detector") {
  const MimoInstance inst = identity_instance();
  const OampDetection det = oamp_detect(inst, default_oamp_params(4));
  CHECK((det.x_hard.array() == inst.x_true.array()).all());
  CHECK((det.x_soft - inst.x_true).cwiseAbs().maxCoeff() < 1e-3);

  CHECK((qpsk_hard(lmmse_detect(inst)).array() == inst.x_true.array()).all());
  CHECK((ml_detect(inst).array() == inst.x_true.array()).all());
}

TEST_CASE("the posterior-mean denoiser matches four-point enumeration") {
  SeededStream rng(SeedKey{130, 0});
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double tau2 = std::pow(10.0, rng.uniform(-2.0, 1.0));
    VectorXcd r(1);
    r(0) = std::complex<double>(2.0 * rng.gaussian(), 2.0 * rng.gaussian());
    const VectorXcd out = mmse_denoiser(r, tau2, Constellation::Qpsk);
    const std::complex<double> expect = posterior_mean_4point(r(0), tau2);
    worst = std::max(worst, std::abs(out(0) - expect));
    CHECK(std::abs(out(0)) <= 1.0 + 1e-12);  // never outside the constellation hull
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("layer states keep their variance estimates clamped and finite") {
  for (int t = 0; t < 30; ++t) {
    const MimoInstance inst = sample_mimo(4, 4, 5.0 + t, SeedKey{131, 0}.derive(t));
    OampState state;
    state.x = VectorXcd::Zero(4);
    for (int layer = 0; layer < 4; ++layer) {
      state = oamp_layer(state, inst, 1.1, 0.9);
      CHECK(state.v2 >= 1e-12);
      CHECK(state.tau2 >= 1e-12);
      CHECK(state.x.allFinite());
      CHECK(state.r.allFinite());
      CHECK(state.x.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("lmmse agrees with the explicit regularized inverse") {
  for (int t = 0; t < 20; ++t) {
    const MimoInstance inst = sample_mimo(3, 5, 10.0, SeedKey{132, 0}.derive(t));
    const VectorXcd lib = lmmse_detect(inst);
    // Unit-energy symbols: x_hat = (H^H H + sigma2 I)^-1 H^H y.
    const MatrixXcd a =
        inst.h.adjoint() * inst.h + inst.sigma2 * MatrixXcd::Identity(3, 3);
    const VectorXcd direct = a.fullPivLu().solve(inst.h.adjoint() * inst.y);
    CHECK((lib - direct).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("ml agrees with in-test enumeration and refuses huge searches") {
  for (int t = 0; t < 10; ++t) {
    const MimoInstance inst = sample_mimo(2, 3, 8.0, SeedKey{133, 0}.derive(t));
    const VectorXcd lib = ml_detect(inst);

    double best = 1e300;
    VectorXcd best_x(2);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        VectorXcd x(2);
        x << qpsk_points()[a], qpsk_points()[b];
        const double metric = (inst.y - inst.h * x).squaredNorm();
        if (metric < best) {
          best = metric;
          best_x = x;
        }
      }
    CHECK((lib.array() == best_x.array()).all());
  }

  MimoInstance big = sample_mimo(9, 9, 10.0, SeedKey{133, 1});
  CHECK_THROWS_AS(ml_detect(big), SizeError);
}

TEST_CASE("detection is equivariant to transmit-antenna relabeling") {
  const std::vector<int> perm{2, 0, 3, 1};
  const OampParams params = default_oamp_params(4);
  for (int t = 0; t < 20; ++t) {
    const MimoInstance inst = sample_mimo(4, 4, 12.0, SeedKey{134, 0}.derive(t));
    MimoInstance shuffled = inst;
    for (int j = 0; j < 4; ++j) {
      shuffled.h.col(j) = inst.h.col(perm[j]);
      shuffled.x_true(j) = inst.x_true(perm[j]);
    }
    const VectorXcd base = oamp_detect(inst, params).x_soft;
    const VectorXcd moved = oamp_detect(shuffled, params).x_soft;
    for (int j = 0; j < 4; ++j) CHECK(std::abs(moved(j) - base(perm[j])) < 1e-9);
  }
}

TEST_CASE("the unrolled gradient matches finite differences") {
  for (int t = 0; t < 25; ++t) {
    const MimoInstance inst = sample_mimo(4, 4, 8.0 + t % 10, SeedKey{135, 0}.derive(t));
    OampParams params = default_oamp_params(3);
    SeededStream jitter(SeedKey{135, 1}.derive(t));
    for (int l = 0; l < 3; ++l) {
      params.gamma(l) = jitter.uniform(0.7, 1.3);
      params.theta(l) = jitter.uniform(0.7, 1.3);
    }
    const auto [loss, grad] = oamp_loss_grad(inst, params);
    CHECK(std::isfinite(loss));
    REQUIRE(grad.size() == 6);

    VectorXd numeric(6);
    const double h = 1e-6;
    for (int i = 0; i < 6; ++i) {
      OampParams lo = params, hi = params;
      VectorXd& lo_block = i < 3 ? lo.gamma : lo.theta;
      VectorXd& hi_block = i < 3 ? hi.gamma : hi.theta;
      lo_block(i % 3) -= h;
      hi_block(i % 3) += h;
      numeric(i) = (oamp_loss_grad(inst, hi).first - oamp_loss_grad(inst, lo).first) / (2.0 * h);
    }
    CHECK(worst_hybrid(grad, numeric) < 0.05);
  }
}

TEST_CASE("the partial-gradient mode changes the gradient, not the loss") {
  // The modes only differ where the error-variance estimate is active; at
  // high SNR it clamps at its floor with a zero tangent and the two
  // gradients legitimately coincide, so the contrast needs a noisy draw.
  const MimoInstance inst = sample_mimo(4, 4, 0.0, SeedKey{136, 2});
  OampParams params = default_oamp_params(3);
  params.gamma(1) = 1.2;
  params.theta(0) = 0.8;
  const auto [full_loss, full_grad] = oamp_loss_grad(inst, params, true);
  const auto [part_loss, part_grad] = oamp_loss_grad(inst, params, false);
  CHECK(full_loss == part_loss);
  CHECK((full_grad - part_grad).cwiseAbs().maxCoeff() > 1e-3);

  const MimoInstance calm = sample_mimo(4, 4, 10.0, SeedKey{136, 0});
  const auto [calm_full, calm_full_grad] = oamp_loss_grad(calm, params, true);
  const auto [calm_part, calm_part_grad] = oamp_loss_grad(calm, params, false);
  CHECK(calm_full == calm_part);
  CHECK((calm_full_grad - calm_part_grad).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training never returns parameters worse on the holdout than the start") {
  std::vector<MimoInstance> data;
  for (int t = 0; t < 200; ++t)
    data.push_back(sample_mimo(4, 4, 10.0, SeedKey{137, 0}.derive(streams::kTrial, t)));

  OampTrainConfig config;
  config.epochs = 8;
  config.batch_size = 32;
  config.learning_rate = 5e-3;
  config.seed = SeedKey{137, 1};
  const OampTrainReport report = train_oamp(data, 4, config);

  REQUIRE(report.holdout_mse.size() == 9);  // initial entry plus one per epoch
  REQUIRE(report.train_mse.size() == 8);
  CHECK(report.best_epoch >= 0);
  CHECK(report.best_epoch < 9);
  CHECK(report.holdout_mse[report.best_epoch] <= report.holdout_mse[0]);
  CHECK(report.holdout_mse[report.best_epoch] ==
        *std::min_element(report.holdout_mse.begin(), report.holdout_mse.end()));
  CHECK(report.params.layers == 4);
  CHECK(report.params.gamma.allFinite());
  CHECK(report.params.theta.allFinite());

  // Deterministic end to end.
  const OampTrainReport again = train_oamp(data, 4, config);
  CHECK((again.params.gamma.array() == report.params.gamma.array()).all());
  CHECK((again.params.theta.array() == report.params.theta.array()).all());
  CHECK(again.holdout_mse == report.holdout_mse);

  CHECK_THROWS_AS(train_oamp({}, 4, config), DomainError);
}

TEST_CASE("error rates at 15 dB order as ml <= trace-normalized <= lmmse") {
  const int n_trials = 3000;
  const SeedKey key = SeedKey{7, 3}.derive(11);
  const Detector oamp = make_oamp_detector(default_oamp_params(4));
  const Detector lmmse = [](const MimoInstance& inst) { return lmmse_detect(inst); };
  const Detector ml = [](const MimoInstance& inst) { return ml_detect(inst); };

  const SerResult r_oamp = ser_eval(oamp, 4, 4, 15.0, n_trials, key);
  const SerResult r_lmmse = ser_eval(lmmse, 4, 4, 15.0, n_trials, key);
  const SerResult r_ml = ser_eval(ml, 4, 4, 15.0, n_trials, key);

  CHECK(r_oamp.trials == 12000);  // symbols, not channel uses
  CHECK(r_oamp.ser == doctest::Approx(0.006500).epsilon(1e-9));
  CHECK(r_oamp.ci_half_width == doctest::Approx(0.001438).epsilon(1e-3));
  CHECK(r_lmmse.ser == doctest::Approx(0.010417).epsilon(1e-4));
  CHECK(r_ml.ser == doctest::Approx(0.0).epsilon(1e-12));

  CHECK(r_ml.ser <= r_oamp.ser);
  CHECK(r_oamp.ser <= r_lmmse.ser);
  CHECK(r_oamp.errors == static_cast<long>(std::lround(r_oamp.ser * r_oamp.trials)));

  CHECK_THROWS_AS(ser_eval(oamp, 4, 4, 15.0, 999, key), DomainError);
}

TEST_CASE("paired evaluation puts both detectors on identical draws") {
  const SeedKey key{138, 0};
  const Detector oamp = make_oamp_detector(default_oamp_params(4));
  const Detector lmmse = [](const MimoInstance& inst) { return lmmse_detect(inst); };

  const PairedSer same = ser_paired(oamp, oamp, 4, 4, 12.0, 1500, key);
  CHECK(same.mean_diff == 0.0);
  CHECK(same.ci_half_width == 0.0);
  CHECK(same.a.ser == same.b.ser);

  const PairedSer versus = ser_paired(oamp, lmmse, 4, 4, 12.0, 1500, key);
  CHECK(versus.mean_diff == doctest::Approx(versus.a.ser - versus.b.ser).epsilon(1e-12));
  CHECK(versus.mean_diff <= 0.0);  // trace-normalized beats plain lmmse here
  CHECK(versus.a.trials == versus.b.trials);
}

TEST_CASE("ser csv bytes are exactly reproducible") {
  std::vector<SerRow> rows{{15.0, "oamp_fixed", 0.25, 0.5, 1000},
                           {20.0, "oamp_learned", 0.125, 0.0625, 2000}};
  const std::string path = "oamp_test_ser.csv";
  write_ser_csv(rows, path);
  CHECK(slurp(path) ==
        "snr_db,detector,ser,ci_half_width,trials\n"
        "15,oamp_fixed,0.25,0.5,1000\n"
        "20,oamp_learned,0.125,0.0625,2000\n");
  std::remove(path.c_str());
}

TEST_CASE("constellation names round-trip") {
  CHECK(constellation_from_string(to_string(Constellation::Qpsk)) == Constellation::Qpsk);
  CHECK_THROWS_AS(constellation_from_string("qam64"), ConfigError);
}
