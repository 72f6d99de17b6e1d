#pragma once

#include <string>
#include <vector>

#include "rrm/models.hpp"
#include "rrm/netgen.hpp"
#include "rrm/oracles.hpp"

namespace rrm {

enum class Scheme { Supervised, Unsupervised };
enum class OptimizerKind { Sgd, AdaptiveMoment };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);
std::string to_string(OptimizerKind opt);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
  Scheme scheme = Scheme::Supervised;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::AdaptiveMoment;
  SeedKey seed;
  // When positive, stop once the epoch-to-epoch loss change drops below it.
  double early_stop_tol = 0.0;
};

struct TrainReport {
  std::vector<double> loss_trajectory;  // one entry per epoch actually run
  // NaN when the trajectory is too short or not positive.
  double fitted_decay_rate = 0.0;
  // Mean train-set sum-rate ratio vs the label oracle; NaN without labels.
  double final_train_metric = 0.0;
  double wall_time = 0.0;
};

// Sum of squared differences (the loss the label examples pin down).
double loss_supervised(const VectorXd& p_hat, const VectorXd& label);

// Negative sum rate; minimizing it maximizes the objective directly.
double loss_unsupervised(const VectorXd& p_hat, const NetworkInstance& instance);
VectorXd loss_unsupervised_grad(const VectorXd& p_hat, const NetworkInstance& instance);

// Mini-batch gradient descent with shuffling derived from config.seed.
// Deterministic given (model, data, config). Trains in place and fills the
// report. Throws DivergenceError when an epoch loss exceeds 1e6 or turns
// non-finite.
TrainReport train(Model& model, const Dataset& data, const TrainConfig& config);

// Least-squares slope of ln(loss) vs epoch over the first 80% of entries,
// losses floored at 1e-12. Requires length >= 10 and positive entries.
double fit_decay_rate(const std::vector<double>& loss_trajectory);

// Fisher-Yates permutation of [0, n) drawn from the given key.
std::vector<int> shuffled_indices(int n, SeedKey key);

struct AdamState {
  VectorXd m;
  VectorXd v;
  long t = 0;
};

void adam_step(VectorXd& params, const VectorXd& grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
void sgd_step(VectorXd& params, const VectorXd& grad, double lr);

// Loss closure over the given batch for gradient checking; evaluates the
// model at arbitrary parameter vectors.
LossFn make_batch_loss(const Model& model, const Dataset& data, Scheme scheme,
                       std::vector<int> batch);

}  // namespace rrm
