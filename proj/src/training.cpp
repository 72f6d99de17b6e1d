#include "rrm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <variant>

#include "rrm/error.hpp"
#include "rrm/layers.hpp"

namespace rrm {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::Supervised: return "supervised";
    case Scheme::Unsupervised: return "unsupervised";
  }
  throw DomainError("unknown training scheme");
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "supervised") return Scheme::Supervised;
  if (name == "unsupervised") return Scheme::Unsupervised;
  throw ConfigError("unknown training scheme '" + name + "'");
}

std::string to_string(OptimizerKind opt) {
  switch (opt) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::AdaptiveMoment: return "adam";
  }
  throw DomainError("unknown optimizer");
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::AdaptiveMoment;
  throw ConfigError("unknown optimizer '" + name + "'");
}

double loss_supervised(const VectorXd& p_hat, const VectorXd& label) {
  if (p_hat.size() != label.size()) throw ShapeError("loss_supervised: size mismatch");
  return (p_hat - label).squaredNorm();
}

double loss_unsupervised(const VectorXd& p_hat, const NetworkInstance& instance) {
  return -sum_rate(instance, p_hat);
}

VectorXd loss_unsupervised_grad(const VectorXd& p_hat, const NetworkInstance& instance) {
  return -sum_rate_grad(instance, p_hat);
}

void sgd_step(VectorXd& params, const VectorXd& grad, double lr) {
  if (params.size() != grad.size()) throw ShapeError("sgd_step: gradient size mismatch");
  params -= lr * grad;
}

void adam_step(VectorXd& params, const VectorXd& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grad.size()) throw ShapeError("adam_step: gradient size mismatch");
  if (state.m.size() == 0) {
    state.m = VectorXd::Zero(params.size());
    state.v = VectorXd::Zero(params.size());
  } else if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state size mismatch");
  }
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

double fit_decay_rate(const std::vector<double>& loss_trajectory) {
  if (loss_trajectory.size() < 10)
    throw DomainError("fit_decay_rate: need at least 10 epochs, got " +
                      std::to_string(loss_trajectory.size()));
  for (double v : loss_trajectory)
    if (!(v > 0.0)) throw DomainError("fit_decay_rate: losses must be positive");
  const std::size_t n_fit = std::max<std::size_t>(2, loss_trajectory.size() * 8 / 10);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n_fit; ++i) {
    const double x = static_cast<double>(i);
    const double y = std::log(std::max(loss_trajectory[i], 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(n_fit);
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<int> shuffled_indices(int n, SeedKey key) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  SeededStream stream(key);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(stream.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

namespace {

void validate_train_inputs(const TrainConfig& config, const Dataset& data) {
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (config.early_stop_tol < 0.0) throw ConfigError("train: early_stop_tol must be >= 0");
  if (data.instances.empty()) throw DomainError("train: dataset is empty");
  const int k = data.instances.front().k;
  for (const auto& inst : data.instances)
    if (inst.k != k) throw ShapeError("train: dataset mixes user counts");
  if (config.scheme == Scheme::Supervised) {
    if (data.labels.size() != data.instances.size())
      throw DomainError("train: supervised scheme needs one label per instance");
    for (const auto& label : data.labels)
      if (label.size() != k) throw ShapeError("train: label size does not match user count");
  }
}

// Mean loss over the batch and its gradient in parameter space. d_out for the
// MLP path is expressed w.r.t. the raw sigmoid output, so p_max is folded in.
std::pair<double, VectorXd> eval_mlp_batch(const MlpModel& model, const Dataset& data,
                                           Scheme scheme, const MatrixXd& feats,
                                           const std::vector<int>& batch) {
  const int b = static_cast<int>(batch.size());
  const int k = model.k;
  MatrixXd x(feats.rows(), b);
  for (int c = 0; c < b; ++c) x.col(c) = feats.col(batch[c]);
  MlpTape tape;
  const MatrixXd& out = mlp_forward_batch(model, x, tape);
  MatrixXd d_out(k, b);
  double loss = 0.0;
  for (int c = 0; c < b; ++c) {
    const NetworkInstance& inst = data.instances[batch[c]];
    const VectorXd p = inst.p_max * out.col(c);
    if (scheme == Scheme::Supervised) {
      const VectorXd diff = p - data.labels[batch[c]];
      loss += diff.squaredNorm();
      d_out.col(c) = (2.0 * inst.p_max) * diff;
    } else {
      loss += loss_unsupervised(p, inst);
      d_out.col(c) = inst.p_max * loss_unsupervised_grad(p, inst);
    }
  }
  loss /= b;
  d_out /= static_cast<double>(b);
  return {loss, mlp_backward_batch(model, tape, d_out)};
}

std::pair<double, VectorXd> eval_gnn_batch(const GnnModel& model, const Dataset& data,
                                           Scheme scheme, const std::vector<Graph>& graphs,
                                           const std::vector<int>& batch) {
  const GnnBatch gb = make_gnn_batch(graphs, batch);
  GnnTape tape;
  const MatrixXd p = gnn_forward_batch(model, gb, tape);
  const int b = static_cast<int>(batch.size());
  MatrixXd d_out(gb.k, b);
  double loss = 0.0;
  for (int c = 0; c < b; ++c) {
    const NetworkInstance& inst = data.instances[batch[c]];
    if (scheme == Scheme::Supervised) {
      const VectorXd diff = p.col(c) - data.labels[batch[c]];
      loss += diff.squaredNorm();
      d_out.col(c) = 2.0 * diff;
    } else {
      loss += loss_unsupervised(p.col(c), inst);
      d_out.col(c) = loss_unsupervised_grad(p.col(c), inst);
    }
  }
  loss /= b;
  d_out /= static_cast<double>(b);
  return {loss, gnn_backward_batch(model, gb, tape, d_out)};
}

using BatchEval = std::function<std::pair<double, VectorXd>(const std::vector<int>&)>;

void run_epochs(VectorXd& values, int n, const TrainConfig& config, const BatchEval& eval,
                TrainReport& report) {
  AdamState adam;
  std::vector<int> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<int> order =
        shuffled_indices(n, config.seed.derive(streams::kShuffle, static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int size = std::min(config.batch_size, n - start);
      batch.assign(order.begin() + start, order.begin() + start + size);
      auto [loss, grad] = eval(batch);
      if (!std::isfinite(loss) || loss > 1e6)
        throw DivergenceError("train: loss " + std::to_string(loss) + " at epoch " +
                              std::to_string(epoch));
      epoch_loss += loss * size;
      if (config.optimizer == OptimizerKind::AdaptiveMoment)
        adam_step(values, grad, adam, config.learning_rate);
      else
        sgd_step(values, grad, config.learning_rate);
    }
    report.loss_trajectory.push_back(epoch_loss / n);
    const std::size_t e = report.loss_trajectory.size();
    if (config.early_stop_tol > 0.0 && e >= 2 &&
        std::abs(report.loss_trajectory[e - 1] - report.loss_trajectory[e - 2]) <
            config.early_stop_tol)
      break;
  }
}

double decay_rate_or_nan(const std::vector<double>& trajectory) {
  if (trajectory.size() < 10) return std::numeric_limits<double>::quiet_NaN();
  for (double v : trajectory)
    if (!(v > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return fit_decay_rate(trajectory);
}

double mean_rate_ratio(const Model& model, const Dataset& data) {
  if (data.labels.size() != data.instances.size())
    return std::numeric_limits<double>::quiet_NaN();
  const MatrixXd out = batch_outputs(model, data.instances);
  double acc = 0.0;
  for (std::size_t t = 0; t < data.instances.size(); ++t) {
    const NetworkInstance& inst = data.instances[t];
    const double oracle = sum_rate(inst, data.labels[t]);
    acc += sum_rate(inst, out.col(static_cast<Eigen::Index>(t))) / std::max(oracle, 1e-12);
  }
  return acc / static_cast<double>(data.instances.size());
}

}  // namespace

TrainReport train(Model& model, const Dataset& data, const TrainConfig& config) {
  validate_train_inputs(config, data);
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  const int n = static_cast<int>(data.instances.size());
  if (MlpModel* mlp = std::get_if<MlpModel>(&model)) {
    if (data.instances.front().k != mlp->k)
      throw ShapeError("train: dataset user count does not match the model");
    set_standardization(*mlp, data.instances);
    MatrixXd feats(static_cast<Eigen::Index>(mlp->k) * mlp->k, n);
    for (int t = 0; t < n; ++t) feats.col(t) = mlp_features(*mlp, data.instances[t]);
    const BatchEval eval = [&](const std::vector<int>& batch) {
      return eval_mlp_batch(*mlp, data, config.scheme, feats, batch);
    };
    run_epochs(mlp->params.values, n, config, eval, report);
  } else {
    GnnModel& gnn = std::get<GnnModel>(model);
    std::vector<Graph> graphs;
    graphs.reserve(data.instances.size());
    for (const auto& inst : data.instances) graphs.push_back(build_graph(inst));
    const BatchEval eval = [&](const std::vector<int>& batch) {
      return eval_gnn_batch(gnn, data, config.scheme, graphs, batch);
    };
    run_epochs(gnn.params.values, n, config, eval, report);
  }
  report.fitted_decay_rate = decay_rate_or_nan(report.loss_trajectory);
  report.final_train_metric = mean_rate_ratio(model, data);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

LossFn make_batch_loss(const Model& model, const Dataset& data, Scheme scheme,
                       std::vector<int> batch) {
  if (batch.empty()) throw DomainError("make_batch_loss: batch is empty");
  Dataset sub;
  sub.meta = data.meta;
  for (int t : batch) {
    if (t < 0 || t >= static_cast<int>(data.instances.size()))
      throw DomainError("make_batch_loss: batch index out of range");
    sub.instances.push_back(data.instances[t]);
    if (!data.labels.empty()) sub.labels.push_back(data.labels[t]);
  }
  if (scheme == Scheme::Supervised && sub.labels.size() != sub.instances.size())
    throw DomainError("make_batch_loss: supervised loss needs labels");
  std::vector<int> all(sub.instances.size());
  std::iota(all.begin(), all.end(), 0);
  const int n = static_cast<int>(sub.instances.size());

  if (const MlpModel* mlp = std::get_if<MlpModel>(&model)) {
    MatrixXd feats(static_cast<Eigen::Index>(mlp->k) * mlp->k, n);
    for (int t = 0; t < n; ++t) feats.col(t) = mlp_features(*mlp, sub.instances[t]);
    return [base = *mlp, sub = std::move(sub), scheme, feats = std::move(feats),
            all = std::move(all)](const VectorXd& values) -> LossEval {
      MlpModel m = base;
      m.params.values = values;
      auto [loss, grad] = eval_mlp_batch(m, sub, scheme, feats, all);
      return {loss, std::move(grad)};
    };
  }
  const GnnModel& gnn = std::get<GnnModel>(model);
  std::vector<Graph> graphs;
  graphs.reserve(sub.instances.size());
  for (const auto& inst : sub.instances) graphs.push_back(build_graph(inst));
  return [base = gnn, sub = std::move(sub), scheme, graphs = std::move(graphs),
          all = std::move(all)](const VectorXd& values) -> LossEval {
    GnnModel m = base;
    m.params.values = values;
    auto [loss, grad] = eval_gnn_batch(m, sub, scheme, graphs, all);
    return {loss, std::move(grad)};
  };
}

}  // namespace rrm
