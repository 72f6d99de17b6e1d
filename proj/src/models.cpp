#include "rrm/models.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rrm {

using nlohmann::json;

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::Mlp: return "mlp";
    case Arch::Mpgnn: return "mpgnn";
    case Arch::Oamp: return "oamp";
  }
  throw DomainError("unknown arch");
}

Arch arch_from_string(const std::string& name) {
  if (name == "mlp") return Arch::Mlp;
  if (name == "mpgnn") return Arch::Mpgnn;
  if (name == "oamp") return Arch::Oamp;
  throw ConfigError("unknown arch '" + name + "'");
}

std::string to_string(BetaKind beta) {
  switch (beta) {
    case BetaKind::ScaledSigmoid: return "scaled_sigmoid";
  }
  throw DomainError("unknown beta kind");
}

BetaKind beta_kind_from_string(const std::string& name) {
  if (name == "scaled_sigmoid") return BetaKind::ScaledSigmoid;
  throw ConfigError("unknown beta kind '" + name + "'");
}

Eigen::Index param_count(const std::vector<LayerSpec>& specs) {
  Eigen::Index total = 0;
  for (const LayerSpec& s : specs) {
    if (s.in < 0 || s.out < 0) throw DomainError("LayerSpec: negative dimension");
    if (s.kind == LayerKind::Affine)
      total += static_cast<Eigen::Index>(s.out) * s.in + s.out;
  }
  return total;
}

void ModelParams::validate() const {
  if (values.size() != param_count(layer_specs))
    throw ShapeError("ModelParams: values length " + std::to_string(values.size()) +
                     " does not match layer_specs parameter count " +
                     std::to_string(param_count(layer_specs)));
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NumericError("ModelParams: non-finite value at index " + std::to_string(i));
}

ModelParams init_params(Arch arch, const std::vector<LayerSpec>& specs, SeedKey key) {
  ModelParams params;
  params.arch = arch;
  params.layer_specs = specs;
  params.init_key = key;
  params.values.resize(param_count(specs));
  SeededStream rng(key.derive(streams::kInit));
  Eigen::Index off = 0;
  for (const LayerSpec& s : specs) {
    if (s.kind != LayerKind::Affine) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max(1, s.in)));
    const Eigen::Index wn = static_cast<Eigen::Index>(s.out) * s.in;
    for (Eigen::Index i = 0; i < wn; ++i) params.values[off + i] = scale * rng.gaussian();
    for (Eigen::Index i = 0; i < s.out; ++i) params.values[off + wn + i] = 0.0;
    off += wn + s.out;
  }
  return params;
}

namespace {

// Offset of each affine layer's slice inside the flat value vector.
struct AffineLayout {
  std::vector<Eigen::Index> offsets;
  std::vector<LayerSpec> specs;
};

AffineLayout affine_layout(const std::vector<LayerSpec>& specs) {
  AffineLayout layout;
  Eigen::Index off = 0;
  for (const LayerSpec& s : specs) {
    if (s.kind != LayerKind::Affine) continue;
    layout.offsets.push_back(off);
    layout.specs.push_back(s);
    off += static_cast<Eigen::Index>(s.out) * s.in + s.out;
  }
  return layout;
}

Eigen::Map<const MatrixXd> weight_view(const VectorXd& values, const AffineLayout& layout,
                                       std::size_t a) {
  const LayerSpec& s = layout.specs[a];
  return {values.data() + layout.offsets[a], s.out, s.in};
}

Eigen::Map<const VectorXd> bias_view(const VectorXd& values, const AffineLayout& layout,
                                     std::size_t a) {
  const LayerSpec& s = layout.specs[a];
  return {values.data() + layout.offsets[a] + static_cast<Eigen::Index>(s.out) * s.in, s.out};
}

Eigen::Map<MatrixXd> weight_view_mut(VectorXd& values, const AffineLayout& layout, std::size_t a) {
  const LayerSpec& s = layout.specs[a];
  return {values.data() + layout.offsets[a], s.out, s.in};
}

Eigen::Map<VectorXd> bias_view_mut(VectorXd& values, const AffineLayout& layout, std::size_t a) {
  const LayerSpec& s = layout.specs[a];
  return {values.data() + layout.offsets[a] + static_cast<Eigen::Index>(s.out) * s.in, s.out};
}

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Canonical edge index of (i -> j) given the destination-major layout.
int reverse_edge(int src_j, int dst_i, int k) {
  return src_j * (k - 1) + (dst_i < src_j ? dst_i : dst_i - 1);
}

std::vector<LayerSpec> mlp_specs(int k, const MlpConfig& config) {
  if (k < 1) throw DomainError("make_mlp: k must be >= 1");
  if (config.hidden_dim < 1 || config.depth < 1)
    throw DomainError("make_mlp: hidden_dim and depth must be >= 1");
  const int h = config.hidden_dim;
  std::vector<LayerSpec> specs;
  specs.push_back({LayerKind::Affine, k * k, h});
  specs.push_back({LayerKind::Relu, h, h});
  for (int d = 1; d < config.depth; ++d) {
    specs.push_back({LayerKind::Affine, h, h});
    specs.push_back({LayerKind::Relu, h, h});
  }
  specs.push_back({LayerKind::Affine, h, k});
  specs.push_back({LayerKind::Sigmoid, k, k});
  return specs;
}

std::vector<LayerSpec> gnn_round_specs(const GnnConfig& config) {
  const int h = config.hidden_dim;
  std::vector<LayerSpec> specs;
  specs.push_back({LayerKind::Affine, 3, h});
  specs.push_back({LayerKind::Relu, h, h});
  for (int d = 1; d < config.mlp1_depth; ++d) {
    specs.push_back({LayerKind::Affine, h, h});
    specs.push_back({LayerKind::Relu, h, h});
  }
  specs.push_back({LayerKind::SetMax, h, h});
  specs.push_back({LayerKind::Affine, 1 + h, h});
  specs.push_back({LayerKind::Relu, h, h});
  for (int d = 1; d < config.mlp2_depth; ++d) {
    specs.push_back({LayerKind::Affine, h, h});
    specs.push_back({LayerKind::Relu, h, h});
  }
  specs.push_back({LayerKind::Affine, h, 1});
  specs.push_back({LayerKind::Sigmoid, 1, 1});
  return specs;
}

std::vector<LayerSpec> gnn_specs(const GnnConfig& config) {
  if (config.num_rounds < 1 || config.hidden_dim < 1 || config.mlp1_depth < 1 ||
      config.mlp2_depth < 1)
    throw DomainError("make_gnn: num_rounds, hidden_dim, and depths must be >= 1");
  std::vector<LayerSpec> round = gnn_round_specs(config);
  if (config.shared_rounds) return round;
  std::vector<LayerSpec> specs;
  for (int r = 0; r < config.num_rounds; ++r) specs.insert(specs.end(), round.begin(), round.end());
  return specs;
}

// Affine ordinals within one GNN round block: MLP1 layers, MLP2 layers, head.
struct GnnAffineIndex {
  int per_round = 0;  // affine layers per round block
  int mlp1 = 0;       // count of MLP1 affine layers
  int mlp2 = 0;       // count of MLP2 affine layers (head excluded)

  std::size_t mlp1_at(int round, int layer, bool shared) const {
    return static_cast<std::size_t>((shared ? 0 : round) * per_round + layer);
  }
  std::size_t mlp2_at(int round, int layer, bool shared) const {
    return static_cast<std::size_t>((shared ? 0 : round) * per_round + mlp1 + layer);
  }
  std::size_t head_at(int round, bool shared) const {
    return static_cast<std::size_t>((shared ? 0 : round) * per_round + mlp1 + mlp2);
  }
};

GnnAffineIndex gnn_affine_index(const GnnConfig& config) {
  GnnAffineIndex idx;
  idx.mlp1 = config.mlp1_depth;
  idx.mlp2 = config.mlp2_depth;
  idx.per_round = idx.mlp1 + idx.mlp2 + 1;
  return idx;
}

}  // namespace

MlpModel make_mlp(int k, const MlpConfig& config, SeedKey key) {
  MlpModel model;
  model.k = k;
  model.config = config;
  model.params = init_params(Arch::Mlp, mlp_specs(k, config), key);
  model.feat_mu = VectorXd::Zero(static_cast<Eigen::Index>(k) * k);
  model.feat_sd = VectorXd::Ones(static_cast<Eigen::Index>(k) * k);
  return model;
}

void set_standardization(MlpModel& model, const std::vector<NetworkInstance>& instances) {
  if (instances.empty()) throw DomainError("set_standardization: no instances");
  const Eigen::Index dim = static_cast<Eigen::Index>(model.k) * model.k;
  VectorXd mu = VectorXd::Zero(dim);
  VectorXd sq = VectorXd::Zero(dim);
  for (const NetworkInstance& inst : instances) {
    if (inst.k != model.k) throw ShapeError("set_standardization: instance k mismatch");
    for (int i = 0; i < model.k; ++i)
      for (int j = 0; j < model.k; ++j) {
        const double g = inst.gains(i, j);
        const Eigen::Index f = static_cast<Eigen::Index>(i) * model.k + j;
        mu[f] += g;
        sq[f] += g * g;
      }
  }
  const double n = static_cast<double>(instances.size());
  mu /= n;
  model.feat_mu = mu;
  model.feat_sd = (sq / n - mu.array().square().matrix()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-8);
}

VectorXd mlp_features(const MlpModel& model, const NetworkInstance& instance) {
  if (instance.k != model.k)
    throw ShapeError("mlp input expects k = " + std::to_string(model.k) + ", got " +
                     std::to_string(instance.k));
  const Eigen::Index dim = static_cast<Eigen::Index>(model.k) * model.k;
  VectorXd f(dim);
  for (int i = 0; i < model.k; ++i)
    for (int j = 0; j < model.k; ++j)
      f[static_cast<Eigen::Index>(i) * model.k + j] = instance.gains(i, j);
  return (f - model.feat_mu).cwiseQuotient(model.feat_sd);
}

VectorXd mlp_forward(const MlpModel& model, const NetworkInstance& instance) {
  model.params.validate();
  const AffineLayout layout = affine_layout(model.params.layer_specs);
  MatrixXd x = mlp_features(model, instance);
  const std::size_t n_aff = layout.specs.size();
  for (std::size_t a = 0; a + 1 < n_aff; ++a) {
    x = relu_forward(affine_forward(weight_view(model.params.values, layout, a),
                                    bias_view(model.params.values, layout, a), x));
  }
  x = affine_forward(weight_view(model.params.values, layout, n_aff - 1),
                     bias_view(model.params.values, layout, n_aff - 1), x);
  return instance.p_max * sigmoid_forward(x).col(0);
}

GnnModel make_gnn(const GnnConfig& config, SeedKey key) {
  GnnModel model;
  model.config = config;
  model.params = init_params(Arch::Mpgnn, gnn_specs(config), key);
  return model;
}

VectorXd gnn_forward(const GnnModel& model, const Graph& graph) {
  model.params.validate();
  if (graph.node_features.rows() != 2)
    throw ShapeError("gnn_forward: graph node_features must have 2 rows");
  if (graph.edge_features.rows() != 1)
    throw ShapeError("gnn_forward: graph edge_features must have 1 row");
  const int k = graph.node_count;
  const int e_count = k * (k - 1);
  if (graph.edges.cols() != e_count)
    throw ShapeError("gnn_forward: edge count does not match node count");

  const GnnConfig& cfg = model.config;
  const AffineLayout layout = affine_layout(model.params.layer_specs);
  const GnnAffineIndex idx = gnn_affine_index(cfg);
  const VectorXd& vals = model.params.values;

  VectorXd x(k);
  for (int i = 0; i < k; ++i) x[i] = graph.node_features(0, i);

  for (int r = 0; r < cfg.num_rounds; ++r) {
    // Edge messages, one column at a time so results are independent of the
    // labeling of other edges.
    MatrixXd messages(cfg.hidden_dim, e_count);
    for (int e = 0; e < e_count; ++e) {
      const int j = graph.edges(0, e);
      const int i = graph.edges(1, e);
      MatrixXd z(3, 1);
      z(0, 0) = x[j];
      z(1, 0) = graph.edge_features(0, e);
      z(2, 0) = graph.edge_features(0, reverse_edge(j, i, k));
      for (int l = 0; l < cfg.mlp1_depth; ++l) {
        const std::size_t a = idx.mlp1_at(r, l, cfg.shared_rounds);
        z = relu_forward(affine_forward(weight_view(vals, layout, a), bias_view(vals, layout, a), z));
      }
      messages.col(e) = z.col(0);
    }

    VectorXd x_next(k);
    for (int i = 0; i < k; ++i) {
      const VectorXd agg = set_max_forward(messages.middleCols(
          static_cast<Eigen::Index>(i) * (k - 1), std::max(0, k - 1)));
      MatrixXd u(1 + cfg.hidden_dim, 1);
      u(0, 0) = x[i];
      u.col(0).tail(cfg.hidden_dim) = agg;
      for (int l = 0; l < cfg.mlp2_depth; ++l) {
        const std::size_t a = idx.mlp2_at(r, l, cfg.shared_rounds);
        u = relu_forward(affine_forward(weight_view(vals, layout, a), bias_view(vals, layout, a), u));
      }
      const std::size_t a = idx.head_at(r, cfg.shared_rounds);
      const MatrixXd y = affine_forward(weight_view(vals, layout, a), bias_view(vals, layout, a), u);
      x_next[i] = graph.p_max * sigmoid_scalar(y(0, 0));
    }
    x = x_next;
  }
  return x;
}

Arch model_arch(const Model& model) {
  return std::holds_alternative<MlpModel>(model) ? Arch::Mlp : Arch::Mpgnn;
}

const ModelParams& model_params(const Model& model) {
  return std::visit([](const auto& m) -> const ModelParams& { return m.params; }, model);
}

ModelParams& model_params(Model& model) {
  return std::visit([](auto& m) -> ModelParams& { return m.params; }, model);
}

VectorXd model_gradient(const ModelParams& params, const LossFn& loss) {
  const LossEval eval = loss(params.values);
  if (!std::isfinite(eval.value)) throw NumericError("model_gradient: non-finite loss");
  if (eval.grad.size() != params.values.size())
    throw ShapeError("model_gradient: gradient size does not match parameter count");
  return eval.grad;
}

const MatrixXd& mlp_forward_batch(const MlpModel& model, const MatrixXd& feats, MlpTape& tape) {
  const AffineLayout layout = affine_layout(model.params.layer_specs);
  if (feats.rows() != layout.specs.front().in)
    throw ShapeError("mlp_forward_batch: feature rows do not match input dim");
  const std::size_t n_aff = layout.specs.size();
  tape.input = feats;
  tape.pre_relu.resize(n_aff - 1);
  MatrixXd x = feats;
  for (std::size_t a = 0; a + 1 < n_aff; ++a) {
    tape.pre_relu[a].noalias() = weight_view(model.params.values, layout, a) * x;
    tape.pre_relu[a].colwise() += bias_view(model.params.values, layout, a);
    x = tape.pre_relu[a].cwiseMax(0.0);
  }
  tape.logits.noalias() = weight_view(model.params.values, layout, n_aff - 1) * x;
  tape.logits.colwise() += bias_view(model.params.values, layout, n_aff - 1);
  tape.output = tape.logits.unaryExpr([](double v) { return sigmoid_scalar(v); });
  return tape.output;
}

VectorXd mlp_backward_batch(const MlpModel& model, const MlpTape& tape, const MatrixXd& d_out) {
  // d_out is the gradient wrt the unscaled sigmoid output; the p_max scaling
  // is owned by the caller (it folds p_max into d_out).
  const AffineLayout layout = affine_layout(model.params.layer_specs);
  const std::size_t n_aff = layout.specs.size();
  VectorXd grad = VectorXd::Zero(model.params.values.size());

  MatrixXd delta =
      d_out.array() * tape.output.array() * (1.0 - tape.output.array());
  for (std::size_t step = 0; step < n_aff; ++step) {
    const std::size_t a = n_aff - 1 - step;
    const MatrixXd& input = a == 0 ? tape.input : tape.pre_relu[a - 1].cwiseMax(0.0);
    weight_view_mut(grad, layout, a).noalias() = delta * input.transpose();
    bias_view_mut(grad, layout, a) = delta.rowwise().sum();
    if (a == 0) break;
    MatrixXd d_in = weight_view(model.params.values, layout, a).transpose() * delta;
    delta = (tape.pre_relu[a - 1].array() > 0.0).cast<double>() * d_in.array();
  }
  return grad;
}

GnnBatch make_gnn_batch(const std::vector<Graph>& graphs, const std::vector<int>& idx) {
  if (idx.empty()) throw DomainError("make_gnn_batch: empty batch");
  GnnBatch batch;
  const Graph& first = graphs.at(idx.front());
  batch.k = first.node_count;
  batch.batch = static_cast<int>(idx.size());
  batch.p_max = first.p_max;
  const int k = batch.k;
  const int e_count = k * (k - 1);
  batch.x0.resize(static_cast<Eigen::Index>(batch.batch) * k);
  batch.edge_feat.resize(2, static_cast<Eigen::Index>(batch.batch) * e_count);
  for (int b = 0; b < batch.batch; ++b) {
    const Graph& g = graphs.at(idx[b]);
    if (g.node_count != k || g.p_max != batch.p_max)
      throw ShapeError("make_gnn_batch: graphs in a batch must share k and p_max");
    for (int i = 0; i < k; ++i) batch.x0[static_cast<Eigen::Index>(b) * k + i] = g.node_features(0, i);
    for (int e = 0; e < e_count; ++e) {
      const int j = g.edges(0, e);
      const int i = g.edges(1, e);
      const Eigen::Index col = static_cast<Eigen::Index>(b) * e_count + e;
      batch.edge_feat(0, col) = g.edge_features(0, e);
      batch.edge_feat(1, col) = g.edge_features(0, reverse_edge(j, i, k));
    }
  }
  return batch;
}

MatrixXd gnn_forward_batch(const GnnModel& model, const GnnBatch& batch, GnnTape& tape) {
  const GnnConfig& cfg = model.config;
  const AffineLayout layout = affine_layout(model.params.layer_specs);
  const GnnAffineIndex idx = gnn_affine_index(cfg);
  const VectorXd& vals = model.params.values;
  const int k = batch.k;
  const int e_count = k * (k - 1);
  const Eigen::Index bk = static_cast<Eigen::Index>(batch.batch) * k;
  const Eigen::Index be = static_cast<Eigen::Index>(batch.batch) * e_count;
  const int h = cfg.hidden_dim;

  tape.rounds.resize(cfg.num_rounds);
  Eigen::RowVectorXd x = batch.x0;

  for (int r = 0; r < cfg.num_rounds; ++r) {
    GnnRoundTape& rt = tape.rounds[r];
    rt.x_in = x;

    rt.edge_in.resize(3, be);
    for (Eigen::Index col = 0; col < be; ++col) {
      const int b = static_cast<int>(col / e_count);
      const int e = static_cast<int>(col % e_count);
      const int dst = e / (k - 1);
      const int off = e % (k - 1);
      const int src_j = off < dst ? off : off + 1;
      rt.edge_in(0, col) = x[static_cast<Eigen::Index>(b) * k + src_j];
      rt.edge_in(1, col) = batch.edge_feat(0, col);
      rt.edge_in(2, col) = batch.edge_feat(1, col);
    }

    rt.m_pre.resize(cfg.mlp1_depth);
    {
      const MatrixXd* cur = &rt.edge_in;
      MatrixXd relu_buf;
      for (int l = 0; l < cfg.mlp1_depth; ++l) {
        const std::size_t a = idx.mlp1_at(r, l, cfg.shared_rounds);
        rt.m_pre[l].noalias() = weight_view(vals, layout, a) * (*cur);
        rt.m_pre[l].colwise() += bias_view(vals, layout, a);
        relu_buf = rt.m_pre[l].cwiseMax(0.0);
        cur = &relu_buf;
      }
      rt.messages = *cur;
    }

    rt.agg = MatrixXd::Zero(h, bk);
    rt.argmax = Eigen::MatrixXi::Constant(h, bk, -1);
    for (Eigen::Index node = 0; node < bk; ++node) {
      const Eigen::Index base =
          (node / k) * e_count + (node % k) * static_cast<Eigen::Index>(k - 1);
      for (int e = 0; e < k - 1; ++e) {
        const Eigen::Index col = base + e;
        for (int row = 0; row < h; ++row) {
          const double v = rt.messages(row, col);
          if (rt.argmax(row, node) < 0 || v > rt.agg(row, node)) {
            rt.agg(row, node) = v;
            rt.argmax(row, node) = static_cast<int>(col);
          }
        }
      }
    }

    rt.node_in.resize(1 + h, bk);
    rt.node_in.row(0) = x;
    rt.node_in.bottomRows(h) = rt.agg;

    rt.q_pre.resize(cfg.mlp2_depth);
    {
      const MatrixXd* cur = &rt.node_in;
      MatrixXd relu_buf;
      for (int l = 0; l < cfg.mlp2_depth; ++l) {
        const std::size_t a = idx.mlp2_at(r, l, cfg.shared_rounds);
        rt.q_pre[l].noalias() = weight_view(vals, layout, a) * (*cur);
        rt.q_pre[l].colwise() += bias_view(vals, layout, a);
        relu_buf = rt.q_pre[l].cwiseMax(0.0);
        cur = &relu_buf;
      }
      const std::size_t a = idx.head_at(r, cfg.shared_rounds);
      rt.y.noalias() = weight_view(vals, layout, a) * (*cur);
      rt.y.array() += bias_view(vals, layout, a)[0];
    }

    rt.x_out = rt.y.unaryExpr([&](double v) { return batch.p_max * sigmoid_scalar(v); });
    x = rt.x_out;
  }

  return Eigen::Map<const MatrixXd>(x.data(), k, batch.batch);
}

VectorXd gnn_backward_batch(const GnnModel& model, const GnnBatch& batch, const GnnTape& tape,
                            const MatrixXd& d_out) {
  const GnnConfig& cfg = model.config;
  const AffineLayout layout = affine_layout(model.params.layer_specs);
  const GnnAffineIndex idx = gnn_affine_index(cfg);
  const VectorXd& vals = model.params.values;
  const int k = batch.k;
  const int e_count = k * (k - 1);
  const Eigen::Index bk = static_cast<Eigen::Index>(batch.batch) * k;
  const Eigen::Index be = static_cast<Eigen::Index>(batch.batch) * e_count;
  const int h = cfg.hidden_dim;

  if (d_out.rows() != k || d_out.cols() != batch.batch)
    throw ShapeError("gnn_backward_batch: d_out must be k x batch");

  VectorXd grad = VectorXd::Zero(vals.size());
  Eigen::RowVectorXd dx = Eigen::Map<const Eigen::RowVectorXd>(d_out.data(), bk);

  for (int r = cfg.num_rounds - 1; r >= 0; --r) {
    const GnnRoundTape& rt = tape.rounds[r];

    // x_out = p_max * sigmoid(y)
    Eigen::RowVectorXd dy =
        dx.array() * rt.x_out.array() * (1.0 - rt.x_out.array() / batch.p_max);

    // MLP2 head and hidden layers.
    MatrixXd q_last = cfg.mlp2_depth > 0 ? rt.q_pre[cfg.mlp2_depth - 1].cwiseMax(0.0)
                                         : rt.node_in;
    {
      const std::size_t a = idx.head_at(r, cfg.shared_rounds);
      weight_view_mut(grad, layout, a).noalias() += dy * q_last.transpose();
      bias_view_mut(grad, layout, a)[0] += dy.sum();
    }
    MatrixXd delta = weight_view(vals, layout, idx.head_at(r, cfg.shared_rounds)).transpose() * dy;
    for (int l = cfg.mlp2_depth - 1; l >= 0; --l) {
      delta = (rt.q_pre[l].array() > 0.0).cast<double>() * delta.array();
      const MatrixXd& input = l == 0 ? rt.node_in : rt.q_pre[l - 1].cwiseMax(0.0);
      const std::size_t a = idx.mlp2_at(r, l, cfg.shared_rounds);
      weight_view_mut(grad, layout, a).noalias() += delta * input.transpose();
      bias_view_mut(grad, layout, a) += delta.rowwise().sum();
      delta = (weight_view(vals, layout, a).transpose() * delta).eval();
    }

    // Split node input gradient into state and aggregate parts.
    Eigen::RowVectorXd dx_prev = delta.row(0);
    MatrixXd dmessages = MatrixXd::Zero(h, be);
    for (Eigen::Index node = 0; node < bk; ++node)
      for (int row = 0; row < h; ++row) {
        const int col = rt.argmax(row, node);
        if (col >= 0) dmessages(row, col) += delta(1 + row, node);
      }

    // MLP1 layers.
    MatrixXd edelta = dmessages;
    for (int l = cfg.mlp1_depth - 1; l >= 0; --l) {
      edelta = (rt.m_pre[l].array() > 0.0).cast<double>() * edelta.array();
      const MatrixXd& input = l == 0 ? rt.edge_in : rt.m_pre[l - 1].cwiseMax(0.0);
      const std::size_t a = idx.mlp1_at(r, l, cfg.shared_rounds);
      weight_view_mut(grad, layout, a).noalias() += edelta * input.transpose();
      bias_view_mut(grad, layout, a) += edelta.rowwise().sum();
      edelta = (weight_view(vals, layout, a).transpose() * edelta).eval();
    }

    // Edge input row 0 is x[src]; scatter back to the source nodes.
    for (Eigen::Index col = 0; col < be; ++col) {
      const int b = static_cast<int>(col / e_count);
      const int e = static_cast<int>(col % e_count);
      const int dst = e / (k - 1);
      const int off = e % (k - 1);
      const int src_j = off < dst ? off : off + 1;
      dx_prev[static_cast<Eigen::Index>(b) * k + src_j] += edelta(0, col);
    }

    dx = dx_prev;
  }
  return grad;
}

MatrixXd batch_outputs(const Model& model, const std::vector<NetworkInstance>& instances) {
  const int n = static_cast<int>(instances.size());
  if (n == 0) throw DomainError("batch_outputs: no instances");
  constexpr int kChunk = 512;  // bounds tape memory for large sets
  if (const MlpModel* mlp = std::get_if<MlpModel>(&model)) {
    MatrixXd out(mlp->k, n);
    for (int start = 0; start < n; start += kChunk) {
      const int size = std::min(kChunk, n - start);
      MatrixXd feats(static_cast<Eigen::Index>(mlp->k) * mlp->k, size);
      for (int c = 0; c < size; ++c) feats.col(c) = mlp_features(*mlp, instances[start + c]);
      MlpTape tape;
      const MatrixXd& sig = mlp_forward_batch(*mlp, feats, tape);
      for (int c = 0; c < size; ++c) out.col(start + c) = instances[start + c].p_max * sig.col(c);
    }
    return out;
  }
  const GnnModel& gnn = std::get<GnnModel>(model);
  const int k = instances.front().k;
  MatrixXd out(k, n);
  for (int start = 0; start < n; start += kChunk) {
    const int size = std::min(kChunk, n - start);
    std::vector<Graph> graphs;
    graphs.reserve(size);
    std::vector<int> idx(size);
    for (int c = 0; c < size; ++c) {
      graphs.push_back(build_graph(instances[start + c]));
      idx[c] = c;
    }
    const GnnBatch batch = make_gnn_batch(graphs, idx);
    GnnTape tape;
    out.middleCols(start, size) = gnn_forward_batch(gnn, batch, tape);
  }
  return out;
}

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const double* data, Eigen::Index count) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  const std::size_t n = static_cast<std::size_t>(count) * sizeof(double);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    unsigned int chunk = bytes[i] << 16;
    if (i + 1 < n) chunk |= bytes[i + 1] << 8;
    if (i + 2 < n) chunk |= bytes[i + 2];
    out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
    out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64Alphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64Alphabet[chunk & 63] : '=');
  }
  return out;
}

VectorXd base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Alphabet[i])] = i;
  if (text.size() % 4 != 0) throw ParseError("base64: length not a multiple of 4");
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int t = 0; t < 4; ++t) {
      const char c = text[i + t];
      if (c == '=' && i + 4 == text.size() && t >= 2) {
        vals[t] = 0;
        ++pad;
      } else {
        vals[t] = lut[static_cast<unsigned char>(c)];
        if (vals[t] < 0) throw ParseError("base64: invalid character");
        if (pad > 0) throw ParseError("base64: data after padding");
      }
    }
    const unsigned int chunk = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    bytes.push_back((chunk >> 16) & 0xFF);
    if (pad < 2) bytes.push_back((chunk >> 8) & 0xFF);
    if (pad < 1) bytes.push_back(chunk & 0xFF);
  }
  if (bytes.size() % sizeof(double) != 0)
    throw ParseError("base64: payload is not a whole number of doubles");
  VectorXd out(static_cast<Eigen::Index>(bytes.size() / sizeof(double)));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

json specs_to_json(const std::vector<LayerSpec>& specs) {
  json arr = json::array();
  for (const LayerSpec& s : specs) arr.push_back({to_string(s.kind), s.in, s.out});
  return arr;
}

std::vector<LayerSpec> specs_from_json(const json& arr) {
  std::vector<LayerSpec> specs;
  for (const json& item : arr) {
    LayerSpec s;
    s.kind = layer_kind_from_string(item.at(0).get<std::string>());
    s.in = item.at(1).get<int>();
    s.out = item.at(2).get<int>();
    specs.push_back(s);
  }
  return specs;
}

json seed_json(const SeedKey& key) {
  return json{{"master_seed", key.master_seed}, {"stream_index", key.stream_index}};
}

SeedKey seed_from(const json& j) {
  return {j.at("master_seed").get<std::uint64_t>(), j.at("stream_index").get<std::uint64_t>()};
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json doc;
  doc["format_version"] = 1;
  const ModelParams& params = model_params(model);
  doc["arch"] = to_string(params.arch);
  doc["layer_specs"] = specs_to_json(params.layer_specs);
  doc["init_key"] = seed_json(params.init_key);
  doc["values_b64"] = base64_encode(params.values.data(), params.values.size());
  if (const auto* mlp = std::get_if<MlpModel>(&model)) {
    doc["k"] = mlp->k;
    doc["hidden_dim"] = mlp->config.hidden_dim;
    doc["depth"] = mlp->config.depth;
    doc["feat_mu_b64"] = base64_encode(mlp->feat_mu.data(), mlp->feat_mu.size());
    doc["feat_sd_b64"] = base64_encode(mlp->feat_sd.data(), mlp->feat_sd.size());
  } else {
    const GnnModel& gnn = std::get<GnnModel>(model);
    doc["num_rounds"] = gnn.config.num_rounds;
    doc["hidden_dim"] = gnn.config.hidden_dim;
    doc["mlp1_depth"] = gnn.config.mlp1_depth;
    doc["mlp2_depth"] = gnn.config.mlp2_depth;
    doc["beta"] = to_string(gnn.config.beta);
    doc["shared_rounds"] = gnn.config.shared_rounds;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_checkpoint: cannot open '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw Error("save_checkpoint: write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_checkpoint: cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& err) {
    throw ParseError("load_checkpoint: " + std::string(err.what()));
  }
  try {
    if (doc.at("format_version").get<int>() != 1)
      throw VersionError("load_checkpoint: unsupported format_version");
    const Arch arch = arch_from_string(doc.at("arch").get<std::string>());
    ModelParams params;
    params.arch = arch;
    params.layer_specs = specs_from_json(doc.at("layer_specs"));
    params.init_key = seed_from(doc.at("init_key"));
    params.values = base64_decode(doc.at("values_b64").get<std::string>());
    params.validate();
    if (arch == Arch::Mlp) {
      MlpModel model;
      model.k = doc.at("k").get<int>();
      model.config.hidden_dim = doc.at("hidden_dim").get<int>();
      model.config.depth = doc.at("depth").get<int>();
      model.params = std::move(params);
      model.feat_mu = base64_decode(doc.at("feat_mu_b64").get<std::string>());
      model.feat_sd = base64_decode(doc.at("feat_sd_b64").get<std::string>());
      if (model.feat_mu.size() != static_cast<Eigen::Index>(model.k) * model.k ||
          model.feat_sd.size() != model.feat_mu.size())
        throw ParseError("load_checkpoint: standardization size mismatch");
      return model;
    }
    if (arch == Arch::Mpgnn) {
      GnnModel model;
      model.config.num_rounds = doc.at("num_rounds").get<int>();
      model.config.hidden_dim = doc.at("hidden_dim").get<int>();
      model.config.mlp1_depth = doc.at("mlp1_depth").get<int>();
      model.config.mlp2_depth = doc.at("mlp2_depth").get<int>();
      model.config.beta = beta_kind_from_string(doc.at("beta").get<std::string>());
      model.config.shared_rounds = doc.at("shared_rounds").get<bool>();
      model.params = std::move(params);
      return model;
    }
    throw ParseError("load_checkpoint: arch '" + to_string(arch) + "' has no checkpoint form");
  } catch (const VersionError&) {
    throw;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& err) {
    throw ParseError("load_checkpoint: " + std::string(err.what()));
  }
}

}  // namespace rrm
