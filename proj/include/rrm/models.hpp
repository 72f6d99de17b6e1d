#pragma once

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

#include "rrm/layers.hpp"
#include "rrm/netgen.hpp"

namespace rrm {

enum class Arch { Mlp, Mpgnn, Oamp };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Affine;
  int in = 0;
  int out = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Number of scalar parameters the spec list requires (affine layers only;
// each contributes out*in weights plus out biases).
Eigen::Index param_count(const std::vector<LayerSpec>& specs);

struct ModelParams {
  Arch arch = Arch::Mlp;
  std::vector<LayerSpec> layer_specs;
  // Concatenated per affine layer: weight matrix column-major, then bias.
  VectorXd values;
  SeedKey init_key;

  void validate() const;
};

// Weights gaussian with variance 1/fan_in, biases zero.
ModelParams init_params(Arch arch, const std::vector<LayerSpec>& specs, SeedKey key);

struct MlpConfig {
  int hidden_dim = 64;
  // Number of affine+relu pairs before the output affine.
  int depth = 2;
};

// Plain MLP over the flattened K x K gain matrix (row-major), with
// per-feature standardization fixed from the training set and a final
// sigmoid scaled by p_max.
struct MlpModel {
  int k = 0;
  MlpConfig config;
  ModelParams params;
  VectorXd feat_mu;
  VectorXd feat_sd;
};

MlpModel make_mlp(int k, const MlpConfig& config, SeedKey key);

// Fixes feat_mu/feat_sd to the per-feature mean and standard deviation over
// the given instances (sd floored at 1e-8).
void set_standardization(MlpModel& model, const std::vector<NetworkInstance>& instances);

// Throws ShapeError if instance.k differs from the model's k.
VectorXd mlp_forward(const MlpModel& model, const NetworkInstance& instance);

enum class BetaKind { ScaledSigmoid };

std::string to_string(BetaKind beta);
BetaKind beta_kind_from_string(const std::string& name);

struct GnnConfig {
  int num_rounds = 2;
  int hidden_dim = 64;
  // Affine+relu pairs in the edge network (message output is the last relu).
  int mlp1_depth = 2;
  // Affine+relu pairs in the node network, followed by an affine head to 1.
  int mlp2_depth = 2;
  BetaKind beta = BetaKind::ScaledSigmoid;
  // One MLP1/MLP2 parameter set reused by every round (default), or
  // independent parameters per round.
  bool shared_rounds = true;
};

// Message-passing network over interference graphs. Per round, each edge
// (j -> i) is scored by MLP1 on (x_j, g_ij, g_ji), each node takes the
// elementwise max over incoming messages (zeros when there are none), and
// MLP2 on (x_i, aggregate) produces a scalar that beta squashes into
// [0, p_max] as the next state x_i. The initial state is the direct gain;
// the state after the final round is the power allocation. Works for any
// node count with the same parameters.
struct GnnModel {
  GnnConfig config;
  ModelParams params;
};

GnnModel make_gnn(const GnnConfig& config, SeedKey key);

VectorXd gnn_forward(const GnnModel& model, const Graph& graph);

using Model = std::variant<MlpModel, GnnModel>;

Arch model_arch(const Model& model);
const ModelParams& model_params(const Model& model);
ModelParams& model_params(Model& model);

// Evaluates the closure at params.values and returns the analytic gradient.
// Throws NumericError on a non-finite loss.
VectorXd model_gradient(const ModelParams& params, const LossFn& loss);

// ---- batched training paths ----
// Same math as the single-sample forwards, evaluated with matrix products
// over whole batches; a consistency test keeps the two routes aligned.

struct MlpTape {
  MatrixXd input;                  // standardized features, one column per sample
  std::vector<MatrixXd> pre_relu;  // activations before each relu
  MatrixXd logits;
  MatrixXd output;
};

// feats: standardized K^2 x B matrix (columns already standardized).
const MatrixXd& mlp_forward_batch(const MlpModel& model, const MatrixXd& feats, MlpTape& tape);
// d_out: dLoss/dOutput, K x B. Returns dLoss/dValues.
VectorXd mlp_backward_batch(const MlpModel& model, const MlpTape& tape, const MatrixXd& d_out);

// Column blocks of batch b occupy [b*K, (b+1)*K) for nodes and
// [b*E, (b+1)*E) for edges, with the canonical destination-major edge order.
struct GnnBatch {
  int k = 0;
  int batch = 0;
  double p_max = 1.0;
  Eigen::RowVectorXd x0;  // 1 x B*K initial states (direct gains)
  MatrixXd edge_feat;     // 2 x B*E: (g_ij, g_ji) per edge (j -> i)
};

GnnBatch make_gnn_batch(const std::vector<Graph>& graphs, const std::vector<int>& idx);

struct GnnRoundTape {
  Eigen::RowVectorXd x_in;
  MatrixXd edge_in;                 // (1 + 2) x B*E
  std::vector<MatrixXd> m_pre;      // per MLP1 layer, before relu
  MatrixXd messages;                // hidden x B*E
  MatrixXd agg;                     // hidden x B*K
  Eigen::MatrixXi argmax;           // hidden x B*K, edge column or -1
  MatrixXd node_in;                 // (1 + hidden) x B*K
  std::vector<MatrixXd> q_pre;      // per MLP2 layer, before relu
  Eigen::RowVectorXd y;             // 1 x B*K head output
  Eigen::RowVectorXd x_out;         // beta(y)
};

struct GnnTape {
  std::vector<GnnRoundTape> rounds;
};

// Returns the K x B power matrix (column b = sample b's allocation).
MatrixXd gnn_forward_batch(const GnnModel& model, const GnnBatch& batch, GnnTape& tape);
VectorXd gnn_backward_batch(const GnnModel& model, const GnnBatch& batch, const GnnTape& tape,
                            const MatrixXd& d_out);

// Flattened row-major gains standardized by the model's (mu, sd).
VectorXd mlp_features(const MlpModel& model, const NetworkInstance& instance);

// Power allocations for a set of instances, one column per instance.
// Batched evaluation in fixed-size chunks; matches the single-sample
// forwards to round-off.
MatrixXd batch_outputs(const Model& model, const std::vector<NetworkInstance>& instances);

// ---- checkpoints ----
// JSON with arch, dims, config, and the parameter vector base64-encoded
// (little-endian doubles); round-trips exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace rrm
