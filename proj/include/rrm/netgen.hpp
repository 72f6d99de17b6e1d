#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "rrm/error.hpp"
#include "rrm/rng.hpp"

namespace rrm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One K-user interference network. gains(i, j) is the squared channel
// magnitude from transmitter j into receiver i, so the diagonal holds the
// direct links.
struct NetworkInstance {
  int k = 0;
  MatrixXd gains;
  double noise_power = 1.0;
  double p_max = 1.0;

  // Throws DomainError / ShapeError on non-finite or negative gains, a gains
  // matrix that is not k x k, or non-positive noise_power / p_max.
  void validate() const;
};

enum class ChannelModel { RayleighIid, Geometric };

std::string to_string(ChannelModel model);
ChannelModel channel_model_from_string(const std::string& name);

// Geometry for ChannelModel::Geometric: transmitters uniform on a square,
// each receiver uniform on a ring around its transmitter, gains
// gain_scale * (1 + d)^-alpha * |fade|^2 with Rayleigh fading. alpha = 0 and
// gain_scale = 1 reduce exactly to RayleighIid.
struct GeometricConfig {
  double area_side = 50.0;
  double alpha = 2.2;
  double rx_min = 2.0;
  double rx_max = 10.0;
  double gain_scale = 1.0;
};

NetworkInstance sample_instance(int k, ChannelModel model, SeedKey key,
                                const GeometricConfig& geo = {});

// Directed graph view of an instance: one node per transceiver pair, one
// edge (j -> i) for every ordered pair j != i.
struct Graph {
  int node_count = 0;
  double p_max = 1.0;
  // Column i: (direct gain g_ii, scheduling weight).
  MatrixXd node_features;
  // Column e: (source j, destination i). Destination-major, sources ascending
  // within a destination, so edge order is canonical given node labels and
  // the edges of destination i occupy columns [i*(K-1), (i+1)*(K-1)).
  Eigen::Matrix2Xi edges;
  // Column e for edge (j -> i): the interference gain g_ij.
  MatrixXd edge_features;
  // adjacency[i] lists the in-neighbors N(i) as node indices, ascending.
  std::vector<std::vector<int>> adjacency;
};

Graph build_graph(const NetworkInstance& net);

// Relabels users: node perm[i] of the result corresponds to node i of the
// input, i.e. out.gains(perm[i], perm[j]) == net.gains(i, j).
NetworkInstance permute_instance(const NetworkInstance& net, const std::vector<int>& perm);
VectorXd permute_vector(const VectorXd& v, const std::vector<int>& perm);

enum class LabelOracle { None, Wmmse, BruteForce };

std::string to_string(LabelOracle oracle);
LabelOracle label_oracle_from_string(const std::string& name);

struct DatasetMeta {
  int format_version = 1;
  int k = 0;
  int n = 0;
  ChannelModel channel_model = ChannelModel::RayleighIid;
  LabelOracle oracle = LabelOracle::None;
  SeedKey seed;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<NetworkInstance> instances;
  // Empty, or one power vector per instance.
  std::vector<VectorXd> labels;
};

// Instance t depends only on key.derive(streams::kInstance, t), so datasets
// with the same key agree prefix-wise regardless of n.
Dataset gen_dataset(int n, int k, ChannelModel model, LabelOracle oracle, SeedKey key,
                    const GeometricConfig& geo = {});

// JSON-lines container: a header line with the metadata, then one line per
// instance. Identical datasets serialize to identical bytes.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

bool dataset_equal(const Dataset& a, const Dataset& b);

// Fixed 5-user stress channel whose two strong 2-user cells drown user 3.
// Out-of-cell gains are huge but finite stand-ins for unbounded interference.
NetworkInstance extreme_interference_instance();

}  // namespace rrm
