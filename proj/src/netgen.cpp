#include "rrm/netgen.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

#include "rrm/oracles.hpp"

namespace rrm {

using nlohmann::json;

void NetworkInstance::validate() const {
  if (k < 1) throw DomainError("NetworkInstance: k must be >= 1");
  if (gains.rows() != k || gains.cols() != k)
    throw ShapeError("NetworkInstance: gains must be " + std::to_string(k) + "x" +
                     std::to_string(k));
  for (Eigen::Index i = 0; i < gains.rows(); ++i)
    for (Eigen::Index j = 0; j < gains.cols(); ++j) {
      const double g = gains(i, j);
      if (!std::isfinite(g) || g < 0.0)
        throw DomainError("NetworkInstance: gain (" + std::to_string(i) + "," +
                          std::to_string(j) + ") is not finite and >= 0");
    }
  if (!(noise_power > 0.0) || !std::isfinite(noise_power))
    throw DomainError("NetworkInstance: noise_power must be positive");
  if (!(p_max > 0.0) || !std::isfinite(p_max))
    throw DomainError("NetworkInstance: p_max must be positive");
}

std::string to_string(ChannelModel model) {
  switch (model) {
    case ChannelModel::RayleighIid: return "rayleigh_iid";
    case ChannelModel::Geometric: return "geometric";
  }
  throw DomainError("unknown channel model");
}

ChannelModel channel_model_from_string(const std::string& name) {
  if (name == "rayleigh_iid") return ChannelModel::RayleighIid;
  if (name == "geometric") return ChannelModel::Geometric;
  throw ConfigError("unknown channel model '" + name + "'");
}

std::string to_string(LabelOracle oracle) {
  switch (oracle) {
    case LabelOracle::None: return "none";
    case LabelOracle::Wmmse: return "wmmse";
    case LabelOracle::BruteForce: return "brute_force";
  }
  throw DomainError("unknown label oracle");
}

LabelOracle label_oracle_from_string(const std::string& name) {
  if (name == "none") return LabelOracle::None;
  if (name == "wmmse") return LabelOracle::Wmmse;
  if (name == "brute_force") return LabelOracle::BruteForce;
  throw ConfigError("unknown label oracle '" + name + "'");
}

NetworkInstance sample_instance(int k, ChannelModel model, SeedKey key,
                                const GeometricConfig& geo) {
  if (k < 1) throw DomainError("sample_instance: k must be >= 1");
  SeededStream rng(key);
  NetworkInstance net;
  net.k = k;
  net.gains.resize(k, k);

  if (model == ChannelModel::RayleighIid) {
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) net.gains(i, j) = std::norm(rng.cgaussian());
    return net;
  }

  // Geometric: transmitters uniform in the square, each receiver uniform on
  // an annulus around its transmitter, area-uniform radius. Positions come
  // from their own substream so the fading draws align with RayleighIid and
  // alpha = 0, gain_scale = 1 reproduces it bitwise.
  if (geo.rx_min < 0.0 || geo.rx_max < geo.rx_min)
    throw ConfigError("sample_instance: invalid receiver ring radii");
  SeededStream pos(key.derive(streams::kChannel));
  std::vector<double> tx_x(k), tx_y(k), rx_x(k), rx_y(k);
  for (int i = 0; i < k; ++i) {
    tx_x[i] = pos.uniform(0.0, geo.area_side);
    tx_y[i] = pos.uniform(0.0, geo.area_side);
  }
  for (int i = 0; i < k; ++i) {
    const double r2 = pos.uniform(geo.rx_min * geo.rx_min, geo.rx_max * geo.rx_max);
    const double r = std::sqrt(r2);
    const double phi = pos.uniform(0.0, 2.0 * std::numbers::pi);
    rx_x[i] = tx_x[i] + r * std::cos(phi);
    rx_y[i] = tx_y[i] + r * std::sin(phi);
  }
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double d = std::hypot(rx_x[i] - tx_x[j], rx_y[i] - tx_y[j]);
      const double path = std::pow(1.0 + d, -geo.alpha);
      net.gains(i, j) = geo.gain_scale * path * std::norm(rng.cgaussian());
    }
  return net;
}

Graph build_graph(const NetworkInstance& net) {
  net.validate();
  const int k = net.k;
  Graph g;
  g.node_count = k;
  g.p_max = net.p_max;
  g.node_features.resize(2, k);
  for (int i = 0; i < k; ++i) {
    g.node_features(0, i) = net.gains(i, i);
    g.node_features(1, i) = 1.0;  // unit scheduling weight
  }
  const int e_count = k * (k - 1);
  g.edges.resize(2, e_count);
  g.edge_features.resize(1, e_count);
  g.adjacency.assign(k, {});
  int e = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      g.edges(0, e) = j;
      g.edges(1, e) = i;
      g.edge_features(0, e) = net.gains(i, j);
      g.adjacency[i].push_back(j);
      ++e;
    }
  return g;
}

namespace {

void check_permutation(const std::vector<int>& perm, int k) {
  if (static_cast<int>(perm.size()) != k)
    throw DomainError("permutation size does not match user count");
  std::vector<bool> seen(k, false);
  for (int v : perm) {
    if (v < 0 || v >= k || seen[v]) throw DomainError("not a permutation");
    seen[v] = true;
  }
}

}  // namespace

NetworkInstance permute_instance(const NetworkInstance& net, const std::vector<int>& perm) {
  net.validate();
  check_permutation(perm, net.k);
  NetworkInstance out = net;
  for (int i = 0; i < net.k; ++i)
    for (int j = 0; j < net.k; ++j) out.gains(perm[i], perm[j]) = net.gains(i, j);
  return out;
}

VectorXd permute_vector(const VectorXd& v, const std::vector<int>& perm) {
  check_permutation(perm, static_cast<int>(v.size()));
  VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[perm[i]] = v[i];
  return out;
}

Dataset gen_dataset(int n, int k, ChannelModel model, LabelOracle oracle, SeedKey key,
                    const GeometricConfig& geo) {
  if (n < 1) throw DomainError("gen_dataset: n must be >= 1");
  Dataset ds;
  ds.meta.k = k;
  ds.meta.n = n;
  ds.meta.channel_model = model;
  ds.meta.oracle = oracle;
  ds.meta.seed = key;
  ds.instances.reserve(n);
  for (int t = 0; t < n; ++t)
    ds.instances.push_back(sample_instance(k, model, key.derive(streams::kInstance, t), geo));
  if (oracle == LabelOracle::None) return ds;

  ds.labels.reserve(n);
  for (int t = 0; t < n; ++t) {
    try {
      if (oracle == LabelOracle::Wmmse) {
        ds.labels.push_back(wmmse(ds.instances[t]).p);
      } else {
        ds.labels.push_back(brute_force(ds.instances[t], default_grid_points(k)).p);
      }
    } catch (const Error& err) {
      throw Error("gen_dataset: label oracle failed at instance " + std::to_string(t) + ": " +
                  err.what());
    }
  }
  return ds;
}

namespace {

json seed_to_json(const SeedKey& key) {
  return json{{"master_seed", key.master_seed}, {"stream_index", key.stream_index}};
}

SeedKey seed_from_json(const json& j) {
  return {j.at("master_seed").get<std::uint64_t>(), j.at("stream_index").get<std::uint64_t>()};
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  if (!ds.labels.empty() && ds.labels.size() != ds.instances.size())
    throw ShapeError("save_dataset: label count does not match instance count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_dataset: cannot open '" + path + "' for writing");

  json meta{{"format_version", ds.meta.format_version},
            {"k", ds.meta.k},
            {"n", static_cast<int>(ds.instances.size())},
            {"channel_model", to_string(ds.meta.channel_model)},
            {"oracle", to_string(ds.meta.oracle)},
            {"seed", seed_to_json(ds.meta.seed)}};
  out << meta.dump() << '\n';

  for (std::size_t t = 0; t < ds.instances.size(); ++t) {
    const NetworkInstance& inst = ds.instances[t];
    std::vector<double> flat(inst.gains.size());
    for (int i = 0; i < inst.k; ++i)
      for (int j = 0; j < inst.k; ++j) flat[static_cast<std::size_t>(i) * inst.k + j] = inst.gains(i, j);
    json line{{"k", inst.k},
              {"gains", flat},
              {"noise_power", inst.noise_power},
              {"p_max", inst.p_max}};
    if (!ds.labels.empty()) {
      line["label"] = std::vector<double>(ds.labels[t].data(), ds.labels[t].data() + ds.labels[t].size());
    }
    out << line.dump() << '\n';
  }
  if (!out) throw Error("save_dataset: write to '" + path + "' failed");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_dataset: cannot open '" + path + "'");
  std::string text;
  int line_no = 0;

  if (!std::getline(in, text)) throw ParseError("load_dataset: line 1: empty file");
  ++line_no;
  Dataset ds;
  try {
    const json meta = json::parse(text);
    ds.meta.format_version = meta.at("format_version").get<int>();
    if (ds.meta.format_version != 1)
      throw VersionError("load_dataset: unsupported format_version " +
                         std::to_string(ds.meta.format_version));
    ds.meta.k = meta.at("k").get<int>();
    ds.meta.n = meta.at("n").get<int>();
    ds.meta.channel_model = channel_model_from_string(meta.at("channel_model").get<std::string>());
    ds.meta.oracle = label_oracle_from_string(meta.at("oracle").get<std::string>());
    ds.meta.seed = seed_from_json(meta.at("seed"));
  } catch (const VersionError&) {
    throw;
  } catch (const std::exception& err) {
    throw ParseError("load_dataset: line 1: " + std::string(err.what()));
  }

  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    try {
      const json line = json::parse(text);
      NetworkInstance inst;
      inst.k = line.at("k").get<int>();
      const auto flat = line.at("gains").get<std::vector<double>>();
      if (static_cast<int>(flat.size()) != inst.k * inst.k)
        throw ParseError("gains length does not match k*k");
      inst.gains.resize(inst.k, inst.k);
      for (int i = 0; i < inst.k; ++i)
        for (int j = 0; j < inst.k; ++j) inst.gains(i, j) = flat[static_cast<std::size_t>(i) * inst.k + j];
      inst.noise_power = line.at("noise_power").get<double>();
      inst.p_max = line.at("p_max").get<double>();
      if (line.contains("label")) {
        const auto lv = line.at("label").get<std::vector<double>>();
        ds.labels.push_back(Eigen::Map<const VectorXd>(lv.data(), static_cast<Eigen::Index>(lv.size())));
      }
      ds.instances.push_back(std::move(inst));
    } catch (const ParseError& err) {
      throw ParseError("load_dataset: line " + std::to_string(line_no) + ": " + err.what());
    } catch (const std::exception& err) {
      throw ParseError("load_dataset: line " + std::to_string(line_no) + ": " +
                       std::string(err.what()));
    }
  }

  if (static_cast<int>(ds.instances.size()) != ds.meta.n)
    throw ParseError("load_dataset: line " + std::to_string(line_no + 1) + ": expected " +
                     std::to_string(ds.meta.n) + " instances, found " +
                     std::to_string(ds.instances.size()));
  if (!ds.labels.empty() && ds.labels.size() != ds.instances.size())
    throw ParseError("load_dataset: labels present on only some instances");
  return ds;
}

bool dataset_equal(const Dataset& a, const Dataset& b) {
  if (a.meta.format_version != b.meta.format_version || a.meta.k != b.meta.k ||
      a.meta.n != b.meta.n || a.meta.channel_model != b.meta.channel_model ||
      a.meta.oracle != b.meta.oracle || !(a.meta.seed == b.meta.seed))
    return false;
  if (a.instances.size() != b.instances.size() || a.labels.size() != b.labels.size())
    return false;
  for (std::size_t t = 0; t < a.instances.size(); ++t) {
    const NetworkInstance& x = a.instances[t];
    const NetworkInstance& y = b.instances[t];
    if (x.k != y.k || x.noise_power != y.noise_power || x.p_max != y.p_max) return false;
    if (x.gains != y.gains) return false;
  }
  for (std::size_t t = 0; t < a.labels.size(); ++t)
    if (a.labels[t] != b.labels[t]) return false;
  return true;
}

NetworkInstance extreme_interference_instance() {
  // Two strong 2-user cells and one isolated middle user. Cross-cell gains
  // are huge finite stand-ins for unbounded interference, so activating the
  // middle user wipes out everyone else's rate.
  const double big = 1e12;
  NetworkInstance net;
  net.k = 5;
  net.gains.resize(5, 5);
  net.gains << 100.0, 0.0, big, big, big,
               0.0, 100.0, big, big, big,
               big, big, 1.0, big, big,
               big, big, big, 100.0, 0.0,
               big, big, big, 0.0, 99.9;
  return net;
}

}  // namespace rrm
