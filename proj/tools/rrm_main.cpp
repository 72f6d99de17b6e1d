// Experiment runner: every workflow as a subcommand writing CSV/JSON
// artifacts plus a manifest.json that pins the resolved configuration and
// artifact checksums, so any run can be reproduced byte-for-byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rrm/gapbench.hpp"
#include "rrm/oamp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rrm;

namespace {

constexpr int kManifestVersion = 1;

// FNV-1a 64-bit over the artifact bytes with wall_time lines dropped, so a
// rerun of the same configuration checksums identically.
std::uint64_t artifact_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("manifest: cannot read artifact '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("wall_time") != std::string::npos) continue;
    line += '\n';
    for (const char c : line) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

// Collects what a run must record: the resolved per-command configuration
// and every artifact written under the output directory.
struct RunContext {
  std::string command;
  fs::path out_dir;
  json config = json::object();
  std::vector<std::string> artifacts;  // paths relative to out_dir

  fs::path resolve(const std::string& name) {
    fs::path p(name);
    if (p.is_absolute()) return p;
    return out_dir / p;
  }

  void note_artifact(const std::string& name) { artifacts.push_back(name); }

  void write_manifest() {
    json doc;
    doc["format_version"] = kManifestVersion;
    doc["command"] = command;
    doc["config"] = config;
    json arts = json::array();
    for (const std::string& name : artifacts)
      arts.push_back({{"path", name},
                      {"fnv1a64", hex64(artifact_checksum(resolve(name).string()))},
                      {"excludes", "wall_time"}});
    doc["artifacts"] = std::move(arts);
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    if (!out) throw Error("manifest: cannot open manifest.json for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw Error("manifest: write failed");
  }
};

std::string default_out_dir() {
  const char* env = std::getenv("RRM_OUT_DIR");
  return env && *env ? env : ".";
}

RunContext make_context(const std::string& command, const std::string& out_dir) {
  RunContext ctx;
  ctx.command = command;
  ctx.out_dir = out_dir;
  fs::create_directories(ctx.out_dir);
  return ctx;
}

template <typename Fn>
auto named_flag(const char* flag, Fn&& parse) {
  try {
    return parse();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(flag) + ": " + e.what());
  }
}

json seed_json(const SeedKey& key) {
  return {{"master_seed", key.master_seed}, {"stream_index", key.stream_index}};
}

json gaps_json(const GapReport& report) {
  return {{"train_gap", report.train_gap}, {"gen_gap", report.gen_gap},
          {"total_gap", report.total_gap}, {"oracle", report.oracle_name},
          {"n_train", report.n_train},     {"n_test", report.n_test},
          {"seed", seed_json(report.seed)}};
}

void write_json_artifact(const json& doc, const fs::path& path, const char* who) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(std::string(who) + ": cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(std::string(who) + ": write to '" + path.string() + "' failed");
}

// ---- gen-data ----

struct GenDataArgs {
  int k = 5;
  int n = 100;
  std::string channel = "rayleigh_iid";
  std::string oracle = "none";
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string out = "dataset.jsonl";
  std::string out_dir = default_out_dir();
};

void run_gen_data(const GenDataArgs& args) {
  const ChannelModel channel =
      named_flag("--channel", [&] { return channel_model_from_string(args.channel); });
  const LabelOracle oracle =
      named_flag("--oracle", [&] { return label_oracle_from_string(args.oracle); });
  const SeedKey key{args.seed, args.stream};

  RunContext ctx = make_context("gen-data", args.out_dir);
  ctx.config = {{"k", args.k},           {"n", args.n},           {"channel", args.channel},
                {"oracle", args.oracle}, {"seed", args.seed},     {"stream", args.stream},
                {"out", args.out},       {"out_dir", args.out_dir}};

  const Dataset ds = gen_dataset(args.n, args.k, channel, oracle, key);
  save_dataset(ds, ctx.resolve(args.out).string());
  ctx.note_artifact(args.out);
  ctx.write_manifest();
  std::printf("gen-data: wrote %d instances (k=%d, oracle=%s) to %s\n", args.n, args.k,
              args.oracle.c_str(), ctx.resolve(args.out).string().c_str());
}

// ---- train ----

struct TrainArgs {
  std::string arch = "mlp";
  std::string scheme = "supervised";
  std::string data;
  int epochs = 100;
  int batch_size = 64;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double early_stop_tol = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  int hidden = 64;
  int depth = 2;
  int rounds = 2;
  bool unshared = false;
  std::string out = "checkpoint.json";
  std::string report = "train_report.json";
  std::string out_dir = default_out_dir();
};

void run_train(const TrainArgs& args) {
  const Arch arch = named_flag("--arch", [&] { return arch_from_string(args.arch); });
  const Scheme scheme = named_flag("--scheme", [&] { return scheme_from_string(args.scheme); });
  if (arch == Arch::Oamp)
    throw ConfigError("--arch: the MIMO detector trains through the `oamp` subcommand");

  const Dataset data = load_dataset(args.data);
  if (scheme == Scheme::Supervised && data.labels.empty())
    throw ConfigError("--scheme: supervised training needs a labeled dataset, and '" + args.data +
                      "' carries no labels");

  TrainConfig tc;
  tc.scheme = scheme;
  tc.epochs = args.epochs;
  tc.batch_size = args.batch_size;
  tc.learning_rate = args.lr;
  tc.optimizer = named_flag("--optimizer", [&] { return optimizer_from_string(args.optimizer); });
  tc.early_stop_tol = args.early_stop_tol;
  tc.seed = SeedKey{args.seed, args.stream}.derive(1);

  const SeedKey init_key = SeedKey{args.seed, args.stream}.derive(2);
  Model model;
  if (arch == Arch::Mlp) {
    MlpConfig mc;
    mc.hidden_dim = args.hidden;
    mc.depth = args.depth;
    model = make_mlp(data.meta.k, mc, init_key);
  } else {
    GnnConfig gc;
    gc.hidden_dim = args.hidden;
    gc.num_rounds = args.rounds;
    gc.shared_rounds = !args.unshared;
    model = make_gnn(gc, init_key);
  }

  RunContext ctx = make_context("train", args.out_dir);
  ctx.config = {{"arch", args.arch},       {"scheme", args.scheme},
                {"data", args.data},       {"epochs", args.epochs},
                {"batch_size", args.batch_size}, {"lr", args.lr},
                {"optimizer", args.optimizer},   {"early_stop_tol", args.early_stop_tol},
                {"seed", args.seed},       {"stream", args.stream},
                {"hidden", args.hidden},   {"depth", args.depth},
                {"rounds", args.rounds},   {"unshared", args.unshared},
                {"out", args.out},         {"report", args.report},
                {"out_dir", args.out_dir}};

  const TrainReport report = train(model, data, tc);
  save_checkpoint(model, ctx.resolve(args.out).string());
  ctx.note_artifact(args.out);

  json rep;
  rep["loss_trajectory"] = report.loss_trajectory;
  rep["fitted_decay_rate"] =
      std::isfinite(report.fitted_decay_rate) ? json(report.fitted_decay_rate) : json();
  rep["final_train_metric"] =
      std::isfinite(report.final_train_metric) ? json(report.final_train_metric) : json();
  rep["wall_time"] = report.wall_time;
  write_json_artifact(rep, ctx.resolve(args.report), "train");
  ctx.note_artifact(args.report);
  ctx.write_manifest();

  std::printf("train: %s/%s on %zu instances, %zu epochs run, final loss %.6g\n",
              args.arch.c_str(), args.scheme.c_str(), data.instances.size(),
              report.loss_trajectory.size(),
              report.loss_trajectory.empty() ? 0.0 : report.loss_trajectory.back());
}

// ---- eval-gap ----

struct EvalGapArgs {
  std::string model;
  std::string train_data;
  std::string test_data;
  int pac_trials = 0;
  double pac_delta = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string out = "gap.json";
  std::string out_dir = default_out_dir();
};

void run_eval_gap(const EvalGapArgs& args) {
  const Model model = load_checkpoint(args.model);
  const Dataset train_set = load_dataset(args.train_data);
  const Dataset test_set = load_dataset(args.test_data);

  RunContext ctx = make_context("eval-gap", args.out_dir);
  ctx.config = {{"model", args.model},     {"train_data", args.train_data},
                {"test_data", args.test_data}, {"pac_trials", args.pac_trials},
                {"pac_delta", args.pac_delta}, {"seed", args.seed},
                {"stream", args.stream},   {"out", args.out},
                {"out_dir", args.out_dir}};

  const GapReport gaps = measure_gaps(model, train_set, test_set);
  json doc = gaps_json(gaps);
  if (args.pac_trials > 0) {
    const PacEstimate pac = estimate_pac_epsilon(
        model, test_set.meta.k, test_set.meta.channel_model, test_set.meta.oracle, args.pac_delta,
        args.pac_trials, SeedKey{args.seed, args.stream}.derive(3));
    doc["pac"] = {{"delta", pac.delta}, {"epsilon_hat", pac.epsilon_hat}, {"trials", pac.trials}};
  }
  write_json_artifact(doc, ctx.resolve(args.out), "eval-gap");
  ctx.note_artifact(args.out);
  ctx.write_manifest();

  std::printf("eval-gap: train %.6f gen %.6f total %.6f (oracle %s)\n", gaps.train_gap,
              gaps.gen_gap, gaps.total_gap, gaps.oracle_name.c_str());
}

// ---- sweeps ----

struct SweepArgs {
  std::vector<int> sizes;  // --ks or --ms
  int m_train = 2000;
  int k = 5;
  int seeds = 3;
  int n_test = 500;
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-3;
  std::string scheme = "supervised";
  std::string oracle = "wmmse";
  std::string channel = "rayleigh_iid";
  int mlp_hidden = 64;
  int mlp_depth = 2;
  int gnn_hidden = 32;
  int gnn_rounds = 2;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  int jobs = 0;
  std::string out;
  std::string out_dir = default_out_dir();
};

SweepConfig sweep_config(const SweepArgs& args) {
  SweepConfig cfg;
  cfg.seeds = args.seeds;
  cfg.n_test = args.n_test;
  cfg.epochs = args.epochs;
  cfg.batch_size = args.batch_size;
  cfg.learning_rate = args.lr;
  cfg.scheme = named_flag("--scheme", [&] { return scheme_from_string(args.scheme); });
  cfg.oracle = named_flag("--oracle", [&] { return label_oracle_from_string(args.oracle); });
  cfg.channel = named_flag("--channel", [&] { return channel_model_from_string(args.channel); });
  cfg.mlp.hidden_dim = args.mlp_hidden;
  cfg.mlp.depth = args.mlp_depth;
  cfg.gnn.hidden_dim = args.gnn_hidden;
  cfg.gnn.num_rounds = args.gnn_rounds;
  cfg.key = SeedKey{args.seed, args.stream};
  cfg.jobs = args.jobs;
  return cfg;
}

json sweep_args_json(const SweepArgs& args, const char* sizes_key) {
  return {{sizes_key, args.sizes},     {"m", args.m_train},
          {"k", args.k},               {"seeds", args.seeds},
          {"n_test", args.n_test},     {"epochs", args.epochs},
          {"batch_size", args.batch_size}, {"lr", args.lr},
          {"scheme", args.scheme},     {"oracle", args.oracle},
          {"channel", args.channel},   {"mlp_hidden", args.mlp_hidden},
          {"mlp_depth", args.mlp_depth},   {"gnn_hidden", args.gnn_hidden},
          {"gnn_rounds", args.gnn_rounds}, {"seed", args.seed},
          {"stream", args.stream},     {"jobs", args.jobs},
          {"out", args.out},           {"out_dir", args.out_dir}};
}

void print_cell_failures(const std::vector<CellResult>& cells) {
  for (const CellResult& cell : cells)
    if (cell.failed)
      std::printf("  cell size=%d seed=%d arch=%s FAILED: %s\n", cell.size, cell.seed,
                  to_string(cell.arch).c_str(), cell.failure.c_str());
}

void run_sweep_k(SweepArgs args) {
  if (args.out.empty()) args.out = "sweep_k.csv";
  const std::vector<int>& ks = args.sizes;
  const SweepConfig cfg = sweep_config(args);

  RunContext ctx = make_context("sweep-k", args.out_dir);
  ctx.config = sweep_args_json(args, "ks");

  const ScalingReport report = sweep_k(ks, args.m_train, cfg);
  write_sweep_k_csv(report, ctx.resolve(args.out).string());
  ctx.note_artifact(args.out);
  ctx.write_manifest();

  for (const ScalingRow& row : report.rows)
    std::printf("sweep-k: k=%-3d mlp %.4f gnn %.4f ratio %.3f (%d seeds)\n", row.k, row.gap_mlp,
                row.gap_gnn, row.ratio, row.seeds_used);
  if (std::isfinite(report.fitted_ratio_exponent))
    std::printf("sweep-k: fitted ratio exponent %.3f; witness mlp dev %.3g, gnn dev %.3g\n",
                report.fitted_ratio_exponent, report.witness.mlp_deviation,
                report.witness.gnn_deviation);
  print_cell_failures(report.cells);
}

void run_sweep_m(SweepArgs args) {
  if (args.out.empty()) args.out = "sweep_m.csv";
  const std::vector<int>& ms = args.sizes;
  const SweepConfig cfg = sweep_config(args);

  RunContext ctx = make_context("sweep-m", args.out_dir);
  ctx.config = sweep_args_json(args, "ms");

  const SampleComplexityReport report = sweep_m(ms, args.k, cfg);
  write_sweep_m_csv(report, ctx.resolve(args.out).string());
  ctx.note_artifact(args.out);
  ctx.write_manifest();

  for (const SampleRow& row : report.rows)
    std::printf("sweep-m: m=%-5d gen_gap %.5f (%d seeds)\n", row.m, row.gen_gap_median,
                row.seeds_used);
  if (std::isfinite(report.fitted_slope))
    std::printf("sweep-m: fitted log-log slope %.3f\n", report.fitted_slope);
  print_cell_failures(report.cells);
}

// ---- demos ----

struct DemoArgs {
  std::string which = "all";
  int ndim = 8;
  int seeds = 5;
  int epochs = 400;
  double lr = 1e-2;
  int n_train = 64;
  int hidden = 32;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string out_dir = default_out_dir();
};

void run_demos(const DemoArgs& args) {
  if (args.which != "power" && args.which != "eigen" && args.which != "all")
    throw ConfigError("--which: expected power, eigen, or all, got '" + args.which + "'");

  RunContext ctx = make_context("demos", args.out_dir);
  ctx.config = {{"which", args.which}, {"ndim", args.ndim},     {"seeds", args.seeds},
                {"epochs", args.epochs}, {"lr", args.lr},       {"n_train", args.n_train},
                {"hidden", args.hidden}, {"seed", args.seed},   {"stream", args.stream},
                {"out_dir", args.out_dir}};

  if (args.which == "power" || args.which == "all") {
    const PowerDemoReport rep = demo_loss_mismatch_power();
    write_power_demo_json(rep, ctx.resolve("power_demo.json").string());
    ctx.note_artifact("power_demo.json");
    for (const PowerCandidate& c : rep.candidates)
      std::printf("demos/power: %-24s mse %.3f rate %.6f\n", c.name.c_str(), c.mse, c.rate);
    std::printf("demos/power: inversion holds = %s\n", rep.inversion_holds ? "yes" : "no");
  }
  if (args.which == "eigen" || args.which == "all") {
    EigenDemoConfig cfg;
    cfg.epochs = args.epochs;
    cfg.learning_rate = args.lr;
    cfg.n_train = args.n_train;
    cfg.hidden = args.hidden;
    cfg.key = SeedKey{args.seed, args.stream};
    const EigenDemoReport rep = demo_loss_mismatch_eigen(args.ndim, args.seeds, cfg);
    write_eigen_demo_json(rep, ctx.resolve("eigen_demo.json").string());
    ctx.note_artifact("eigen_demo.json");
    std::printf("demos/eigen: median output norm %.4f, median quotient ratio %.4f\n",
                rep.median_output_norm, rep.median_quotient_ratio);
  }
  ctx.write_manifest();
}

// ---- oamp ----

struct OampArgs {
  int ntx = 4;
  int mrx = 4;
  std::vector<double> snrs{10.0};
  int layers = 4;
  bool do_train = false;
  int symbols = 100000;
  int train_size = 1500;
  int epochs = 40;
  double lr = 5e-3;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string out = "ser.csv";
  std::string report = "oamp_report.json";
  std::string out_dir = default_out_dir();
};

void run_oamp(const OampArgs& args) {
  const std::vector<double>& snrs = args.snrs;
  if (snrs.empty()) throw ConfigError("--snr: empty list");
  if (args.ntx < 1 || args.mrx < 1) throw ConfigError("--ntx/--mrx: antenna counts must be >= 1");
  if (args.symbols < args.ntx * 1000)
    throw ConfigError("--symbols: need at least 1000 trials' worth of symbols");

  RunContext ctx = make_context("oamp", args.out_dir);
  ctx.config = {{"ntx", args.ntx},        {"mrx", args.mrx},       {"snr", args.snrs},
                {"layers", args.layers},  {"train", args.do_train}, {"symbols", args.symbols},
                {"train_size", args.train_size}, {"epochs", args.epochs}, {"lr", args.lr},
                {"seed", args.seed},      {"stream", args.stream}, {"out", args.out},
                {"report", args.report},  {"out_dir", args.out_dir}};

  const SeedKey base{args.seed, args.stream};
  const int n_trials = args.symbols / args.ntx;
  std::vector<SerRow> rows;
  json rep;
  rep["snr"] = json::array();

  for (std::size_t s = 0; s < snrs.size(); ++s) {
    const double snr_db = snrs[s];
    const SeedKey snr_key = base.derive(10 + s);
    const OampParams fixed = default_oamp_params(args.layers);
    const SerResult fixed_ser =
        ser_eval(make_oamp_detector(fixed), args.ntx, args.mrx, snr_db, n_trials,
                 snr_key.derive(1));
    rows.push_back({snr_db, "oamp_fixed", fixed_ser.ser, fixed_ser.ci_half_width,
                    fixed_ser.trials});
    json entry = {{"snr_db", snr_db}, {"fixed_ser", fixed_ser.ser}};

    if (args.do_train) {
      std::vector<MimoInstance> train_data;
      train_data.reserve(static_cast<std::size_t>(args.train_size));
      for (int t = 0; t < args.train_size; ++t)
        train_data.push_back(sample_mimo(args.ntx, args.mrx, snr_db,
                                         snr_key.derive(2).derive(streams::kTrial,
                                                                  static_cast<std::uint64_t>(t))));
      OampTrainConfig tc;
      tc.epochs = args.epochs;
      tc.learning_rate = args.lr;
      tc.seed = snr_key.derive(3);
      const OampTrainReport trained = train_oamp(train_data, args.layers, tc);

      const PairedSer pair = ser_paired(make_oamp_detector(trained.params),
                                        make_oamp_detector(fixed), args.ntx, args.mrx, snr_db,
                                        n_trials, snr_key.derive(1));
      rows.push_back({snr_db, "oamp_learned", pair.a.ser, pair.a.ci_half_width,
                      pair.a.trials});
      entry["learned_ser"] = pair.a.ser;
      entry["paired_diff"] = pair.mean_diff;
      entry["paired_ci"] = pair.ci_half_width;
      entry["best_epoch"] = trained.best_epoch;
      entry["gamma"] = std::vector<double>(trained.params.gamma.data(),
                                           trained.params.gamma.data() + args.layers);
      entry["theta"] = std::vector<double>(trained.params.theta.data(),
                                           trained.params.theta.data() + args.layers);
      std::printf("oamp: snr %.1f dB learned %.5f vs fixed %.5f (diff %.3g, ci %.3g)\n", snr_db,
                  pair.a.ser, pair.b.ser, pair.mean_diff, pair.ci_half_width);
    } else {
      std::printf("oamp: snr %.1f dB fixed ser %.5f (ci %.3g)\n", snr_db, fixed_ser.ser,
                  fixed_ser.ci_half_width);
    }
    rep["snr"].push_back(std::move(entry));
  }

  write_ser_csv(rows, ctx.resolve(args.out).string());
  ctx.note_artifact(args.out);
  write_json_artifact(rep, ctx.resolve(args.report), "oamp");
  ctx.note_artifact(args.report);
  ctx.write_manifest();
}

void add_seed_flags(CLI::App* cmd, std::uint64_t& seed, std::uint64_t& stream) {
  cmd->add_option("--seed", seed, "Master seed");
  cmd->add_option("--stream", stream, "Seed stream index");
}

void add_out_dir_flag(CLI::App* cmd, std::string& out_dir) {
  cmd->add_option("--out-dir", out_dir,
                  "Output directory (default: $RRM_OUT_DIR or the working directory)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-to-optimize lab for wireless resource management"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key-value config file; sections name subcommands, "
                                 "command-line flags override file values");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "Sample an interference-network dataset");
  gen->add_option("--k", gen_args.k, "Users per instance")->check(CLI::PositiveNumber);
  gen->add_option("--n", gen_args.n, "Instance count")->check(CLI::PositiveNumber);
  gen->add_option("--channel", gen_args.channel, "rayleigh_iid or geometric");
  gen->add_option("--oracle", gen_args.oracle, "none, wmmse, or brute_force");
  add_seed_flags(gen, gen_args.seed, gen_args.stream);
  gen->add_option("--out", gen_args.out, "Dataset file name");
  add_out_dir_flag(gen, gen_args.out_dir);
  gen->callback([&] { run_gen_data(gen_args); });

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "Train a power-allocation model");
  tr->add_option("--arch", train_args.arch, "mlp or mpgnn");
  tr->add_option("--scheme", train_args.scheme, "supervised or unsupervised");
  tr->add_option("--data", train_args.data, "Training dataset (JSON lines)")->required();
  tr->add_option("--epochs", train_args.epochs)->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", train_args.batch_size)->check(CLI::PositiveNumber);
  tr->add_option("--lr", train_args.lr, "Learning rate");
  tr->add_option("--optimizer", train_args.optimizer, "adam or sgd");
  tr->add_option("--early-stop-tol", train_args.early_stop_tol);
  add_seed_flags(tr, train_args.seed, train_args.stream);
  tr->add_option("--hidden", train_args.hidden, "Hidden width");
  tr->add_option("--depth", train_args.depth, "MLP depth (affine+relu pairs)");
  tr->add_option("--rounds", train_args.rounds, "GNN message-passing rounds");
  tr->add_flag("--unshared", train_args.unshared, "Per-round GNN parameters");
  tr->add_option("--out", train_args.out, "Checkpoint file name");
  tr->add_option("--report", train_args.report, "Training report file name");
  add_out_dir_flag(tr, train_args.out_dir);
  tr->callback([&] { run_train(train_args); });

  EvalGapArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval-gap", "Gap decomposition of a trained model");
  ev->add_option("--model", eval_args.model, "Checkpoint file")->required();
  ev->add_option("--train-data", eval_args.train_data, "Labeled train set")->required();
  ev->add_option("--test-data", eval_args.test_data, "Labeled test set")->required();
  ev->add_option("--pac-trials", eval_args.pac_trials,
                 "Fresh trials for the PAC epsilon estimate (0 = skip)");
  ev->add_option("--pac-delta", eval_args.pac_delta, "PAC failure probability");
  add_seed_flags(ev, eval_args.seed, eval_args.stream);
  ev->add_option("--out", eval_args.out, "Report file name");
  add_out_dir_flag(ev, eval_args.out_dir);
  ev->callback([&] { run_eval_gap(eval_args); });

  SweepArgs k_args;
  CLI::App* sk = app.add_subcommand("sweep-k", "User-count sweep: MLP vs GNN optimality gaps");
  sk->add_option("--ks", k_args.sizes, "Comma-separated user counts")
      ->required()
      ->delimiter(',');
  sk->add_option("--m", k_args.m_train, "Training samples per cell")->check(CLI::PositiveNumber);
  sk->add_option("--seeds", k_args.seeds, "Replicates per cell (>= 3)");
  sk->add_option("--n-test", k_args.n_test)->check(CLI::PositiveNumber);
  sk->add_option("--epochs", k_args.epochs)->check(CLI::PositiveNumber);
  sk->add_option("--batch-size", k_args.batch_size)->check(CLI::PositiveNumber);
  sk->add_option("--lr", k_args.lr);
  sk->add_option("--scheme", k_args.scheme, "supervised or unsupervised");
  sk->add_option("--oracle", k_args.oracle, "wmmse or brute_force");
  sk->add_option("--channel", k_args.channel);
  sk->add_option("--mlp-hidden", k_args.mlp_hidden);
  sk->add_option("--mlp-depth", k_args.mlp_depth);
  sk->add_option("--gnn-hidden", k_args.gnn_hidden);
  sk->add_option("--gnn-rounds", k_args.gnn_rounds);
  add_seed_flags(sk, k_args.seed, k_args.stream);
  sk->add_option("--jobs", k_args.jobs, "Concurrent sweep cells (0 = hardware)");
  sk->add_option("--out", k_args.out, "CSV file name (default sweep_k.csv)");
  add_out_dir_flag(sk, k_args.out_dir);
  sk->callback([&] { run_sweep_k(k_args); });

  SweepArgs m_args;
  CLI::App* sm = app.add_subcommand("sweep-m", "Training-set-size sweep: GNN generalization gap");
  sm->add_option("--ms", m_args.sizes, "Comma-separated training-set sizes")
      ->required()
      ->delimiter(',');
  sm->add_option("--k", m_args.k, "Users per instance")->check(CLI::PositiveNumber);
  sm->add_option("--seeds", m_args.seeds, "Replicates per cell (>= 3)");
  sm->add_option("--n-test", m_args.n_test)->check(CLI::PositiveNumber);
  sm->add_option("--epochs", m_args.epochs)->check(CLI::PositiveNumber);
  sm->add_option("--batch-size", m_args.batch_size)->check(CLI::PositiveNumber);
  sm->add_option("--lr", m_args.lr);
  sm->add_option("--scheme", m_args.scheme, "supervised or unsupervised");
  sm->add_option("--oracle", m_args.oracle, "wmmse or brute_force");
  sm->add_option("--channel", m_args.channel);
  sm->add_option("--gnn-hidden", m_args.gnn_hidden);
  sm->add_option("--gnn-rounds", m_args.gnn_rounds);
  add_seed_flags(sm, m_args.seed, m_args.stream);
  sm->add_option("--jobs", m_args.jobs, "Concurrent sweep cells (0 = hardware)");
  sm->add_option("--out", m_args.out, "CSV file name (default sweep_m.csv)");
  add_out_dir_flag(sm, m_args.out_dir);
  sm->callback([&] { run_sweep_m(m_args); });

  DemoArgs demo_args;
  CLI::App* dm = app.add_subcommand("demos", "Loss-mismatch demonstrations");
  dm->add_option("--which", demo_args.which, "power, eigen, or all");
  dm->add_option("--ndim", demo_args.ndim, "Eigen demo dimension")->check(CLI::PositiveNumber);
  dm->add_option("--seeds", demo_args.seeds)->check(CLI::PositiveNumber);
  dm->add_option("--epochs", demo_args.epochs)->check(CLI::PositiveNumber);
  dm->add_option("--lr", demo_args.lr);
  dm->add_option("--ntrain", demo_args.n_train)->check(CLI::PositiveNumber);
  dm->add_option("--hidden", demo_args.hidden)->check(CLI::PositiveNumber);
  add_seed_flags(dm, demo_args.seed, demo_args.stream);
  add_out_dir_flag(dm, demo_args.out_dir);
  dm->callback([&] { run_demos(demo_args); });

  OampArgs oamp_args;
  CLI::App* om = app.add_subcommand("oamp", "MIMO detector: SER sweep and unrolled training");
  om->add_option("--ntx", oamp_args.ntx, "Transmit antennas")->check(CLI::PositiveNumber);
  om->add_option("--mrx", oamp_args.mrx, "Receive antennas")->check(CLI::PositiveNumber);
  om->add_option("--snr", oamp_args.snrs, "SNR in dB (comma-separated list allowed)")
      ->delimiter(',');
  om->add_option("--layers", oamp_args.layers)->check(CLI::PositiveNumber);
  om->add_flag("--train", oamp_args.do_train, "Also train (gamma, theta) and report paired SER");
  om->add_option("--symbols", oamp_args.symbols, "Symbols per SER estimate");
  om->add_option("--train-size", oamp_args.train_size)->check(CLI::PositiveNumber);
  om->add_option("--epochs", oamp_args.epochs)->check(CLI::PositiveNumber);
  om->add_option("--lr", oamp_args.lr);
  add_seed_flags(om, oamp_args.seed, oamp_args.stream);
  om->add_option("--out", oamp_args.out, "SER CSV file name");
  om->add_option("--report", oamp_args.report, "JSON report file name");
  add_out_dir_flag(om, oamp_args.out_dir);
  om->callback([&] { run_oamp(oamp_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
