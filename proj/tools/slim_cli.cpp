// slim: command-line front end.
//
//   slim power   independence-test power over a pattern x alpha grid
//   slim ablate  slice-method power as a function of the slice count
//   slim train   infomin training (one run per beta) with evaluation report
//   slim eval    dependence metrics between a representation and T
//
// Every command accepts --seed, --out-dir, --config (INI), --manifest (replay
// a previous run), --set section.key=value and --timing. Each run writes
// manifest.json and resolved.ini next to its outputs. Without --timing all
// timing columns in CSV outputs are written as 0, so reruns are byte-identical.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "settings.hpp"

#include "slim/baselines.hpp"
#include "slim/cca.hpp"
#include "slim/config.hpp"
#include "slim/data.hpp"
#include "slim/harness.hpp"
#include "slim/infomin.hpp"
#include "slim/nn.hpp"
#include "slim/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <tuple>

namespace fs = std::filesystem;
using nlohmann::json;

namespace slim::cli {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Typed views of the resolved configuration. Any failure here is a usage
// error: the values are malformed or out of range.

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size() && text.find('-') == std::string::npos) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("seed must be a non-negative integer, got '" + text + "'");
}

std::vector<Index> index_list(const Config& c, const std::string& key) {
  std::vector<Index> out;
  for (auto v : c.int_list(key)) {
    if (v < 1) throw UsageError(key + " entries must be positive");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

struct Common {
  std::uint64_t seed = 0;
  fs::path out_dir;
  bool record_timing = false;
};

Common common_from(const Config& c) {
  Common out;
  out.seed = parse_seed(c.str("run.seed"));
  out.out_dir = c.str("run.out_dir");
  if (out.out_dir.empty()) throw UsageError("output directory must not be empty");
  out.record_timing = c.flag("run.record_timing");
  return out;
}

RenyiConfig renyi_from(const Config& c) {
  RenyiConfig r;
  r.hidden = index_list(c, "renyi.hidden");
  r.activation = nn::activation_from_string(c.str("renyi.activation"));
  r.dropout = c.num("renyi.dropout");
  r.learning_rate = c.num("renyi.learning_rate");
  r.batch_size = static_cast<Index>(c.integer("renyi.batch_size"));
  r.max_epochs = static_cast<int>(c.integer("renyi.max_epochs"));
  r.patience = static_cast<int>(c.integer("renyi.patience"));
  r.validation_fraction = c.num("renyi.validation_fraction");
  if (!(r.dropout >= 0.0 && r.dropout < 1.0)) throw UsageError("renyi.dropout must lie in [0,1)");
  if (!(r.validation_fraction > 0.0 && r.validation_fraction < 1.0))
    throw UsageError("renyi.validation_fraction must lie in (0,1)");
  if (r.batch_size < 2 || r.max_epochs < 1 || r.patience < 1 || !(r.learning_rate > 0.0))
    throw UsageError("renyi batch size, epochs, patience and learning rate must be positive");
  return r;
}

TestProtocol protocol_from(const Config& c, std::uint64_t seed) {
  TestProtocol p;
  p.fit_size = static_cast<Index>(c.integer("protocol.fit_size"));
  p.test_size = static_cast<Index>(c.integer("protocol.test_size"));
  p.repeats = static_cast<int>(c.integer("protocol.repeats"));
  p.significance = c.num("protocol.significance");
  p.permutations = static_cast<int>(c.integer("protocol.permutations"));
  p.independent = c.flag("protocol.independent");
  p.slices = static_cast<Index>(c.integer("slice.count"));
  p.poly_order = static_cast<int>(c.integer("slice.order"));
  p.ridge = c.num("slice.ridge");
  p.seed = seed;
  if (p.poly_order < 1) throw UsageError("slice.order must be >= 1");
  if (!(p.ridge >= 0.0)) throw UsageError("slice.ridge must be >= 0");
  if (p.permutations < 20) throw UsageError("protocol.permutations must be >= 20 for a stable null");
  try {
    p.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return p;
}

std::vector<Pattern> patterns_from(const std::vector<std::string>& names) {
  std::vector<Pattern> out;
  for (const auto& n : names) out.push_back(pattern_from_string(n));
  if (out.empty()) throw UsageError("no patterns selected");
  return out;
}

std::vector<double> alphas_from(const std::vector<double>& alphas) {
  if (alphas.empty()) throw UsageError("no alphas selected");
  for (double a : alphas)
    if (!(a >= 0.0 && a < 1.0)) throw UsageError("alpha values must lie in [0,1)");
  return alphas;
}

InfominConfig infomin_from(const Config& c, std::uint64_t seed) {
  InfominConfig cfg;
  cfg.beta = c.num("train.beta");
  cfg.n_prime = static_cast<Index>(c.integer("train.n_prime"));
  cfg.iterations = static_cast<int>(c.integer("train.iterations"));
  cfg.slices = static_cast<Index>(c.integer("slice.count"));
  cfg.poly_order = static_cast<int>(c.integer("slice.order"));
  cfg.ridge = c.num("slice.ridge");
  cfg.batch_size = static_cast<Index>(c.integer("train.batch_size"));
  cfg.learning_rate = c.num("train.learning_rate");
  cfg.optimizer = nn::optimizer_from_string(c.str("train.optimizer"));
  cfg.utility = utility_from_string(c.str("train.utility"));
  cfg.refine.enabled = c.flag("refine.enabled");
  cfg.refine.threshold = c.num("refine.threshold");
  cfg.refine.step = c.num("refine.step");
  cfg.refine.steps = static_cast<int>(c.integer("refine.steps"));
  cfg.seed = seed;
  if (cfg.beta < 0.0) throw UsageError("train.beta must be >= 0");
  if (cfg.iterations < 0) throw UsageError("train.iterations must be >= 0");
  if (cfg.slices < 1 || cfg.poly_order < 1) throw UsageError("slice.count and slice.order must be >= 1");
  if (cfg.refine.steps < 1 || cfg.refine.steps > 3) throw UsageError("refine.steps must lie in [1,3]");
  return cfg;
}

NetworkShape shape_from(const Config& c) {
  NetworkShape s;
  s.encoder_hidden = c.str("net.encoder_hidden").empty() ? std::vector<Index>{} : index_list(c, "net.encoder_hidden");
  s.head_hidden = c.str("net.head_hidden").empty() ? std::vector<Index>{} : index_list(c, "net.head_hidden");
  s.z_dim = static_cast<Index>(c.integer("net.z_dim"));
  if (s.z_dim < 1) throw UsageError("net.z_dim must be >= 1");
  return s;
}

template <typename F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Run bookkeeping.

struct RunLog {
  std::string command;
  std::vector<std::string> argv;
  std::string started_at = utc_now();
  Clock::time_point start = Clock::now();
  json timings = json::object();
  std::vector<std::string> outputs;

  fs::path output(const Common& common, const std::string& name) {
    outputs.push_back(name);
    return common.out_dir / name;
  }
};

void write_manifest(const Common& common, const Config& cfg, RunLog& log) {
  json config = json::object();
  for (const auto& [k, v] : cfg.values()) config[k] = v;
  log.timings["total_seconds"] = seconds_since(log.start);
  log.outputs.push_back("resolved.ini");
  json j = {{"command", log.command},
            {"version", artifact_version()},
            {"seed", common.seed},
            {"out_dir", common.out_dir.string()},
            {"deterministic", !common.record_timing},
            {"argv", log.argv},
            {"started_at", log.started_at},
            {"finished_at", utc_now()},
            {"config", config},
            {"timings", log.timings},
            {"outputs", log.outputs}};
  {
    std::ofstream os(common.out_dir / "resolved.ini");
    os << "; resolved configuration of a '" << log.command << "' run\n" << cfg.to_ini();
  }
  std::ofstream os(common.out_dir / "manifest.json");
  if (!os) throw Error("cannot write manifest in " + common.out_dir.string());
  os << j.dump(2) << '\n';
}

void prepare_out_dir(const Common& common) {
  std::error_code ec;
  fs::create_directories(common.out_dir, ec);
  if (ec) throw Error("cannot create output directory " + common.out_dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Datasets for train / eval.

Dataset load_dataset(const Config& c, std::uint64_t seed) {
  const auto csv = c.str("data.csv");
  if (!csv.empty()) {
    const auto schema_path = c.str("data.schema");
    if (schema_path.empty()) throw UsageError("--data requires --schema");
    const auto schema = load_schema(schema_path);
    return load_csv(csv, schema, c.flag("data.standardize"));
  }
  const auto kind = c.str("data.synthetic");
  if (kind != "fairness-toy") throw UsageError("unknown synthetic dataset '" + kind + "' (expected fairness-toy)");
  FairnessToySpec spec;
  spec.latent_dim = static_cast<Index>(c.integer("toy.latent_dim"));
  spec.protected_dim = static_cast<Index>(c.integer("toy.protected_dim"));
  spec.x_dim = static_cast<Index>(c.integer("toy.x_dim"));
  spec.x_noise = c.num("toy.x_noise");
  spec.y_noise = c.num("toy.y_noise");
  spec.protected_is_noise = c.flag("toy.protected_is_noise");
  spec.seed = seed;
  const auto rows = static_cast<Index>(c.integer("data.rows"));
  const auto n_train = static_cast<Index>(c.integer("data.train_size"));
  const auto n_test = static_cast<Index>(c.integer("data.test_size"));
  if (n_train + n_test > rows) throw UsageError("data.train_size + data.test_size exceed data.rows");
  Dataset d = generate_fairness_toy(spec, rows);
  assign_split(d, n_train, n_test, seed);
  return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d) {
  if (d.train_idx.empty() || d.test_idx.size() < 2) throw InvalidData("dataset has no usable train/test split");
  return {d.subset(d.train_idx), d.subset(d.test_idx)};
}

MatrixXd permute_rows(const MatrixXd& m, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  MatrixXd out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(order[static_cast<std::size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_power(const Config& cfg, RunLog& log) {
  const auto [common, protocol, patterns, alphas, checkpoint] = as_usage([&] {
    const Common common = common_from(cfg);
    TestProtocol protocol = protocol_from(cfg, common.seed);
    protocol.renyi = renyi_from(cfg);
    protocol.methods.clear();
    for (const auto& m : cfg.list("power.methods")) protocol.methods.push_back(method_from_string(m));
    protocol.validate();
    const auto cp = cfg.str("power.checkpoint");
    return std::make_tuple(common, protocol, patterns_from(cfg.list("power.patterns")),
                           alphas_from(cfg.num_list("power.alphas")),
                           cp.empty() ? std::optional<fs::path>{} : std::optional<fs::path>{cp});
  });
  prepare_out_dir(common);
  const auto rows = run_power_experiment(patterns, alphas, protocol, checkpoint);

  write_results_csv(log.output(common, "results.csv"), rows, common.record_timing);
  json cells = json::array();
  for (const auto& r : rows)
    cells.push_back({{"pattern", to_string(r.pattern)},
                     {"alpha", r.alpha},
                     {"method", to_string(r.method)},
                     {"fit_seconds", r.fit_seconds}});
  log.timings["cells"] = cells;
  for (auto p : patterns) {
    write_plot_csv(log.output(common, "plot_" + to_string(p) + ".csv"), rows, p);
    write_power_svg(log.output(common, "power_" + to_string(p) + ".svg"), rows, p);
  }
  write_manifest(common, cfg, log);
  std::cout << "power: " << rows.size() << " rows -> " << (common.out_dir / "results.csv").string() << '\n';
  return kExitOk;
}

int cmd_ablate(const Config& cfg, RunLog& log) {
  const auto [common, protocol, grid, pattern, alpha, seeds] = as_usage([&] {
    const Common common = common_from(cfg);
    TestProtocol protocol = protocol_from(cfg, common.seed);
    protocol.methods = {Method::slice};
    const auto seeds = cfg.integer("ablate.seeds");
    if (seeds < 1) throw UsageError("ablate.seeds must be >= 1");
    return std::make_tuple(common, protocol, index_list(cfg, "ablate.slice_grid"),
                           pattern_from_string(cfg.str("ablate.pattern")),
                           alphas_from({cfg.num("ablate.alpha")}).front(), seeds);
  });
  prepare_out_dir(common);
  std::vector<AblationRow> rows;
  for (long long s = 0; s < seeds; ++s) {
    TestProtocol p = protocol;
    p.seed = common.seed + static_cast<std::uint64_t>(s);
    for (const auto& r : ablate_slices(grid, pattern, alpha, p)) rows.push_back({p.seed, r});
  }
  const auto summary = summarize_ablation(rows);
  write_ablation_csv(log.output(common, "ablation.csv"), rows, common.record_timing);
  write_ablation_summary_csv(log.output(common, "ablation_summary.csv"), summary, common.record_timing);
  write_ablation_svg(log.output(common, "ablation.svg"), summary,
                     "t(a) = " + to_string(pattern) + ", alpha = " + format_number(alpha));
  json t = json::array();
  for (const auto& a : summary) t.push_back({{"S", a.slices}, {"mean_fit_seconds", a.mean_fit_seconds}});
  log.timings["slices"] = t;
  write_manifest(common, cfg, log);
  std::cout << "ablate: " << rows.size() << " rows -> " << (common.out_dir / "ablation.csv").string() << '\n';
  return kExitOk;
}

int cmd_train(const Config& cfg, RunLog& log) {
  const auto [common, base_cfg, shape, betas, renyi, tolerance] = as_usage([&] {
    const Common common = common_from(cfg);
    const InfominConfig base_cfg = infomin_from(cfg, common.seed);
    std::vector<double> betas =
        cfg.str("train.beta_grid").empty() ? std::vector<double>{base_cfg.beta} : cfg.num_list("train.beta_grid");
    for (double b : betas)
      if (b < 0.0) throw UsageError("beta values must be >= 0");
    const double tolerance = cfg.num("train.tolerance");
    if (!(tolerance >= 0.0 && tolerance < 1.0)) throw UsageError("train.tolerance must lie in [0,1)");
    return std::make_tuple(common, base_cfg, shape_from(cfg), betas, renyi_from(cfg), tolerance);
  });
  const Dataset data = load_dataset(cfg, common.seed);
  const auto [train, test] = split(data);
  prepare_out_dir(common);

  const bool classify = base_cfg.utility == Utility::classification_ce;
  const Index out_dim = classify ? train.n_classes : train.y.cols();
  Rng init = substream(common.seed, "train.init");
  const nn::Mlp encoder0 = make_encoder(train.x.cols(), shape, init);
  const nn::Mlp head0 = make_head(out_dim, shape, init);

  RenyiConfig eval_renyi = renyi;
  eval_renyi.seed = substream(common.seed, "train.eval")();
  auto evaluate = [&](const TrainResult& r) {
    const MatrixXd z = r.encoder.predict(test.x);
    return std::make_pair(utility_score(r.encoder, r.head, test, base_cfg.utility),
                          fit_neural_renyi(z, test.t, eval_renyi).validation_rho);
  };

  auto start = Clock::now();
  const TrainResult plain = train_plain(train, encoder0, head0, base_cfg);
  if (plain.diverged) throw TrainingDiverged("plain reference run: " + plain.message);
  const double plain_utility = utility_score(plain.encoder, plain.head, test, base_cfg.utility);
  log.timings["plain_train_seconds"] = seconds_since(start);

  std::vector<BetaRun> runs;
  BetaRun reference;
  reference.beta = 0.0;
  reference.utility = plain_utility;
  runs.push_back(reference);
  json beta_timings = json::array();
  bool diverged = false;
  for (double beta : betas) {
    InfominConfig c = base_cfg;
    c.beta = beta;
    start = Clock::now();
    BetaRun run;
    run.beta = beta;
    run.result = train_infomin(train, encoder0, head0, c);
    const double train_seconds = seconds_since(start);
    std::tie(run.utility, run.renyi_zt) = evaluate(run.result);
    double total = 0;
    for (const auto& rec : run.result.history.records) total += rec.max_step_seconds;
    const auto n = run.result.history.records.size();
    run.mean_max_step_seconds = n ? total / static_cast<double>(n) : 0.0;
    if (run.result.diverged) {
      diverged = true;
      std::cerr << "train: beta " << beta << " diverged: " << run.result.message << '\n';
    }
    const std::string tag = "beta" + format_number(beta);
    nn::save_checkpoint(run.result.encoder, log.output(common, "encoder_" + tag + ".ckpt"));
    nn::save_checkpoint(run.result.head, log.output(common, "head_" + tag + ".ckpt"));
    write_history_csv(log.output(common, "history_" + tag + ".csv"), run.result.history, common.record_timing);
    beta_timings.push_back({{"beta", beta},
                            {"train_seconds", train_seconds},
                            {"mean_max_step_seconds", run.mean_max_step_seconds}});
    runs.push_back(std::move(run));
  }
  log.timings["betas"] = beta_timings;

  const std::size_t chosen = select_beta(runs, tolerance);
  {
    std::ofstream os(log.output(common, "report.csv"), std::ios::binary);
    CsvWriter w(os);
    w.row({"beta", "utility", "plain_utility", "utility_ratio", "renyi_zt", "mean_max_step_seconds", "iterations",
           "diverged", "selected"});
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const auto& r = runs[i];
      const bool selected = chosen != 0 ? i == chosen : r.beta == 0.0;
      w.row({format_number(r.beta), format_number(r.utility), format_number(plain_utility),
             format_number(plain_utility != 0.0 ? r.utility / plain_utility : 0.0), format_number(r.renyi_zt),
             format_number(common.record_timing ? r.mean_max_step_seconds : 0.0),
             std::to_string(r.result.history.records.size()), r.result.diverged ? "1" : "0", selected ? "1" : "0"});
    }
  }
  write_manifest(common, cfg, log);
  std::cout << "train: " << betas.size() << " beta value(s) -> " << (common.out_dir / "report.csv").string() << '\n';
  return diverged ? kExitRuntime : kExitOk;
}

int cmd_eval(const Config& cfg, RunLog& log) {
  const auto [common, slice_count, poly, ridge, renyi, permutations, significance, checkpoint] = as_usage([&] {
    const Common common = common_from(cfg);
    const auto count = static_cast<Index>(cfg.integer("slice.count"));
    const PolyConfig poly{static_cast<int>(cfg.integer("slice.order"))};
    const double ridge = cfg.num("slice.ridge");
    const auto perms = static_cast<int>(cfg.integer("eval.permutations"));
    const double sig = cfg.num("eval.significance");
    if (count < 1 || poly.order < 1) throw UsageError("slice.count and slice.order must be >= 1");
    if (perms < 20) throw UsageError("eval.permutations must be >= 20");
    if (!(sig > 0.0 && sig < 1.0)) throw UsageError("eval.significance must lie in (0,1)");
    return std::make_tuple(common, count, poly, ridge, renyi_from(cfg), perms, sig, cfg.str("eval.checkpoint"));
  });

  std::optional<nn::Mlp> encoder;
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw Error("checkpoint not found: " + checkpoint);
    encoder = nn::load_checkpoint(checkpoint);
  }
  const Dataset data = load_dataset(cfg, common.seed);
  const auto [train, test] = split(data);
  if (encoder && encoder->in_dim() != data.x.cols())
    throw InvalidArgument("checkpoint expects " + std::to_string(encoder->in_dim()) + " features, dataset has " +
                          std::to_string(data.x.cols()));
  prepare_out_dir(common);

  const MatrixXd z_fit = encoder ? encoder->predict(train.x) : train.x;
  const MatrixXd z_eval = encoder ? encoder->predict(test.x) : test.x;

  auto start = Clock::now();
  const auto slices = sample_slices<double>(slice_count, z_fit.cols(), train.t.cols(), substream(common.seed, "eval.slices")());
  const auto est = estimate_si(z_fit, train.t, slices, poly, ridge);
  log.timings["slice_fit_seconds"] = seconds_since(start);
  RenyiConfig rc = renyi;
  rc.seed = substream(common.seed, "eval.renyi")();
  start = Clock::now();
  const RenyiModel model = fit_neural_renyi(z_fit, train.t, rc);
  log.timings["renyi_fit_seconds"] = seconds_since(start);

  using Metric = std::pair<std::string, std::function<double(const MatrixXd&)>>;
  const std::vector<Metric> metrics = {
      {"neural_renyi", [&](const MatrixXd& t) { return std::clamp(renyi_statistic_signed(model, z_eval, t), 0.0, 1.0); }},
      {"pearson", [&](const MatrixXd& t) { return pearson_proxy(z_eval, t).value; }},
      {"dcorr", [&](const MatrixXd& t) { return distance_correlation(z_eval, t).value; }},
      {"slice", [&](const MatrixXd& t) { return evaluate_si(z_eval, t, est); }},
  };
  std::vector<std::vector<double>> null(metrics.size());
  for (int p = 0; p < permutations; ++p) {
    Rng rng = substream(common.seed, "eval.null", {static_cast<std::uint64_t>(p)});
    const MatrixXd shuffled = permute_rows(test.t, rng);
    for (std::size_t m = 0; m < metrics.size(); ++m) null[m].push_back(metrics[m].second(shuffled));
  }

  {
    std::ofstream os(log.output(common, "metrics.csv"), std::ios::binary);
    CsvWriter w(os);
    w.row({"metric", "value", "null_threshold", "exceeds_null", "n_fit", "n_eval"});
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      const double value = metrics[m].second(test.t);
      const double threshold = upper_quantile(null[m], 1.0 - significance);
      w.row({metrics[m].first, format_number(value), format_number(threshold), value > threshold ? "1" : "0",
             std::to_string(z_fit.rows()), std::to_string(z_eval.rows())});
    }
  }
  write_manifest(common, cfg, log);
  std::cout << "eval: metrics -> " << (common.out_dir / "metrics.csv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Option wiring.

struct Binder {
  CLI::App* app;
  std::vector<std::tuple<CLI::Option*, std::string, std::shared_ptr<std::string>>> bound;

  void value(const std::string& flag, const std::string& key, const std::string& help) {
    auto v = std::make_shared<std::string>();
    bound.emplace_back(app->add_option(flag, *v, help + " [" + key + "]"), key, v);
  }
  void toggle(const std::string& flag, const std::string& key, const std::string& help) {
    const std::string text = help + " [" + key + "]";
    bound.emplace_back(app->add_flag(flag, text), key, std::make_shared<std::string>("true"));
  }
  std::map<std::string, std::string> collect() const {
    std::map<std::string, std::string> out;
    for (const auto& [opt, key, v] : bound)
      if (opt->count() > 0) out[key] = *v;
    return out;
  }
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  Binder binder;
  std::string config_file;
  std::string manifest;
  std::vector<std::string> assignments;
  int (*run)(const Config&, RunLog&) = nullptr;
};

std::unique_ptr<Command> add_command(CLI::App& root, const std::string& name, const std::string& help,
                                     int (*run)(const Config&, RunLog&)) {
  auto c = std::make_unique<Command>();
  c->name = name;
  c->run = run;
  c->app = root.add_subcommand(name, help);
  c->binder.app = c->app;
  c->app->add_option("--config", c->config_file, "INI configuration file");
  c->app->add_option("--manifest", c->manifest, "replay the configuration recorded in a manifest.json");
  c->app->add_option("--set", c->assignments, "override any key: section.key=value (repeatable)");
  c->binder.value("--seed", "run.seed", "root random seed");
  c->binder.value("--out-dir", "run.out_dir", "output directory");
  c->binder.toggle("--timing", "run.record_timing", "write measured seconds into CSV outputs");
  return c;
}

int run(int argc, char** argv) {
  CLI::App app{"Sliced dependence estimation, independence testing and infomin training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", artifact_version());

  auto power = add_command(app, "power", "test power over a pattern x alpha grid", cmd_power);
  power->binder.value("--patterns", "power.patterns", "comma list of linear,square,sin,tanh");
  power->binder.value("--alphas", "power.alphas", "comma list of noise levels");
  power->binder.value("--methods", "power.methods", "comma list of slice,pearson,dcorr,neural_renyi,optimal");
  power->binder.value("--repeats", "protocol.repeats", "trials per cell");
  power->binder.value("--permutations", "protocol.permutations", "null calibration draws");
  power->binder.value("--significance", "protocol.significance", "test level");
  power->binder.value("--fit-size", "protocol.fit_size", "samples used to learn test parameters");
  power->binder.value("--test-size", "protocol.test_size", "samples per trial");
  power->binder.value("--slices", "slice.count", "slice count S");
  power->binder.value("--checkpoint", "power.checkpoint", "JSON-lines file of finished cells (resume)");
  power->binder.toggle("--independent", "protocol.independent", "pair X with independent Y draws");

  auto ablate = add_command(app, "ablate", "slice-method power versus slice count", cmd_ablate);
  ablate->binder.value("--slice-grid", "ablate.slice_grid", "comma list of slice counts");
  ablate->binder.value("--pattern", "ablate.pattern", "association pattern");
  ablate->binder.value("--alpha", "ablate.alpha", "noise level");
  ablate->binder.value("--seeds", "ablate.seeds", "number of seeds (seed, seed+1, ...)");
  ablate->binder.value("--repeats", "protocol.repeats", "trials per cell");
  ablate->binder.value("--permutations", "protocol.permutations", "null calibration draws");
  ablate->binder.value("--fit-size", "protocol.fit_size", "samples used to learn test parameters");

  auto train = add_command(app, "train", "infomin training with evaluation report", cmd_train);
  train->binder.value("--synthetic", "data.synthetic", "synthetic dataset (fairness-toy)");
  train->binder.value("--data", "data.csv", "CSV dataset");
  train->binder.value("--schema", "data.schema", "JSON schema sidecar for --data");
  train->binder.value("--beta", "train.beta", "penalty weight");
  train->binder.value("--beta-grid", "train.beta_grid", "comma list of penalty weights (one run each)");
  train->binder.value("--iterations", "train.iterations", "training iterations L");
  train->binder.value("--n-prime", "train.n_prime", "max-step subset size");
  train->binder.value("--batch-size", "train.batch_size", "min-step batch size");
  train->binder.value("--learning-rate", "train.learning_rate", "min-step learning rate");
  train->binder.value("--slices", "slice.count", "slice count S");
  train->binder.value("--utility", "train.utility", "regression-mse or classification-ce");
  train->binder.toggle("--refine", "refine.enabled", "enable slice refinement");

  auto eval = add_command(app, "eval", "dependence metrics between a representation and T", cmd_eval);
  eval->binder.value("--checkpoint", "eval.checkpoint", "encoder checkpoint (omit to use raw features)");
  eval->binder.value("--synthetic", "data.synthetic", "synthetic dataset (fairness-toy)");
  eval->binder.value("--data", "data.csv", "CSV dataset");
  eval->binder.value("--schema", "data.schema", "JSON schema sidecar for --data");
  eval->binder.value("--permutations", "eval.permutations", "null calibration draws");
  eval->binder.value("--slices", "slice.count", "slice count S");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (Command* c : {power.get(), ablate.get(), train.get(), eval.get()}) {
    if (!c->app->parsed()) continue;
    RunLog log;
    log.command = c->name;
    log.argv.assign(argv, argv + argc);
    Config cfg;
    try {
      Sources src;
      if (!c->manifest.empty()) src.manifest = c->manifest;
      if (!c->config_file.empty()) src.config_file = c->config_file;
      src.assignments = c->assignments;
      src.flag_values = c->binder.collect();
      cfg = resolve(c->name, src);
    } catch (const std::exception& e) {
      std::cerr << "slim " << c->name << ": " << e.what() << '\n';
      return kExitUsage;
    }
    try {
      return c->run(cfg, log);
    } catch (const UsageError& e) {
      std::cerr << "slim " << c->name << ": " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "slim " << c->name << ": error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

}  // namespace
}  // namespace slim::cli

int main(int argc, char** argv) { return slim::cli::run(argc, argv); }
