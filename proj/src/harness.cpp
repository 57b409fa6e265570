#include "slim/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <tuple>

namespace slim {

void TestProtocol::validate() const {
  if (!(significance > 0.0 && significance < 1.0)) throw InvalidArgument("significance must lie in (0,1)");
  if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
  if (fit_size < 2 || test_size < 2) throw InvalidArgument("fit and test sizes must be >= 2");
  if (slices < 1) throw InvalidArgument("slice count must be >= 1");
  if (methods.empty()) throw InvalidArgument("no methods selected");
}

namespace {

std::string alpha_text(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", alpha);
  return buf;
}

MatrixXd permute_rows(const MatrixXd& m, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  MatrixXd out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(order[static_cast<std::size_t>(i)]);
  return out;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string protocol_fingerprint(const TestProtocol& p) {
  nlohmann::json j = {{"fit_size", p.fit_size},
                      {"test_size", p.test_size},
                      {"repeats", p.repeats},
                      {"significance", p.significance},
                      {"permutations", p.permutations},
                      {"poly_order", p.poly_order},
                      {"ridge", p.ridge},
                      {"independent", p.independent},
                      {"seed", p.seed},
                      {"renyi",
                       {{"hidden", p.renyi.hidden},
                        {"activation", nn::to_string(p.renyi.activation)},
                        {"dropout", p.renyi.dropout},
                        {"learning_rate", p.renyi.learning_rate},
                        {"batch_size", p.renyi.batch_size},
                        {"max_epochs", p.renyi.max_epochs},
                        {"patience", p.renyi.patience},
                        {"validation_fraction", p.renyi.validation_fraction}}}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::uint64_t cell_key(Pattern pattern, double alpha) {
  return fnv1a(to_string(pattern) + "|" + alpha_text(alpha));
}

FittedTest fit_test(Method method, const SyntheticSpec& spec, const TestProtocol& protocol, Rng& fit_rng) {
  FittedTest test;
  test.method = method;
  switch (method) {
    case Method::pearson:
      test.statistic = [](const MatrixXd& x, const MatrixXd& y) { return pearson_proxy(x, y).value; };
      return test;
    case Method::dcorr:
      test.statistic = [](const MatrixXd& x, const MatrixXd& y) { return distance_correlation(x, y).value; };
      return test;
    case Method::optimal:
      test.statistic = [spec](const MatrixXd& x, const MatrixXd& y) {
        const VectorXd h = generating_map(spec, x).rowwise().sum();
        const VectorXd g = y.rowwise().sum();
        return std::clamp(pearson(h, g), 0.0, 1.0);
      };
      return test;
    case Method::slice: {
      const Dataset fit = generate_synthetic(spec, protocol.fit_size, fit_rng);
      const auto slices = sample_slices<double>(protocol.slices, fit.x.cols(), fit.y.cols(), fit_rng());
      const auto start = std::chrono::steady_clock::now();
      auto est = std::make_shared<SiEstimate<double>>(
          estimate_si(fit.x, fit.y, slices, PolyConfig{protocol.poly_order}, protocol.ridge));
      test.fit_seconds = elapsed(start);
      test.statistic = [est](const MatrixXd& x, const MatrixXd& y) { return evaluate_si(x, y, *est); };
      return test;
    }
    case Method::neural_renyi: {
      const Dataset fit = generate_synthetic(spec, protocol.fit_size, fit_rng);
      RenyiConfig cfg = protocol.renyi;
      cfg.seed = fit_rng();
      const auto start = std::chrono::steady_clock::now();
      auto model = std::make_shared<RenyiModel>(fit_neural_renyi(fit.x, fit.y, cfg));
      test.fit_seconds = elapsed(start);
      test.statistic = [model](const MatrixXd& x, const MatrixXd& y) {
        return std::clamp(renyi_statistic_signed(*model, x, y), 0.0, 1.0);
      };
      return test;
    }
  }
  throw InvalidArgument("unsupported method");
}

double calibrate_null(const Statistic& statistic, const PairSampler& sampler, const TestProtocol& protocol,
                      std::uint64_t cell) {
  if (protocol.permutations < 20)
    throw CalibrationUnstable("null calibration needs at least 20 permutations (got " +
                              std::to_string(protocol.permutations) + ")");
  if (!(protocol.significance > 0.0 && protocol.significance < 1.0))
    throw InvalidArgument("significance must lie in (0,1)");
  std::vector<double> null;
  null.reserve(static_cast<std::size_t>(protocol.permutations));
  for (int p = 0; p < protocol.permutations; ++p) {
    Rng rng = substream(protocol.seed, "null", {cell, static_cast<std::uint64_t>(p)});
    const Dataset d = sampler(rng);
    null.push_back(statistic(d.x, permute_rows(d.y, rng)));
  }
  return upper_quantile(std::move(null), 1.0 - protocol.significance);
}

PowerResult run_power_cell(const SyntheticSpec& spec_in, Method method, const TestProtocol& protocol) {
  protocol.validate();
  SyntheticSpec spec = spec_in;
  const std::uint64_t cell = cell_key(spec.pattern, spec.alpha);
  spec.seed = protocol.seed;

  Rng fit_rng = substream(protocol.seed, "fit." + to_string(method),
                          {cell, static_cast<std::uint64_t>(protocol.slices)});
  const FittedTest test = fit_test(method, spec, protocol, fit_rng);

  const PairSampler sampler = [&](Rng& rng) { return generate_synthetic(spec, protocol.test_size, rng); };
  PowerResult r;
  r.pattern = spec.pattern;
  r.alpha = spec.alpha;
  r.method = method;
  r.slices = protocol.slices;
  r.fit_seconds = test.fit_seconds;
  r.threshold = calibrate_null(test.statistic, sampler, protocol, cell);

  int rejections = 0;
  double total = 0;
  for (int trial = 0; trial < protocol.repeats; ++trial) {
    Rng rng = substream(protocol.seed, "trial", {cell, static_cast<std::uint64_t>(trial)});
    Dataset d = sampler(rng);
    if (protocol.independent) d.y = permute_rows(d.y, rng);
    const double s = test.statistic(d.x, d.y);
    total += s;
    rejections += s > r.threshold ? 1 : 0;
  }
  const double n = static_cast<double>(protocol.repeats);
  r.power = rejections / n;
  r.stderr_ = std::sqrt(r.power * (1.0 - r.power) / n);
  r.mean_statistic = total / n;
  return r;
}

namespace {

using CellId = std::tuple<std::string, std::string, std::string, Index>;

CellId id_of(Pattern p, double alpha, Method m, Index s) {
  return {to_string(p), alpha_text(alpha), to_string(m), s};
}

nlohmann::json to_json(const PowerResult& r, const std::string& fingerprint) {
  return {{"pattern", to_string(r.pattern)}, {"alpha", r.alpha},       {"method", to_string(r.method)},
          {"S", r.slices},                   {"power", r.power},       {"stderr", r.stderr_},
          {"mean_statistic", r.mean_statistic}, {"threshold", r.threshold}, {"fit_seconds", r.fit_seconds},
          {"protocol", fingerprint}};
}

PowerResult from_json(const nlohmann::json& j) {
  PowerResult r;
  r.pattern = pattern_from_string(j.at("pattern").get<std::string>());
  r.alpha = j.at("alpha").get<double>();
  r.method = method_from_string(j.at("method").get<std::string>());
  r.slices = j.at("S").get<Index>();
  r.power = j.at("power").get<double>();
  r.stderr_ = j.at("stderr").get<double>();
  r.mean_statistic = j.at("mean_statistic").get<double>();
  r.threshold = j.at("threshold").get<double>();
  r.fit_seconds = j.at("fit_seconds").get<double>();
  return r;
}

}  // namespace

std::vector<PowerResult> run_power_experiment(const std::vector<Pattern>& patterns,
                                              const std::vector<double>& alphas, const TestProtocol& protocol,
                                              const std::optional<std::filesystem::path>& checkpoint) {
  protocol.validate();
  if (patterns.empty() || alphas.empty()) throw InvalidArgument("empty pattern or alpha grid");
  const std::string fingerprint = protocol_fingerprint(protocol);
  std::map<CellId, PowerResult> done;
  bool needs_newline = false;
  if (checkpoint && std::filesystem::exists(*checkpoint)) {
    std::ifstream is(*checkpoint);
    std::string line;
    while (std::getline(is, line)) {
      needs_newline = !line.empty() && is.eof();
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        if (j.value("protocol", std::string()) != fingerprint) continue;
        const auto r = from_json(j);
        done[id_of(r.pattern, r.alpha, r.method, r.slices)] = r;
      } catch (const std::exception&) {
        // A torn final line from an interrupted run is recomputed.
      }
    }
  }
  std::vector<PowerResult> out;
  for (auto p : patterns) {
    for (double a : alphas) {
      for (auto m : protocol.methods) {
        const auto id = id_of(p, a, m, protocol.slices);
        if (auto it = done.find(id); it != done.end()) {
          out.push_back(it->second);
          continue;
        }
        SyntheticSpec spec;
        spec.pattern = p;
        spec.alpha = a;
        auto r = run_power_cell(spec, m, protocol);
        if (checkpoint) {
          std::ofstream os(*checkpoint, std::ios::app);
          if (needs_newline) os << '\n';
          needs_newline = false;
          os << to_json(r, fingerprint).dump() << '\n';
        }
        out.push_back(r);
      }
    }
  }
  return out;
}

std::vector<PowerResult> ablate_slices(const std::vector<Index>& slice_grid, Pattern pattern, double alpha,
                                       const TestProtocol& protocol) {
  if (slice_grid.empty()) throw InvalidArgument("empty slice grid");
  std::vector<PowerResult> out;
  for (Index s : slice_grid) {
    if (s < 1) throw InvalidArgument("slice counts must be positive");
    TestProtocol p = protocol;
    p.slices = s;
    SyntheticSpec spec;
    spec.pattern = pattern;
    spec.alpha = alpha;
    out.push_back(run_power_cell(spec, Method::slice, p));
  }
  return out;
}

}  // namespace slim
