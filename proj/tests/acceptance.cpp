// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --out-dir DIR [--only 1,3] [--expect-fail 1]
//
// Criteria listed in --expect-fail still print FAIL but do not change the
// exit status; every other failure exits 1.

#include "slim/harness.hpp"
#include "slim/infomin.hpp"
#include "slim/report.hpp"

#include <CLI11.hpp>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace slim;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MatrixXd gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

const std::vector<Pattern> kPatterns = {Pattern::linear, Pattern::square, Pattern::sin, Pattern::tanh};

// ---------------------------------------------------------------------------

Outcome power_grid(const fs::path& out) {
  TestProtocol p;
  p.permutations = 1000;
  const auto start = Clock::now();
  const auto rows = run_power_experiment(kPatterns, {0.2, 0.4, 0.6, 0.8, 0.999}, p);
  const double seconds = since(start);
  write_results_csv(out / "c1_results.csv", rows, true);

  bool slice_ok = true, pearson_ok = true, null_ok = true;
  std::ostringstream d;
  double slice_min = 1, pearson_max = 0, null_lo = 1, null_hi = 0;
  for (const auto& r : rows) {
    if (r.alpha == 0.2 && r.method == Method::slice) {
      slice_min = std::min(slice_min, r.power);
      if (r.power < 0.85) {
        slice_ok = false;
        d << " slice/" << to_string(r.pattern) << "=" << fixed(r.power);
      }
    }
    if (r.alpha == 0.2 && r.method == Method::pearson && (r.pattern == Pattern::square || r.pattern == Pattern::sin)) {
      pearson_max = std::max(pearson_max, r.power);
      if (r.power > 0.15) {
        pearson_ok = false;
        d << " pearson/" << to_string(r.pattern) << "=" << fixed(r.power);
      }
    }
    if (r.alpha == 0.999) {
      null_lo = std::min(null_lo, r.power);
      null_hi = std::max(null_hi, r.power);
      if (r.power < 0.02 || r.power > 0.08) {
        null_ok = false;
        d << " " << to_string(r.method) << "/" << to_string(r.pattern) << "@0.999=" << fixed(r.power);
      }
    }
  }
  const bool time_ok = seconds < 20 * 60;
  std::ostringstream s;
  s << "slice@0.2 min " << fixed(slice_min) << (slice_ok ? " ok" : " LOW") << "; pearson square/sin@0.2 max "
    << fixed(pearson_max) << (pearson_ok ? " ok" : " HIGH") << "; alpha=0.999 range [" << fixed(null_lo) << ", "
    << fixed(null_hi) << "]" << (null_ok ? " ok" : " OUT") << "; " << fixed(seconds, 0) << " s"
    << (time_ok ? "" : " SLOW");
  if (!d.str().empty()) s << " |" << d.str();
  return {slice_ok && pearson_ok && null_ok && time_ok, s.str()};
}

Outcome timing_order(const fs::path&) {
  FairnessToySpec spec;
  spec.seed = 11;
  const Dataset data = generate_fairness_toy(spec, 5000);
  Rng init(11);
  NetworkShape shape;
  shape.z_dim = 80;
  const nn::Mlp encoder = make_encoder(data.x.cols(), shape, init);

  InfominConfig cfg;
  cfg.n_prime = 5000;
  cfg.slices = 200;
  cfg.poly_order = 3;
  std::vector<Index> rows(5000);
  std::iota(rows.begin(), rows.end(), Index{0});
  std::vector<double> slice_s;
  for (int rep = 0; rep < 5; ++rep) {
    Rng rng = substream(11, "c2.max", {static_cast<std::uint64_t>(rep)});
    const auto start = Clock::now();
    max_step(encoder, data, rows, cfg, rng);
    slice_s.push_back(since(start));
  }

  const MatrixXd z = encoder.predict(data.x);
  std::vector<double> renyi_s;
  int epochs = 0;
  for (int rep = 0; rep < 3; ++rep) {
    RenyiConfig rc;
    rc.seed = substream(11, "c2.renyi", {static_cast<std::uint64_t>(rep)})();
    const auto start = Clock::now();
    epochs += fit_neural_renyi(z, data.t, rc).epochs_run;
    renyi_s.push_back(since(start));
  }
  const double ms = median(slice_s), rs = median(renyi_s);
  const bool ok = ms < 1.0 && rs >= 10.0 * ms;
  return {ok, "max-step median " + fixed(ms, 4) + " s; renyi median " + fixed(rs, 2) + " s (" +
                  fixed(epochs / 3.0, 1) + " epochs avg); ratio " + fixed(rs / ms, 1) + "x"};
}

// Top canonical correlation from orthonormal bases of the centered blocks.
double qr_canonical_corr(const MatrixXd& a, const MatrixXd& b) {
  const MatrixXd ac = a.rowwise() - a.colwise().mean();
  const MatrixXd bc = b.rowwise() - b.colwise().mean();
  Eigen::HouseholderQR<MatrixXd> qa(ac), qb(bc);
  const MatrixXd ua = qa.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
  const MatrixXd ub = qb.householderQ() * MatrixXd::Identity(b.rows(), b.cols());
  return Eigen::JacobiSVD<MatrixXd>(ua.transpose() * ub).singularValues()(0);
}

Outcome joint_dominates_pairs(const fs::path&) {
  int violations = 0;
  double worst_gap = 1e300;
  for (std::uint64_t inst = 0; inst < 100; ++inst) {
    Rng rng = substream(3, "c3", {inst});
    const Index n = std::uniform_int_distribution<Index>(200, 2000)(rng);
    const Index s = std::uniform_int_distribution<Index>(1, 10)(rng);
    const Index dz = std::uniform_int_distribution<Index>(1, 4)(rng);
    const Index dt = std::uniform_int_distribution<Index>(1, 3)(rng);
    const int order = std::uniform_int_distribution<int>(1, 3)(rng);
    const double mix = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const MatrixXd z = gaussian(n, dz, rng);
    const MatrixXd t = mix * (z * gaussian(dz, dt, rng)).array().sin().matrix() + gaussian(n, dt, rng);
    const auto slices = sample_slices<double>(s, dz, dt, rng());
    const PolyConfig poly{order};
    const auto est = estimate_si(z, t, slices, poly, 0.0);
    const MatrixXd zs = est.z_scale.apply(z), ts = est.t_scale.apply(t);
    double best = 0;
    for (Index i = 0; i < s; ++i) {
      const MatrixXd zf = feature_map<double>(zs, slices.theta.row(i), poly);
      for (Index j = 0; j < s; ++j)
        best = std::max(best, qr_canonical_corr(zf, feature_map<double>(ts, slices.phi.row(j), poly)));
    }
    const double gap = est.statistic - best;
    worst_gap = std::min(worst_gap, gap);
    if (gap + 1e-6 < 0) ++violations;
  }
  return {violations == 0, "100 instances, " + std::to_string(violations) + " violations; smallest margin " +
                               std::to_string(worst_gap)};
}

Outcome gradients(const fs::path&) {
  const auto start = Clock::now();
  double worst_si = 0;
  int si_cases = 0;
  for (std::uint64_t seed = 0; si_cases < 60; ++seed) {
    Rng rng = substream(4, "c4.si", {seed});
    const Index dz = std::uniform_int_distribution<Index>(1, 5)(rng);
    const Index dt = std::uniform_int_distribution<Index>(1, 2)(rng);
    const Index s = std::uniform_int_distribution<Index>(1, 12)(rng);
    const int order = std::uniform_int_distribution<int>(1, 3)(rng);
    const Index m = std::uniform_int_distribution<Index>(8, 48)(rng);
    const MatrixXd z = gaussian(400, dz, rng);
    const MatrixXd t = (z * gaussian(dz, dt, rng)).array().cos().matrix() + 0.5 * gaussian(400, dt, rng);
    const auto est = estimate_si(z, t, sample_slices<double>(s, dz, dt, rng()), PolyConfig{order});
    const MatrixXd zb = gaussian(m, dz, rng);
    const MatrixXd tb = t.topRows(m);
    const auto g = si_gradient(zb, tb, est);
    if (g.degenerate) continue;
    ++si_cases;
    const double h = 1e-5;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < dz; ++j) {
        MatrixXd up = zb, dn = zb;
        up(i, j) += h;
        dn(i, j) -= h;
        const double fd = (evaluate_si_signed(up, tb, est) - evaluate_si_signed(dn, tb, est)) / (2 * h);
        worst_si = std::max(worst_si, rel_error(g.d_z(i, j), fd, 1e-4));
      }
  }

  double worst_mlp = 0;
  const int mlp_cases = 60;
  const std::vector<nn::Activation> acts = {nn::Activation::tanh, nn::Activation::relu, nn::Activation::identity};
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(mlp_cases); ++seed) {
    Rng rng = substream(4, "c4.mlp", {seed});
    std::vector<Index> sizes;
    const int depth = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int l = 0; l <= depth; ++l) sizes.push_back(std::uniform_int_distribution<Index>(1, 6)(rng));
    nn::Mlp net = nn::Mlp::make(sizes, acts[seed % 3], acts[(seed / 3) % 3], 0.0, rng);
    for (auto& layer : net.layers()) layer.bias = gaussian(layer.bias.size(), 1, rng).col(0);
    const MatrixXd x = gaussian(5, sizes.front(), rng);
    const MatrixXd up = gaussian(5, sizes.back(), rng);
    auto objective = [&](const MatrixXd& in) { return net.forward(in).cwiseProduct(up).sum(); };
    net.forward(x);
    const auto back = net.backward(up);
    const double h = 1e-6;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto probe = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double fp = objective(x);
        param = keep - h;
        const double fm = objective(x);
        param = keep;
        worst_mlp = std::max(worst_mlp, rel_error(analytic, (fp - fm) / (2 * h), 1e-5));
      };
      auto& layer = net.layers()[l];
      for (Index i = 0; i < layer.weight.size(); ++i) probe(layer.weight.data()[i], back.params.weight[l].data()[i]);
      for (Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias(i), back.params.bias[l](i));
    }
    for (Index i = 0; i < x.size(); ++i) {
      MatrixXd xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      worst_mlp = std::max(worst_mlp, rel_error(back.d_input.data()[i], (objective(xp) - objective(xm)) / (2 * h), 1e-5));
    }
  }
  const double seconds = since(start);
  const bool ok = worst_si < 1e-4 && worst_mlp < 1e-4 && seconds < 60;
  std::ostringstream s;
  s << si_cases << " si_gradient cases, worst rel " << std::scientific << std::setprecision(2) << worst_si << "; "
    << mlp_cases << " Mlp cases, worst rel " << worst_mlp << "; " << std::fixed << std::setprecision(1) << seconds
    << " s";
  return {ok, s.str()};
}

struct FairnessRun {
  double beta = 0;
  double utility = 0;
  double renyi = 0;
};

struct FairnessSeed {
  double plain_utility = 0;
  std::vector<FairnessRun> runs;
};

// Desk-scale training: 20,000 / 5,000 split, N' = 2,000, S = 50, 2,000
// iterations. The plain run shares init and minibatch streams with every beta.
FairnessSeed fairness_seed(std::uint64_t seed, const std::vector<double>& betas) {
  FairnessToySpec spec;
  spec.seed = seed;
  Dataset d = generate_fairness_toy(spec, 25000);
  assign_split(d, 20000, 5000, seed);
  const Dataset train = d.subset(d.train_idx), test = d.subset(d.test_idx);
  NetworkShape shape;
  Rng init = substream(seed, "train.init");
  const nn::Mlp encoder = make_encoder(train.x.cols(), shape, init);
  const nn::Mlp head = make_head(train.y.cols(), shape, init);
  InfominConfig cfg;
  cfg.n_prime = 2000;
  cfg.slices = 50;
  cfg.iterations = 2000;
  cfg.seed = seed;
  RenyiConfig rc;
  rc.max_epochs = 100;
  rc.seed = substream(seed, "train.eval")();

  FairnessSeed out;
  const auto plain = train_plain(train, encoder, head, cfg);
  out.plain_utility = utility_score(plain.encoder, plain.head, test, cfg.utility);
  for (double beta : betas) {
    cfg.beta = beta;
    const auto r = train_infomin(train, encoder, head, cfg);
    if (r.diverged) throw TrainingDiverged(r.message);
    out.runs.push_back({beta, utility_score(r.encoder, r.head, test, cfg.utility),
                        fit_neural_renyi(r.encoder.predict(test.x), test.t, rc).validation_rho});
  }
  return out;
}

Outcome infomin_property(const fs::path& out) {
  const auto start = Clock::now();
  std::ofstream csv(out / "c5_infomin.csv", std::ios::binary);
  CsvWriter w(csv);
  w.row({"phase", "seed", "beta", "utility", "plain_utility", "utility_ratio", "renyi_zt"});
  auto record = [&](const char* phase, std::uint64_t seed, const FairnessSeed& s) {
    for (const auto& r : s.runs)
      w.row({phase, std::to_string(seed), format_number(r.beta), format_number(r.utility),
             format_number(s.plain_utility), format_number(r.utility / s.plain_utility), format_number(r.renyi)});
  };

  // Tune on seed 0: largest beta whose utility stays within 5% of plain.
  const auto tuning = fairness_seed(0, {1.0, 3.0, 10.0});
  record("tune", 0, tuning);
  std::vector<BetaRun> runs(1);
  runs[0].utility = tuning.plain_utility;
  for (const auto& r : tuning.runs) {
    BetaRun b;
    b.beta = r.beta;
    b.utility = r.utility;
    b.renyi_zt = r.renyi;
    runs.push_back(b);
  }
  const double beta = runs[select_beta(runs, 0.05)].beta;

  double worst_renyi = 0, worst_ratio = 1;
  for (std::uint64_t seed = 1; seed <= 5 && beta > 0.0; ++seed) {
    const auto s = fairness_seed(seed, {beta});
    record("eval", seed, s);
    worst_renyi = std::max(worst_renyi, s.runs[0].renyi);
    worst_ratio = std::min(worst_ratio, s.runs[0].utility / s.plain_utility);
  }
  const double seconds = since(start);
  const bool ok = beta > 0.0 && worst_renyi < 0.15 && worst_ratio >= 0.95 && seconds < 600;
  return {ok, "tuned beta " + format_number(beta) + "; seeds 1-5 max renyi(Z,T) " + fixed(worst_renyi) +
                  ", min utility ratio " + fixed(worst_ratio) + "; " + fixed(seconds, 0) + " s"};
}

Outcome type_one_error(const fs::path& out) {
  TestProtocol p;
  p.permutations = 1000;
  p.independent = true;
  const auto rows = run_power_experiment(kPatterns, {0.2}, p);
  write_results_csv(out / "c6_null.csv", rows, false);
  double lo = 1, hi = 0;
  std::string bad;
  for (const auto& r : rows) {
    lo = std::min(lo, r.power);
    hi = std::max(hi, r.power);
    if (std::abs(r.power - 0.05) > 0.03) bad += " " + to_string(r.method) + "/" + to_string(r.pattern) + "=" + fixed(r.power);
  }
  return {bad.empty(), std::to_string(rows.size()) + " cells x 1000 trials, rejection range [" + fixed(lo) + ", " +
                           fixed(hi) + "]" + (bad.empty() ? "" : " |" + bad)};
}

Outcome slice_ablation(const fs::path& out) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TestProtocol p;
    p.seed = seed;
    p.repeats = 200;
    p.permutations = 200;
    p.methods = {Method::slice};
    for (const auto& r : ablate_slices({10, 200}, Pattern::sin, 0.4, p)) rows.push_back({seed, r});
  }
  write_ablation_csv(out / "c7_ablation.csv", rows, false);
  const auto summary = summarize_ablation(rows);
  write_ablation_summary_csv(out / "c7_ablation_summary.csv", summary, false);
  const double p10 = summary.front().mean_power, p200 = summary.back().mean_power;
  return {p200 >= p10 - 0.05, "sin alpha=0.4 over 20 seeds: S=10 " + fixed(p10) + ", S=200 " + fixed(p200)};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SLIM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome determinism(const fs::path& out) {
  const fs::path root = out / "c8";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string train_data =
      " --set data.rows=2000 --set data.train_size=1500 --set data.test_size=500 --set renyi.max_epochs=20";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"power", "power --patterns sin,tanh --alphas 0.2,0.999 --repeats 50 --permutations 50 --fit-size 2000"
                " --set renyi.max_epochs=20"},
      {"ablate", "ablate --slice-grid 10,50 --seeds 2 --repeats 50 --permutations 50 --fit-size 2000"},
      {"train", "train --beta-grid 0,1 --iterations 50 --n-prime 500 --slices 50 --refine" + train_data},
      {"eval", "eval --checkpoint " + (root / "train_a/encoder_beta1.ckpt").string() + " --slices 50"
               " --permutations 50" + train_data},
  };
  int files = 0;
  std::string bad;
  for (const auto& [name, args] : commands) {
    const fs::path a = root / (name + "_a"), b = root / (name + "_b");
    if (run_cli(args + " --seed 5 --out-dir " + a.string(), root / (name + "_a.log")) != 0) {
      bad += " " + name + ":first-run-failed";
      continue;
    }
    if (run_cli(name + " --manifest " + (a / "manifest.json").string() + " --out-dir " + b.string(),
                root / (name + "_b.log")) != 0) {
      bad += " " + name + ":replay-failed";
      continue;
    }
    for (const auto& entry : fs::directory_iterator(a)) {
      if (entry.path().extension() != ".csv") continue;
      ++files;
      const fs::path other = b / entry.path().filename();
      if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) bad += " " + name + "/" + entry.path().filename().string();
    }
  }
  return {bad.empty() && files > 0,
          std::to_string(files) + " CSV files compared across power, ablate, train, eval" +
              (bad.empty() ? "" : "; differing:" + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out_dir = "acceptance_out";
  std::vector<int> only, expect_fail;
  app.add_option("--out-dir", out_dir, "directory for emitted CSVs");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "criteria allowed to fail")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::ofstream summary(out / "summary.txt");
  const std::vector<std::pair<int, std::function<Outcome(const fs::path&)>>> criteria = {
      {1, power_grid},       {2, timing_order},    {3, joint_dominates_pairs}, {4, gradients},
      {5, infomin_property}, {6, type_one_error},  {7, slice_ablation},        {8, determinism},
  };
  const std::set<int> selected(only.begin(), only.end()), allowed(expect_fail.begin(), expect_fail.end());
  int unexpected = 0;
  for (const auto& [id, check] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = check(out);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::ostringstream line;
    line << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
         << (!o.pass && allowed.count(id) ? "  (expected)" : "");
    std::cout << line.str() << std::endl;
    summary << line.str() << std::endl;
    if (!o.pass && !allowed.count(id)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
