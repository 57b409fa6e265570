#include "slim/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slim {

std::string to_string(Method m) {
  switch (m) {
    case Method::slice: return "slice";
    case Method::pearson: return "pearson";
    case Method::dcorr: return "dcorr";
    case Method::neural_renyi: return "neural_renyi";
    case Method::optimal: return "optimal";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "slice") return Method::slice;
  if (name == "pearson") return Method::pearson;
  if (name == "dcorr") return Method::dcorr;
  if (name == "neural_renyi" || name == "renyi") return Method::neural_renyi;
  if (name == "optimal") return Method::optimal;
  throw InvalidArgument("unknown method '" + name + "'");
}

namespace {

void check_pair(const MatrixXd& z, const MatrixXd& t) {
  if (z.rows() != t.rows()) throw InvalidArgument("Z and T are not row-aligned");
  if (z.rows() < 2) throw InsufficientData("dependence measures need at least 2 samples");
  if (!z.allFinite() || !t.allFinite()) throw InvalidData("non-finite input");
}

}  // namespace

DependenceScore pearson_proxy(const MatrixXd& z, const MatrixXd& t) {
  check_pair(z, t);
  DependenceScore s;
  s.method = Method::pearson;
  const MatrixXd zc = z.rowwise() - z.colwise().mean();
  const MatrixXd tc = t.rowwise() - t.colwise().mean();
  const VectorXd zn = zc.colwise().norm();
  const VectorXd tn = tc.colwise().norm();
  s.pair_correlations = MatrixXd::Zero(z.cols(), t.cols());
  const MatrixXd cross = zc.transpose() * tc;
  for (Index i = 0; i < z.cols(); ++i) {
    for (Index k = 0; k < t.cols(); ++k) {
      if (!(zn(i) > 0.0) || !(tn(k) > 0.0)) {
        s.degenerate = true;
        s.notes.push_back("zero-variance pair (" + std::to_string(i) + "," + std::to_string(k) + ")");
        continue;
      }
      s.pair_correlations(i, k) = std::min(1.0, std::abs(cross(i, k)) / (zn(i) * tn(k)));
    }
  }
  s.value = s.pair_correlations.mean();
  return s;
}

namespace {

// Pairwise Euclidean distance row means and grand mean, O(n) memory.
struct DistanceMoments {
  VectorXd row_mean;
  double grand_mean = 0;
};

double dist(const MatrixXd& x, Index i, Index j) { return (x.row(i) - x.row(j)).norm(); }

DistanceMoments distance_moments(const MatrixXd& x) {
  const Index n = x.rows();
  DistanceMoments m;
  m.row_mean = VectorXd::Zero(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double d = dist(x, i, j);
      m.row_mean(i) += d;
      m.row_mean(j) += d;
    }
  m.row_mean /= static_cast<double>(n);
  m.grand_mean = m.row_mean.mean();
  return m;
}

}  // namespace

DependenceScore distance_correlation(const MatrixXd& z, const MatrixXd& t) {
  check_pair(z, t);
  DependenceScore s;
  s.method = Method::dcorr;
  const Index n = z.rows();
  const auto mz = distance_moments(z);
  const auto mt = distance_moments(t);
  double zt = 0, zz = 0, tt = 0;
  for (Index i = 0; i < n; ++i) {
    // Diagonal terms: d_ii = 0.
    const double a_ii = -2.0 * mz.row_mean(i) + mz.grand_mean;
    const double b_ii = -2.0 * mt.row_mean(i) + mt.grand_mean;
    zt += a_ii * b_ii;
    zz += a_ii * a_ii;
    tt += b_ii * b_ii;
    for (Index j = i + 1; j < n; ++j) {
      const double a = dist(z, i, j) - mz.row_mean(i) - mz.row_mean(j) + mz.grand_mean;
      const double b = dist(t, i, j) - mt.row_mean(i) - mt.row_mean(j) + mt.grand_mean;
      zt += 2.0 * a * b;
      zz += 2.0 * a * a;
      tt += 2.0 * b * b;
    }
  }
  const double denom = std::sqrt(zz * tt);
  if (!(denom > 0.0)) {
    s.degenerate = true;
    s.notes.push_back("all samples identical on one side");
    s.value = 0.0;
    return s;
  }
  s.value = std::clamp(std::sqrt(std::max(zt, 0.0) / denom), 0.0, 1.0);
  return s;
}

namespace {

nn::Mlp make_evaluator(Index in, const RenyiConfig& cfg, Rng& rng) {
  std::vector<Index> sizes{in};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  return nn::Mlp::make(sizes, cfg.activation, nn::Activation::identity, cfg.dropout, rng);
}

MatrixXd rows_of(const MatrixXd& m, const std::vector<Index>& idx, std::size_t begin, std::size_t end) {
  MatrixXd out(static_cast<Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Index>(i - begin)) = m.row(idx[i]);
  return out;
}

}  // namespace

RenyiModel fit_neural_renyi(const MatrixXd& z, const MatrixXd& t, const RenyiConfig& cfg) {
  check_pair(z, t);
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
    throw InvalidArgument("validation fraction must lie in (0,1)");
  if (cfg.batch_size < 2) throw InvalidArgument("evaluator batch size must be >= 2");
  const Index n = z.rows();
  const auto n_val = static_cast<Index>(std::llround(cfg.validation_fraction * static_cast<double>(n)));
  if (n_val < 2 || n - n_val < 2) throw InsufficientData("too few samples for a train/validation split");

  Rng split_rng = substream(cfg.seed, "renyi.split");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(n - n_val);
  const MatrixXd z_train_raw = rows_of(z, order, 0, n_train);
  const MatrixXd t_train_raw = rows_of(t, order, 0, n_train);

  RenyiModel model;
  model.z_scale = Standardizer<double>::fit(z_train_raw);
  model.t_scale = Standardizer<double>::fit(t_train_raw);
  const MatrixXd z_train = model.z_scale.apply(z_train_raw);
  const MatrixXd t_train = model.t_scale.apply(t_train_raw);
  const MatrixXd z_val = model.z_scale.apply(rows_of(z, order, n_train, order.size()));
  const MatrixXd t_val = model.t_scale.apply(rows_of(t, order, n_train, order.size()));

  Rng init_rng = substream(cfg.seed, "renyi.init");
  Rng drop_rng = substream(cfg.seed, "renyi.dropout");
  Rng batch_rng = substream(cfg.seed, "renyi.batches");
  model.h = make_evaluator(z.cols(), cfg, init_rng);
  model.g = make_evaluator(t.cols(), cfg, init_rng);
  nn::Optimizer opt_h(nn::OptimizerKind::adam, cfg.learning_rate);
  nn::Optimizer opt_g(nn::OptimizerKind::adam, cfg.learning_rate);

  auto val_rho = [&](const nn::Mlp& h, const nn::Mlp& g) {
    return pearson(h.predict(z_val).col(0), g.predict(t_val).col(0));
  };

  double best = val_rho(model.h, model.g);
  nn::Mlp best_h = model.h;
  nn::Mlp best_g = model.g;
  int since_best = 0;
  std::vector<Index> perm(n_train);
  std::iota(perm.begin(), perm.end(), Index{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), batch_rng);
    for (std::size_t start = 0; start + 2 <= n_train; start += batch) {
      const std::size_t end = std::min(n_train, start + batch);
      if (end - start < 2) break;
      const MatrixXd zb = rows_of(z_train, perm, start, end);
      const MatrixXd tb = rows_of(t_train, perm, start, end);
      const VectorXd a = model.h.forward(zb, nn::Mode::train, &drop_rng).col(0);
      const VectorXd b = model.g.forward(tb, nn::Mode::train, &drop_rng).col(0);
      // Loss is -rho(a, b).
      const auto ga = pearson_grad(a, b);
      const auto gb = pearson_grad(b, a);
      if (ga.degenerate || gb.degenerate) continue;
      const MatrixXd up_a = -ga.d_a;
      const MatrixXd up_b = -gb.d_a;
      opt_h.step(model.h, model.h.backward(up_a).params);
      opt_g.step(model.g, model.g.backward(up_b).params);
    }
    if (!model.h.params_finite() || !model.g.params_finite())
      throw TrainingDiverged("neural Renyi evaluator diverged at epoch " + std::to_string(epoch));
    const double rho = val_rho(model.h, model.g);
    model.validation_curve.push_back(rho);
    model.epochs_run = epoch;
    if (rho > best) {
      best = rho;
      best_h = model.h;
      best_g = model.g;
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.h = std::move(best_h);
  model.g = std::move(best_g);
  model.h.clear_cache();
  model.g.clear_cache();
  model.validation_rho = std::clamp(best, 0.0, 1.0);
  return model;
}

double renyi_statistic_signed(const RenyiModel& model, const MatrixXd& z, const MatrixXd& t) {
  if (z.rows() != t.rows()) throw InvalidArgument("Z and T are not row-aligned");
  if (z.rows() < 2) throw InsufficientData("statistic needs at least 2 samples");
  return pearson(model.h.predict(model.z_scale.apply(z)).col(0),
                 model.g.predict(model.t_scale.apply(t)).col(0));
}

DependenceScore neural_renyi(const MatrixXd& z, const MatrixXd& t, const RenyiConfig& cfg) {
  auto model = fit_neural_renyi(z, t, cfg);
  DependenceScore s;
  s.method = Method::neural_renyi;
  s.value = model.validation_rho;
  s.validation_curve = std::move(model.validation_curve);
  s.notes.push_back("best epoch " + std::to_string(model.best_epoch) + " of " + std::to_string(model.epochs_run));
  return s;
}

}  // namespace slim
