#include "slim/infomin.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace slim {

std::string to_string(Utility u) {
  return u == Utility::regression_mse ? "regression-mse" : "classification-ce";
}

Utility utility_from_string(const std::string& name) {
  if (name == "regression-mse" || name == "mse") return Utility::regression_mse;
  if (name == "classification-ce" || name == "ce") return Utility::classification_ce;
  throw InvalidArgument("unknown utility '" + name + "'");
}

namespace {

MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXi take_labels(const Eigen::VectorXi& v, const std::vector<Index>& rows) {
  Eigen::VectorXi out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
  return out;
}

// k distinct indices from [0, n), uniformly without replacement.
std::vector<Index> sample_without_replacement(Index n, Index k, Rng& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

void check_config(const Dataset& data, const nn::Mlp& encoder, const nn::Mlp& head, const InfominConfig& cfg) {
  data.validate();
  if (encoder.in_dim() != data.x.cols()) throw InvalidArgument("encoder input dim does not match features");
  if (head.in_dim() != encoder.out_dim()) throw InvalidArgument("head input dim does not match encoder output");
  if (cfg.batch_size < 2 || cfg.batch_size > data.rows()) throw InvalidArgument("batch size must lie in [2, N]");
  if (cfg.n_prime < 2 || cfg.n_prime > data.rows()) throw InvalidArgument("n_prime must lie in [2, N]");
  if (cfg.beta < 0.0) throw InvalidArgument("beta must be >= 0");
  if (cfg.iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (cfg.refine.enabled && (cfg.refine.steps < 1 || cfg.refine.steps > 3))
    throw InvalidArgument("refinement steps must lie in [1,3]");
  if (cfg.utility == Utility::classification_ce) {
    if (data.y_labels.size() != data.rows()) throw InvalidArgument("classification utility needs class labels");
    if (head.out_dim() != data.n_classes) throw InvalidArgument("head output must equal the class count");
  } else if (head.out_dim() != data.y.cols()) {
    throw InvalidArgument("head output must equal the target width");
  }
}

nn::LossResult utility_loss(const MatrixXd& pred, const Dataset& data, const std::vector<Index>& rows,
                            Utility utility) {
  if (utility == Utility::classification_ce) return nn::cross_entropy_loss(pred, take_labels(data.y_labels, rows));
  return nn::mse_loss(pred, take_rows(data.y, rows));
}

// One training loop shared by the infomin and plain variants. The minibatch
// and dropout streams are the same in both, and the max-step draws from its
// own stream, so beta = 0 follows the plain trajectory exactly.
TrainResult run_training(const Dataset& data, nn::Mlp encoder, nn::Mlp head, const InfominConfig& cfg,
                         bool with_max_step, const TrainObserver& observer) {
  check_config(data, encoder, head, cfg);
  TrainResult out;
  Rng batch_rng = substream(cfg.seed, "train.batch");
  Rng dropout_rng = substream(cfg.seed, "train.dropout");
  Rng max_rng = substream(cfg.seed, "train.maxstep");
  nn::Optimizer opt_f(cfg.optimizer, cfg.learning_rate);
  nn::Optimizer opt_h(cfg.optimizer, cfg.learning_rate);

  for (int it = 1; it <= cfg.iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    const auto batch = sample_without_replacement(data.rows(), cfg.batch_size, batch_rng);

    MaxStepResult ms;
    if (with_max_step) {
      const auto subset = sample_without_replacement(data.rows(), cfg.n_prime, max_rng);
      ms = max_step(encoder, data, subset, cfg, max_rng);
      rec.si_fit = ms.fitted.statistic;
      rec.refined = ms.refined;
      rec.max_step_seconds = ms.seconds;
      if (observer) observer(it, Phase::max_step, ms.fitted);
    }

    const MatrixXd xb = take_rows(data.x, batch);
    const MatrixXd zb = encoder.forward(xb, nn::Mode::train, &dropout_rng);
    const MatrixXd pred = head.forward(zb, nn::Mode::train, &dropout_rng);
    const auto loss = utility_loss(pred, data, batch, cfg.utility);
    rec.utility_loss = loss.value;
    if (!std::isfinite(loss.value)) {
      out.diverged = true;
      out.message = "non-finite utility loss at iteration " + std::to_string(it);
      break;
    }
    auto head_back = head.backward(loss.grad);
    MatrixXd d_z = std::move(head_back.d_input);

    if (with_max_step) {
      const auto sg = si_gradient(zb, take_rows(data.t, batch), ms.fitted);
      rec.si_batch = std::clamp(sg.value, 0.0, 1.0);
      rec.degenerate = sg.degenerate || ms.fitted.solution.degenerate;
      // The clamped penalty has zero gradient below 0.
      if (cfg.beta > 0.0 && !rec.degenerate && sg.value > 0.0) {
        if (!sg.d_z.allFinite()) {
          rec.degenerate = true;
        } else {
          d_z += cfg.beta * sg.d_z;
        }
      }
    }

    const auto enc_back = encoder.backward(d_z);
    try {
      opt_h.step(head, head_back.params);
      opt_f.step(encoder, enc_back.params);
    } catch (const TrainingDiverged& e) {
      out.diverged = true;
      out.message = std::string(e.what()) + " at iteration " + std::to_string(it);
      break;
    }
    if (with_max_step && observer) observer(it, Phase::min_step, ms.fitted);
    out.history.records.push_back(rec);
  }
  encoder.clear_cache();
  head.clear_cache();
  out.encoder = std::move(encoder);
  out.head = std::move(head);
  return out;
}

}  // namespace

MaxStepResult max_step(const nn::Mlp& encoder, const Dataset& data, const std::vector<Index>& rows,
                       const InfominConfig& cfg, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  MaxStepResult out;
  const MatrixXd z = encoder.predict(take_rows(data.x, rows));
  const MatrixXd t = take_rows(data.t, rows);
  const PolyConfig poly{cfg.poly_order};
  auto slices = sample_slices<double>(cfg.slices, z.cols(), t.cols(), rng());
  out.fitted = estimate_si(z, t, slices, poly, cfg.ridge);
  if (cfg.refine.enabled && out.fitted.statistic < cfg.refine.threshold) {
    auto refined = refine_slices(slices, z, t, poly, cfg.refine.step, cfg.refine.steps, cfg.ridge);
    if (!refined.skipped) {
      out.fitted = estimate_si(z, t, refined.slices, poly, cfg.ridge);
      out.refined = true;
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

RefineResult refine_slices(const SliceSet<double>& slices, const MatrixXd& z, const MatrixXd& t,
                           const PolyConfig& poly, double step, int steps, double ridge) {
  if (steps < 1 || steps > 3) throw InvalidArgument("refinement steps must lie in [1,3]");
  RefineResult out;
  out.slices = slices;
  auto est = estimate_si(z, t, slices, poly, ridge);
  out.before = est.statistic;
  out.after = est.statistic;
  if (step == 0.0) return out;
  for (int s = 0; s < steps; ++s) {
    const auto g = slice_gradient(z, t, est);
    if (g.degenerate || !g.d_theta.allFinite() || !g.d_phi.allFinite()) {
      out.skipped = s == 0;
      break;
    }
    SliceSet<double> next = out.slices;
    next.theta += step * g.d_theta;
    next.phi += step * g.d_phi;
    next.theta.rowwise().normalize();
    next.phi.rowwise().normalize();
    if (!next.theta.allFinite() || !next.phi.allFinite()) {
      out.skipped = s == 0;
      break;
    }
    out.slices = std::move(next);
    est = estimate_si(z, t, out.slices, poly, ridge);
    out.after = est.statistic;
  }
  return out;
}

TrainResult train_infomin(const Dataset& data, nn::Mlp encoder, nn::Mlp head, const InfominConfig& cfg,
                          const TrainObserver& observer) {
  return run_training(data, std::move(encoder), std::move(head), cfg, true, observer);
}

TrainResult train_plain(const Dataset& data, nn::Mlp encoder, nn::Mlp head, const InfominConfig& cfg) {
  return run_training(data, std::move(encoder), std::move(head), cfg, false, {});
}

double utility_score(const nn::Mlp& encoder, const nn::Mlp& head, const Dataset& data, Utility utility) {
  const MatrixXd pred = head.predict(encoder.predict(data.x));
  if (utility == Utility::classification_ce) {
    if (data.y_labels.size() != data.rows()) throw InvalidArgument("classification utility needs class labels");
    Index correct = 0;
    for (Index r = 0; r < pred.rows(); ++r) {
      Index arg = 0;
      pred.row(r).maxCoeff(&arg);
      correct += arg == data.y_labels(r) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(pred.rows());
  }
  double total = 0;
  for (Index c = 0; c < pred.cols(); ++c) total += pearson(pred.col(c), data.y.col(c));
  return total / static_cast<double>(pred.cols());
}

nn::Mlp make_encoder(Index in_dim, const NetworkShape& shape, Rng& rng) {
  std::vector<Index> sizes{in_dim};
  sizes.insert(sizes.end(), shape.encoder_hidden.begin(), shape.encoder_hidden.end());
  sizes.push_back(shape.z_dim);
  return nn::Mlp::make(sizes, nn::Activation::tanh, nn::Activation::identity, 0.0, rng);
}

nn::Mlp make_head(Index out_dim, const NetworkShape& shape, Rng& rng) {
  std::vector<Index> sizes{shape.z_dim};
  sizes.insert(sizes.end(), shape.head_hidden.begin(), shape.head_hidden.end());
  sizes.push_back(out_dim);
  return nn::Mlp::make(sizes, nn::Activation::tanh, nn::Activation::identity, 0.0, rng);
}

std::size_t select_beta(const std::vector<BetaRun>& runs, double tolerance) {
  if (runs.empty()) throw InvalidArgument("no beta runs to select from");
  std::size_t base = runs.size();
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].beta == 0.0) base = i;
  if (base == runs.size()) throw InvalidArgument("beta selection needs a beta = 0 baseline run");
  const double floor = runs[base].utility * (1.0 - tolerance);
  std::size_t best = base;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].utility >= floor && runs[i].beta > runs[best].beta) best = i;
  return best;
}

}  // namespace slim
