#pragma once

#include "slim/cca.hpp"
#include "slim/data.hpp"
#include "slim/nn.hpp"

#include <functional>
#include <string>
#include <vector>

namespace slim {

enum class Utility { regression_mse, classification_ce };

std::string to_string(Utility u);
Utility utility_from_string(const std::string& name);

/// Gradient ascent on the slice directions, triggered when the fitted
/// statistic is below `threshold`.
struct RefineConfig {
  bool enabled = false;
  double threshold = 0.1;
  double step = 0.5;
  int steps = 1;
};

struct InfominConfig {
  double beta = 1.0;
  Index n_prime = 5000;
  int iterations = 1000;
  Index slices = 200;
  int poly_order = 3;
  Index batch_size = 256;
  double learning_rate = 1e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double ridge = kDefaultRidge;
  RefineConfig refine;
  Utility utility = Utility::regression_mse;
  std::uint64_t seed = 0;
};

struct IterationRecord {
  int iteration = 0;
  double utility_loss = 0;
  double si_fit = 0;    // max-step statistic on D'
  double si_batch = 0;  // min-step batch statistic (clamped)
  bool refined = false;
  bool degenerate = false;
  double max_step_seconds = 0;
};

struct TrainHistory {
  std::vector<IterationRecord> records;
};

struct TrainResult {
  nn::Mlp encoder;
  nn::Mlp head;
  TrainHistory history;
  bool diverged = false;
  std::string message;
};

enum class Phase { max_step, min_step };
/// Called after each phase with the estimate the iteration uses.
using TrainObserver = std::function<void(int iteration, Phase phase, const SiEstimate<double>& fitted)>;

struct MaxStepResult {
  SiEstimate<double> fitted;
  bool refined = false;
  double seconds = 0;
};

/// Analytic max-step: fresh slices, canonical weights on the subset `rows`
/// of f(X). Takes the encoder by const reference; no network is updated.
MaxStepResult max_step(const nn::Mlp& encoder, const Dataset& data, const std::vector<Index>& rows,
                       const InfominConfig& cfg, Rng& rng);

struct RefineResult {
  SliceSet<double> slices;
  double before = 0;
  double after = 0;
  bool skipped = false;
};

/// Ascends the joint statistic over Theta and Phi for `steps` gradient steps
/// of size `step`, re-solving the weights before every step and projecting
/// rows back to the unit sphere.
RefineResult refine_slices(const SliceSet<double>& slices, const MatrixXd& z, const MatrixXd& t,
                           const PolyConfig& poly, double step, int steps, double ridge = kDefaultRidge);

/// Alternating max/min training of encoder f and utility head on `data`.
TrainResult train_infomin(const Dataset& data, nn::Mlp encoder, nn::Mlp head, const InfominConfig& cfg,
                          const TrainObserver& observer = {});

/// Utility-only training with the same minibatch and initialization streams.
TrainResult train_plain(const Dataset& data, nn::Mlp encoder, nn::Mlp head, const InfominConfig& cfg);

/// Held-out utility: mean Pearson correlation of prediction and target
/// columns (regression) or accuracy (classification).
double utility_score(const nn::Mlp& encoder, const nn::Mlp& head, const Dataset& data, Utility utility);

struct NetworkShape {
  std::vector<Index> encoder_hidden = {64, 64};
  Index z_dim = 8;
  std::vector<Index> head_hidden = {32};
};

nn::Mlp make_encoder(Index in_dim, const NetworkShape& shape, Rng& rng);
nn::Mlp make_head(Index out_dim, const NetworkShape& shape, Rng& rng);

struct BetaRun {
  double beta = 0;
  double utility = 0;
  double renyi_zt = 0;
  double mean_max_step_seconds = 0;
  TrainResult result;
};

/// Largest beta whose utility stays within `tolerance` (relative) of the
/// beta = 0 run. Returns the index into `runs`.
std::size_t select_beta(const std::vector<BetaRun>& runs, double tolerance = 0.05);

}  // namespace slim
