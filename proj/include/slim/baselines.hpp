#pragma once

#include "slim/common.hpp"
#include "slim/nn.hpp"
#include "slim/stats.hpp"

#include <string>
#include <vector>

namespace slim {

enum class Method { slice, pearson, dcorr, neural_renyi, optimal };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct DependenceScore {
  Method method = Method::pearson;
  double value = 0;
  bool degenerate = false;
  std::vector<std::string> notes;
  // pearson: |rho| per (Z column, T column) pair.
  MatrixXd pair_correlations;
  // neural_renyi: validation correlation after each epoch.
  std::vector<double> validation_curve;
};

/// Mean of |pearson(Z_d, T_k)| over all column pairs. Zero-variance columns
/// contribute 0 and are noted.
DependenceScore pearson_proxy(const MatrixXd& z, const MatrixXd& t);

/// Biased (original) sample distance correlation in [0,1].
DependenceScore distance_correlation(const MatrixXd& z, const MatrixXd& t);

struct RenyiConfig {
  std::vector<Index> hidden = {64, 64};
  nn::Activation activation = nn::Activation::relu;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  Index batch_size = 128;
  int max_epochs = 500;
  int patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Trained evaluator pair h: R^D -> R, g: R^d -> R.
struct RenyiModel {
  nn::Mlp h;
  nn::Mlp g;
  Standardizer<double> z_scale;
  Standardizer<double> t_scale;
  double validation_rho = 0;  // at the early-stopping point, clamped to [0,1]
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> validation_curve;
};

/// Trains h, g to maximize the batch Pearson correlation of (h(Z), g(T)),
/// keeping the parameters of the best validation epoch.
RenyiModel fit_neural_renyi(const MatrixXd& z, const MatrixXd& t, const RenyiConfig& cfg);

/// Signed Pearson correlation of (h(Z), g(T)) for a fitted pair.
double renyi_statistic_signed(const RenyiModel& model, const MatrixXd& z, const MatrixXd& t);

DependenceScore neural_renyi(const MatrixXd& z, const MatrixXd& t, const RenyiConfig& cfg);

}  // namespace slim
