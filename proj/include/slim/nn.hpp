#pragma once

#include "slim/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace slim::nn {

enum class Activation : std::uint32_t { identity = 0, tanh = 1, relu = 2 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

enum class Mode { eval, train };

struct Layer {
  MatrixXd weight;  // out x in
  VectorXd bias;    // out
  Activation activation = Activation::identity;
};

/// Parameter-shaped gradient (or optimizer moment) storage.
struct Gradients {
  std::vector<MatrixXd> weight;
  std::vector<VectorXd> bias;

  void scale(double s);
  void add(const Gradients& other, double s = 1.0);
  bool all_finite() const;
  double squared_norm() const;
};

/// Feedforward network on row-major sample batches (n x in -> n x out).
/// Dropout, when enabled, follows every hidden activation and is active only
/// in training mode.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<Layer> layers, double dropout);

  /// Glorot (He for relu) uniform weights, zero biases. `sizes` lists the
  /// input width followed by every layer width.
  static Mlp make(const std::vector<Index>& sizes, Activation hidden, Activation output,
                  double dropout, Rng& rng);

  MatrixXd forward(const MatrixXd& x, Mode mode = Mode::eval, Rng* rng = nullptr);
  /// Inference without touching the cached activations.
  MatrixXd predict(const MatrixXd& x) const;

  struct BackwardResult {
    Gradients params;
    MatrixXd d_input;
  };
  /// Reverse pass for the most recent `forward`. Throws InvalidState if none.
  BackwardResult backward(const MatrixXd& upstream) const;

  Gradients zero_gradients() const;

  Index in_dim() const;
  Index out_dim() const;
  double dropout() const { return dropout_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  bool params_finite() const;
  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    MatrixXd input;
    MatrixXd pre;
    MatrixXd mask;  // empty when dropout was inactive
  };

  std::vector<Layer> layers_;
  double dropout_ = 0.0;
  std::vector<Cache> cache_;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind optimizer_from_string(const std::string& name);

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate);

  /// sgd: p <- p - lr g. adam: bias-corrected first/second moments.
  /// Throws TrainingDiverged on non-finite gradients (parameters untouched).
  void step(Mlp& net, const Gradients& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return steps_; }

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

 private:
  OptimizerKind kind_ = OptimizerKind::adam;
  double lr_ = 1e-3;
  std::uint64_t steps_ = 0;
  Gradients m_;
  Gradients v_;
};

struct LossResult {
  double value = 0;
  MatrixXd grad;  // d loss / d prediction
};

/// Mean over rows of the squared error summed across output columns.
LossResult mse_loss(const MatrixXd& pred, const MatrixXd& target);
/// Mean softmax cross-entropy; `labels` holds one class index per row.
LossResult cross_entropy_loss(const MatrixXd& logits, const Eigen::VectorXi& labels);

/// Versioned binary container: layer sizes, activations, dropout and raw
/// parameters. Loading reproduces every parameter bit-for-bit.
void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace slim::nn
