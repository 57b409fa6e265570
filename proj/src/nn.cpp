#include "slim/nn.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace slim::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw InvalidArgument("unknown activation '" + name + "'");
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

void Gradients::scale(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
}

void Gradients::add(const Gradients& other, double s) {
  if (other.weight.size() != weight.size()) throw InvalidArgument("gradient layer count mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += s * other.weight[l];
    bias[l] += s * other.bias[l];
  }
}

bool Gradients::all_finite() const {
  for (std::size_t l = 0; l < weight.size(); ++l)
    if (!weight[l].allFinite() || !bias[l].allFinite()) return false;
  return true;
}

double Gradients::squared_norm() const {
  double s = 0;
  for (std::size_t l = 0; l < weight.size(); ++l)
    s += weight[l].squaredNorm() + bias[l].squaredNorm();
  return s;
}

namespace {

void apply_activation(MatrixXd& m, Activation a) {
  switch (a) {
    case Activation::identity: break;
    case Activation::tanh: m = m.array().tanh().matrix(); break;
    case Activation::relu: m = m.cwiseMax(0.0); break;
  }
}

// Derivative expressed through the pre-activation.
MatrixXd activation_slope(const MatrixXd& pre, Activation a) {
  switch (a) {
    case Activation::identity: return MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::tanh: return (1.0 - pre.array().tanh().square()).matrix();
    case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
  }
  return MatrixXd();
}

}  // namespace

Mlp::Mlp(std::vector<Layer> layers, double dropout) : layers_(std::move(layers)), dropout_(dropout) {
  if (layers_.empty()) throw InvalidArgument("Mlp needs at least one layer");
  if (!(dropout_ >= 0.0 && dropout_ < 1.0)) throw InvalidArgument("dropout must lie in [0,1)");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) throw InvalidArgument("bias/weight shape mismatch");
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())
      throw InvalidArgument("consecutive layer sizes do not chain");
  }
}

Mlp Mlp::make(const std::vector<Index>& sizes, Activation hidden, Activation output, double dropout,
              Rng& rng) {
  if (sizes.size() < 2) throw InvalidArgument("Mlp needs an input size and at least one layer");
  for (auto s : sizes)
    if (s < 1) throw InvalidArgument("layer sizes must be >= 1");
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    Layer layer;
    layer.activation = (l + 1 == sizes.size()) ? output : hidden;
    const double fan_in = static_cast<double>(sizes[l - 1]);
    const double fan_out = static_cast<double>(sizes[l]);
    const double limit = layer.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                              : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    layer.weight.resize(sizes[l], sizes[l - 1]);
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
    layer.bias = VectorXd::Zero(sizes[l]);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers), dropout);
}

Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

MatrixXd Mlp::forward(const MatrixXd& x, Mode mode, Rng* rng) {
  if (x.cols() != in_dim())
    throw InvalidArgument("Mlp forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                          std::to_string(in_dim()));
  const bool drop = mode == Mode::train && dropout_ > 0.0;
  if (drop && rng == nullptr) throw InvalidArgument("training-mode dropout needs an RNG");
  cache_.assign(layers_.size(), {});
  MatrixXd h = x;
  std::bernoulli_distribution keep(1.0 - dropout_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    cache_[l].input = h;
    MatrixXd pre = h * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    cache_[l].pre = pre;
    h = std::move(pre);
    apply_activation(h, layer.activation);
    if (drop && l + 1 < layers_.size()) {
      MatrixXd mask(h.rows(), h.cols());
      for (Index c = 0; c < mask.cols(); ++c)
        for (Index r = 0; r < mask.rows(); ++r) mask(r, c) = keep(*rng) ? 1.0 / (1.0 - dropout_) : 0.0;
      h = h.cwiseProduct(mask);
      cache_[l].mask = std::move(mask);
    }
  }
  return h;
}

MatrixXd Mlp::predict(const MatrixXd& x) const {
  if (x.cols() != in_dim()) throw InvalidArgument("Mlp predict: input dimension mismatch");
  MatrixXd h = x;
  for (const auto& layer : layers_) {
    MatrixXd pre = h * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    h = std::move(pre);
    apply_activation(h, layer.activation);
  }
  return h;
}

Mlp::BackwardResult Mlp::backward(const MatrixXd& upstream) const {
  if (cache_.size() != layers_.size()) throw InvalidState("Mlp backward called without a cached forward pass");
  if (upstream.rows() != cache_.back().pre.rows() || upstream.cols() != out_dim())
    throw InvalidArgument("Mlp backward: upstream gradient shape mismatch");
  BackwardResult out;
  out.params.weight.resize(layers_.size());
  out.params.bias.resize(layers_.size());
  MatrixXd grad = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& layer = layers_[i];
    const auto& c = cache_[i];
    if (c.mask.size() > 0) grad = grad.cwiseProduct(c.mask);
    const MatrixXd d_pre = grad.cwiseProduct(activation_slope(c.pre, layer.activation));
    out.params.weight[i] = d_pre.transpose() * c.input;
    out.params.bias[i] = d_pre.colwise().sum().transpose();
    grad = d_pre * layer.weight;
  }
  out.d_input = std::move(grad);
  return out;
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const auto& layer : layers_) {
    g.weight.push_back(MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

bool Mlp::params_finite() const {
  for (const auto& layer : layers_)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
}

void Optimizer::step(Mlp& net, const Gradients& grads) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size())
    throw InvalidArgument("optimizer: gradient layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.weight[l].rows() != layers[l].weight.rows() || grads.weight[l].cols() != layers[l].weight.cols() ||
        grads.bias[l].size() != layers[l].bias.size())
      throw InvalidArgument("optimizer: gradient shape mismatch");
  }
  if (!grads.all_finite()) throw TrainingDiverged("optimizer: non-finite gradient");
  ++steps_;
  if (kind_ == OptimizerKind::sgd) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= lr_ * grads.weight[l];
      layers[l].bias -= lr_ * grads.bias[l];
    }
    return;
  }
  if (m_.weight.empty()) {
    m_ = net.zero_gradients();
    v_ = net.zero_gradients();
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, m_.weight[l], v_.weight[l], grads.weight[l]);
    update(layers[l].bias, m_.bias[l], v_.bias[l], grads.bias[l]);
  }
}

LossResult mse_loss(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("mse_loss: shape mismatch");
  const double n = static_cast<double>(pred.rows());
  LossResult r;
  const MatrixXd diff = pred - target;
  r.value = diff.squaredNorm() / n;
  r.grad = (2.0 / n) * diff;
  return r;
}

LossResult cross_entropy_loss(const MatrixXd& logits, const Eigen::VectorXi& labels) {
  if (logits.rows() != labels.size()) throw InvalidArgument("cross_entropy_loss: row mismatch");
  const double n = static_cast<double>(logits.rows());
  LossResult r;
  r.grad.resize(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const int y = labels(i);
    if (y < 0 || y >= logits.cols()) throw InvalidArgument("cross_entropy_loss: label out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    r.value += -(logits(i, y) - mx - std::log(z));
    r.grad.row(i) = e / z;
    r.grad(i, y) -= 1.0;
  }
  r.value /= n;
  r.grad /= n;
  return r;
}

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'L', 'I', 'M', 'M', 'L', 'P', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InvalidData("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(net.layers().size()));
  put(os, net.dropout());
  for (const auto& layer : net.layers()) {
    put(os, static_cast<std::uint32_t>(layer.weight.cols()));
    put(os, static_cast<std::uint32_t>(layer.weight.rows()));
    put(os, static_cast<std::uint32_t>(layer.activation));
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) put(os, layer.weight(r, c));
    for (Index r = 0; r < layer.bias.size(); ++r) put(os, layer.bias(r));
  }
  if (!os) throw Error("failed writing checkpoint: " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw InvalidData("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw InvalidData("unsupported checkpoint version " + std::to_string(version));
  const auto n_layers = get<std::uint32_t>(is);
  const auto dropout = get<double>(is);
  std::vector<Layer> layers(n_layers);
  for (auto& layer : layers) {
    const auto in = get<std::uint32_t>(is);
    const auto out = get<std::uint32_t>(is);
    const auto act = get<std::uint32_t>(is);
    if (act > 2) throw InvalidData("checkpoint: unknown activation code");
    layer.activation = static_cast<Activation>(act);
    layer.weight.resize(out, in);
    layer.bias.resize(out);
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get<double>(is);
    for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = get<double>(is);
  }
  return Mlp(std::move(layers), dropout);
}

}  // namespace slim::nn
