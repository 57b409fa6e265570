#pragma once

#include "slim/baselines.hpp"
#include "slim/cca.hpp"
#include "slim/data.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace slim {

struct TestProtocol {
  Index fit_size = 10000;
  Index test_size = 100;
  int repeats = 1000;
  double significance = 0.05;
  int permutations = 200;
  std::vector<Method> methods = {Method::slice, Method::pearson, Method::dcorr, Method::neural_renyi,
                                 Method::optimal};
  Index slices = 200;
  int poly_order = 3;
  double ridge = kDefaultRidge;
  RenyiConfig renyi;
  // Pair every trial's X with an independent draw of Y (exact null).
  bool independent = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PowerResult {
  Pattern pattern = Pattern::linear;
  double alpha = 0;
  Method method = Method::slice;
  Index slices = 0;
  double power = 0;
  double stderr_ = 0;  // binomial standard error of `power`
  double mean_statistic = 0;
  double threshold = 0;
  double fit_seconds = 0;
};

using Statistic = std::function<double(const MatrixXd& x, const MatrixXd& y)>;
using PairSampler = std::function<Dataset(Rng& rng)>;

/// A statistic whose parameters were learned once on a fitting sample.
struct FittedTest {
  Method method = Method::slice;
  Statistic statistic;
  double fit_seconds = 0;
};

/// Learns the method's parameters (if any) from `protocol.fit_size` samples.
FittedTest fit_test(Method method, const SyntheticSpec& spec, const TestProtocol& protocol, Rng& fit_rng);

/// (1 - significance) quantile of the statistic over `permutations` fresh
/// samples whose Y rows are shuffled against X. Permutation p draws from
/// substream(seed, "null", {cell, p}).
double calibrate_null(const Statistic& statistic, const PairSampler& sampler, const TestProtocol& protocol,
                      std::uint64_t cell);

/// Hash of every protocol field that affects a cell's result (the slice count
/// and method are part of the cell id instead).
std::string protocol_fingerprint(const TestProtocol& protocol);

/// Stable identifier for the data of one (pattern, alpha) cell.
std::uint64_t cell_key(Pattern pattern, double alpha);

/// One grid cell for one method.
PowerResult run_power_cell(const SyntheticSpec& spec, Method method, const TestProtocol& protocol);

/// Every (pattern, alpha, method) cell. With a checkpoint path, finished cells
/// are appended to it as JSON lines and reused on a later call with the same
/// protocol fingerprint.
std::vector<PowerResult> run_power_experiment(const std::vector<Pattern>& patterns,
                                              const std::vector<double>& alphas, const TestProtocol& protocol,
                                              const std::optional<std::filesystem::path>& checkpoint = {});

/// Slice-method power as a function of the slice count.
std::vector<PowerResult> ablate_slices(const std::vector<Index>& slice_grid, Pattern pattern, double alpha,
                                       const TestProtocol& protocol);

}  // namespace slim
