#pragma once

#include "slim/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace slim {

enum class Pattern { linear, square, sin, tanh };

std::string to_string(Pattern p);
Pattern pattern_from_string(const std::string& name);

/// Association pattern Y = (1-alpha) scale01(t(A X)) + alpha eps with
/// X_d ~ U[-x_bound, x_bound], A_dd = 1, A_dk = mixing (k != d), eps ~ N(0, I).
struct SyntheticSpec {
  Pattern pattern = Pattern::linear;
  double alpha = 0.2;
  Index dim = 10;
  double mixing = 0.2;
  double x_bound = 3.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  MatrixXd x;  // features
  MatrixXd y;  // prediction target (one-hot for categorical targets)
  MatrixXd t;  // protected / independence target
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  std::vector<std::string> t_names;
  // Class index per row when the target is categorical; empty otherwise.
  Eigen::VectorXi y_labels;
  int n_classes = 0;
  std::vector<Index> train_idx;
  std::vector<Index> test_idx;
  // Columns standardized with the variance floor (constant columns).
  std::vector<std::string> floored_columns;

  Index rows() const { return x.rows(); }
  /// Row subset of every matrix (labels included); split indices are dropped.
  Dataset subset(const std::vector<Index>& rows) const;
  void validate() const;
};

MatrixXd mixing_matrix(Index dim, double offdiag);
/// Elementwise association pattern t(.).
MatrixXd apply_pattern(Pattern p, const MatrixXd& a);
/// Per-dimension [min, max] of t(A X) over the support of X. These are the
/// population bounds used by scale01.
std::pair<VectorXd, VectorXd> population_bounds(const SyntheticSpec& spec);
/// scale01(t(A X)): the noiseless generating map (the "optimal" h).
MatrixXd generating_map(const SyntheticSpec& spec, const MatrixXd& x);

/// Draws n rows. T mirrors Y (the variable tested against X).
Dataset generate_synthetic(const SyntheticSpec& spec, Index n, Rng& rng);
Dataset generate_synthetic(const SyntheticSpec& spec, Index n);

/// Tabular fairness task: latent U and protected T mixed linearly into X,
/// target Y depending on U only.
struct FairnessToySpec {
  Index latent_dim = 4;
  Index protected_dim = 1;
  Index x_dim = 10;
  double x_noise = 0.05;
  double y_noise = 0.1;
  // T is drawn independently and NOT mixed into X.
  bool protected_is_noise = false;
  std::uint64_t seed = 0;
};

Dataset generate_fairness_toy(const FairnessToySpec& spec, Index n);

/// Deterministic shuffled split into train/test index sets.
void assign_split(Dataset& data, Index n_train, Index n_test, std::uint64_t seed);

struct ColumnSpec {
  std::string name;
  std::string role;  // feature | target | protected | drop
  std::string type;  // numeric | categorical
  std::vector<std::string> categories;  // optional fixed category order
};

struct CsvSchema {
  std::vector<ColumnSpec> columns;
  Index train_size = 0;  // 0 -> 80% of rows
  Index test_size = 0;   // 0 -> remaining rows
  std::uint64_t split_seed = 0;
};

/// JSON sidecar:
/// {"columns":[{"name":..,"role":..,"type":..,"categories":[..]}],
///  "split":{"train":N,"test":M,"seed":S}}
CsvSchema load_schema(const std::filesystem::path& path);
CsvSchema parse_schema(const std::string& json_text);

/// Splits one RFC-4180 record (quoted fields, doubled quotes).
std::vector<std::string> split_csv_record(const std::string& line);

/// Reads a headered comma-separated file into a Dataset with one-hot encoded
/// categorical columns. With `standardize`, numeric columns are z-scored using
/// train-split statistics; constant columns become zero and are listed in
/// `floored_columns`.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, bool standardize);

}  // namespace slim
