#include "slim/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace slim {

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::linear: return "linear";
    case Pattern::square: return "square";
    case Pattern::sin: return "sin";
    case Pattern::tanh: return "tanh";
  }
  return "unknown";
}

Pattern pattern_from_string(const std::string& name) {
  if (name == "linear") return Pattern::linear;
  if (name == "square") return Pattern::square;
  if (name == "sin") return Pattern::sin;
  if (name == "tanh") return Pattern::tanh;
  throw InvalidArgument("unknown pattern '" + name + "'");
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.x_names = x_names;
  out.y_names = y_names;
  out.t_names = t_names;
  out.n_classes = n_classes;
  out.floored_columns = floored_columns;
  const auto n = static_cast<Index>(rows.size());
  out.x.resize(n, x.cols());
  out.y.resize(n, y.cols());
  out.t.resize(n, t.cols());
  if (y_labels.size() > 0) out.y_labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= x.rows()) throw InvalidArgument("subset row index out of range");
    out.x.row(i) = x.row(r);
    out.y.row(i) = y.row(r);
    out.t.row(i) = t.row(r);
    if (y_labels.size() > 0) out.y_labels(i) = y_labels(r);
  }
  return out;
}

void Dataset::validate() const {
  if (y.rows() != x.rows() || t.rows() != x.rows()) throw InvalidData("dataset row counts disagree");
  if (!x.allFinite() || !y.allFinite() || !t.allFinite()) throw InvalidData("dataset has non-finite entries");
}

MatrixXd mixing_matrix(Index dim, double offdiag) {
  MatrixXd a = MatrixXd::Constant(dim, dim, offdiag);
  a.diagonal().setOnes();
  return a;
}

MatrixXd apply_pattern(Pattern p, const MatrixXd& a) {
  switch (p) {
    case Pattern::linear: return a;
    case Pattern::square: return a.array().square().matrix();
    case Pattern::sin: return a.array().sin().matrix();
    case Pattern::tanh: return a.array().tanh().matrix();
  }
  return a;
}

std::pair<VectorXd, VectorXd> population_bounds(const SyntheticSpec& spec) {
  const MatrixXd a = mixing_matrix(spec.dim, spec.mixing);
  VectorXd lo(spec.dim), hi(spec.dim);
  for (Index d = 0; d < spec.dim; ++d) {
    const double r = spec.x_bound * a.row(d).cwiseAbs().sum();
    switch (spec.pattern) {
      case Pattern::linear: lo(d) = -r; hi(d) = r; break;
      case Pattern::square: lo(d) = 0.0; hi(d) = r * r; break;
      case Pattern::sin:
        lo(d) = r >= std::numbers::pi / 2 ? -1.0 : std::sin(-r);
        hi(d) = r >= std::numbers::pi / 2 ? 1.0 : std::sin(r);
        break;
      case Pattern::tanh: lo(d) = std::tanh(-r); hi(d) = std::tanh(r); break;
    }
  }
  return {lo, hi};
}

MatrixXd generating_map(const SyntheticSpec& spec, const MatrixXd& x) {
  if (x.cols() != spec.dim) throw InvalidArgument("generating_map: dimension mismatch");
  const auto [lo, hi] = population_bounds(spec);
  const MatrixXd a = x * mixing_matrix(spec.dim, spec.mixing).transpose();
  MatrixXd t = apply_pattern(spec.pattern, a);
  const VectorXd width = hi - lo;
  return (t.rowwise() - lo.transpose()).array().rowwise() / width.transpose().array();
}

namespace {

void check_spec(const SyntheticSpec& spec) {
  if (!(spec.alpha >= 0.0 && spec.alpha < 1.0)) throw InvalidArgument("alpha must lie in [0,1)");
  if (spec.dim < 1) throw InvalidArgument("synthetic dimension must be >= 1");
  if (!(spec.x_bound > 0.0)) throw InvalidArgument("x bound must be > 0");
}

std::vector<std::string> names(const std::string& prefix, Index n) {
  std::vector<std::string> out;
  for (Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, Index n, Rng& rng) {
  check_spec(spec);
  if (n < 1) throw InvalidArgument("sample count must be >= 1");
  std::uniform_real_distribution<double> uni(-spec.x_bound, spec.x_bound);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.x.resize(n, spec.dim);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < spec.dim; ++c) d.x(r, c) = uni(rng);
  MatrixXd eps(n, spec.dim);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < spec.dim; ++c) eps(r, c) = normal(rng);
  d.y = (1.0 - spec.alpha) * generating_map(spec, d.x) + spec.alpha * eps;
  d.t = d.y;
  d.x_names = names("x", spec.dim);
  d.y_names = names("y", spec.dim);
  d.t_names = d.y_names;
  return d;
}

Dataset generate_synthetic(const SyntheticSpec& spec, Index n) {
  Rng rng = substream(spec.seed, "synthetic");
  return generate_synthetic(spec, n, rng);
}

Dataset generate_fairness_toy(const FairnessToySpec& spec, Index n) {
  if (n < 1) throw InvalidArgument("sample count must be >= 1");
  if (spec.latent_dim < 1 || spec.protected_dim < 1) throw InvalidArgument("toy dimensions must be >= 1");
  if (spec.x_dim < spec.latent_dim + (spec.protected_is_noise ? 0 : spec.protected_dim))
    throw InvalidArgument("x_dim too small to embed the latent factors");
  Rng mix_rng = substream(spec.seed, "toy.mixing");
  Rng rng = substream(spec.seed, "toy.samples");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Index r, Index c, Rng& g) {
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = normal(g);
    return m;
  };

  const Index sources = spec.latent_dim + (spec.protected_is_noise ? 0 : spec.protected_dim);
  const MatrixXd mixing = gaussian(sources, spec.x_dim, mix_rng) / std::sqrt(static_cast<double>(sources));
  const MatrixXd u = gaussian(n, spec.latent_dim, rng);
  const MatrixXd t = gaussian(n, spec.protected_dim, rng);
  MatrixXd src(n, sources);
  src.leftCols(spec.latent_dim) = u;
  if (!spec.protected_is_noise) src.rightCols(spec.protected_dim) = t;

  Dataset d;
  d.x = src * mixing + spec.x_noise * gaussian(n, spec.x_dim, rng);
  VectorXd y = VectorXd::Zero(n);
  for (Index r = 0; r < n; ++r) {
    double v = 0;
    for (Index k = 0; k < spec.latent_dim; ++k) {
      switch (k % 4) {
        case 0: v += u(r, k); break;
        case 1: v += std::sin(u(r, k)); break;
        case 2: v += 0.5 * u(r, k) * u(r, k); break;
        default: v += std::tanh(u(r, k)); break;
      }
    }
    y(r) = v;
  }
  d.y = (y + spec.y_noise * gaussian(n, 1, rng).col(0)).eval();
  d.t = t;
  d.x_names = names("x", spec.x_dim);
  d.y_names = {"y"};
  d.t_names = names("t", spec.protected_dim);
  return d;
}

void assign_split(Dataset& data, Index n_train, Index n_test, std::uint64_t seed) {
  const Index n = data.rows();
  if (n_train < 1 || n_test < 0 || n_train + n_test > n)
    throw InvalidArgument("split sizes do not fit the dataset (" + std::to_string(n) + " rows)");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = substream(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);
  data.train_idx.assign(order.begin(), order.begin() + n_train);
  data.test_idx.assign(order.begin() + n_train, order.begin() + n_train + n_test);
}

CsvSchema parse_schema(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
  }
  CsvSchema s;
  if (!j.contains("columns") || !j["columns"].is_array()) throw SchemaError("schema needs a 'columns' array");
  static const std::set<std::string> roles{"feature", "target", "protected", "drop"};
  static const std::set<std::string> types{"numeric", "categorical"};
  for (const auto& c : j["columns"]) {
    ColumnSpec col;
    col.name = c.value("name", "");
    col.role = c.value("role", "feature");
    col.type = c.value("type", "numeric");
    if (col.name.empty()) throw SchemaError("schema column without a name");
    if (!roles.count(col.role)) throw SchemaError("column '" + col.name + "': unknown role '" + col.role + "'");
    if (!types.count(col.type)) throw SchemaError("column '" + col.name + "': unknown type '" + col.type + "'");
    if (c.contains("categories")) col.categories = c["categories"].get<std::vector<std::string>>();
    s.columns.push_back(std::move(col));
  }
  if (j.contains("split")) {
    const auto& sp = j["split"];
    s.train_size = sp.value("train", Index{0});
    s.test_size = sp.value("test", Index{0});
    s.split_seed = sp.value("seed", std::uint64_t{0});
  }
  return s;
}

CsvSchema load_schema(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw SchemaError("cannot open schema file: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_schema(ss.str());
}

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw InvalidData("unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

namespace {

struct Column {
  const ColumnSpec* spec = nullptr;
  std::size_t source = 0;  // index in the CSV header
  std::vector<std::string> categories;
};

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, bool standardize) {
  std::ifstream is(path);
  if (!is) throw InvalidData("cannot open CSV file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw InvalidData("CSV file is empty: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_record(line);
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < header.size(); ++i) where[header[i]] = i;

  std::vector<Column> cols;
  for (const auto& spec : schema.columns) {
    auto it = where.find(spec.name);
    if (it == where.end()) throw SchemaError("column '" + spec.name + "' is missing from " + path.string());
    if (spec.role == "drop") continue;
    cols.push_back({&spec, it->second, spec.categories});
  }

  std::vector<std::vector<std::string>> records;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto rec = split_csv_record(line);
    if (rec.size() != header.size())
      throw InvalidData("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields, found " + std::to_string(rec.size()));
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw InvalidData("CSV file has no data rows: " + path.string());
  const auto n = static_cast<Index>(records.size());

  // Category order: schema-provided, otherwise sorted distinct values.
  for (auto& c : cols) {
    if (c.spec->type != "categorical" || !c.categories.empty()) continue;
    std::set<std::string> seen;
    for (const auto& r : records) seen.insert(r[c.source]);
    c.categories.assign(seen.begin(), seen.end());
  }

  Dataset d;
  std::vector<VectorXd> xs, ys, ts;
  std::vector<bool> x_numeric, y_numeric, t_numeric;
  for (const auto& c : cols) {
    auto& target = c.spec->role == "feature" ? xs : c.spec->role == "target" ? ys : ts;
    auto& numeric = c.spec->role == "feature" ? x_numeric : c.spec->role == "target" ? y_numeric : t_numeric;
    auto& names = c.spec->role == "feature" ? d.x_names : c.spec->role == "target" ? d.y_names : d.t_names;
    if (c.spec->type == "numeric") {
      VectorXd v(n);
      for (Index r = 0; r < n; ++r) {
        const std::string& cell = records[static_cast<std::size_t>(r)][c.source];
        std::size_t used = 0;
        double value = 0;
        try {
          value = std::stod(cell, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (cell.empty() || used != cell.size() || !std::isfinite(value))
          throw InvalidData("unparseable numeric cell at row " + std::to_string(r + 2) + ", column " +
                            std::to_string(c.source + 1) + " ('" + c.spec->name + "'): '" + cell + "'");
        v(r) = value;
      }
      target.push_back(std::move(v));
      numeric.push_back(true);
      names.push_back(c.spec->name);
    } else {
      std::map<std::string, Index> code;
      for (std::size_t k = 0; k < c.categories.size(); ++k) code[c.categories[k]] = static_cast<Index>(k);
      const auto first = target.size();
      for (const auto& cat : c.categories) {
        target.push_back(VectorXd::Zero(n));
        numeric.push_back(false);
        names.push_back(c.spec->name + "=" + cat);
      }
      const bool labels_here = c.spec->role == "target" && d.y_labels.size() == 0;
      if (labels_here) {
        d.y_labels.resize(n);
        d.n_classes = static_cast<int>(c.categories.size());
      }
      for (Index r = 0; r < n; ++r) {
        const std::string& cell = records[static_cast<std::size_t>(r)][c.source];
        auto it = code.find(cell);
        if (it == code.end())
          throw InvalidData("unknown category at row " + std::to_string(r + 2) + ", column " +
                            std::to_string(c.source + 1) + " ('" + c.spec->name + "'): '" + cell + "'");
        target[first + static_cast<std::size_t>(it->second)](r) = 1.0;
        if (labels_here) d.y_labels(r) = static_cast<int>(it->second);
      }
    }
  }
  auto stack = [n](const std::vector<VectorXd>& cols_in) {
    MatrixXd m(n, static_cast<Index>(cols_in.size()));
    for (std::size_t i = 0; i < cols_in.size(); ++i) m.col(static_cast<Index>(i)) = cols_in[i];
    return m;
  };
  d.x = stack(xs);
  d.y = stack(ys);
  d.t = stack(ts);

  const Index n_train = schema.train_size > 0 ? schema.train_size
                                              : static_cast<Index>(std::llround(0.8 * static_cast<double>(n)));
  const Index n_test = schema.test_size > 0 ? schema.test_size : n - n_train;
  assign_split(d, std::max<Index>(1, std::min(n_train, n)), std::min(n_test, n - std::min(n_train, n)),
               schema.split_seed);

  if (standardize) {
    auto zscore = [&](MatrixXd& m, const std::vector<bool>& numeric, const std::vector<std::string>& names) {
      for (Index c = 0; c < m.cols(); ++c) {
        if (!numeric[static_cast<std::size_t>(c)]) continue;
        double mean = 0;
        for (Index r : d.train_idx) mean += m(r, c);
        mean /= static_cast<double>(d.train_idx.size());
        double var = 0;
        for (Index r : d.train_idx) var += (m(r, c) - mean) * (m(r, c) - mean);
        var /= static_cast<double>(d.train_idx.size());
        if (var < 1e-12) {
          d.floored_columns.push_back(names[static_cast<std::size_t>(c)]);
          m.col(c).setZero();
          continue;
        }
        m.col(c) = (m.col(c).array() - mean) / std::sqrt(var);
      }
    };
    zscore(d.x, x_numeric, d.x_names);
    zscore(d.y, y_numeric, d.y_names);
    zscore(d.t, t_numeric, d.t_names);
  }
  d.validate();
  return d;
}

}  // namespace slim
