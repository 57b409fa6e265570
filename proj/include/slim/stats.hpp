#pragma once

#include "slim/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace slim {

// Sample Pearson correlation. Returns 0 when either input has zero variance.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pearson(const Eigen::MatrixBase<DerivedA>& a,
                                  const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const auto ac = (a.array() - a.mean()).matrix().eval();
  const auto bc = (b.array() - b.mean()).matrix().eval();
  const Scalar saa = ac.squaredNorm();
  const Scalar sbb = bc.squaredNorm();
  if (!(saa > Scalar(0)) || !(sbb > Scalar(0))) return Scalar(0);
  return ac.dot(bc) / std::sqrt(saa * sbb);
}

// d rho / d a for rho = pearson(a, b), holding b fixed. The entries sum to
// zero: a uniform shift of a leaves rho unchanged.
template <typename Scalar>
struct PearsonGrad {
  Scalar rho = 0;
  Vec<Scalar> d_a;
  bool degenerate = false;
};

template <typename DerivedA, typename DerivedB>
PearsonGrad<typename DerivedA::Scalar> pearson_grad(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  PearsonGrad<Scalar> out;
  const Vec<Scalar> ac = a.array() - a.mean();
  const Vec<Scalar> bc = b.array() - b.mean();
  const Scalar saa = ac.squaredNorm();
  const Scalar sbb = bc.squaredNorm();
  if (!(saa > Scalar(0)) || !(sbb > Scalar(0))) {
    out.d_a = Vec<Scalar>::Zero(a.size());
    out.degenerate = true;
    return out;
  }
  const Scalar norm = std::sqrt(saa * sbb);
  out.rho = ac.dot(bc) / norm;
  out.d_a = bc / norm - (out.rho / saa) * ac;
  return out;
}

// Order-statistic quantile: the smallest value v in `values` such that at
// least ceil(q * n) of the values are <= v.
template <typename Scalar>
Scalar upper_quantile(std::vector<Scalar> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in (0,1]");
  const auto n = values.size();
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

// Per-column mean and floored standard deviation (population variance).
template <typename Scalar>
struct Standardizer {
  static constexpr Scalar kVarianceFloor = Scalar(1e-12);

  RowVec<Scalar> mean;
  RowVec<Scalar> scale;
  // Columns whose variance fell below the floor.
  std::vector<Index> floored;

  static Standardizer fit(const Mat<Scalar>& x) {
    if (x.rows() < 1) throw InsufficientData("standardizer needs at least one row");
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      Scalar var = (x.col(j).array() - s.mean(j)).square().mean();
      if (var < kVarianceFloor) {
        var = kVarianceFloor;
        s.floored.push_back(j);
      }
      s.scale(j) = std::sqrt(var);
    }
    return s;
  }

  Mat<Scalar> apply(const Mat<Scalar>& x) const {
    if (x.cols() != mean.size()) throw InvalidArgument("standardizer column mismatch");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

}  // namespace slim
