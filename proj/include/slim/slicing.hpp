#pragma once

#include "slim/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace slim {

/// Random projection directions for both sides of a dependence measure.
/// Rows of `theta` (S x D) slice the Z side, rows of `phi` (S x d) the T side;
/// every row has unit Euclidean norm.
template <typename Scalar = double>
struct SliceSet {
  Mat<Scalar> theta;
  Mat<Scalar> phi;
  std::uint64_t seed = 0;

  Index count() const { return theta.rows(); }
};

/// Polynomial order of the bounded feature expansion tanh(u)^1..tanh(u)^K.
struct PolyConfig {
  int order = 3;
};

/// Rows drawn uniformly on the unit sphere S^{dim-1} by normalizing standard
/// normal vectors.
template <typename Scalar = double>
Mat<Scalar> sample_sphere(Index rows, Index dim, Rng& rng) {
  if (rows < 1 || dim < 1) throw InvalidArgument("sphere sample needs rows >= 1 and dim >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat<Scalar> out(rows, dim);
  for (Index r = 0; r < rows; ++r) {
    double norm2 = 0.0;
    do {
      for (Index c = 0; c < dim; ++c) out(r, c) = static_cast<Scalar>(normal(rng));
      norm2 = static_cast<double>(out.row(r).squaredNorm());
    } while (norm2 == 0.0);
    out.row(r) /= std::sqrt(static_cast<Scalar>(norm2));
  }
  return out;
}

template <typename Scalar = double>
SliceSet<Scalar> sample_slices(Index slices, Index z_dim, Index t_dim, std::uint64_t seed) {
  if (slices < 1) throw InvalidArgument("slice count must be >= 1");
  if (z_dim < 1 || t_dim < 1) throw InvalidArgument("slice dimensions must be >= 1");
  Rng theta_rng = substream(seed, "slices.theta");
  Rng phi_rng = substream(seed, "slices.phi");
  SliceSet<Scalar> s;
  s.theta = sample_sphere<Scalar>(slices, z_dim, theta_rng);
  s.phi = sample_sphere<Scalar>(slices, t_dim, phi_rng);
  s.seed = seed;
  return s;
}

/// X * dirs^T accumulated one input dimension at a time, so trailing zero
/// dimensions leave every projection bit-identical.
template <typename Scalar>
Mat<Scalar> project(const Mat<Scalar>& x, const Mat<Scalar>& dirs) {
  if (x.cols() != dirs.cols())
    throw InvalidArgument("projection: sample dimension " + std::to_string(x.cols()) +
                          " does not match slice dimension " + std::to_string(dirs.cols()));
  Mat<Scalar> p = Mat<Scalar>::Zero(x.rows(), dirs.rows());
  // Row blocks keep the accumulator in cache; the per-entry summation order
  // is still d = 0, 1, ...
  constexpr Index block = 128;
  for (Index r0 = 0; r0 < x.rows(); r0 += block) {
    const Index rows = std::min(block, x.rows() - r0);
    auto out = p.middleRows(r0, rows);
    for (Index d = 0; d < x.cols(); ++d)
      out.noalias() += x.col(d).segment(r0, rows) * dirs.col(d).transpose();
  }
  return p;
}

/// Column (i*K + k-1) holds tanh(dirs_i . x)^k for slice i and power k in 1..K.
template <typename Scalar>
Mat<Scalar> feature_map(const Mat<Scalar>& x, const Mat<Scalar>& dirs, const PolyConfig& cfg) {
  if (cfg.order < 1) throw InvalidArgument("polynomial order must be >= 1");
  if (!x.allFinite()) throw InvalidData("feature_map: non-finite input");
  const Mat<Scalar> t = project(x, dirs).array().tanh().matrix();
  const Index k_max = cfg.order;
  Mat<Scalar> f(x.rows(), t.cols() * k_max);
  for (Index i = 0; i < t.cols(); ++i) {
    f.col(i * k_max) = t.col(i);
    for (Index k = 1; k < k_max; ++k)
      f.col(i * k_max + k) = f.col(i * k_max + k - 1).cwiseProduct(t.col(i));
  }
  return f;
}

}  // namespace slim
