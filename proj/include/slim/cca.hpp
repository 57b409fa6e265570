#pragma once

#include "slim/common.hpp"
#include "slim/slicing.hpp"
#include "slim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace slim {

/// Relative ridge: each covariance block gets ridge * mean(diag) added to its
/// diagonal.
inline constexpr double kDefaultRidge = 1e-4;
/// Whitening eigenvalues below this fraction of the largest are clamped to it.
inline constexpr double kEigenFloor = 1e-10;

/// Top canonical pair of two feature blocks.
template <typename Scalar = double>
struct CcaSolution {
  Vec<Scalar> w;  // Z-side feature weights
  Vec<Scalar> v;  // T-side feature weights
  // Pearson correlation of (Zf w, Tf v) on the fitting set, clamped to [0,1].
  Scalar rho = 0;
  // Raw singular value of the whitened cross-covariance (includes ridge).
  Scalar singular_value = 0;
  RowVec<Scalar> z_mean;
  RowVec<Scalar> t_mean;
  Scalar ridge_z = 0;  // absolute ridge actually added
  Scalar ridge_t = 0;
  bool degenerate = false;
};

namespace detail {

// Whitening transform W with W C W^T = I (up to the eigenvalue floor).
// Cholesky (W = L^{-1}) when the ridge keeps C well inside the floor,
// eigendecomposition (W = D^{-1/2} V^T) otherwise. Both give the same
// canonical correlations and directions.
template <typename Scalar>
struct Whitener {
  bool cholesky = false;
  Eigen::LLT<Mat<Scalar>> llt;
  Mat<Scalar> basis;     // eigenvectors
  Vec<Scalar> inv_sqrt;  // floored eigenvalues ^ -1/2

  // W A
  Mat<Scalar> apply(const Mat<Scalar>& a) const {
    if (cholesky) return llt.matrixL().solve(a);
    return inv_sqrt.asDiagonal() * (basis.transpose() * a);
  }
  // W^T u: maps a whitened direction back to feature weights.
  Vec<Scalar> back(const Vec<Scalar>& u) const {
    if (cholesky) return llt.matrixU().solve(u);
    return basis * inv_sqrt.cwiseProduct(u);
  }
};

// `ridge_fraction` is the relative ridge already added to the diagonal. The
// smallest eigenvalue is then at least ridge_fraction * mean(diag) and the
// largest at most trace, so the floor cannot bind once ridge_fraction clears
// kEigenFloor * dim by a margin.
template <typename Scalar>
Whitener<Scalar> whiten(const Mat<Scalar>& cov, Scalar ridge_fraction) {
  Whitener<Scalar> w;
  const Scalar dim = Scalar(cov.rows());
  if (ridge_fraction > Scalar(100 * kEigenFloor) * dim * (Scalar(1) + ridge_fraction)) {
    w.llt.compute(cov);
    if (w.llt.info() == Eigen::Success) {
      w.cholesky = true;
      return w;
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(cov);
  if (es.info() != Eigen::Success) throw InvalidData("CCA: covariance eigendecomposition failed");
  const Vec<Scalar> ev = es.eigenvalues();
  const Scalar top = ev.maxCoeff();
  const Scalar floor = std::max(top * Scalar(kEigenFloor), std::numeric_limits<Scalar>::min());
  w.basis = es.eigenvectors();
  w.inv_sqrt = ev.cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return w;
}

// Largest eigenvalue of a symmetric PSD matrix and a unit eigenvector.
// Eigenvalues only, then shifted inverse iteration for the vector; falls
// back to the full solver if the iteration does not settle.
template <typename Scalar>
std::pair<Scalar, Vec<Scalar>> top_eigenpair(const Mat<Scalar>& g) {
  const Index n = g.rows();
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> values(g, Eigen::EigenvaluesOnly);
  if (values.info() != Eigen::Success) throw InvalidData("CCA: eigenvalue iteration failed");
  const Scalar lambda = values.eigenvalues()(n - 1);
  if (!(lambda > Scalar(0))) return {Scalar(0), Vec<Scalar>::Zero(n)};

  Mat<Scalar> shifted = -g;
  shifted.diagonal().array() += lambda * (Scalar(1) + Scalar(1e-8));
  Eigen::LLT<Mat<Scalar>> llt(shifted);
  if (llt.info() == Eigen::Success) {
    Index start = 0;
    g.diagonal().maxCoeff(&start);
    Vec<Scalar> x = g.col(start).normalized();
    for (int it = 0; it < 12; ++it) {
      x = llt.solve(x).normalized();
      if ((g * x - lambda * x).norm() <= Scalar(1e-10) * lambda) return {lambda, x};
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> full(g);
  if (full.info() != Eigen::Success) throw InvalidData("CCA: eigendecomposition failed");
  return {std::max(full.eigenvalues()(n - 1), Scalar(0)), full.eigenvectors().col(n - 1)};
}

template <typename Scalar>
Mat<Scalar> covariance(const Mat<Scalar>& centered) {
  const Index p = centered.cols();
  Mat<Scalar> c = Mat<Scalar>::Zero(p, p);
  c.template selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  Mat<Scalar> full = c.template selfadjointView<Eigen::Lower>();
  return full / Scalar(centered.rows() - 1);
}

}  // namespace detail

namespace detail {

inline void check_cca_inputs(Index zrows, Index trows, Index zcols, Index tcols, double ridge) {
  if (zrows != trows) throw InvalidArgument("CCA: row counts differ");
  if (zrows < 2) throw InsufficientData("CCA needs at least 2 samples");
  if (!(ridge >= 0.0)) throw InvalidArgument("CCA: ridge must be >= 0");
  if (zcols < 1 || tcols < 1) throw InvalidArgument("CCA: empty feature block");
}

// Adds the relative ridge to both blocks. Returns false (and marks the
// solution degenerate) when either block has no variance at all.
template <typename Scalar>
bool add_ridge(CcaSolution<Scalar>& sol, Mat<Scalar>& czz, Mat<Scalar>& ctt, Scalar ridge) {
  if (!czz.allFinite() || !ctt.allFinite()) throw InvalidData("CCA: non-finite covariance");
  const Scalar zdiag = czz.diagonal().mean();
  const Scalar tdiag = ctt.diagonal().mean();
  sol.w = Vec<Scalar>::Zero(czz.rows());
  sol.v = Vec<Scalar>::Zero(ctt.rows());
  if (!(zdiag > Scalar(0)) || !(tdiag > Scalar(0))) {
    sol.degenerate = true;
    return false;
  }
  sol.ridge_z = ridge * zdiag;
  sol.ridge_t = ridge * tdiag;
  czz.diagonal().array() += sol.ridge_z;
  ctt.diagonal().array() += sol.ridge_t;
  return true;
}

// Maps the whitened singular pair (u, r) back to weights and fixes the sign
// so that the fitted correlation `corr(w, v)` is non-negative.
template <typename Scalar, typename Corr>
void finish(CcaSolution<Scalar>& sol, const Whitener<Scalar>& wz, const Whitener<Scalar>& wt,
            const Vec<Scalar>& u, const Vec<Scalar>& r, Scalar sigma, Corr corr) {
  sol.singular_value = sigma;
  if (!(sigma > Scalar(0))) {
    sol.degenerate = true;
    return;
  }
  sol.w = wz.back(u);
  sol.v = wt.back(r);
  Scalar rho = corr(sol.w, sol.v);
  if (rho < Scalar(0)) {
    sol.v = -sol.v;
    rho = -rho;
  }
  sol.rho = std::clamp(rho, Scalar(0), Scalar(1));
}

}  // namespace detail

/// Weights w, v maximizing the sample Pearson correlation of (Zf w, Tf v).
///
/// Both blocks are centered; C_zz and C_tt receive a relative ridge and are
/// whitened (with an eigenvalue floor when the ridge is too small to rule it
/// out), and the top singular pair of the whitened cross-covariance gives the
/// canonical directions. `rho` is then measured directly as the Pearson
/// correlation of the two projections so that re-evaluating the weights
/// reproduces it.
template <typename Scalar>
CcaSolution<Scalar> solve_cca(const Mat<Scalar>& zf, const Mat<Scalar>& tf,
                              Scalar ridge = Scalar(kDefaultRidge)) {
  detail::check_cca_inputs(zf.rows(), tf.rows(), zf.cols(), tf.cols(), double(ridge));

  CcaSolution<Scalar> sol;
  sol.z_mean = zf.colwise().mean();
  sol.t_mean = tf.colwise().mean();
  const Mat<Scalar> zc = zf.rowwise() - sol.z_mean;
  const Mat<Scalar> tc = tf.rowwise() - sol.t_mean;

  Mat<Scalar> czz = detail::covariance(zc);
  Mat<Scalar> ctt = detail::covariance(tc);
  const Mat<Scalar> czt = (zc.transpose() * tc) / Scalar(zf.rows() - 1);
  if (!czt.allFinite()) throw InvalidData("CCA: non-finite covariance");
  if (!detail::add_ridge(sol, czz, ctt, ridge)) return sol;

  const auto wz = detail::whiten(czz, ridge);
  const auto wt = detail::whiten(ctt, ridge);
  // M = W_z C_zt W_t^T
  const Mat<Scalar> m = wt.apply(wz.apply(czt).transpose()).transpose();

  // Top singular pair via the smaller Gram matrix.
  Vec<Scalar> u, r;
  Scalar sigma = 0;
  if (m.rows() <= m.cols()) {
    auto [lambda, vec] = detail::top_eigenpair<Scalar>(m * m.transpose());
    sigma = std::sqrt(lambda);
    u = std::move(vec);
    r = m.transpose() * u;
  } else {
    auto [lambda, vec] = detail::top_eigenpair<Scalar>(m.transpose() * m);
    sigma = std::sqrt(lambda);
    r = std::move(vec);
    u = m * r;
  }
  detail::finish(sol, wz, wt, u, r, sigma,
                 [&](const Vec<Scalar>& w, const Vec<Scalar>& v) { return pearson(zc * w, tc * v); });
  return sol;
}

/// Same problem with the T block given in factored form Tf = base * expand
/// (base n x r, expand r x q, r small). The cross-covariance then has rank at
/// most r and the singular pair comes from an r x r problem.
template <typename Scalar>
CcaSolution<Scalar> solve_cca_factored(const Mat<Scalar>& zf, const Mat<Scalar>& base,
                                       const Mat<Scalar>& expand, Scalar ridge = Scalar(kDefaultRidge)) {
  detail::check_cca_inputs(zf.rows(), base.rows(), zf.cols(), expand.cols(), double(ridge));
  if (expand.rows() != base.cols()) throw InvalidArgument("CCA: expansion does not match base block");

  CcaSolution<Scalar> sol;
  const Scalar denom = Scalar(zf.rows() - 1);
  sol.z_mean = zf.colwise().mean();
  const RowVec<Scalar> b_mean = base.colwise().mean();
  sol.t_mean = b_mean * expand;
  const Mat<Scalar> bc = base.rowwise() - b_mean;

  // Raw second moments: the features are bounded, so the mean correction
  // costs little precision and the centered copy of Zf is never formed.
  Mat<Scalar> czz = Mat<Scalar>::Zero(zf.cols(), zf.cols());
  czz.template selfadjointView<Eigen::Lower>().rankUpdate(zf.transpose(), Scalar(1) / denom);
  czz.template selfadjointView<Eigen::Lower>().rankUpdate(sol.z_mean.transpose(),
                                                          -Scalar(zf.rows()) / denom);
  czz = Mat<Scalar>(czz.template selfadjointView<Eigen::Lower>());
  const Mat<Scalar> cbb = (bc.transpose() * bc) / denom;
  Mat<Scalar> ctt = expand.transpose() * cbb * expand;
  // bc is centered, so Zf^T bc = Zc^T bc.
  const Mat<Scalar> czb = (zf.transpose() * bc) / denom;
  if (!czb.allFinite()) throw InvalidData("CCA: non-finite covariance");
  if (!detail::add_ridge(sol, czz, ctt, ridge)) return sol;

  const auto wz = detail::whiten(czz, ridge);
  const auto wt = detail::whiten(ctt, ridge);
  // M = (W_z C_zb) (W_t expand^T)^T = P Q^T; with Q = Q1 R1, M = (P R1^T) Q1^T.
  const Mat<Scalar> p = wz.apply(czb);
  const Mat<Scalar> q = wt.apply(expand.transpose());
  Eigen::HouseholderQR<Mat<Scalar>> qr(q);
  const Index rank = q.cols();
  const Mat<Scalar> q1 = qr.householderQ() * Mat<Scalar>::Identity(q.rows(), rank);
  const Mat<Scalar> r1 = qr.matrixQR().topRows(rank).template triangularView<Eigen::Upper>();
  const Mat<Scalar> a = p * r1.transpose();

  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(a.transpose() * a);
  if (es.info() != Eigen::Success) throw InvalidData("CCA: eigendecomposition failed");
  const Scalar sigma = std::sqrt(std::max(es.eigenvalues()(rank - 1), Scalar(0)));
  const Vec<Scalar> y = es.eigenvectors().col(rank - 1);
  const Vec<Scalar> u = sigma > Scalar(0) ? Vec<Scalar>(a * y / sigma) : Vec<Scalar>(Vec<Scalar>::Zero(a.rows()));
  const Vec<Scalar> r = q1 * y;
  detail::finish(sol, wz, wt, u, r, sigma, [&](const Vec<Scalar>& w, const Vec<Scalar>& v) {
    return pearson(zf * w, bc * (expand * v));
  });
  return sol;
}

namespace detail {

// One-dimensional slices are +1 or -1, and tanh is odd, so slice i's features
// are phi_i^k times those of the +1 slice. Returns the K x (K*S) matrix that
// expands the +1 features to the full block, or nothing if `dirs` is not of
// that form.
template <typename Scalar>
std::optional<Mat<Scalar>> sign_expansion(const Mat<Scalar>& dirs, const PolyConfig& poly) {
  if (dirs.cols() != 1) return std::nullopt;
  const Index k_max = poly.order;
  Mat<Scalar> e = Mat<Scalar>::Zero(k_max, dirs.rows() * k_max);
  for (Index i = 0; i < dirs.rows(); ++i) {
    const Scalar s = dirs(i, 0);
    if (s != Scalar(1) && s != Scalar(-1)) return std::nullopt;
    Scalar sk = s;
    for (Index k = 0; k < k_max; ++k, sk *= s) e(k, i * k_max + k) = sk;
  }
  return e;
}

}  // namespace detail

/// A fitted sliced dependence estimate: slices, feature order, the input
/// standardization of the fitting set and the canonical weights.
template <typename Scalar = double>
struct SiEstimate {
  Scalar statistic = 0;
  CcaSolution<Scalar> solution;
  SliceSet<Scalar> slices;
  PolyConfig poly;
  Standardizer<Scalar> z_scale;
  Standardizer<Scalar> t_scale;
};

template <typename Scalar>
SiEstimate<Scalar> estimate_si(const Mat<Scalar>& z, const Mat<Scalar>& t,
                               const SliceSet<Scalar>& slices, const PolyConfig& poly,
                               Scalar ridge = Scalar(kDefaultRidge)) {
  if (z.rows() != t.rows()) throw InvalidArgument("estimate_si: Z and T are not row-aligned");
  if (z.rows() < 2) throw InsufficientData("estimate_si needs at least 2 samples");
  SiEstimate<Scalar> est;
  est.slices = slices;
  est.poly = poly;
  est.z_scale = Standardizer<Scalar>::fit(z);
  est.t_scale = Standardizer<Scalar>::fit(t);
  const Mat<Scalar> zf = feature_map(est.z_scale.apply(z), slices.theta, poly);
  const Mat<Scalar> ts = est.t_scale.apply(t);
  if (const auto expand = detail::sign_expansion(slices.phi, poly)) {
    const Mat<Scalar> base = feature_map<Scalar>(ts, Mat<Scalar>::Ones(1, 1), poly);
    est.solution = solve_cca_factored(zf, base, *expand, ridge);
  } else {
    est.solution = solve_cca(zf, feature_map(ts, slices.phi, poly), ridge);
  }
  est.statistic = est.solution.rho;
  return est;
}

/// Scalar projections (w.Z', v.T') of a batch under a fitted estimate.
template <typename Scalar>
std::pair<Vec<Scalar>, Vec<Scalar>> si_projections(const Mat<Scalar>& z, const Mat<Scalar>& t,
                                                   const SiEstimate<Scalar>& fitted) {
  if (z.rows() != t.rows()) throw InvalidArgument("Z and T are not row-aligned");
  const Mat<Scalar> zf = feature_map(fitted.z_scale.apply(z), fitted.slices.theta, fitted.poly);
  const Mat<Scalar> tf = feature_map(fitted.t_scale.apply(t), fitted.slices.phi, fitted.poly);
  return {(zf.rowwise() - fitted.solution.z_mean) * fitted.solution.w,
          (tf.rowwise() - fitted.solution.t_mean) * fitted.solution.v};
}

/// Signed batch correlation of the fitted projections.
template <typename Scalar>
Scalar evaluate_si_signed(const Mat<Scalar>& z, const Mat<Scalar>& t,
                          const SiEstimate<Scalar>& fitted) {
  if (z.rows() < 2) throw InsufficientData("evaluate_si needs a batch of at least 2");
  const auto [a, b] = si_projections(z, t, fitted);
  return pearson(a, b);
}

/// Batch statistic, clamped to [0,1].
template <typename Scalar>
Scalar evaluate_si(const Mat<Scalar>& z, const Mat<Scalar>& t, const SiEstimate<Scalar>& fitted) {
  return std::clamp(evaluate_si_signed(z, t, fitted), Scalar(0), Scalar(1));
}

template <typename Scalar = double>
struct SiGradient {
  Scalar value = 0;      // signed batch correlation
  Mat<Scalar> d_z;       // m x D
  bool degenerate = false;
};

namespace detail {

// d(w.F(u)) / d(projection_i) per sample: sum_k w_ik k tanh^{k-1} (1 - tanh^2).
template <typename Scalar>
Mat<Scalar> feature_chain(const Mat<Scalar>& proj, const Vec<Scalar>& weights, int order) {
  const Mat<Scalar> th = proj.array().tanh().matrix();
  Mat<Scalar> out = Mat<Scalar>::Zero(proj.rows(), proj.cols());
  for (Index i = 0; i < proj.cols(); ++i) {
    // Horner in tanh for sum_k k w_ik tanh^{k-1}.
    Vec<Scalar> acc = Vec<Scalar>::Constant(proj.rows(), Scalar(order) * weights(i * order + order - 1));
    for (int k = order - 1; k >= 1; --k)
      acc = acc.cwiseProduct(th.col(i)) + Vec<Scalar>::Constant(proj.rows(), Scalar(k) * weights(i * order + k - 1));
    out.col(i) = acc.array() * (Scalar(1) - th.col(i).array().square());
  }
  return out;
}

}  // namespace detail

/// Exact gradient of the signed batch correlation with respect to every entry
/// of the Z batch, with the fitted weights, slices and standardization frozen.
template <typename Scalar>
SiGradient<Scalar> si_gradient(const Mat<Scalar>& z, const Mat<Scalar>& t,
                               const SiEstimate<Scalar>& fitted) {
  if (z.rows() != t.rows()) throw InvalidArgument("si_gradient: Z and T are not row-aligned");
  if (z.rows() < 2) throw InsufficientData("si_gradient needs a batch of at least 2");
  const auto& sol = fitted.solution;
  const Mat<Scalar> zs = fitted.z_scale.apply(z);
  const Mat<Scalar> proj = project(zs, fitted.slices.theta);
  const Mat<Scalar> zf = feature_map(zs, fitted.slices.theta, fitted.poly);
  const Mat<Scalar> tf = feature_map(fitted.t_scale.apply(t), fitted.slices.phi, fitted.poly);
  const Vec<Scalar> a = zf * sol.w;
  const Vec<Scalar> b = tf * sol.v;
  const auto pg = pearson_grad(a, b);

  SiGradient<Scalar> out;
  out.value = pg.rho;
  out.degenerate = pg.degenerate;
  if (pg.degenerate) {
    out.d_z = Mat<Scalar>::Zero(z.rows(), z.cols());
    return out;
  }
  const Mat<Scalar> chain = pg.d_a.asDiagonal() * detail::feature_chain(proj, sol.w, fitted.poly.order);
  out.d_z = (chain * fitted.slices.theta).array().rowwise() / fitted.z_scale.scale.array();
  return out;
}

/// Gradients of the batch correlation with respect to the slice directions,
/// with weights held at the fitted canonical pair.
template <typename Scalar = double>
struct SliceGradient {
  Scalar value = 0;
  Mat<Scalar> d_theta;
  Mat<Scalar> d_phi;
  bool degenerate = false;
};

template <typename Scalar>
SliceGradient<Scalar> slice_gradient(const Mat<Scalar>& z, const Mat<Scalar>& t,
                                     const SiEstimate<Scalar>& fitted) {
  const auto& sol = fitted.solution;
  const int k = fitted.poly.order;
  const Mat<Scalar> zs = fitted.z_scale.apply(z);
  const Mat<Scalar> ts = fitted.t_scale.apply(t);
  const Mat<Scalar> pz = project(zs, fitted.slices.theta);
  const Mat<Scalar> pt = project(ts, fitted.slices.phi);
  const Vec<Scalar> a = feature_map(zs, fitted.slices.theta, fitted.poly) * sol.w;
  const Vec<Scalar> b = feature_map(ts, fitted.slices.phi, fitted.poly) * sol.v;
  const auto ga = pearson_grad(a, b);
  const auto gb = pearson_grad(b, a);

  SliceGradient<Scalar> out;
  out.value = ga.rho;
  out.degenerate = ga.degenerate || gb.degenerate;
  if (out.degenerate) {
    out.d_theta = Mat<Scalar>::Zero(fitted.slices.theta.rows(), fitted.slices.theta.cols());
    out.d_phi = Mat<Scalar>::Zero(fitted.slices.phi.rows(), fitted.slices.phi.cols());
    return out;
  }
  out.d_theta = (ga.d_a.asDiagonal() * detail::feature_chain(pz, sol.w, k)).transpose() * zs;
  out.d_phi = (gb.d_a.asDiagonal() * detail::feature_chain(pt, sol.v, k)).transpose() * ts;
  return out;
}

}  // namespace slim
