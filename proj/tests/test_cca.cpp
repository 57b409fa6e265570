#include "helpers.hpp"

#include "slim/cca.hpp"
#include "slim/data.hpp"

#include <doctest.h>

#include <Eigen/SVD>

using namespace slim;

namespace {

MatrixXd centered(const MatrixXd& m) { return m.rowwise() - m.colwise().mean(); }

// Top canonical correlation from orthonormal bases of the centered blocks:
// the singular values of Qa^T Qb are the canonical correlations.
double qr_canonical_corr(const MatrixXd& a, const MatrixXd& b) {
  const MatrixXd ac = centered(a), bc = centered(b);
  Eigen::HouseholderQR<MatrixXd> qa(ac), qb(bc);
  const MatrixXd ua = qa.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
  const MatrixXd ub = qb.householderQ() * MatrixXd::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<MatrixXd> svd(ua.transpose() * ub);
  return svd.singularValues()(0);
}

// Top singular value of (Czz + rz I)^-1/2 Czt (Ctt + rt I)^-1/2 with the
// relative ridge convention.
double ridge_canonical_value(const MatrixXd& a, const MatrixXd& b, double ridge) {
  const MatrixXd ac = centered(a), bc = centered(b);
  const double n1 = static_cast<double>(a.rows() - 1);
  MatrixXd caa = ac.transpose() * ac / n1;
  MatrixXd cbb = bc.transpose() * bc / n1;
  const MatrixXd cab = ac.transpose() * bc / n1;
  caa.diagonal().array() += ridge * caa.diagonal().mean();
  cbb.diagonal().array() += ridge * cbb.diagonal().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> ea(caa), eb(cbb);
  Eigen::JacobiSVD<MatrixXd> svd(ea.operatorInverseSqrt() * cab * eb.operatorInverseSqrt());
  return svd.singularValues()(0);
}

}  // namespace

TEST_SUITE("cca") {

TEST_CASE("identical blocks correlate perfectly") {
  Rng rng(1);
  const MatrixXd z = test::gaussian(500, 4, rng);
  const auto sol = solve_cca(z, z, 1e-4);
  CHECK(sol.rho == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(sol.degenerate);
}

TEST_CASE("independent Gaussian blocks stay inside the permutation null") {
  Rng rng(2);
  const MatrixXd z = test::gaussian(10000, 2, rng);
  const MatrixXd t = test::gaussian(10000, 2, rng);
  const double observed = solve_cca(z, t, 1e-4).rho;
  std::vector<double> null;
  for (int p = 0; p < 500; ++p) null.push_back(solve_cca(z, test::shuffled_rows(t, rng), 1e-4).rho);
  CHECK(observed < upper_quantile(null, 0.99));
}

TEST_CASE("one-dimensional canonical correlation is |pearson|") {
  Rng rng(3);
  const MatrixXd e = test::gaussian(50000, 2, rng);
  const double r = 0.8;
  const MatrixXd z = e.col(0);
  const MatrixXd t = (r * e.col(0) + std::sqrt(1 - r * r) * e.col(1)).eval();
  const auto sol = solve_cca(z, t, 0.0);
  CHECK(std::abs(sol.rho - 0.8) < 0.02);
  CHECK(sol.rho == doctest::Approx(std::abs(pearson(z.col(0), t.col(0)))).epsilon(1e-12));
  const MatrixXd neg = -t;
  CHECK(solve_cca(z, neg, 0.0).rho == doctest::Approx(sol.rho).epsilon(1e-12));
}

TEST_CASE("unregularized solution matches the QR oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Index p = 1 + static_cast<Index>(seed % 4), q = 1 + static_cast<Index>((seed / 2) % 5);
    const MatrixXd shared = test::gaussian(400, 1, rng);
    MatrixXd z = test::gaussian(400, p, rng);
    MatrixXd t = test::gaussian(400, q, rng);
    z.col(0) += 0.7 * shared;
    t.col(q - 1) += 0.5 * shared.array().square().matrix();
    t.col(0) += 0.4 * shared;
    const auto sol = solve_cca(z, t, 0.0);
    const double oracle = qr_canonical_corr(z, t);
    CHECK(sol.rho == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(sol.singular_value == doctest::Approx(oracle).epsilon(1e-9));
    // rho is the correlation of the fitted projections.
    const VectorXd a = centered(z) * sol.w, b = centered(t) * sol.v;
    CHECK(pearson(a, b) == doctest::Approx(sol.rho).epsilon(1e-12));
  }
}

TEST_CASE("ridge solutions match the explicit inverse-square-root form") {
  Rng rng(7);
  const MatrixXd base = test::gaussian(800, 3, rng);
  MatrixXd z(800, 6), t(800, 4);
  z << base, base.array().tanh().matrix() + 0.1 * test::gaussian(800, 3, rng);
  t << base.col(0).array().square().matrix(), test::gaussian(800, 3, rng);
  for (double ridge : {1e-12, 1e-6, 1e-4, 1e-2, 1.0}) {
    CAPTURE(ridge);
    const auto sol = solve_cca(z, t, ridge);
    CHECK(sol.singular_value == doctest::Approx(ridge_canonical_value(z, t, ridge)).epsilon(1e-9));
  }
}

TEST_CASE("Cholesky and eigen whitening agree") {
  Rng rng(8);
  const MatrixXd x = test::gaussian(300, 6, rng) * test::gaussian(6, 6, rng);
  MatrixXd cov = centered(x).transpose() * centered(x) / 299.0;
  cov.diagonal().array() += 1e-4 * cov.diagonal().mean();
  const auto chol = detail::whiten<double>(cov, 1e-4);
  const auto eig = detail::whiten<double>(cov, 0.0);
  REQUIRE(chol.cholesky);
  REQUIRE_FALSE(eig.cholesky);
  const MatrixXd id = MatrixXd::Identity(6, 6);
  for (const auto* w : {&chol, &eig}) {
    const MatrixXd wm = w->apply(id);
    CHECK((wm * cov * wm.transpose() - id).norm() < 1e-9);
    // back() is the transpose of apply().
    const VectorXd u = VectorXd::LinSpaced(6, -1.0, 2.0);
    CHECK((w->back(u) - wm.transpose() * u).norm() < 1e-9);
  }
}

TEST_CASE("shifted inverse iteration finds the top eigenpair") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Index n = 2 + static_cast<Index>(seed % 30);
    const MatrixXd a = test::gaussian(n + 3, n, rng);
    const MatrixXd g = a.transpose() * a;
    const auto [lambda, vec] = detail::top_eigenpair<double>(g);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
    CHECK(lambda == doctest::Approx(es.eigenvalues()(n - 1)).epsilon(1e-12));
    CHECK(std::abs(std::abs(vec.dot(es.eigenvectors().col(n - 1))) - 1.0) < 1e-8);
  }
  const auto [zero, v0] = detail::top_eigenpair<double>(MatrixXd::Zero(3, 3));
  CHECK(zero == 0.0);
  CHECK(v0.isZero());
}

TEST_CASE("factored T block matches the generic solver") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(100 + seed);
    const Index d_z = 1 + static_cast<Index>(seed % 5);
    const MatrixXd z = test::gaussian(2000, d_z, rng);
    const MatrixXd t = (z.col(0).array().sin() + 0.5 * test::gaussian(2000, 1, rng).array()).matrix();
    const auto slices = sample_slices<double>(20 + static_cast<Index>(seed) * 10, d_z, 1, seed);
    const PolyConfig poly{1 + static_cast<int>(seed % 3)};
    const auto est = estimate_si(z, t, slices, poly);

    const MatrixXd zf = feature_map(est.z_scale.apply(z), slices.theta, poly);
    const MatrixXd tf = feature_map(est.t_scale.apply(t), slices.phi, poly);
    const auto generic = solve_cca(zf, tf, kDefaultRidge);
    CHECK(est.statistic == doctest::Approx(generic.rho).epsilon(1e-9));
    CHECK(est.solution.singular_value == doctest::Approx(generic.singular_value).epsilon(1e-9));
    // Same direction on the Z side, up to sign.
    const VectorXd a1 = centered(zf) * est.solution.w, a2 = centered(zf) * generic.w;
    CHECK(std::abs(pearson(a1, a2)) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("sign expansion only applies to one-dimensional +-1 slices") {
  MatrixXd dirs(3, 1);
  dirs << 1, -1, 1;
  const auto e = detail::sign_expansion<double>(dirs, PolyConfig{2});
  REQUIRE(e.has_value());
  CHECK((*e)(0, 2) == -1.0);  // slice 1, power 1
  CHECK((*e)(1, 3) == 1.0);   // slice 1, power 2
  CHECK_FALSE(detail::sign_expansion<double>(MatrixXd::Ones(3, 2), PolyConfig{2}).has_value());
  MatrixXd off = dirs;
  off(1, 0) = 0.5;
  CHECK_FALSE(detail::sign_expansion<double>(off, PolyConfig{2}).has_value());
}

TEST_CASE("solver errors and degenerate blocks") {
  CHECK_THROWS_AS(solve_cca<double>(MatrixXd::Ones(1, 2), MatrixXd::Ones(1, 2)), InsufficientData);
  CHECK_THROWS_AS(solve_cca<double>(MatrixXd::Ones(3, 2), MatrixXd::Ones(4, 2)), InvalidArgument);
  CHECK_THROWS_AS(solve_cca<double>(MatrixXd::Ones(3, 2), MatrixXd::Ones(3, 2), -1.0), InvalidArgument);
  MatrixXd bad = MatrixXd::Random(5, 2);
  bad(2, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_cca<double>(bad, MatrixXd::Random(5, 2)), InvalidData);
  const auto constant = solve_cca<double>(MatrixXd::Ones(10, 2), MatrixXd::Random(10, 2));
  CHECK(constant.degenerate);
  CHECK(constant.rho == 0.0);
}

TEST_CASE("identical variables give a near-perfect sliced statistic") {
  Rng rng(11);
  const MatrixXd z = test::gaussian(3000, 3, rng);
  auto slices = sample_slices<double>(50, 3, 3, 4);
  slices.phi = slices.theta;
  CHECK(estimate_si(z, z, slices, PolyConfig{3}).statistic >= 0.99);
}

TEST_CASE("independent draws stay inside the shuffled-T null") {
  Rng rng(12);
  const MatrixXd z = test::gaussian(10000, 3, rng);
  const MatrixXd t = test::gaussian(10000, 1, rng);
  const auto slices = sample_slices<double>(200, 3, 1, 5);
  const double observed = estimate_si(z, t, slices, PolyConfig{3}).statistic;
  std::vector<double> null;
  for (int p = 0; p < 40; ++p)
    null.push_back(estimate_si(z, test::shuffled_rows(t, rng), slices, PolyConfig{3}).statistic);
  CHECK(observed < upper_quantile(null, 0.95));
}

TEST_CASE("sin pattern at low noise clears the shuffled-T null") {
  SyntheticSpec spec;
  spec.pattern = Pattern::sin;
  spec.alpha = 0.2;
  spec.seed = 6;
  const Dataset d = generate_synthetic(spec, 10000);
  const auto slices = sample_slices<double>(50, d.x.cols(), d.y.cols(), 6);
  const double observed = estimate_si(d.x, d.y, slices, PolyConfig{3}).statistic;
  Rng rng(6);
  std::vector<double> null;
  for (int p = 0; p < 100; ++p)
    null.push_back(estimate_si(d.x, test::shuffled_rows(d.y, rng), slices, PolyConfig{3}).statistic);
  CHECK(observed > upper_quantile(null, 0.99));
}

TEST_CASE("re-evaluation of a fitted estimate") {
  Rng rng(13);
  const MatrixXd z = test::gaussian(600, 4, rng);
  const MatrixXd t = (z.leftCols(2).array().square().rowwise().sum() / 2.0).matrix() + 0.3 * test::gaussian(600, 1, rng);
  const auto slices = sample_slices<double>(30, 4, 1, 9);
  auto est = estimate_si(z, t, slices, PolyConfig{3});

  SUBCASE("on the fitting set it returns the fitted rho") {
    CHECK(std::abs(evaluate_si(z, t, est) - est.statistic) < 1e-9);
  }
  SUBCASE("weight scaling does not matter") {
    const double before = evaluate_si(z, t, est);
    est.solution.w *= 3.7;
    est.solution.v *= 0.02;
    CHECK(evaluate_si(z, t, est) == doctest::Approx(before).epsilon(1e-12));
  }
  SUBCASE("joint row permutation does not matter") {
    std::vector<Index> order(600);
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    MatrixXd zp(600, 4), tp(600, 1);
    for (Index i = 0; i < 600; ++i) {
      zp.row(i) = z.row(order[static_cast<std::size_t>(i)]);
      tp.row(i) = t.row(order[static_cast<std::size_t>(i)]);
    }
    CHECK(evaluate_si(zp, tp, est) == doctest::Approx(evaluate_si(z, t, est)).epsilon(1e-12));
  }
  SUBCASE("clamped to [0,1]") {
    est.solution.v = -est.solution.v;
    CHECK(evaluate_si_signed(z, t, est) < 0.0);
    CHECK(evaluate_si(z, t, est) == 0.0);
  }
  CHECK_THROWS_AS(evaluate_si<double>(z.topRows(1), t.topRows(1), est), InsufficientData);
}

TEST_CASE("si_gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    const MatrixXd z = test::gaussian(400, 3, rng);
    const MatrixXd t = (z.col(0).array().cos() + 0.5 * test::gaussian(400, 1, rng).array()).matrix();
    const auto est = estimate_si(z, t, sample_slices<double>(8, 3, 1, seed), PolyConfig{3});
    const MatrixXd zb = test::gaussian(32, 3, rng);
    const MatrixXd tb = t.topRows(32);
    const auto g = si_gradient(zb, tb, est);
    REQUIRE_FALSE(g.degenerate);
    CHECK(g.value == doctest::Approx(evaluate_si_signed(zb, tb, est)).epsilon(1e-12));
    const double h = 1e-5;
    double worst = 0;
    for (Index i = 0; i < zb.rows(); ++i)
      for (Index j = 0; j < zb.cols(); ++j) {
        MatrixXd up = zb, dn = zb;
        up(i, j) += h;
        dn(i, j) -= h;
        const double fd = (evaluate_si_signed(up, tb, est) - evaluate_si_signed(dn, tb, est)) / (2 * h);
        worst = std::max(worst, test::rel_error(g.d_z(i, j), fd, 1e-4));
      }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("pearson gradient is blind to a uniform shift of the projection") {
  Rng rng(21);
  const VectorXd a = test::gaussian(40, 1, rng).col(0);
  const VectorXd b = test::gaussian(40, 1, rng).col(0) + a;
  const auto g = pearson_grad(a, b);
  CHECK(std::abs(g.d_a.sum()) < 1e-12);
}

TEST_CASE("single-slice first-order gradient by hand") {
  Rng rng(22);
  const MatrixXd z = test::gaussian(200, 2, rng);
  const MatrixXd t = z.col(0) + 0.2 * test::gaussian(200, 1, rng);
  const auto est = estimate_si(z, t, sample_slices<double>(1, 2, 1, 3), PolyConfig{1});
  MatrixXd zb(3, 2);
  zb << 0.2, -0.4, 1.1, 0.3, -0.9, 0.8;
  MatrixXd tb(3, 1);
  tb << 0.5, 1.0, -1.2;
  const auto g = si_gradient(zb, tb, est);

  const RowVec<double> theta = est.slices.theta.row(0);
  const double w = est.solution.w(0);
  const MatrixXd zs = est.z_scale.apply(zb);
  VectorXd a(3), b(3);
  for (Index i = 0; i < 3; ++i) {
    a(i) = w * std::tanh(zs.row(i).dot(theta));
    b(i) = est.solution.v(0) * std::tanh(est.t_scale.apply(tb)(i, 0) * est.slices.phi(0, 0));
  }
  const VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
  const double rho = ac.dot(bc) / (ac.norm() * bc.norm());
  for (Index i = 0; i < 3; ++i) {
    const double d_a = bc(i) / (ac.norm() * bc.norm()) - rho * ac(i) / ac.squaredNorm();
    const double u = std::tanh(zs.row(i).dot(theta));
    for (Index j = 0; j < 2; ++j) {
      const double expected = d_a * w * (1 - u * u) * theta(j) / est.z_scale.scale(j);
      CHECK(g.d_z(i, j) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("degenerate batch gives a zero flagged gradient") {
  Rng rng(23);
  const MatrixXd z = test::gaussian(100, 2, rng);
  const auto est = estimate_si(z, MatrixXd(z.col(1)), sample_slices<double>(4, 2, 1, 1), PolyConfig{2});
  const MatrixXd zb = MatrixXd::Constant(5, 2, 0.3);
  const auto g = si_gradient(zb, MatrixXd(z.topRows(5).col(1)), est);
  CHECK(g.degenerate);
  CHECK(g.d_z.isZero());
}

TEST_CASE("joint statistic dominates every slice pair") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    const Index n = 300 + static_cast<Index>(seed) * 50;
    const MatrixXd z = test::gaussian(n, 3, rng);
    const MatrixXd t = (z.leftCols(2) * MatrixXd::Ones(2, 2)).array().sin().matrix() + 0.5 * test::gaussian(n, 2, rng);
    const auto slices = sample_slices<double>(5, 3, 2, seed);
    const PolyConfig poly{3};
    const double joint = estimate_si(z, t, slices, poly, 0.0).statistic;
    const MatrixXd zf = feature_map(Standardizer<double>::fit(z).apply(z), slices.theta, poly);
    const MatrixXd tf = feature_map(Standardizer<double>::fit(t).apply(t), slices.phi, poly);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j)
        CHECK(joint + 1e-6 >= qr_canonical_corr(zf.middleCols(i * 3, 3), tf.middleCols(j * 3, 3)));
  }
}

TEST_CASE("float instantiation agrees with double") {
  Rng rng(30);
  const MatrixXd z = test::gaussian(500, 2, rng);
  const MatrixXd t = z.col(0).array().square().matrix() + 0.3 * test::gaussian(500, 1, rng);
  const auto sd = sample_slices<double>(10, 2, 1, 1);
  SliceSet<float> sf{sd.theta.cast<float>(), sd.phi.cast<float>(), sd.seed};
  const double rd = estimate_si(z, t, sd, PolyConfig{3}).statistic;
  const float rf = estimate_si<float>(z.cast<float>(), t.cast<float>(), sf, PolyConfig{3}, 1e-3f).statistic;
  CHECK(std::abs(rd - rf) < 0.02);
}

}  // TEST_SUITE
