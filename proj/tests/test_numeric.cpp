#include <cmath>
#include <random>

#include "doctest.h"
#include "dtr/numeric.hpp"
#include "oracles.hpp"

using namespace dtr;

TEST_SUITE("numeric") {

TEST_CASE("norm_cdf matches the erf series") {
  CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  // frozen from the series oracle (and a 30-digit reference)
  CHECK(std::abs(norm_cdf(-2.0) - 0.022750131948179207) < 1e-15);
  CHECK(std::abs(norm_cdf(1.96) - 0.97500210485177956) < 1e-15);
  CHECK(std::abs(oracle::phi_series(-2.0) - 0.022750131948179207) < 1e-14);
  for (double x = -4.0; x <= 4.0; x += 0.125) {
    CHECK(std::abs(norm_cdf(x) - oracle::phi_series(x)) < 1e-12);
  }
}

TEST_CASE("norm_cdf symmetry and monotonicity") {
  double prev = 0.0;
  for (double x = -30.0; x <= 30.0; x += 0.01) {
    CHECK(std::abs(norm_cdf(x) + norm_cdf(-x) - 1.0) < 1e-12);
    const double p = norm_cdf(x);
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(norm_cdf(-40.0) >= 0.0);
  CHECK(norm_cdf(40.0) <= 1.0);
  CHECK(norm_sf(10.0) == doctest::Approx(norm_cdf(-10.0)).epsilon(1e-12));
}

TEST_CASE("norm_pdf") {
  CHECK(norm_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  CHECK(norm_pdf(3.0) == norm_pdf(-3.0));
  CHECK(std::abs(norm_pdf(1.0) - 0.24197072451914335) < 1e-16);
  CHECK(norm_pdf(0.0) > norm_pdf(1e-3));
}

TEST_CASE("expit is stable and symmetric") {
  CHECK(expit(0.0) == 0.5);
  CHECK(expit(800.0) == 1.0);
  CHECK(expit(-800.0) >= 0.0);
  CHECK(expit(-800.0) < 1e-300);
  for (double x : {-30.0, -2.5, 0.3, 7.0}) CHECK(expit(x) + expit(-x) == doctest::Approx(1.0));
}

TEST_CASE("trunc_norm_moments") {
  SUBCASE("standard normal above zero") {
    const auto m = trunc_norm_moments(0.0, 1.0, 0.0, Side::Above);
    CHECK(m.prob == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.partial_mean == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  }
  SUBCASE("no truncation far below the mean") {
    const auto m = trunc_norm_moments(3.0, 2.0, 3.0 - 40.0 * 2.0, Side::Above);
    CHECK(m.prob == doctest::Approx(1.0));
    CHECK(m.partial_mean == doctest::Approx(3.0));
  }
  SUBCASE("(2, 3, 1, above) against quadrature") {
    const auto m = trunc_norm_moments(2.0, 3.0, 1.0, Side::Above);
    const double prob = oracle::integrate([](double x) { return oracle::density(x, 2.0, 3.0); },
                                          1.0, 2.0 + 40.0 * 3.0);
    const double mean = oracle::integrate(
        [](double x) { return x * oracle::density(x, 2.0, 3.0); }, 1.0, 2.0 + 40.0 * 3.0);
    CHECK(std::abs(prob - 0.63055865981823636) < 1e-10);
    CHECK(std::abs(mean - 2.3932670027154522) < 1e-10);
    CHECK(std::abs(m.prob - 0.63055865981823636) < 1e-13);
    CHECK(std::abs(m.partial_mean - 2.3932670027154522) < 1e-13);
  }
  SUBCASE("above and below are complementary") {
    for (double mu : {-3.0, 0.0, 2.5}) {
      for (double sigma : {0.1, 1.0, 7.0}) {
        for (double cut : {-10.0, -1.0, 0.0, 0.7, 12.0}) {
          const auto a = trunc_norm_moments(mu, sigma, cut, Side::Above);
          const auto b = trunc_norm_moments(mu, sigma, cut, Side::Below);
          CHECK(std::abs(a.prob + b.prob - 1.0) < 1e-10);
          CHECK(std::abs(a.partial_mean + b.partial_mean - mu) < 1e-10 * (1.0 + std::abs(mu)));
        }
      }
    }
  }
  SUBCASE("sigma must be positive") {
    CHECK_THROWS_AS(trunc_norm_moments(0.0, 0.0, 1.0, Side::Above), InvalidParameterError);
    CHECK_THROWS_AS(trunc_norm_moments(0.0, -1.0, 1.0, Side::Below), InvalidParameterError);
  }
}

TEST_CASE("expect_linear_on_halfline against quadrature") {
  struct Case { double mu, sigma, a, b, c, e; };
  for (const Case& k : {Case{0, 1, 1, 0.5, 1, 0.5}, Case{450, 150, 250, -1, 250, -1},
                        Case{-0.75, std::sqrt(2.0), 1.25, 0.5, 0.3, -0.8}, Case{2, 3, -1, 2, 4, 0}}) {
    const double expected = oracle::normal_expectation(
        [&](double x) { return (k.a + k.b * x) * (k.c + k.e * x > 0.0 ? 1.0 : 0.0); }, k.mu,
        k.sigma, k.e != 0.0 ? std::vector<double>{-k.c / k.e} : std::vector<double>{});
    CHECK(expect_linear_on_halfline(k.mu, k.sigma, k.a, k.b, k.c, k.e) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("solve_linear") {
  SUBCASE("identity") {
    const Vector b = Vector::LinSpaced(3, 1.0, 3.0);
    CHECK((solve_linear(Matrix::Identity(3, 3), b) - b).norm() == 0.0);
  }
  SUBCASE("hand elimination") {
    Matrix a(2, 2);
    a << 2, 1, 1, 3;
    Vector b(2);
    b << 5, 10;
    const Vector x = solve_linear(a, b);
    CHECK(x(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x(1) == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("rank one is singular") {
    Matrix a(2, 2);
    a << 1, 1, 2, 2;
    CHECK_THROWS_AS(solve_linear(a, Vector::Ones(2)), SingularSystemError);
  }
  SUBCASE("random well-conditioned 10x10") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> z;
    for (int t = 0; t < 20; ++t) {
      Matrix a = Matrix::Identity(10, 10) * 5.0;
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) a(i, j) += z(gen);
      Vector b(10);
      for (int i = 0; i < 10; ++i) b(i) = z(gen);
      const Vector x = solve_linear(a, b);
      CHECK((a * x - b).lpNorm<Eigen::Infinity>() < 1e-8 * (1.0 + b.lpNorm<Eigen::Infinity>()));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(solve_linear(Matrix::Identity(2, 3), Vector::Ones(2)), InvalidParameterError);
  }
}

TEST_CASE("wls_fit") {
  Matrix x(5, 2);
  x << 1, 0.5, 1, -1.2, 1, 2.0, 1, 0.1, 1, 3.3;
  Vector y(5);
  y << 1.0, -0.7, 2.9, 0.8, 3.1;
  Vector w(5);
  w << 1.0, 2.0, 0.5, 3.0, 1.5;

  SUBCASE("exact fit") {
    Vector c(2);
    c << 0.25, -1.5;
    const FitResult f = ols_fit(x, x * c);
    CHECK((f.coefficients - c).norm() < 1e-12);
    CHECK(f.residuals.lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("normal-equations oracle") {
    const Vector expected = oracle::normal_equations(x, y, w);
    const FitResult f = wls_fit(x, y, w);
    CHECK((f.coefficients - expected).lpNorm<Eigen::Infinity>() < 1e-10);
    const Vector r = y - x * expected;
    const double s2 = (w.array() * r.array().square()).sum() / 3.0;
    const Matrix cov = s2 * (x.transpose() * w.asDiagonal() * x).inverse();
    CHECK((f.covariance - cov).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("weight scale invariance") {
    const FitResult a = wls_fit(x, y, Vector::Ones(5));
    const FitResult b = wls_fit(x, y, Vector::Constant(5, 7.0));
    const FitResult o = ols_fit(x, y);
    CHECK((a.coefficients - b.coefficients).norm() < 1e-10);
    CHECK((a.coefficients - o.coefficients).norm() == 0.0);
    const FitResult c = wls_fit(x, y, w * 13.0);
    const FitResult d = wls_fit(x, y, w);
    CHECK((c.coefficients - d.coefficients).norm() < 1e-10);
    CHECK((c.covariance - d.covariance).norm() < 1e-10);
  }
  SUBCASE("covariance symmetric positive semidefinite") {
    const FitResult f = wls_fit(x, y, w);
    CHECK((f.covariance - f.covariance.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(f.covariance);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
  }
  SUBCASE("rank deficiency") {
    Matrix bad(5, 3);
    bad << x, 2.0 * x.col(1);
    CHECK_THROWS_AS(ols_fit(bad, y), SingularSystemError);
  }
  SUBCASE("bad weights") {
    Vector neg = w;
    neg(2) = -1.0;
    CHECK_THROWS_AS(wls_fit(x, y, neg), InvalidParameterError);
  }
}

TEST_CASE("logistic_fit") {
  SUBCASE("balanced intercept-only") {
    const Matrix x = Matrix::Ones(6, 1);
    Vector a(6);
    a << 1, 0, 1, 0, 0, 1;
    const FitResult f = logistic_fit(x, a);
    CHECK(std::abs(f.coefficients(0)) < 1e-12);
  }
  SUBCASE("8-row grid-search oracle") {
    Matrix x(8, 2);
    x << 1, -1.5, 1, -0.7, 1, -0.2, 1, 0.1, 1, 0.4, 1, 0.9, 1, 1.3, 1, 2.0;
    Vector a(8);
    a << 0, 1, 0, 0, 1, 0, 1, 1;
    const Eigen::Vector2d grid = oracle::logistic_grid_search(x, a);
    const FitResult f = logistic_fit(x, a);
    CHECK(f.converged);
    CHECK(std::abs(f.coefficients(0) - grid(0)) < 1e-4);
    CHECK(std::abs(f.coefficients(1) - grid(1)) < 1e-4);
    // score equation of the intercept row
    Vector p(8);
    for (int i = 0; i < 8; ++i) p(i) = expit(x.row(i).dot(f.coefficients));
    CHECK(std::abs(p.mean() - a.mean()) < 1e-8);
    CHECK(logistic_loglik(x, a, f.coefficients) >= oracle::logistic_loglik(x, a, grid) - 1e-12);
  }
  SUBCASE("complete separation does not converge") {
    Matrix x(6, 2);
    x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
    Vector a(6);
    a << 0, 0, 0, 1, 1, 1;
    CHECK_THROWS_AS(logistic_fit(x, a), NonConvergenceError);
  }
  SUBCASE("covariance is the inverse information") {
    Matrix x(8, 2);
    x << 1, -1.5, 1, -0.7, 1, -0.2, 1, 0.1, 1, 0.4, 1, 0.9, 1, 1.3, 1, 2.0;
    Vector a(8);
    a << 0, 1, 0, 0, 1, 0, 1, 1;
    const FitResult f = logistic_fit(x, a);
    Matrix info = Matrix::Zero(2, 2);
    for (int i = 0; i < 8; ++i) {
      const double p = expit(x.row(i).dot(f.coefficients));
      info += p * (1 - p) * x.row(i).transpose() * x.row(i);
    }
    CHECK((f.covariance - info.inverse()).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("non-binary response") {
    Matrix x = Matrix::Ones(3, 1);
    Vector a(3);
    a << 0, 2, 1;
    CHECK_THROWS_AS(logistic_fit(x, a), InvalidParameterError);
  }
}

}  // TEST_SUITE
