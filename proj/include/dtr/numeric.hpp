#pragma once

// Deterministic numerical kernels: normal distribution functions, truncated
// normal moments, dense linear solves and the two regression fitters used by
// the learners (weighted least squares and logistic maximum likelihood).

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dtr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidParameterError : public Error {
public:
  using Error::Error;
};

/// A linear system or design matrix is (numerically) rank deficient.
class SingularSystemError : public Error {
public:
  SingularSystemError(const std::string& what, double pivot_ratio)
      : Error(what), pivot_ratio_(pivot_ratio) {}
  /// Smallest relative pivot encountered; zero for an exactly singular system.
  double pivot_ratio() const noexcept { return pivot_ratio_; }

private:
  double pivot_ratio_;
};

class NonConvergenceError : public Error {
public:
  NonConvergenceError(const std::string& what, double score_norm, int iterations)
      : Error(what), score_norm_(score_norm), iterations_(iterations) {}
  double score_norm() const noexcept { return score_norm_; }
  int iterations() const noexcept { return iterations_; }

private:
  double score_norm_;
  int iterations_;
};

/// Relative pivot below which a system is reported singular.
inline constexpr double kRelativePivotTolerance = 1e-12;

double norm_pdf(double x);
double norm_cdf(double x);
/// Upper tail 1 - norm_cdf(x), accurate far into the right tail.
double norm_sf(double x);
double expit(double x);

enum class Side { Above, Below };

struct TruncatedMoments {
  double prob = 0.0;          ///< P(X above/below cut)
  double partial_mean = 0.0;  ///< E[X 1{X above/below cut}]
};

/// Zeroth and first partial moments of X ~ Normal(mu, sigma^2) on one side of
/// `cut`. Above and below results sum to (1, mu).
TruncatedMoments trunc_norm_moments(double mu, double sigma, double cut, Side side);

/// E[(a + b X) 1{c + e X > 0}] for X ~ Normal(mu, sigma^2). The indicator is
/// strict, so e == 0 and c == 0 gives zero.
double expect_linear_on_halfline(double mu, double sigma, double a, double b, double c,
                                 double e);

/// Solves A x = b by LU with partial pivoting on the equilibrated system.
/// Throws SingularSystemError when a relative pivot falls below
/// kRelativePivotTolerance.
Vector solve_linear(const Matrix& a, const Vector& b);

struct FitResult {
  Vector coefficients;
  Matrix covariance;  ///< model-based
  Vector residuals;
  bool converged = true;
  int iterations = 0;
};

/// Weighted least squares via column-pivoted Householder QR of W^{1/2} X.
/// Covariance is s^2 (X'WX)^{-1} with s^2 = sum(w r^2) / (n - p); it is zero
/// when n == p.
FitResult wls_fit(const Matrix& x, const Vector& y, const Vector& weights);
FitResult ols_fit(const Matrix& x, const Vector& y);

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
};

/// Logistic regression maximum likelihood by IRLS (Newton) with step halving.
/// Residuals are a - expit(X beta). Covariance is the inverse Fisher
/// information at the solution.
FitResult logistic_fit(const Matrix& x, const Vector& a, const LogisticOptions& options = {});

/// Log-likelihood of a logistic model, used by step halving and by tests.
double logistic_loglik(const Matrix& x, const Vector& a, const Vector& beta);

}  // namespace dtr
