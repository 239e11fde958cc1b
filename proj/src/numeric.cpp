#include "dtr/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dtr {

double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

TruncatedMoments trunc_norm_moments(double mu, double sigma, double cut, Side side) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidParameterError("trunc_norm_moments: sigma must be positive and finite");
  }
  if (!std::isfinite(mu) || !std::isfinite(cut)) {
    throw InvalidParameterError("trunc_norm_moments: mu and cut must be finite");
  }
  const double z = (cut - mu) / sigma;
  const double density = norm_pdf(z);
  TruncatedMoments m;
  if (side == Side::Above) {
    m.prob = norm_sf(z);
    m.partial_mean = sigma * density + mu * m.prob;
  } else {
    m.prob = norm_cdf(z);
    m.partial_mean = -sigma * density + mu * m.prob;
  }
  return m;
}

double expect_linear_on_halfline(double mu, double sigma, double a, double b, double c,
                                 double e) {
  if (e == 0.0) return c > 0.0 ? a + b * mu : 0.0;
  const double cut = -c / e;
  const auto m = trunc_norm_moments(mu, sigma, cut, e > 0.0 ? Side::Above : Side::Below);
  return a * m.prob + b * m.partial_mean;
}

namespace {

// LU factorization of D_r A D_c, where the diagonal scalings put the largest
// entry of every row and column at 1. Pivots are compared against that unit
// scale.
class EquilibratedLu {
public:
  explicit EquilibratedLu(const Matrix& a) {
    if (a.rows() != a.cols()) {
      throw InvalidParameterError("solve_linear: matrix must be square");
    }
    const Eigen::Index n = a.rows();
    if (!a.allFinite()) throw InvalidParameterError("solve_linear: non-finite matrix entry");
    row_scale_ = Vector::Ones(n);
    col_scale_ = Vector::Ones(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = a.row(i).cwiseAbs().maxCoeff();
      if (m == 0.0) throw singular(0.0);
      row_scale_(i) = 1.0 / m;
    }
    Matrix scaled = row_scale_.asDiagonal() * a;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double m = scaled.col(j).cwiseAbs().maxCoeff();
      if (m == 0.0) throw singular(0.0);
      col_scale_(j) = 1.0 / m;
    }
    scaled = scaled * col_scale_.asDiagonal();
    lu_.compute(scaled);
    const Vector pivots = lu_.matrixLU().diagonal().cwiseAbs();
    const double ratio = n == 0 ? 1.0 : pivots.minCoeff() / std::max(1.0, pivots.maxCoeff());
    if (!(ratio >= kRelativePivotTolerance)) throw singular(std::isfinite(ratio) ? ratio : 0.0);
  }

  Vector solve(const Vector& b) const {
    Vector y = lu_.solve(row_scale_.asDiagonal() * b);
    return col_scale_.asDiagonal() * y;
  }

  Matrix inverse() const {
    const Eigen::Index n = row_scale_.size();
    Matrix inv(n, n);
    for (Eigen::Index j = 0; j < n; ++j) inv.col(j) = solve(Vector::Unit(n, j));
    return inv;
  }

private:
  static SingularSystemError singular(double ratio) {
    std::ostringstream msg;
    msg << "singular system: relative pivot " << ratio << " below tolerance "
        << kRelativePivotTolerance;
    return SingularSystemError(msg.str(), ratio);
  }

  Vector row_scale_;
  Vector col_scale_;
  Eigen::PartialPivLU<Matrix> lu_;
};

}  // namespace

Vector solve_linear(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) {
    throw InvalidParameterError("solve_linear: right-hand side length does not match matrix");
  }
  const EquilibratedLu lu(a);
  Vector x = lu.solve(b);
  if (!x.allFinite()) throw SingularSystemError("singular system: non-finite solution", 0.0);
  return x;
}

FitResult wls_fit(const Matrix& x, const Vector& y, const Vector& weights) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || weights.size() != n) {
    throw InvalidParameterError("wls_fit: response and weights must have one entry per row");
  }
  if (n < p) throw InvalidParameterError("wls_fit: fewer rows than columns");
  if (!x.allFinite() || !y.allFinite()) throw InvalidParameterError("wls_fit: non-finite input");
  if (!((weights.array() > 0.0).all() && weights.allFinite())) {
    throw InvalidParameterError("wls_fit: weights must be positive and finite");
  }

  // Normalizing by the mean weight makes constant weights exactly OLS.
  const Vector w = weights / weights.mean();
  const Vector root_w = w.cwiseSqrt();
  Matrix xw = root_w.asDiagonal() * x;
  const Vector yw = root_w.cwiseProduct(y);

  Vector col_norm(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    col_norm(j) = xw.col(j).norm();
    if (col_norm(j) == 0.0) {
      throw SingularSystemError("singular design: column " + std::to_string(j) + " is zero", 0.0);
    }
  }
  xw = xw * col_norm.cwiseInverse().asDiagonal();

  Eigen::ColPivHouseholderQR<Matrix> qr(xw);
  const Matrix r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Vector diag = r.diagonal().cwiseAbs();
  const double ratio = p == 0 ? 1.0 : diag.minCoeff() / diag.maxCoeff();
  if (!(ratio >= kRelativePivotTolerance)) {
    std::ostringstream msg;
    msg << "singular design: relative pivot " << ratio << " below tolerance "
        << kRelativePivotTolerance;
    throw SingularSystemError(msg.str(), std::isfinite(ratio) ? ratio : 0.0);
  }

  FitResult fit;
  fit.coefficients = col_norm.cwiseInverse().asDiagonal() * Vector(qr.solve(yw));
  fit.residuals = y - x * fit.coefficients;
  fit.iterations = 1;

  const double dof = static_cast<double>(n - p);
  const double sigma2 =
      dof > 0 ? (w.array() * fit.residuals.array().square()).sum() / dof : 0.0;
  const Matrix r_inv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  const Matrix scaled_inv = qr.colsPermutation() * (r_inv * r_inv.transpose()) *
                            qr.colsPermutation().transpose();
  const auto inv_norm = col_norm.cwiseInverse().asDiagonal();
  Matrix cov = sigma2 * (inv_norm * scaled_inv * inv_norm);
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

FitResult ols_fit(const Matrix& x, const Vector& y) {
  return wls_fit(x, y, Vector::Ones(x.rows()));
}

double logistic_loglik(const Matrix& x, const Vector& a, const Vector& beta) {
  const Vector eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^eta) computed without overflow
    const double e = eta(i);
    const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += a(i) * e - softplus;
  }
  return ll;
}

FitResult logistic_fit(const Matrix& x, const Vector& a, const LogisticOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (a.size() != n) throw InvalidParameterError("logistic_fit: response length mismatch");
  if (n < p) throw InvalidParameterError("logistic_fit: fewer rows than columns");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a(i) != 0.0 && a(i) != 1.0) {
      throw InvalidParameterError("logistic_fit: response must be binary");
    }
  }
  if (!x.allFinite()) throw InvalidParameterError("logistic_fit: non-finite design entry");

  Vector beta = Vector::Zero(p);
  Vector prob(n), resid(n), weight(n);
  auto evaluate = [&](const Vector& b) {
    const Vector eta = x * b;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = expit(eta(i));
      // a - p without cancellation when p is close to 1
      resid(i) = a(i) == 1.0 ? expit(-eta(i)) : -prob(i);
      weight(i) = prob(i) * (1.0 - prob(i));
    }
  };

  double ll = logistic_loglik(x, a, beta);
  double score_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;
  Matrix info(p, p);
  while (iter < options.max_iterations) {
    ++iter;
    evaluate(beta);
    const Vector score = x.transpose() * resid;
    score_norm = score.cwiseAbs().maxCoeff();
    info = x.transpose() * weight.asDiagonal() * x;
    Vector step;
    try {
      step = solve_linear(info, score);
    } catch (const SingularSystemError&) {
      throw NonConvergenceError(
          "logistic_fit: information matrix became singular (separation?); score norm " +
              std::to_string(score_norm),
          score_norm, iter);
    }
    const double step_norm = step.cwiseAbs().maxCoeff();
    // A small score alone is not enough: under separation the score decays
    // while the Newton step stays of order one.
    if (score_norm < options.tolerance && step_norm < std::sqrt(options.tolerance)) {
      converged = true;
      break;
    }
    double t = 1.0;
    Vector candidate = beta + step;
    double ll_new = logistic_loglik(x, a, candidate);
    for (int halving = 0; halving < 40 && !(ll_new >= ll); ++halving) {
      t *= 0.5;
      candidate = beta + t * step;
      ll_new = logistic_loglik(x, a, candidate);
    }
    beta = candidate;
    ll = ll_new;
    if (t * step_norm < options.tolerance) {
      converged = true;
      evaluate(beta);
      score_norm = (x.transpose() * resid).cwiseAbs().maxCoeff();
      info = x.transpose() * weight.asDiagonal() * x;
      break;
    }
  }
  if (!converged) {
    throw NonConvergenceError("logistic_fit: no convergence in " +
                                  std::to_string(options.max_iterations) +
                                  " iterations; score norm " + std::to_string(score_norm),
                              score_norm, iter);
  }

  FitResult fit;
  fit.coefficients = beta;
  fit.residuals = resid;
  fit.iterations = iter;
  fit.converged = true;
  try {
    const Matrix cov = EquilibratedLu(info).inverse();
    fit.covariance = 0.5 * (cov + cov.transpose());
  } catch (const SingularSystemError&) {
    throw NonConvergenceError("logistic_fit: singular information at solution", score_norm,
                              iter);
  }
  return fit;
}

}  // namespace dtr
