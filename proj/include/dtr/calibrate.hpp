#pragma once

// "Equivalently misspecified" pairs: for a propensity quadratic coefficient
// phi0, choose the outcome quadratic coefficient beta0 so that the Wald
// statistics for testing each of them against zero have about the same
// distribution. Two-decision scenarios calibrate (beta25, phi25); one-decision
// scenarios calibrate (beta12, phi12).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtr/scenarios.hpp"

namespace dtr {

struct CalibrationConfig {
  /// One- or two-decision parameters; the calibrated pair is overwritten.
  Scenario base = TwoDecisionParams{};
  double grid_lo = -1.0;
  double grid_hi = 1.0;
  double step = 0.05;
  std::size_t n_cal = 10000;
  int poly_max_degree = 20;
  double adj_r2_target = 0.99;
  /// Largest allowed |ratio - f| / ratio over the grid. The t-statistic ratio
  /// at an emitted pair is off from 1 by about this much.
  double max_rel_residual = 0.025;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
};

/// One grid cell: SE(phi-hat) / SE(beta-hat) from a single large dataset.
struct CalibrationCell {
  double phi0 = 0.0;
  double beta0 = 0.0;
  double ratio = 0.0;
};

struct CalibrationPair {
  double phi0 = 0.0;
  double beta0 = 0.0;  ///< phi0 / f(phi0)
  double ratio = 0.0;  ///< mean cell ratio over the beta grid
  double ratio_se = 0.0;
  std::optional<double> tstat_rel_diff;
};

/// Polynomial in Legendre form on [domain_lo, domain_hi]: sum_j c_j P_j(t)
/// with t = (2x - lo - hi) / (hi - lo).
struct PolynomialFit {
  std::vector<double> coefficients;
  double domain_lo = -1.0;
  double domain_hi = 1.0;
  int degree = 0;
  double adj_r2 = 0.0;
  double max_rel_residual = 0.0;
};

struct CalibrationResult {
  std::string scenario;
  std::vector<CalibrationCell> cells;
  std::vector<CalibrationPair> pairs;
  PolynomialFit polynomial;
};

class CalibrationError : public Error {
public:
  CalibrationError(const std::string& what, double best_adj_r2)
      : Error(what), best_adj_r2_(best_adj_r2) {}
  double best_adj_r2() const noexcept { return best_adj_r2_; }

private:
  double best_adj_r2_;
};

/// lo, lo + step, ..., hi (hi included when it lies on the lattice).
std::vector<double> calibration_grid(double lo, double hi, double step);

/// `base` with its quadratic outcome and propensity coefficients replaced.
Scenario with_quadratic_terms(const Scenario& base, double beta0, double phi0);

struct QuadraticTermFit {
  double phi_hat = 0.0;
  double phi_se = 0.0;
  double beta_hat = 0.0;
  double beta_se = 0.0;
};

/// Fits the full-form logistic propensity and linear outcome models (both
/// containing the quadratic term) and returns the quadratic coefficients.
QuadraticTermFit fit_quadratic_terms(const Scenario& scenario, const Dataset& data);

/// SE(phi-hat) / SE(beta-hat) on one dataset of size n drawn at (beta0, phi0).
double se_ratio_cell(const Scenario& base, double beta0, double phi0, std::size_t n,
                     RngStream& stream);

/// Lowest degree <= max_degree whose adjusted R^2 reaches `adj_r2_target`
/// and whose largest relative residual is at most `max_rel_residual`. Throws
/// CalibrationError reporting the best adjusted R^2 otherwise.
PolynomialFit fit_polynomial(std::span<const double> x, std::span<const double> y,
                             int max_degree, double adj_r2_target,
                             double max_rel_residual = 1.0);

double eval_poly(const PolynomialFit& poly, double x);

/// Runs the grid, averages ratios over the beta grid per phi, fits f and
/// emits beta0 = phi0 / f(phi0). Cell c uses stream (master_seed, c).
CalibrationResult calibrate_equiv_misspec(const CalibrationConfig& config);

struct TStatBalance {
  double mean_abs_t_phi = 0.0;
  double mean_abs_t_beta = 0.0;
  /// |mean_abs_t_phi - mean_abs_t_beta| / average of the two.
  double rel_diff = 0.0;
  /// Delta-method Monte Carlo standard error of rel_diff.
  double rel_diff_se = 0.0;
  std::size_t failed = 0;
};

/// Mean |t| of phi-hat and beta-hat over `reps` datasets of size n drawn at
/// (beta0, phi0). Replication r uses stream (master_seed, r).
TStatBalance check_tstat_balance(const Scenario& base, double beta0, double phi0,
                                 std::size_t n, std::size_t reps, std::uint64_t master_seed,
                                 unsigned threads = 1);

}  // namespace dtr
