#include "dtr/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "parallel.hpp"

namespace dtr {

namespace {

struct QuadraticDesign {
  int stage;
  FeatureMap propensity;
  FeatureMap outcome;
  Eigen::Index propensity_index;
  Eigen::Index outcome_index;
};

QuadraticDesign quadratic_design(const Scenario& scenario) {
  if (std::holds_alternative<OneDecisionParams>(scenario)) {
    return {1, FeatureMap::parse({"1", "s1", "s1^2"}),
            FeatureMap::parse({"1", "s1", "s1^2", "a1", "a1*s1"}), 2, 2};
  }
  if (std::holds_alternative<TwoDecisionParams>(scenario)) {
    return {2, FeatureMap::parse({"1", "s1", "a1", "s2", "a1*s2", "s2^2"}),
            FeatureMap::parse({"1", "s1", "a1", "s1*a1", "s2", "s2^2", "a2", "a2*a1", "a2*s2"}), 5,
            5};
  }
  throw InvalidParameterError("calibration supports the one_decision and two_decision scenarios");
}

}  // namespace

std::vector<double> calibration_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidParameterError("grid.step must be > 0");
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw InvalidParameterError("grid.lo must not exceed grid.hi");
  }
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // snap to 1e-12 so lattice points such as 0 come out exact
    grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return grid;
}

Scenario with_quadratic_terms(const Scenario& base, double beta0, double phi0) {
  if (const auto* p = std::get_if<OneDecisionParams>(&base)) {
    OneDecisionParams out = *p;
    out.beta0[2] = beta0;
    out.phi0[2] = phi0;
    return out;
  }
  if (const auto* p = std::get_if<TwoDecisionParams>(&base)) {
    TwoDecisionParams out = *p;
    out.beta2[5] = beta0;
    out.phi2[5] = phi0;
    return out;
  }
  throw InvalidParameterError("calibration supports the one_decision and two_decision scenarios");
}

QuadraticTermFit fit_quadratic_terms(const Scenario& scenario, const Dataset& data) {
  const QuadraticDesign d = quadratic_design(scenario);
  const FitResult prop =
      logistic_fit(build_design(data, d.stage, d.propensity), data.actions(d.stage));
  // the outcome design includes the last action, so evaluate it one stage later
  const FitResult out = ols_fit(build_design(data, d.stage + 1, d.outcome), data.outcomes());
  QuadraticTermFit fit;
  fit.phi_hat = prop.coefficients(d.propensity_index);
  fit.phi_se = std::sqrt(prop.covariance(d.propensity_index, d.propensity_index));
  fit.beta_hat = out.coefficients(d.outcome_index);
  fit.beta_se = std::sqrt(out.covariance(d.outcome_index, d.outcome_index));
  return fit;
}

double se_ratio_cell(const Scenario& base, double beta0, double phi0, std::size_t n,
                     RngStream& stream) {
  const Scenario scenario = with_quadratic_terms(base, beta0, phi0);
  const Dataset data = simulate(scenario, n, stream);
  const QuadraticTermFit fit = fit_quadratic_terms(scenario, data);
  return fit.phi_se / fit.beta_se;
}

namespace {

double domain_point(const PolynomialFit& poly, double x) {
  const double width = poly.domain_hi - poly.domain_lo;
  return width > 0.0 ? (2.0 * x - poly.domain_lo - poly.domain_hi) / width : 0.0;
}

// P_0(t), ..., P_degree(t) by the three-term recurrence
void legendre_row(double t, int degree, double* out) {
  out[0] = 1.0;
  if (degree >= 1) out[1] = t;
  for (int j = 2; j <= degree; ++j) {
    out[j] = ((2.0 * j - 1.0) * t * out[j - 1] - (j - 1.0) * out[j - 2]) / j;
  }
}

}  // namespace

double eval_poly(const PolynomialFit& poly, double x) {
  if (poly.coefficients.empty()) return 0.0;
  const int degree = static_cast<int>(poly.coefficients.size()) - 1;
  std::vector<double> basis(poly.coefficients.size());
  legendre_row(domain_point(poly, x), degree, basis.data());
  double value = 0.0;
  for (int j = 0; j <= degree; ++j) value += poly.coefficients[j] * basis[j];
  return value;
}

PolynomialFit fit_polynomial(std::span<const double> x, std::span<const double> y,
                             int max_degree, double adj_r2_target, double max_rel_residual) {
  if (x.size() != y.size() || x.empty()) {
    throw InvalidParameterError("fit_polynomial: x and y must be nonempty and of equal length");
  }
  const auto m = static_cast<Eigen::Index>(x.size());
  const Vector response = Eigen::Map<const Vector>(y.data(), m);
  const double mean = response.mean();
  const double ss_tot = (response.array() - mean).square().sum();
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());

  PolynomialFit best;
  best.adj_r2 = -std::numeric_limits<double>::infinity();
  for (int degree = 0; degree <= max_degree && degree < m; ++degree) {
    PolynomialFit current;
    current.domain_lo = *lo;
    current.domain_hi = *hi;
    current.degree = degree;
    Matrix design(m, degree + 1);
    std::vector<double> row(static_cast<std::size_t>(degree) + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      legendre_row(domain_point(current, x[static_cast<std::size_t>(i)]), degree, row.data());
      for (int j = 0; j <= degree; ++j) design(i, j) = row[j];
    }
    FitResult fit;
    try {
      fit = ols_fit(design, response);
    } catch (const SingularSystemError&) {
      break;  // fewer distinct x values than coefficients
    }
    current.coefficients.assign(fit.coefficients.data(), fit.coefficients.data() + degree + 1);
    const double ss_res = fit.residuals.squaredNorm();
    const auto df = static_cast<double>(m - degree - 1);
    if (ss_tot <= 0.0 || ss_res <= 1e-24 * std::max(1.0, response.squaredNorm())) {
      current.adj_r2 = 1.0;
    } else if (df > 0.0) {
      current.adj_r2 = 1.0 - (ss_res / ss_tot) * static_cast<double>(m - 1) / df;
    } else {
      current.adj_r2 = -std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double scale = std::abs(response(i)) > 0.0 ? std::abs(response(i)) : 1.0;
      current.max_rel_residual =
          std::max(current.max_rel_residual, std::abs(fit.residuals(i)) / scale);
    }
    if (current.adj_r2 >= adj_r2_target && current.max_rel_residual <= max_rel_residual) {
      return current;
    }
    if (current.adj_r2 > best.adj_r2) best = std::move(current);
  }
  std::ostringstream msg;
  msg << "calibration: no polynomial of degree <= " << max_degree << " reaches adjusted R^2 "
      << adj_r2_target << " with relative residuals <= " << max_rel_residual << " (best adjusted R^2 "
      << best.adj_r2 << " at degree " << best.degree << ", max relative residual "
      << best.max_rel_residual << ")";
  throw CalibrationError(msg.str(), best.adj_r2);
}

CalibrationResult calibrate_equiv_misspec(const CalibrationConfig& config) {
  validate_scenario(config.base);
  const QuadraticDesign design = quadratic_design(config.base);
  const std::vector<double> grid = calibration_grid(config.grid_lo, config.grid_hi, config.step);
  if (config.n_cal < static_cast<std::size_t>(design.outcome.size())) {
    throw InvalidParameterError("calibrate: n_cal is smaller than the design width");
  }
  if (config.poly_max_degree < 0) throw InvalidParameterError("calibrate: poly_max_degree < 0");

  const std::size_t g = grid.size();
  CalibrationResult result;
  result.scenario = scenario_name(config.base);
  result.cells.resize(g * g);
  // cell index = phi index * g + beta index
  detail::parallel_for(g * g, config.threads, [&](std::size_t c) {
    const double phi0 = grid[c / g];
    const double beta0 = grid[c % g];
    RngStream stream(config.master_seed, c);
    result.cells[c] = {phi0, beta0, se_ratio_cell(config.base, beta0, phi0, config.n_cal, stream)};
  });

  std::vector<double> ratios(g);
  result.pairs.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t j = 0; j < g; ++j) {
      const double r = result.cells[i * g + j].ratio;
      sum += r;
      sum_sq += r * r;
    }
    const double m = static_cast<double>(g);
    ratios[i] = sum / m;
    const double var = g > 1 ? std::max(0.0, (sum_sq - m * ratios[i] * ratios[i]) / (m - 1)) : 0.0;
    result.pairs[i].phi0 = grid[i];
    result.pairs[i].ratio = ratios[i];
    result.pairs[i].ratio_se = std::sqrt(var / m);
  }
  result.polynomial = fit_polynomial(grid, ratios, config.poly_max_degree, config.adj_r2_target,
                                     config.max_rel_residual);
  for (auto& pair : result.pairs) {
    const double f = eval_poly(result.polynomial, pair.phi0);
    if (!(f > 0.0)) {
      throw CalibrationError("calibration: fitted SE ratio is not positive at phi0 = " +
                                 format_double(pair.phi0),
                             result.polynomial.adj_r2);
    }
    pair.beta0 = pair.phi0 / f;
  }
  return result;
}

TStatBalance check_tstat_balance(const Scenario& base, double beta0, double phi0, std::size_t n,
                                 std::size_t reps, std::uint64_t master_seed, unsigned threads) {
  if (reps < 1) throw InvalidParameterError("check_tstat_balance: reps must be at least 1");
  const Scenario scenario = with_quadratic_terms(base, beta0, phi0);
  validate_scenario(scenario);
  struct Rep {
    bool ok = false;
    double t_phi = 0.0;
    double t_beta = 0.0;
  };
  std::vector<Rep> out(reps);
  detail::parallel_for(reps, threads, [&](std::size_t r) {
    RngStream stream(master_seed, r);
    const Dataset data = simulate(scenario, n, stream);
    try {
      const QuadraticTermFit fit = fit_quadratic_terms(scenario, data);
      out[r] = {true, std::abs(fit.phi_hat / fit.phi_se), std::abs(fit.beta_hat / fit.beta_se)};
    } catch (const SingularSystemError&) {
    } catch (const NonConvergenceError&) {
    }
  });
  TStatBalance b;
  std::size_t ok = 0;
  for (const auto& r : out) {
    if (!r.ok) {
      ++b.failed;
      continue;
    }
    ++ok;
    b.mean_abs_t_phi += r.t_phi;
    b.mean_abs_t_beta += r.t_beta;
  }
  if (ok == 0) throw NonConvergenceError("check_tstat_balance: every replication failed", 0.0, 0);
  const double m = static_cast<double>(ok);
  b.mean_abs_t_phi /= m;
  b.mean_abs_t_beta /= m;
  const double a = b.mean_abs_t_phi;
  const double c = b.mean_abs_t_beta;
  const double sum = a + c;
  b.rel_diff = std::abs(a - c) / (0.5 * sum);
  if (ok > 1) {
    double var_a = 0.0, var_c = 0.0, cov = 0.0;
    for (const auto& r : out) {
      if (!r.ok) continue;
      var_a += (r.t_phi - a) * (r.t_phi - a);
      var_c += (r.t_beta - c) * (r.t_beta - c);
      cov += (r.t_phi - a) * (r.t_beta - c);
    }
    // gradient of 2|a - c| / (a + c) is +-(4c, -4a) / (a + c)^2
    const double scale = 16.0 / (sum * sum * sum * sum) / (m * (m - 1.0));
    b.rel_diff_se = std::sqrt(std::max(0.0, scale * (c * c * var_a + a * a * var_c - 2.0 * a * c * cov)));
  }
  return b;
}

}  // namespace dtr
