#include "dtr/report.hpp"

#include "dtr/config.hpp"

namespace dtr {

using nlohmann::json;

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> std_errors(const Matrix& cov) {
  std::vector<double> se;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) se.push_back(std::sqrt(cov(i, i)));
  return se;
}

json summary_to_json(const EstimatorSummary& s) {
  return {{"mean", s.mean},           {"sd", s.sd},
          {"bias", s.bias},           {"mse", s.mse},
          {"mean_se", s.mean_se},     {"value_mean", s.value_mean},
          {"value_se", s.value_se},   {"value_median", s.value_median},
          {"R_mean", s.r_mean},       {"R_mean_se", s.r_mean_se},
          {"R_median", s.r_median}};
}

json optional_list(const std::vector<std::optional<double>>& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
  return out;
}

}  // namespace

std::string provenance_line(const std::string& config_hash) {
  return std::string("dtr ") + kToolVersion + " config " + config_hash;
}

json provenance_json(const std::string& config_hash) {
  return {{"tool", "dtr"}, {"version", kToolVersion}, {"config_hash", config_hash}};
}

json fit_to_json(const LearnResult& fit) {
  json stages = json::array();
  for (const auto& s : fit.stages) {
    json j{{"stage", s.stage},
           {"h_coefficients", to_std(s.beta)},
           {"contrast_coefficients", to_std(s.psi)},
           {"rows", s.rows.size()}};
    if (s.xi_covariance) j["coefficient_se"] = std_errors(*s.xi_covariance);
    if (s.phi) j["propensity_coefficients"] = to_std(*s.phi);
    if (s.phi_covariance) j["propensity_se"] = std_errors(*s.phi_covariance);
    const auto& rule = fit.regime.rules[static_cast<std::size_t>(s.stage - 1)];
    j["contrast_terms"] = rule.features.names();
    stages.push_back(std::move(j));
  }
  return {{"stages", stages}, {"warnings", fit.warnings}};
}

void write_residuals_csv(std::ostream& out, const std::string& estimator, const LearnResult& fit,
                         bool header) {
  if (header) out << "estimator,stage,row,response,residual\n";
  for (const auto& s : fit.stages) {
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      out << estimator << ',' << s.stage << ',' << s.rows[i] << ','
          << format_double(s.response(idx)) << ',' << format_double(s.residuals(idx)) << '\n';
    }
  }
}

json study_to_json(const StudyResults& r) {
  json out{{"scenario", r.scenario},
           {"n", r.n},
           {"reps", r.reps},
           {"failed", r.failed},
           {"warnings", r.warnings},
           {"psi_names", r.psi_names},
           {"psi_true", r.psi_true},
           {"optimal_value", r.optimal_value},
           {"mse_ratio", r.mse_ratio},
           {"propensity_sd", r.propensity_sd},
           {"propensity_sd_se", r.propensity_sd_se}};
  const ThresholdMeans thresholds = threshold_means(r);
  json estimators = json::object();
  if (r.q) {
    estimators["q"] = summary_to_json(*r.q);
    estimators["q"]["threshold_mean"] = optional_list(thresholds.q);
  }
  if (r.a) {
    estimators["a"] = summary_to_json(*r.a);
    estimators["a"]["threshold_mean"] = optional_list(thresholds.a);
  }
  out["estimators"] = estimators;
  return out;
}

void write_study_reps_csv(std::ostream& out, const StudyResults& r) {
  out << "rep,estimator";
  for (const auto& name : r.psi_names) out << ",psi_" << name;
  out << ",H,failed\n";
  auto row = [&](std::size_t rep, const char* est, const EstimatorRun* run, bool failed) {
    out << rep << ',' << est;
    for (std::size_t j = 0; j < r.psi_names.size(); ++j) {
      out << ',';
      if (run) out << format_double(run->psi[j]);
    }
    out << ',';
    if (run) out << format_double(run->value);
    out << ',' << (failed ? 1 : 0) << '\n';
  };
  for (const auto& rec : r.records) {
    if (rec.failed) {
      row(rec.rep, "failed", nullptr, true);
      continue;
    }
    if (rec.q) row(rec.rep, "q", &*rec.q, false);
    if (rec.a) row(rec.rep, "a", &*rec.a, false);
  }
}

json calibration_to_json(const CalibrationResult& result) {
  json pairs = json::array();
  for (const auto& p : result.pairs) {
    json j{{"phi0", p.phi0}, {"beta0", p.beta0}, {"ratio", p.ratio}, {"ratio_se", p.ratio_se}};
    if (p.tstat_rel_diff) j["tstat_rel_diff"] = *p.tstat_rel_diff;
    pairs.push_back(std::move(j));
  }
  return {{"scenario", result.scenario},
          {"polynomial",
           {{"basis", "legendre"},
            {"domain", {result.polynomial.domain_lo, result.polynomial.domain_hi}},
            {"coefficients", result.polynomial.coefficients},
            {"degree", result.polynomial.degree},
            {"adj_r2", result.polynomial.adj_r2},
            {"max_rel_residual", result.polynomial.max_rel_residual}}},
          {"pairs", pairs}};
}

void write_pairs_csv(std::ostream& out, const CalibrationResult& result) {
  out << "phi0,beta0,ratio,ratio_se,tstat_rel_diff\n";
  for (const auto& p : result.pairs) {
    out << format_double(p.phi0) << ',' << format_double(p.beta0) << ','
        << format_double(p.ratio) << ',' << format_double(p.ratio_se) << ',';
    if (p.tstat_rel_diff) out << format_double(*p.tstat_rel_diff);
    out << '\n';
  }
}

}  // namespace dtr
