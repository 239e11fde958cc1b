#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtr/scenarios.hpp"

namespace dtr {

/// H(d) = E{Y*(d)} for d(s1) = I(psi0 + psi1 s1 > 0) under the one-decision
/// model.
double value_one_decision_analytic(const Vector& psi, const OneDecisionParams& truth);

/// H(d) for d1(s1) = I(psi1 . (1, s1) > 0), d2 = I(psi2 . (1, a1, s2) > 0)
/// under the two-decision model.
double value_two_decision_analytic(const Vector& psi1, const Vector& psi2,
                                   const TwoDecisionParams& truth);

/// H(d) for d1 = I(psi1 . (1, s1) > 0), d2 = I(psi2 . (1, s2) > 0) under the
/// CD4-count model: E Y^opt minus the expected regrets of both stages.
double value_moodie_analytic(const Vector& psi1, const Vector& psi2, const MoodieParams& truth);

/// Analytic H(d) when every rule of `regime` only uses the terms the
/// closed forms above support for this scenario; nullopt otherwise.
std::optional<double> value_analytic(const Scenario& scenario, const Regime& regime);

/// H(d^opt) in closed form.
double optimal_value(const Scenario& scenario);

struct ValueEstimate {
  double value = 0.0;
  std::optional<double> std_error;  ///< absent when draws == 1
};

/// g-computation: simulate states forward under the regime from the true
/// laws and average the true conditional mean outcome.
ValueEstimate value_gcomputation(const Scenario& scenario, const Regime& regime,
                                 std::size_t draws, RngStream& stream);

enum class EstimatorSet { QLearning, ALearning, Both };
enum class ValueMethod { Auto, Analytic, GComputation };

struct StudyConfig {
  Scenario scenario = OneDecisionParams{};
  /// Working models; empty means default_working_specs(scenario).
  std::vector<StageSpec> specs;
  std::size_t n = 200;
  std::size_t reps = 10000;
  std::uint64_t master_seed = 1;
  EstimatorSet estimators = EstimatorSet::Both;
  ValueMethod value_method = ValueMethod::Auto;
  std::size_t gcomp_draws = 10000;
  unsigned threads = 1;
};

struct EstimatorRun {
  std::vector<double> psi;  ///< concatenated over stages
  double value = 0.0;       ///< H(d-hat)
  /// Population SD of fitted propensities per stage (A-learning; 0 for
  /// known propensities).
  std::vector<double> propensity_sd;
};

struct ReplicationRecord {
  std::size_t rep = 0;
  bool failed = false;
  std::string failure;
  std::optional<EstimatorRun> q;
  std::optional<EstimatorRun> a;
};

struct EstimatorSummary {
  std::vector<double> mean, sd, bias, mse, mean_se;
  double value_mean = 0.0;
  double value_se = 0.0;
  double value_median = 0.0;
  double r_mean = 0.0;
  double r_mean_se = 0.0;
  double r_median = 0.0;
};

struct StudyResults {
  std::string scenario;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::size_t failed = 0;
  std::vector<std::string> warnings;
  std::vector<std::string> psi_names;  ///< "stage:term" labels
  std::vector<double> psi_true;
  double optimal_value = 0.0;
  std::vector<ReplicationRecord> records;
  std::optional<EstimatorSummary> q;
  std::optional<EstimatorSummary> a;
  /// MSE(A) / MSE(Q) per component; empty unless both estimators ran.
  std::vector<double> mse_ratio;
  /// Average within-dataset propensity SD per stage, and its MC SE.
  std::vector<double> propensity_sd;
  std::vector<double> propensity_sd_se;
};

/// Thrown when more than 10% of replications fail.
class StudyError : public Error {
public:
  using Error::Error;
};

/// Runs the Monte Carlo study. Replication r draws its data from stream
/// (master_seed, r), so results do not depend on the thread count. Failed
/// replications (singular or non-convergent fits) are excluded and counted.
StudyResults run_mc_study(const StudyConfig& config);

/// Recomputes summaries from `records`; run_mc_study calls this.
void summarize_study(StudyResults& results);

/// Within-dataset standard deviation of propensities, dividing by n.
double propensity_sd(std::span<const double> pihat);

/// Average over replications of the within-dataset propensity SD.
double propensity_sd_diagnostic(const std::vector<std::vector<double>>& per_rep_pihat);

struct MedianEfficiency {
  std::optional<double> q;
  std::optional<double> a;
};

/// Median of H(d-hat) over successful replications divided by H(d^opt).
MedianEfficiency median_efficiency(const StudyResults& results);

double median(std::vector<double> values);

/// Per stage, the mean over successful replications of the estimated
/// treatment threshold -psi_0 / psi_1 when that stage's contrast is exactly
/// (1, s_k); nullopt at other stages or for an estimator that did not run.
struct ThresholdMeans {
  std::vector<std::optional<double>> q;
  std::vector<std::optional<double>> a;
};
ThresholdMeans threshold_means(const StudyResults& results);

}  // namespace dtr
