#include "dtr/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dtr/alearn.hpp"
#include "dtr/qlearn.hpp"
#include "parallel.hpp"

namespace dtr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Coefficients of `rule` re-expressed over `allowed`; nullopt if the rule uses
// any other term.
std::optional<Vector> coefficients_over(const DecisionRule& rule, const std::vector<Term>& allowed) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(allowed.size()));
  const auto& terms = rule.features.terms();
  if (static_cast<std::size_t>(rule.psi.size()) != terms.size()) return std::nullopt;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const auto it = std::find(allowed.begin(), allowed.end(), terms[j]);
    if (it == allowed.end()) return std::nullopt;
    out(it - allowed.begin()) += rule.psi(static_cast<Eigen::Index>(j));
  }
  return out;
}

void require_length(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) throw InvalidParameterError(what);
}

struct RunningMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : kNaN; }
};

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

EstimatorSummary summarize_runs(const std::vector<const EstimatorRun*>& runs,
                                const std::vector<double>& truth, double optimal) {
  EstimatorSummary s;
  const std::size_t p = truth.size();
  const double m = static_cast<double>(runs.size());
  s.mean.assign(p, 0.0);
  s.mse.assign(p, 0.0);
  std::vector<RunningMoments> moments(p);
  RunningMoments value_moments;
  std::vector<double> values;
  values.reserve(runs.size());
  for (const auto* run : runs) {
    for (std::size_t j = 0; j < p; ++j) {
      moments[j].add(run->psi[j]);
      const double err = run->psi[j] - truth[j];
      s.mse[j] += err * err / m;
    }
    value_moments.add(run->value);
    values.push_back(run->value);
  }
  for (std::size_t j = 0; j < p; ++j) {
    s.mean[j] = moments[j].mean;
    s.sd.push_back(std::sqrt(moments[j].variance()));
    s.bias.push_back(moments[j].mean - truth[j]);
    s.mean_se.push_back(s.sd.back() / std::sqrt(m));
  }
  s.value_mean = value_moments.mean;
  s.value_se = std::sqrt(value_moments.variance() / m);
  s.value_median = median(values);
  s.r_mean = s.value_mean / optimal;
  s.r_mean_se = s.value_se / std::abs(optimal);
  s.r_median = s.value_median / optimal;
  return s;
}

}  // namespace

double value_one_decision_analytic(const Vector& psi, const OneDecisionParams& truth) {
  require_length(psi, 2, "value_one_decision_analytic: psi must have 2 entries");
  // S1 ~ N(0, 1): E S1 = 0, E S1^2 = 1
  return truth.beta0[0] + truth.beta0[2] +
         expect_linear_on_halfline(0.0, 1.0, truth.psi0[0], truth.psi0[1], psi(0), psi(1));
}

double value_two_decision_analytic(const Vector& psi1, const Vector& psi2,
                                   const TwoDecisionParams& truth) {
  require_length(psi1, 2, "value_two_decision_analytic: psi1 must have 2 entries");
  require_length(psi2, 3, "value_two_decision_analytic: psi2 must have 3 entries");
  const auto& b = truth.beta2;
  const auto& d = truth.delta1;
  const auto& c0 = truth.psi2;
  const double sd = std::sqrt(truth.s2_var);
  double value = 0.0;
  for (int s1 = 0; s1 <= 1; ++s1) {
    const int a1 = psi1(0) + psi1(1) * s1 > 0.0 ? 1 : 0;
    const double mean = d[0] + d[1] * s1 + d[2] * a1 + d[3] * s1 * a1;
    const double inner =
        b[0] + b[1] * s1 + b[2] * a1 + b[3] * s1 * a1 + b[4] * mean +
        b[5] * (mean * mean + truth.s2_var) +
        expect_linear_on_halfline(mean, sd, c0[0] + c0[1] * a1, c0[2], psi2(0) + psi2(1) * a1,
                                  psi2(2));
    value += 0.5 * inner;
  }
  return value;
}

double value_moodie_analytic(const Vector& psi1, const Vector& psi2, const MoodieParams& truth) {
  require_length(psi1, 2, "value_moodie_analytic: psi1 must have 2 entries");
  require_length(psi2, 2, "value_moodie_analytic: psi2 must have 2 entries");
  // E[C0 (I{C0 > 0} - d)] for a linear contrast C0 and threshold rule d
  auto expected_regret = [](double mean, double sd, const std::array<double, 2>& c0,
                            const Vector& rule) {
    return expect_linear_on_halfline(mean, sd, c0[0], c0[1], c0[0], c0[1]) -
           expect_linear_on_halfline(mean, sd, c0[0], c0[1], rule(0), rule(1));
  };
  const double s2_mean = truth.s2_slope * truth.s1_mean;
  const double s2_sd = std::sqrt(truth.s2_slope * truth.s2_slope * truth.s1_sd * truth.s1_sd +
                                 truth.s2_sd * truth.s2_sd);
  return truth.yopt_intercept + truth.yopt_slope * truth.s1_mean -
         expected_regret(truth.s1_mean, truth.s1_sd, truth.psi1, psi1) -
         expected_regret(s2_mean, s2_sd, truth.psi2, psi2);
}

std::optional<double> value_analytic(const Scenario& scenario, const Regime& regime) {
  if (regime.stages() != scenario_stages(scenario)) return std::nullopt;
  const Term one = Term::constant();
  const Term s1 = Term::state(1);
  const Term s2 = Term::state(2);
  const Term a1 = Term::action(1);
  const auto first = coefficients_over(regime.rules[0], {one, s1});
  if (!first) return std::nullopt;
  if (const auto* p = std::get_if<OneDecisionParams>(&scenario)) {
    return value_one_decision_analytic(*first, *p);
  }
  if (const auto* p = std::get_if<TwoDecisionParams>(&scenario)) {
    const auto second = coefficients_over(regime.rules[1], {one, a1, s2});
    if (!second) return std::nullopt;
    return value_two_decision_analytic(*first, *second, *p);
  }
  const auto second = coefficients_over(regime.rules[1], {one, s2});
  if (!second) return std::nullopt;
  return value_moodie_analytic(*first, *second, std::get<MoodieParams>(scenario));
}

double optimal_value(const Scenario& scenario) {
  return *value_analytic(scenario, true_regime(scenario));
}

ValueEstimate value_gcomputation(const Scenario& scenario, const Regime& regime,
                                 std::size_t draws, RngStream& stream) {
  if (draws < 1) throw InvalidParameterError("value_gcomputation: need at least one draw");
  validate_scenario(scenario);
  const int stages = scenario_stages(scenario);
  if (regime.stages() != stages) {
    throw ModelSpecError("value_gcomputation: regime has the wrong number of stages");
  }
  const std::vector<int> dims(stages, 1);
  for (int k = 1; k <= stages; ++k) regime.rules[k - 1].features.validate_for_stage(k, dims);

  RunningMoments moments;
  Trajectory t;
  for (std::size_t b = 0; b < draws; ++b) {
    draw_trajectory(scenario, stream, &regime, t);
    moments.add(true_mean_outcome(scenario, t));
  }
  ValueEstimate out;
  out.value = moments.mean;
  if (draws > 1) out.std_error = std::sqrt(moments.variance() / static_cast<double>(draws));
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

double propensity_sd(std::span<const double> pihat) {
  if (pihat.empty()) return 0.0;
  const double n = static_cast<double>(pihat.size());
  const double mean = std::accumulate(pihat.begin(), pihat.end(), 0.0) / n;
  double ss = 0.0;
  for (double p : pihat) ss += (p - mean) * (p - mean);
  return std::sqrt(ss / n);
}

double propensity_sd_diagnostic(const std::vector<std::vector<double>>& per_rep_pihat) {
  if (per_rep_pihat.empty()) return kNaN;
  double total = 0.0;
  for (const auto& pihat : per_rep_pihat) total += propensity_sd(pihat);
  return total / static_cast<double>(per_rep_pihat.size());
}

MedianEfficiency median_efficiency(const StudyResults& results) {
  MedianEfficiency out;
  std::vector<double> q, a;
  for (const auto& r : results.records) {
    if (r.failed) continue;
    if (r.q) q.push_back(r.q->value);
    if (r.a) a.push_back(r.a->value);
  }
  if (!q.empty()) out.q = median(q) / results.optimal_value;
  if (!a.empty()) out.a = median(a) / results.optimal_value;
  return out;
}

void summarize_study(StudyResults& results) {
  std::vector<const EstimatorRun*> q_runs, a_runs;
  results.failed = 0;
  for (const auto& r : results.records) {
    if (r.failed) {
      ++results.failed;
      continue;
    }
    if (r.q) q_runs.push_back(&*r.q);
    if (r.a) a_runs.push_back(&*r.a);
  }
  results.q.reset();
  results.a.reset();
  results.mse_ratio.clear();
  results.propensity_sd.clear();
  results.propensity_sd_se.clear();
  if (!q_runs.empty()) results.q = summarize_runs(q_runs, results.psi_true, results.optimal_value);
  if (!a_runs.empty()) results.a = summarize_runs(a_runs, results.psi_true, results.optimal_value);
  if (results.q && results.a) {
    for (std::size_t j = 0; j < results.psi_true.size(); ++j) {
      results.mse_ratio.push_back(results.a->mse[j] / results.q->mse[j]);
    }
  }
  if (!a_runs.empty()) {
    const std::size_t stages = a_runs.front()->propensity_sd.size();
    for (std::size_t k = 0; k < stages; ++k) {
      RunningMoments m;
      for (const auto* run : a_runs) m.add(run->propensity_sd[k]);
      results.propensity_sd.push_back(m.mean);
      results.propensity_sd_se.push_back(std::sqrt(m.variance() / static_cast<double>(m.count)));
    }
  }
}

StudyResults run_mc_study(const StudyConfig& config) {
  validate_scenario(config.scenario);
  if (config.reps < 1) throw InvalidParameterError("study: reps must be at least 1");
  const std::vector<StageSpec> specs =
      config.specs.empty() ? default_working_specs(config.scenario) : config.specs;
  const int stages = scenario_stages(config.scenario);
  if (static_cast<int>(specs.size()) != stages) {
    throw ModelSpecError("study: need one working model per stage");
  }
  std::size_t width = 0;
  Regime shape;
  for (const auto& s : specs) {
    std::size_t prop_width = 0;
    if (const auto* l = std::get_if<LogisticPropensity>(&s.propensity)) prop_width = l->features.size();
    width = std::max({width, s.h_features.size() + s.c_features.size(), prop_width});
    shape.rules.push_back(
        DecisionRule{s.c_features, Vector::Zero(static_cast<Eigen::Index>(s.c_features.size()))});
  }
  if (config.n < width) throw InvalidParameterError("study: n is smaller than the design width");
  const std::vector<int> dims(stages, 1);
  for (int k = 1; k <= stages; ++k) {
    specs[k - 1].h_features.validate_for_stage(k, dims);
    specs[k - 1].c_features.validate_for_stage(k, dims);
  }

  const bool analytic_ok = value_analytic(config.scenario, shape).has_value();
  if (config.value_method == ValueMethod::Analytic && !analytic_ok) {
    throw InvalidParameterError(
        "study: analytic value unavailable for these contrast models; use gcomp");
  }
  const bool use_analytic = analytic_ok && config.value_method != ValueMethod::GComputation;
  if (!use_analytic && config.gcomp_draws < 1) {
    throw InvalidParameterError("study: gcomp_draws must be at least 1");
  }

  StudyResults results;
  results.scenario = scenario_name(config.scenario);
  results.n = config.n;
  results.reps = config.reps;
  results.psi_true = to_std(true_psi_for(config.scenario, specs));
  for (int k = 1; k <= stages; ++k) {
    for (const auto& name : specs[k - 1].c_features.names()) {
      results.psi_names.push_back(std::to_string(k) + ":" + name);
    }
  }
  results.optimal_value = optimal_value(config.scenario);
  results.records.resize(config.reps);

  const bool run_q = config.estimators != EstimatorSet::ALearning;
  const bool run_a = config.estimators != EstimatorSet::QLearning;

  auto value_of = [&](const Regime& regime, RngStream stream) {
    if (use_analytic) return *value_analytic(config.scenario, regime);
    return value_gcomputation(config.scenario, regime, config.gcomp_draws, stream).value;
  };
  auto concat_psi = [](const LearnResult& fit) {
    std::vector<double> psi;
    for (const auto& s : fit.stages) psi.insert(psi.end(), s.psi.data(), s.psi.data() + s.psi.size());
    return psi;
  };

  detail::parallel_for(config.reps, config.threads, [&](std::size_t r) {
    ReplicationRecord& rec = results.records[r];
    rec.rep = r;
    RngStream stream(config.master_seed, r);
    const Dataset data = simulate(config.scenario, config.n, stream);
    try {
      if (run_q) {
        const LearnResult fit = qlearn_fit(data, specs);
        EstimatorRun run;
        run.psi = concat_psi(fit);
        run.value = value_of(fit.regime, stream.derive(1));
        rec.q = std::move(run);
      }
      if (run_a) {
        const LearnResult fit = alearn_fit(data, specs);
        EstimatorRun run;
        run.psi = concat_psi(fit);
        run.value = value_of(fit.regime, stream.derive(2));
        for (const auto& s : fit.stages) {
          const bool logistic = s.phi.has_value();
          run.propensity_sd.push_back(
              logistic ? propensity_sd({s.propensity->data(), static_cast<std::size_t>(s.propensity->size())})
                       : 0.0);
        }
        rec.a = std::move(run);
      }
    } catch (const SingularSystemError& e) {
      rec.failed = true;
      rec.failure = e.what();
    } catch (const NonConvergenceError& e) {
      rec.failed = true;
      rec.failure = e.what();
    }
  });

  summarize_study(results);
  const double failed_fraction =
      static_cast<double>(results.failed) / static_cast<double>(results.reps);
  if (failed_fraction > 0.10) {
    std::ostringstream msg;
    msg << "study: " << results.failed << " of " << results.reps
        << " replications failed (more than 10%)";
    throw StudyError(msg.str());
  }
  if (failed_fraction > 0.01) {
    std::ostringstream msg;
    msg << results.failed << " of " << results.reps << " replications failed and were excluded";
    results.warnings.push_back(msg.str());
  }
  return results;
}

ThresholdMeans threshold_means(const StudyResults& results) {
  // group psi components by the stage prefix of their "k:term" label
  std::vector<std::vector<std::size_t>> by_stage;
  std::vector<std::vector<std::string>> terms;
  for (std::size_t j = 0; j < results.psi_names.size(); ++j) {
    const std::string& label = results.psi_names[j];
    const auto colon = label.find(':');
    const int stage = std::stoi(label.substr(0, colon));
    if (static_cast<int>(by_stage.size()) < stage) {
      by_stage.resize(stage);
      terms.resize(stage);
    }
    by_stage[stage - 1].push_back(j);
    terms[stage - 1].push_back(label.substr(colon + 1));
  }
  auto stage_means = [&](bool use_q) {
    std::vector<std::optional<double>> out(by_stage.size());
    for (std::size_t k = 0; k < by_stage.size(); ++k) {
      const std::vector<std::string> expected{Term::constant().name(),
                                              Term::state(static_cast<int>(k) + 1).name()};
      if (terms[k] != expected) continue;
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& r : results.records) {
        const auto& run = use_q ? r.q : r.a;
        if (r.failed || !run) continue;
        sum += -run->psi[by_stage[k][0]] / run->psi[by_stage[k][1]];
        ++count;
      }
      if (count > 0) out[k] = sum / static_cast<double>(count);
    }
    return out;
  };
  return {stage_means(true), stage_means(false)};
}

}  // namespace dtr
