#include "dtr/scenarios.hpp"

#include <algorithm>
#include <cmath>

namespace dtr {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

template <std::size_t N>
bool all_finite(const std::array<double, N>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require(bool ok, const char* message) {
  if (!ok) throw InvalidParameterError(message);
}

void prepare(Trajectory& out, int stages) {
  out.states.resize(stages);
  for (auto& s : out.states) s.assign(1, 0.0);
  out.actions.assign(stages, 0);
}

int choose(RngStream& stream, double propensity, const Regime* policy, int stage,
           const Trajectory& t) {
  const double u = stream.uniform();
  if (policy) return apply_regime(*policy, stage, t.history());
  return u < propensity ? 1 : 0;
}

void draw(const OneDecisionParams& p, RngStream& stream, const Regime* policy, Trajectory& t) {
  prepare(t, 1);
  const double s1 = stream.normal();
  t.states[0][0] = s1;
  t.actions[0] = choose(stream, expit(p.phi0[0] + p.phi0[1] * s1 + p.phi0[2] * s1 * s1), policy,
                        1, t);
  t.outcome = true_mean_outcome(p, t) + p.outcome_sd * stream.normal();
}

void draw(const TwoDecisionParams& p, RngStream& stream, const Regime* policy, Trajectory& t) {
  prepare(t, 2);
  const double s1 = stream.uniform() < 0.5 ? 1.0 : 0.0;
  t.states[0][0] = s1;
  const int a1 = choose(stream, expit(p.phi1[0] + p.phi1[1] * s1), policy, 1, t);
  t.actions[0] = a1;
  const auto& d = p.delta1;
  const double s2 = d[0] + d[1] * s1 + d[2] * a1 + d[3] * s1 * a1 +
                    std::sqrt(p.s2_var) * stream.normal();
  t.states[1][0] = s2;
  const auto& f = p.phi2;
  const double logit2 =
      f[0] + f[1] * s1 + f[2] * a1 + f[3] * s2 + f[4] * a1 * s2 + f[5] * s2 * s2;
  t.actions[1] = choose(stream, expit(logit2), policy, 2, t);
  t.outcome = true_mean_outcome(p, t) + std::sqrt(p.y_var) * stream.normal();
}

void draw(const MoodieParams& p, RngStream& stream, const Regime* policy, Trajectory& t) {
  prepare(t, 2);
  const double s1 = p.s1_mean + p.s1_sd * stream.normal();
  t.states[0][0] = s1;
  t.actions[0] = choose(stream, expit(p.phi1[0] + p.phi1[1] * s1), policy, 1, t);
  const double s2 = p.s2_slope * s1 + p.s2_sd * stream.normal();
  t.states[1][0] = s2;
  t.actions[1] = choose(stream, expit(p.phi2[0] + p.phi2[1] * s2), policy, 2, t);
  const double yopt = p.yopt_intercept + p.yopt_slope * s1 + p.yopt_sd * stream.normal();
  const auto mu = moodie_regrets(p, t);
  t.outcome = yopt - mu[0] - mu[1];
}

Dataset empty_dataset(int stages) {
  Dataset d;
  d.stages = stages;
  d.state_dims.assign(stages, 1);
  return d;
}

double coefficient_for(const DecisionRule& rule, const Term& term) {
  const auto& terms = rule.features.terms();
  for (std::size_t j = 0; j < terms.size(); ++j) {
    if (terms[j] == term) return rule.psi(static_cast<Eigen::Index>(j));
  }
  return 0.0;
}

}  // namespace

int scenario_stages(const Scenario& scenario) {
  return std::holds_alternative<OneDecisionParams>(scenario) ? 1 : 2;
}

const char* scenario_name(const Scenario& scenario) {
  return std::visit(overloaded{[](const OneDecisionParams&) { return "one_decision"; },
                               [](const TwoDecisionParams&) { return "two_decision"; },
                               [](const MoodieParams&) { return "moodie"; }},
                    scenario);
}

void validate_scenario(const Scenario& scenario) {
  std::visit(overloaded{
                 [](const OneDecisionParams& p) {
                   require(all_finite(p.phi0) && all_finite(p.beta0) && all_finite(p.psi0),
                           "one_decision: parameters must be finite");
                   require(p.outcome_sd > 0.0 && std::isfinite(p.outcome_sd),
                           "one_decision: outcome_sd must be positive");
                 },
                 [](const TwoDecisionParams& p) {
                   require(all_finite(p.phi1) && all_finite(p.delta1) && all_finite(p.phi2) &&
                               all_finite(p.beta2) && all_finite(p.psi2),
                           "two_decision: parameters must be finite");
                   require(p.s2_var > 0.0 && std::isfinite(p.s2_var),
                           "two_decision: s2_var must be positive");
                   require(p.y_var > 0.0 && std::isfinite(p.y_var),
                           "two_decision: y_var must be positive");
                 },
                 [](const MoodieParams& p) {
                   require(all_finite(p.phi1) && all_finite(p.phi2) && all_finite(p.psi1) &&
                               all_finite(p.psi2),
                           "moodie: parameters must be finite");
                   require(p.s1_sd > 0.0 && p.s2_sd > 0.0 && p.yopt_sd > 0.0,
                           "moodie: standard deviations must be positive");
                   require(std::isfinite(p.s1_mean) && std::isfinite(p.s2_slope) &&
                               std::isfinite(p.yopt_intercept) && std::isfinite(p.yopt_slope),
                           "moodie: parameters must be finite");
                 }},
             scenario);
}

void draw_trajectory(const Scenario& scenario, RngStream& stream, const Regime* policy,
                     Trajectory& out) {
  std::visit([&](const auto& p) { draw(p, stream, policy, out); }, scenario);
}

double true_mean_outcome(const Scenario& scenario, const Trajectory& t) {
  return std::visit(
      overloaded{
          [&](const OneDecisionParams& p) {
            const double s1 = t.states[0][0];
            const int a1 = t.actions[0];
            return p.beta0[0] + p.beta0[1] * s1 + p.beta0[2] * s1 * s1 +
                   a1 * (p.psi0[0] + p.psi0[1] * s1);
          },
          [&](const TwoDecisionParams& p) {
            const double s1 = t.states[0][0];
            const double s2 = t.states[1][0];
            const int a1 = t.actions[0];
            const int a2 = t.actions[1];
            const auto& b = p.beta2;
            const auto& c = p.psi2;
            return b[0] + b[1] * s1 + b[2] * a1 + b[3] * s1 * a1 + b[4] * s2 + b[5] * s2 * s2 +
                   a2 * (c[0] + c[1] * a1 + c[2] * s2);
          },
          [&](const MoodieParams& p) {
            const auto mu = moodie_regrets(p, t);
            return p.yopt_intercept + p.yopt_slope * t.states[0][0] - mu[0] - mu[1];
          }},
      scenario);
}

Dataset simulate(const Scenario& scenario, std::size_t n, RngStream& stream,
                 const Regime* policy) {
  validate_scenario(scenario);
  const int stages = scenario_stages(scenario);
  Dataset data = empty_dataset(stages);
  if (policy) {
    if (policy->stages() != stages) {
      throw ModelSpecError("policy regime has the wrong number of stages");
    }
    for (int k = 1; k <= stages; ++k) {
      policy->rules[k - 1].features.validate_for_stage(k, data.state_dims);
    }
  }
  data.trajectories.resize(n);
  for (auto& t : data.trajectories) draw_trajectory(scenario, stream, policy, t);
  return data;
}

Dataset gen_one_decision(const OneDecisionParams& p, std::size_t n, RngStream& stream) {
  return simulate(p, n, stream);
}

Dataset gen_two_decision(const TwoDecisionParams& p, std::size_t n, RngStream& stream) {
  return simulate(p, n, stream);
}

Dataset gen_moodie(const MoodieParams& p, std::size_t n, RngStream& stream) {
  return simulate(p, n, stream);
}

std::array<double, 2> moodie_regrets(const MoodieParams& p, const Trajectory& t) {
  const double c1 = p.psi1[0] + p.psi1[1] * t.states[0][0];
  const double c2 = p.psi2[0] + p.psi2[1] * t.states[1][0];
  return {c1 * ((c1 > 0.0 ? 1 : 0) - t.actions[0]), c2 * ((c2 > 0.0 ? 1 : 0) - t.actions[1])};
}

double true_q1_two_decision(const TwoDecisionParams& p, int s1, int a1) {
  const auto& b = p.beta2;
  const auto& d = p.delta1;
  const double mean = d[0] + d[1] * s1 + d[2] * a1 + d[3] * s1 * a1;
  const double sd = std::sqrt(p.s2_var);
  const double contrast_intercept = p.psi2[0] + p.psi2[1] * a1;
  // E[C2 I(C2 > 0)] with C2 = contrast_intercept + psi22 S2
  const double positive_part = expect_linear_on_halfline(mean, sd, contrast_intercept, p.psi2[2],
                                                         contrast_intercept, p.psi2[2]);
  return b[0] + b[1] * s1 + b[2] * a1 + b[3] * s1 * a1 + b[4] * mean +
         b[5] * (mean * mean + p.s2_var) + positive_part;
}

Stage1Truth derive_stage1_truth(const TwoDecisionParams& p) {
  validate_scenario(p);
  const double q00 = true_q1_two_decision(p, 0, 0);
  const double q10 = true_q1_two_decision(p, 1, 0);
  const double q01 = true_q1_two_decision(p, 0, 1);
  const double q11 = true_q1_two_decision(p, 1, 1);
  Stage1Truth t;
  t.beta1 = {q00, q10 - q00};
  t.psi1 = {q01 - q00, q11 - q10 - q01 + q00};
  return t;
}

double induced_q1_closed_form(double s1, int a1, const std::array<double, 3>& beta21,
                              double beta22, const std::array<double, 3>& psi21, double psi22,
                              const std::array<double, 3>& gamma, double sigma) {
  if (!(psi22 > 0.0)) throw InvalidParameterError("induced_q1_closed_form: psi22 must be > 0");
  if (!(sigma > 0.0)) throw InvalidParameterError("induced_q1_closed_form: sigma must be > 0");
  const std::array<double, 3> k1{1.0, s1, static_cast<double>(a1)};
  auto dot = [&](const std::array<double, 3>& v) {
    return k1[0] * v[0] + k1[1] * v[1] + k1[2] * v[2];
  };
  const double k_gamma = dot(gamma);
  const double k_psi = dot(psi21);
  const double eta = -(k_psi / psi22 + k_gamma) / sigma;
  const double upper = norm_sf(eta);
  return dot(beta21) + k_gamma * beta22 + k_psi * upper +
         psi22 * (sigma * norm_pdf(eta) + k_gamma * upper);
}

Regime true_regime(const Scenario& scenario) {
  const Term one = Term::constant();
  const Term s1 = Term::state(1);
  const Term s2 = Term::state(2);
  const Term a1 = Term::action(1);
  auto rule = [](std::vector<Term> terms, std::vector<double> psi) {
    return DecisionRule{FeatureMap(std::move(terms)),
                        Eigen::Map<const Vector>(psi.data(), static_cast<Eigen::Index>(psi.size()))};
  };
  return std::visit(
      overloaded{
          [&](const OneDecisionParams& p) {
            return Regime{{rule({one, s1}, {p.psi0[0], p.psi0[1]})}};
          },
          [&](const TwoDecisionParams& p) {
            const auto truth = derive_stage1_truth(p);
            return Regime{{rule({one, s1}, {truth.psi1[0], truth.psi1[1]}),
                           rule({one, a1, s2}, {p.psi2[0], p.psi2[1], p.psi2[2]})}};
          },
          [&](const MoodieParams& p) {
            return Regime{{rule({one, s1}, {p.psi1[0], p.psi1[1]}),
                           rule({one, s2}, {p.psi2[0], p.psi2[1]})}};
          }},
      scenario);
}

std::vector<StageSpec> default_working_specs(const Scenario& scenario) {
  auto spec = [](std::vector<std::string> h, std::vector<std::string> c,
                 std::vector<std::string> prop) {
    return StageSpec{FeatureMap::parse(h), FeatureMap::parse(c),
                     LogisticPropensity{FeatureMap::parse(prop)}};
  };
  const StageSpec first = spec({"1", "s1"}, {"1", "s1"}, {"1", "s1"});
  return std::visit(
      overloaded{[&](const OneDecisionParams&) { return std::vector<StageSpec>{first}; },
                 [&](const TwoDecisionParams&) {
                   return std::vector<StageSpec>{
                       first, spec({"1", "s1", "a1", "s1*a1", "s2"}, {"1", "a1", "s2"},
                                   {"1", "s1", "a1", "s2", "a1*s2"})};
                 },
                 [&](const MoodieParams&) {
                   return std::vector<StageSpec>{
                       first, spec({"1", "s1", "a1", "s1*a1", "s2"}, {"1", "s2"}, {"1", "s2"})};
                 }},
      scenario);
}

Vector true_psi_for(const Scenario& scenario, const std::vector<StageSpec>& specs) {
  const Regime truth = true_regime(scenario);
  if (specs.size() != truth.rules.size()) {
    throw ModelSpecError("working specs and scenario differ in stage count");
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    for (const auto& term : specs[k].c_features.terms()) {
      out.push_back(coefficient_for(truth.rules[k], term));
    }
  }
  return Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace dtr
