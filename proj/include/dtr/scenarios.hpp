#pragma once

// Seeded generative models for the three simulation scenarios and the
// closed-form truths derived from them.
//
// Normal laws whose spread is given as a bare number (the outcome noise 9 of
// the one-decision model, 2 and 10 in the two-decision model) are read as
// variances.

#include <array>
#include <cstddef>
#include <variant>
#include <vector>

#include "dtr/data.hpp"
#include "dtr/rng.hpp"

namespace dtr {

/// One decision: S1 ~ N(0,1), A1 ~ Bern(expit(phi0 . (1, s1, s1^2))),
/// Y ~ N(beta0 . (1, s1, s1^2) + a1 psi0 . (1, s1), outcome_sd^2).
struct OneDecisionParams {
  std::array<double, 3> phi0{0.0, -2.0, 0.0};
  std::array<double, 3> beta0{1.0, 1.0, 0.0};
  std::array<double, 2> psi0{1.0, 0.5};
  double outcome_sd = 3.0;
};

/// Two decisions with S1 ~ Bern(0.5) and continuous S2.
struct TwoDecisionParams {
  std::array<double, 2> phi1{0.3, -0.5};
  /// S2 mean: delta1 . (1, s1, a1, s1 a1)
  std::array<double, 4> delta1{0.0, 0.5, -0.75, 0.25};
  /// A2 logit: phi2 . (1, s1, a1, s2, a1 s2, s2^2)
  std::array<double, 6> phi2{0.0, 0.5, 0.1, -1.0, -0.1, 0.0};
  /// h2: beta2 . (1, s1, a1, s1 a1, s2, s2^2)
  std::array<double, 6> beta2{3.0, 0.0, 0.1, -0.5, -0.5, 0.0};
  /// C2: psi2 . (1, a1, s2)
  std::array<double, 3> psi2{1.0, 0.25, 0.5};
  double s2_var = 2.0;
  double y_var = 10.0;
};

/// CD4-count scenario: Y = Y^opt - mu1 - mu2 with regrets
/// mu_k = C_k (I{C_k > 0} - A_k), C1 = psi1 . (1, s1), C2 = psi2 . (1, s2).
/// The slope entries of psi1/psi2 are negative: treat below a CD4 threshold.
struct MoodieParams {
  std::array<double, 2> phi1{2.0, -0.006};
  std::array<double, 2> phi2{0.8, -0.004};
  std::array<double, 2> psi1{250.0, -1.0};
  std::array<double, 2> psi2{720.0, -2.0};
  double s1_mean = 450.0;
  double s1_sd = 150.0;
  double s2_slope = 1.25;
  double s2_sd = 60.0;
  double yopt_intercept = 400.0;
  double yopt_slope = 1.6;
  double yopt_sd = 60.0;
};

using Scenario = std::variant<OneDecisionParams, TwoDecisionParams, MoodieParams>;

int scenario_stages(const Scenario& scenario);
const char* scenario_name(const Scenario& scenario);
/// Throws InvalidParameterError on non-positive spreads or non-finite values.
void validate_scenario(const Scenario& scenario);

/// Draws one trajectory in time order (S1, A1, S2, A2, Y) into `out`, reusing
/// its storage. With a `policy`, actions follow the regime; the uniform that
/// would have decided the observational action is still consumed so both
/// modes see the same state and noise draws.
void draw_trajectory(const Scenario& scenario, RngStream& stream, const Regime* policy,
                     Trajectory& out);

/// E[Y | full history] under the true model.
double true_mean_outcome(const Scenario& scenario, const Trajectory& trajectory);

Dataset simulate(const Scenario& scenario, std::size_t n, RngStream& stream,
                 const Regime* policy = nullptr);
Dataset gen_one_decision(const OneDecisionParams& p, std::size_t n, RngStream& stream);
Dataset gen_two_decision(const TwoDecisionParams& p, std::size_t n, RngStream& stream);
Dataset gen_moodie(const MoodieParams& p, std::size_t n, RngStream& stream);

/// Regret terms (mu1, mu2) of a Moodie trajectory.
std::array<double, 2> moodie_regrets(const MoodieParams& p, const Trajectory& trajectory);

struct Stage1Truth {
  std::array<double, 2> beta1{};
  std::array<double, 2> psi1{};
};

/// True first-stage Q-function of the two-decision model,
/// E[V2 | S1 = s1, A1 = a1], in closed form.
double true_q1_two_decision(const TwoDecisionParams& p, int s1, int a1);

/// h1 and C1 coefficients implied by the two-decision model. Exact because
/// S1 and A1 are binary.
Stage1Truth derive_stage1_truth(const TwoDecisionParams& p);

/// E{max over a2 of the linear stage-2 Q} when S2 | s1, a1 ~ N(K1' gamma,
/// sigma^2) with K1 = (1, s1, a1) and psi22 > 0.
double induced_q1_closed_form(double s1, int a1, const std::array<double, 3>& beta21,
                              double beta22, const std::array<double, 3>& psi21, double psi22,
                              const std::array<double, 3>& gamma, double sigma);

Regime true_regime(const Scenario& scenario);

/// Working models used in the simulation studies: contrasts and propensity
/// forms correct under the default parameters, linear h-models.
std::vector<StageSpec> default_working_specs(const Scenario& scenario);

/// True contrast coefficients aligned with the terms of `c_features` at each
/// stage (terms absent from the truth get 0), concatenated over stages.
Vector true_psi_for(const Scenario& scenario, const std::vector<StageSpec>& specs);

}  // namespace dtr
