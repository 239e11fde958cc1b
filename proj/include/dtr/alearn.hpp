#pragma once

#include <optional>
#include <span>

#include "dtr/qlearn.hpp"

namespace dtr {

/// Propensities below this (or above 1 minus this) produce a warning. They are
/// never clipped.
inline constexpr double kExtremePropensity = 1e-6;

struct PropensityEstimate {
  Vector pihat;
  std::optional<FitResult> fit;  ///< present for logistic models
};

/// Evaluates the stage-k propensity model on `rows` (all rows when empty).
/// Known models return the supplied values; logistic models are fit by
/// maximum likelihood to the stage-k actions.
PropensityEstimate propensity_eval(const PropensityModel& model, const Dataset& data, int stage,
                                   std::span<const std::size_t> rows = {});

struct AStageSolution {
  Vector psi;
  Vector beta;
  Vector residuals;  ///< v - a * X_C psi - X_h beta
};

/// Solves the stacked linear moment conditions
///   sum_i X_C,i (a_i - pi_i) r_i = 0,   sum_i X_h,i r_i = 0,
///   r_i = v_i - a_i X_C,i psi - X_h,i beta,
/// i.e. the contrast-gradient choice of lambda and theta = h.
AStageSolution alearn_stage_solve(const Matrix& design_h, const Matrix& design_c,
                                  const Vector& actions, const Vector& pihat, const Vector& v);

struct MomentNorms {
  double contrast = 0.0;  ///< sup-norm of the propensity-weighted moment
  double baseline = 0.0;  ///< sup-norm of the h-model moment
};

MomentNorms alearn_moment_norms(const Matrix& design_h, const Matrix& design_c,
                                const Vector& actions, const Vector& pihat, const Vector& v,
                                const Vector& psi, const Vector& beta);

/// prev_v + C (I{C > 0} - a): adds back the regret of the action taken.
Vector a_pseudo_outcome(const Vector& prev_v, const Vector& contrast, const Vector& actions);

/// Backward recursion k = K..1 with propensity fitting before each solve.
/// `options.weights` is ignored.
LearnResult alearn_fit(const Dataset& data, const std::vector<StageSpec>& specs,
                       const LearnOptions& options = {});

}  // namespace dtr
