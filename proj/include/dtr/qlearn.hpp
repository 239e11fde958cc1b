#pragma once

#include <optional>
#include <vector>

#include "dtr/data.hpp"

namespace dtr {

/// Per-stage options shared by both learners. Entry k-1 applies to stage k;
/// missing entries mean "all rows" and "unit weights".
struct LearnOptions {
  /// Rows contributing to the stage-k fit. Rows left out carry their
  /// pseudo-outcome through to stage k-1 unchanged.
  std::vector<std::optional<std::vector<bool>>> masks;
  /// Working-variance weights for the Q-learning regressions (length n).
  std::vector<std::optional<Vector>> weights;
};

/// Weighted least squares of v on [X_h | a * X_C]; beta and psi are the two
/// halves of the coefficient vector.
StageFit q_stage_fit(const Matrix& design_h, const Matrix& design_c, const Vector& actions,
                     const Vector& v, const Vector& weights);

/// Row-wise max over a of the fitted Q: X_h beta + max(0, X_C psi).
Vector q_pseudo_outcome(const StageFit& fit, const Matrix& design_h, const Matrix& design_c);

/// Backward recursion k = K..1: stage K regresses Y, earlier stages regress
/// the maximized fitted Q of the stage after.
LearnResult qlearn_fit(const Dataset& data, const std::vector<StageSpec>& specs,
                       const LearnOptions& options = {});

namespace detail {
std::vector<std::size_t> selected_rows(const LearnOptions& options, int stage, std::size_t n);
Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows);
Vector take_rows(const Vector& x, const std::vector<std::size_t>& rows);
}  // namespace detail

}  // namespace dtr
