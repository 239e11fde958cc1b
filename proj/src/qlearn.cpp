#include "dtr/qlearn.hpp"

#include <numeric>

namespace dtr {

namespace detail {

std::vector<std::size_t> selected_rows(const LearnOptions& options, int stage, std::size_t n) {
  std::vector<std::size_t> rows;
  const auto k = static_cast<std::size_t>(stage - 1);
  if (k < options.masks.size() && options.masks[k]) {
    const auto& mask = *options.masks[k];
    if (mask.size() != n) throw InvalidParameterError("stage mask length does not match data");
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) rows.push_back(i);
    }
  } else {
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  return rows;
}

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  if (static_cast<std::size_t>(x.rows()) == rows.size()) return x;
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = x.row(rows[r]);
  return out;
}

Vector take_rows(const Vector& x, const std::vector<std::size_t>& rows) {
  if (static_cast<std::size_t>(x.size()) == rows.size()) return x;
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(r) = x(rows[r]);
  return out;
}

}  // namespace detail

StageFit q_stage_fit(const Matrix& design_h, const Matrix& design_c, const Vector& actions,
                     const Vector& v, const Vector& weights) {
  const Eigen::Index n = design_h.rows();
  if (design_c.rows() != n || actions.size() != n || v.size() != n) {
    throw InvalidParameterError("q_stage_fit: designs, actions and response differ in length");
  }
  const Eigen::Index ph = design_h.cols();
  const Eigen::Index pc = design_c.cols();
  Matrix x(n, ph + pc);
  x.leftCols(ph) = design_h;
  x.rightCols(pc) = actions.asDiagonal() * design_c;

  const FitResult fit = wls_fit(x, v, weights);
  StageFit out;
  out.beta = fit.coefficients.head(ph);
  out.psi = fit.coefficients.tail(pc);
  out.xi_covariance = fit.covariance;
  out.residuals = fit.residuals;
  out.response = v;
  return out;
}

Vector q_pseudo_outcome(const StageFit& fit, const Matrix& design_h, const Matrix& design_c) {
  if (design_h.cols() != fit.beta.size() || design_c.cols() != fit.psi.size()) {
    throw InvalidParameterError("q_pseudo_outcome: fit does not match the designs");
  }
  return design_h * fit.beta + (design_c * fit.psi).cwiseMax(0.0);
}

LearnResult qlearn_fit(const Dataset& data, const std::vector<StageSpec>& specs,
                       const LearnOptions& options) {
  data.validate();
  const int stages = data.stages;
  if (static_cast<int>(specs.size()) != stages) {
    throw ModelSpecError("qlearn_fit: need one stage spec per stage");
  }
  const std::size_t n = data.size();
  LearnResult result;
  result.stages.resize(stages);
  result.regime.rules.resize(stages);

  Vector v = data.outcomes();
  for (int k = stages; k >= 1; --k) {
    const auto& spec = specs[k - 1];
    const auto rows = detail::selected_rows(options, k, n);
    const Matrix xh = detail::take_rows(build_design(data, k, spec.h_features), rows);
    const Matrix xc = detail::take_rows(build_design(data, k, spec.c_features), rows);
    const Vector a = detail::take_rows(data.actions(k), rows);
    const Vector vk = detail::take_rows(v, rows);
    Vector w = Vector::Ones(static_cast<Eigen::Index>(rows.size()));
    const auto idx = static_cast<std::size_t>(k - 1);
    if (idx < options.weights.size() && options.weights[idx]) {
      if (static_cast<std::size_t>(options.weights[idx]->size()) != n) {
        throw InvalidParameterError("qlearn_fit: weight vector length does not match data");
      }
      w = detail::take_rows(*options.weights[idx], rows);
    }

    StageFit fit = q_stage_fit(xh, xc, a, vk, w);
    fit.stage = k;
    fit.rows = rows;
    if (k > 1) {
      const Vector next = q_pseudo_outcome(fit, xh, xc);
      for (std::size_t r = 0; r < rows.size(); ++r) v(rows[r]) = next(r);
    }
    result.regime.rules[k - 1] = DecisionRule{spec.c_features, fit.psi};
    result.stages[k - 1] = std::move(fit);
  }
  return result;
}

}  // namespace dtr
