#include "dtr/alearn.hpp"

#include <numeric>
#include <sstream>

namespace dtr {

PropensityEstimate propensity_eval(const PropensityModel& model, const Dataset& data, int stage,
                                   std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  const std::vector<std::size_t> row_list(rows.begin(), rows.end());
  const auto m = static_cast<Eigen::Index>(rows.size());
  PropensityEstimate out;

  if (const auto* known = std::get_if<KnownPropensity>(&model)) {
    out.pihat.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const double p =
          known->fn ? known->fn(data.trajectories[row_list[r]].history()) : known->value;
      if (!(p > 0.0 && p < 1.0)) {
        throw InvalidParameterError("known propensity must lie strictly inside (0, 1)");
      }
      out.pihat(r) = p;
    }
    return out;
  }

  const auto& logistic = std::get<LogisticPropensity>(model);
  const Matrix x = detail::take_rows(build_design(data, stage, logistic.features), row_list);
  const Vector a = detail::take_rows(data.actions(stage), row_list);
  FitResult fit = logistic_fit(x, a);
  out.pihat = (x * fit.coefficients).unaryExpr([](double e) { return expit(e); });
  out.fit = std::move(fit);
  return out;
}

AStageSolution alearn_stage_solve(const Matrix& design_h, const Matrix& design_c,
                                  const Vector& actions, const Vector& pihat, const Vector& v) {
  const Eigen::Index n = design_h.rows();
  if (design_c.rows() != n || actions.size() != n || pihat.size() != n || v.size() != n) {
    throw InvalidParameterError("alearn_stage_solve: inputs differ in length");
  }
  const Eigen::Index ph = design_h.cols();
  const Eigen::Index pc = design_c.cols();
  const Vector centered = actions - pihat;

  Matrix m(pc + ph, pc + ph);
  m.topLeftCorner(pc, pc) =
      design_c.transpose() * centered.cwiseProduct(actions).asDiagonal() * design_c;
  m.topRightCorner(pc, ph) = design_c.transpose() * centered.asDiagonal() * design_h;
  m.bottomLeftCorner(ph, pc) = design_h.transpose() * actions.asDiagonal() * design_c;
  m.bottomRightCorner(ph, ph) = design_h.transpose() * design_h;
  Vector rhs(pc + ph);
  rhs.head(pc) = design_c.transpose() * centered.cwiseProduct(v);
  rhs.tail(ph) = design_h.transpose() * v;

  const Vector theta = solve_linear(m, rhs);
  AStageSolution out;
  out.psi = theta.head(pc);
  out.beta = theta.tail(ph);
  out.residuals = v - actions.cwiseProduct(design_c * out.psi) - design_h * out.beta;
  return out;
}

MomentNorms alearn_moment_norms(const Matrix& design_h, const Matrix& design_c,
                                const Vector& actions, const Vector& pihat, const Vector& v,
                                const Vector& psi, const Vector& beta) {
  const Vector r = v - actions.cwiseProduct(design_c * psi) - design_h * beta;
  MomentNorms norms;
  norms.contrast =
      (design_c.transpose() * (actions - pihat).cwiseProduct(r)).cwiseAbs().maxCoeff();
  norms.baseline = (design_h.transpose() * r).cwiseAbs().maxCoeff();
  return norms;
}

Vector a_pseudo_outcome(const Vector& prev_v, const Vector& contrast, const Vector& actions) {
  if (prev_v.size() != contrast.size() || prev_v.size() != actions.size()) {
    throw InvalidParameterError("a_pseudo_outcome: inputs differ in length");
  }
  Vector out(prev_v.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double optimal = contrast(i) > 0.0 ? 1.0 : 0.0;
    out(i) = prev_v(i) + contrast(i) * (optimal - actions(i));
  }
  return out;
}

LearnResult alearn_fit(const Dataset& data, const std::vector<StageSpec>& specs,
                       const LearnOptions& options) {
  data.validate();
  const int stages = data.stages;
  if (static_cast<int>(specs.size()) != stages) {
    throw ModelSpecError("alearn_fit: need one stage spec per stage");
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

    PropensityEstimate prop = propensity_eval(spec.propensity, data, k, rows);
    const Eigen::Index extreme =
        (prop.pihat.array() < kExtremePropensity || prop.pihat.array() > 1.0 - kExtremePropensity)
            .count();
    if (extreme > 0) {
      std::ostringstream msg;
      msg << "stage " << k << ": " << extreme << " estimated propensities within "
          << kExtremePropensity << " of 0 or 1";
      result.warnings.push_back(msg.str());
    }

    AStageSolution sol = alearn_stage_solve(xh, xc, a, prop.pihat, vk);
    StageFit& fit = result.stages[k - 1];
    fit.stage = k;
    fit.beta = sol.beta;
    fit.psi = sol.psi;
    if (prop.fit) {
      fit.phi = prop.fit->coefficients;
      fit.phi_covariance = prop.fit->covariance;
    }
    fit.response = vk;
    fit.residuals = sol.residuals;
    fit.propensity = prop.pihat;
    fit.rows = rows;

    if (k > 1) {
      const Vector next = a_pseudo_outcome(vk, xc * sol.psi, a);
      for (std::size_t r = 0; r < rows.size(); ++r) v(rows[r]) = next(r);
    }
    result.regime.rules[k - 1] = DecisionRule{spec.c_features, fit.psi};
  }
  return result;
}

}  // namespace dtr
