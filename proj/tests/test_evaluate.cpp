#include <cmath>

#include "doctest.h"
#include "dtr/evaluate.hpp"
#include "oracles.hpp"

using namespace dtr;

namespace {

DecisionRule rule(std::vector<std::string> terms, std::vector<double> psi) {
  return DecisionRule{FeatureMap::parse(terms),
                      Eigen::Map<const Vector>(psi.data(), static_cast<Eigen::Index>(psi.size()))};
}

// H(d) of the one-decision model by quadrature over S1.
double one_decision_by_quadrature(const OneDecisionParams& p, double c0, double c1) {
  auto y = [&](double s) {
    const double treat = c0 + c1 * s > 0.0 ? 1.0 : 0.0;
    return p.beta0[0] + p.beta0[1] * s + p.beta0[2] * s * s + treat * (p.psi0[0] + p.psi0[1] * s);
  };
  std::vector<double> kinks;
  if (c1 != 0.0) kinks.push_back(-c0 / c1);
  return oracle::normal_expectation(y, 0.0, 1.0, kinks);
}

EstimatorRun run_with(std::vector<double> psi, double value, std::vector<double> prop = {}) {
  EstimatorRun r;
  r.psi = std::move(psi);
  r.value = value;
  r.propensity_sd = std::move(prop);
  return r;
}

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("optimal values") {
  // 1 + Phi(2) + 0.5 phi(2)
  CHECK(std::abs(optimal_value(OneDecisionParams{}) - 2.00424535130841482) < 1e-12);
  CHECK(std::abs(optimal_value(TwoDecisionParams{}) - 4.19883098065416742) < 1e-12);
  CHECK(optimal_value(MoodieParams{}) == doctest::Approx(1120.0).epsilon(1e-14));
}

TEST_CASE("one-decision value against quadrature") {
  OneDecisionParams p;
  p.beta0[2] = 0.4;
  for (double c0 : {-1.0, 0.0, 0.5, 2.0}) {
    for (double c1 : {-3.0, -0.5, 0.0, 1.0}) {
      const Vector psi = (Vector(2) << c0, c1).finished();
      CHECK(value_one_decision_analytic(psi, p) ==
            doctest::Approx(one_decision_by_quadrature(p, c0, c1)).epsilon(1e-9));
    }
  }
}

TEST_CASE("no regime beats the optimal one") {
  RngStream gen(404, 0);
  const Scenario scenarios[] = {OneDecisionParams{}, TwoDecisionParams{}, MoodieParams{}};
  for (const Scenario& s : scenarios) {
    const double best = optimal_value(s);
    for (int t = 0; t < 50; ++t) {
      Regime r;
      const bool cd4 = std::holds_alternative<MoodieParams>(s);
      const double scale = cd4 ? 300.0 : 1.0;
      r.rules.push_back(rule({"1", "s1"}, {scale * gen.normal(), gen.normal()}));
      if (std::holds_alternative<TwoDecisionParams>(s)) {
        r.rules.push_back(rule({"1", "a1", "s2"}, {gen.normal(), gen.normal(), gen.normal()}));
      } else if (cd4) {
        r.rules.push_back(rule({"1", "s2"}, {scale * gen.normal(), gen.normal()}));
      }
      const auto v = value_analytic(s, r);
      REQUIRE(v.has_value());
      CHECK(*v <= best + 1e-9 * std::abs(best));
    }
  }
}

TEST_CASE("analytic value is independent of term order and duplicates") {
  const Regime a{{rule({"1", "s1"}, {0.3, -0.2}), rule({"1", "a1", "s2"}, {0.5, -1.0, 0.25})}};
  const Regime b{{rule({"s1", "1"}, {-0.2, 0.3}),
                  rule({"s2", "1", "a1", "1"}, {0.25, 0.2, -1.0, 0.3})}};
  CHECK(*value_analytic(TwoDecisionParams{}, a) ==
        doctest::Approx(*value_analytic(TwoDecisionParams{}, b)).epsilon(1e-15));
}

TEST_CASE("unsupported regimes have no analytic value") {
  CHECK_FALSE(value_analytic(OneDecisionParams{}, Regime{{rule({"s1^2"}, {1.0})}}).has_value());
  CHECK_FALSE(value_analytic(MoodieParams{}, Regime{{rule({"1"}, {1.0}), rule({"a1"}, {1.0})}})
                  .has_value());
  CHECK_FALSE(value_analytic(TwoDecisionParams{}, Regime{{rule({"1"}, {1.0})}}).has_value());
}

TEST_CASE("g-computation agrees with the closed forms") {
  const std::size_t draws = 200000;
  const Regime two{{rule({"1", "s1"}, {0.2, -0.6}), rule({"1", "a1", "s2"}, {0.5, 0.5, -0.3})}};
  const Regime cd4{{rule({"1", "s1"}, {300.0, -1.0}), rule({"1", "s2"}, {600.0, -1.5})}};
  const Regime one{{rule({"1", "s1"}, {-0.3, 1.0})}};
  const std::pair<Scenario, Regime> cases[] = {
      {OneDecisionParams{}, one}, {TwoDecisionParams{}, two}, {MoodieParams{}, cd4}};
  for (const auto& [s, r] : cases) {
    RngStream stream(8, 1);
    const ValueEstimate g = value_gcomputation(s, r, draws, stream);
    REQUIRE(g.std_error.has_value());
    CHECK(std::abs(g.value - *value_analytic(s, r)) < 4.0 * *g.std_error);
  }
}

TEST_CASE("g-computation details") {
  const Regime one{{rule({"1"}, {1.0})}};
  RngStream a(1, 1), b(1, 1), c(1, 2);
  const ValueEstimate x = value_gcomputation(OneDecisionParams{}, one, 1, c);
  CHECK_FALSE(x.std_error.has_value());
  CHECK(value_gcomputation(OneDecisionParams{}, one, 1000, a).value ==
        value_gcomputation(OneDecisionParams{}, one, 1000, b).value);
  CHECK_THROWS_AS(value_gcomputation(OneDecisionParams{}, one, 0, a), InvalidParameterError);
  CHECK_THROWS_AS(value_gcomputation(TwoDecisionParams{}, one, 10, a), ModelSpecError);
  CHECK_THROWS_AS(value_gcomputation(OneDecisionParams{}, Regime{{rule({"s2"}, {1.0})}}, 10, a),
                  ModelSpecError);
}

TEST_CASE("median and propensity SD") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(std::isnan(median({})));
  const std::vector<double> p{0.2, 0.4, 0.6, 0.8};
  CHECK(propensity_sd(p) == doctest::Approx(std::sqrt(0.05)).epsilon(1e-14));
  const std::vector<double> flat(10, 0.3);
  CHECK(propensity_sd(flat) < 1e-15);
  CHECK(propensity_sd_diagnostic({p, flat}) == doctest::Approx(0.5 * std::sqrt(0.05)));
}

TEST_CASE("summarize_study by hand") {
  StudyResults res;
  res.psi_true = {1.0, 2.0};
  res.psi_names = {"1:1", "1:s1_1"};
  res.optimal_value = 10.0;
  const double q_psi[3][2] = {{1.5, 2.0}, {0.5, 3.0}, {1.0, 1.0}};
  const double a_psi[3][2] = {{1.1, 2.1}, {0.9, 1.9}, {1.0, 2.0}};
  for (int r = 0; r < 3; ++r) {
    ReplicationRecord rec;
    rec.rep = static_cast<std::size_t>(r);
    rec.q = run_with({q_psi[r][0], q_psi[r][1]}, 7.0 + r);
    rec.a = run_with({a_psi[r][0], a_psi[r][1]}, 9.0 + 0.5 * r, {0.1 * (r + 1)});
    res.records.push_back(rec);
  }
  ReplicationRecord bad;
  bad.failed = true;
  res.records.push_back(bad);
  summarize_study(res);

  CHECK(res.failed == 1);
  REQUIRE(res.q.has_value());
  CHECK(res.q->mean[0] == doctest::Approx(1.0));
  CHECK(res.q->sd[0] == doctest::Approx(0.5));
  CHECK(res.q->mse[0] == doctest::Approx(0.5 / 3.0));
  CHECK(res.q->mse[1] == doctest::Approx(2.0 / 3.0));
  CHECK(res.q->mean_se[1] == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(res.q->value_mean == doctest::Approx(8.0));
  CHECK(res.q->value_se == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(res.q->r_mean == doctest::Approx(0.8));
  CHECK(res.q->r_median == doctest::Approx(0.8));
  CHECK(res.a->bias[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.mse_ratio[0] == doctest::Approx((0.02 / 3.0) / (0.5 / 3.0)));
  CHECK(res.propensity_sd[0] == doctest::Approx(0.2));
  CHECK(res.propensity_sd_se[0] == doctest::Approx(0.1 / std::sqrt(3.0)));

  const auto eff = median_efficiency(res);
  CHECK(*eff.q == doctest::Approx(0.8));
  CHECK(*eff.a == doctest::Approx(0.95));
  const auto th = threshold_means(res);
  REQUIRE(th.q.size() == 1);
  CHECK(*th.q[0] == doctest::Approx(-(1.5 / 2.0 + 0.5 / 3.0 + 1.0) / 3.0));
}

TEST_CASE("studies do not depend on the thread count") {
  StudyConfig cfg;
  cfg.scenario = TwoDecisionParams{};
  cfg.n = 200;
  cfg.reps = 60;
  cfg.master_seed = 19;
  cfg.threads = 1;
  const StudyResults one = run_mc_study(cfg);
  cfg.threads = 4;
  const StudyResults four = run_mc_study(cfg);
  REQUIRE(one.records.size() == four.records.size());
  for (std::size_t r = 0; r < one.records.size(); ++r) {
    CHECK(one.records[r].q->psi == four.records[r].q->psi);
    CHECK(one.records[r].a->value == four.records[r].a->value);
  }
  CHECK(one.psi_names == std::vector<std::string>{"1:1", "1:s1_1", "2:1", "2:a1", "2:s2_1"});
  CHECK(one.psi_true[2] == 1.0);
  CHECK(one.mse_ratio.size() == 5);
  CHECK(one.propensity_sd.size() == 2);
  CHECK(one.failed == 0);
}

TEST_CASE("study options") {
  StudyConfig cfg;
  cfg.scenario = OneDecisionParams{};
  cfg.n = 100;
  cfg.reps = 20;
  SUBCASE("single estimator") {
    cfg.estimators = EstimatorSet::ALearning;
    const StudyResults r = run_mc_study(cfg);
    CHECK_FALSE(r.q.has_value());
    CHECK(r.a.has_value());
    CHECK(r.mse_ratio.empty());
  }
  SUBCASE("g-computation values") {
    cfg.value_method = ValueMethod::GComputation;
    cfg.gcomp_draws = 2000;
    cfg.estimators = EstimatorSet::QLearning;
    const StudyResults g = run_mc_study(cfg);
    cfg.value_method = ValueMethod::Analytic;
    const StudyResults a = run_mc_study(cfg);
    for (std::size_t r = 0; r < cfg.reps; ++r) CHECK(g.records[r].q->psi == a.records[r].q->psi);
    CHECK(std::abs(g.q->value_mean - a.q->value_mean) < 0.05);
    CHECK(g.q->value_mean != a.q->value_mean);
  }
  SUBCASE("known propensities report zero spread") {
    cfg.specs = {StageSpec{FeatureMap::parse({"1", "s1"}), FeatureMap::parse({"1", "s1"}),
                           KnownPropensity{0.5}}};
    const StudyResults r = run_mc_study(cfg);
    CHECK(r.propensity_sd[0] == 0.0);
  }
  SUBCASE("invalid settings") {
    cfg.reps = 0;
    CHECK_THROWS_AS(run_mc_study(cfg), InvalidParameterError);
    cfg.reps = 5;
    cfg.n = 1;
    CHECK_THROWS_AS(run_mc_study(cfg), InvalidParameterError);
    cfg.n = 100;
    cfg.specs = {StageSpec{FeatureMap::parse({"1"}), FeatureMap::parse({"s1^2"}),
                           KnownPropensity{0.5}}};
    cfg.value_method = ValueMethod::Analytic;
    CHECK_THROWS_AS(run_mc_study(cfg), InvalidParameterError);
  }
  SUBCASE("too many failures") {
    cfg.scenario = TwoDecisionParams{};
    cfg.specs = default_working_specs(TwoDecisionParams{});
    cfg.specs[1].h_features = FeatureMap::parse({"1", "s2", "a2"});
    CHECK_THROWS_AS(run_mc_study(cfg), ModelSpecError);
    // a repeated contrast term makes every fit singular
    cfg.specs = default_working_specs(TwoDecisionParams{});
    cfg.specs[1].c_features = FeatureMap::parse({"1", "s2", "s2"});
    CHECK_THROWS_WITH_AS(run_mc_study(cfg), doctest::Contains("more than 10%"), StudyError);
  }
}

}  // TEST_SUITE
