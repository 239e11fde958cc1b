#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dtr/data.hpp"
#include "dtr/rng.hpp"
#include "dtr/scenarios.hpp"

using namespace dtr;

namespace {

Dataset tiny_two_stage() {
  Dataset d;
  d.stages = 2;
  d.state_dims = {1, 2};
  d.trajectories.push_back({{{0.5}, {1.0, -2.0}}, {1, 0}, 3.25});
  d.trajectories.push_back({{{-1.5}, {0.25, 4.0}}, {0, 1}, -0.1});
  d.trajectories.push_back({{{2.0}, {-3.0, 0.0}}, {1, 1}, 1e-17});
  return d;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("term parsing and names") {
  CHECK(Term::parse("1").name() == "1");
  CHECK(Term::parse("s2").name() == "s2_1");
  CHECK(Term::parse("s1_2").name() == "s1_2");
  CHECK(Term::parse("a1").name() == "a1");
  CHECK(Term::parse("s2^2").name() == "s2_1^2");
  CHECK(Term::parse("a1*s2") == Term::parse("s2*a1"));
  CHECK(Term::parse(" s1 * a1 ") == Term::state(1) * Term::action(1));
  CHECK(Term::parse("s2^2") == Term::state(2).squared());
  CHECK(Term::parse("1*s1") == Term::state(1));
  CHECK_THROWS_AS(Term::parse(""), ParseError);
  CHECK_THROWS_AS(Term::parse("x1"), ParseError);
  CHECK_THROWS_AS(Term::parse("s0"), ParseError);
  CHECK_THROWS_AS(Term::parse("s1^0"), ParseError);
  CHECK_THROWS_AS(Term::parse("a"), ParseError);
}

TEST_CASE("term evaluation") {
  const Dataset d = tiny_two_stage();
  const History h = d.trajectories[0].history();
  CHECK(Term::constant().eval(h) == 1.0);
  CHECK(Term::parse("s1").eval(h) == 0.5);
  CHECK(Term::parse("s2_2").eval(h) == -2.0);
  CHECK(Term::parse("a1*s2_2").eval(h) == -2.0);
  CHECK(Term::parse("s2_2^2*a2").eval(h) == 0.0);
  CHECK(Term::parse("s1^3").eval(h) == 0.125);
}

TEST_CASE("stage validation") {
  const std::vector<int> dims{1, 2};
  CHECK_NOTHROW(FeatureMap::parse({"1", "s1", "a1", "s2_2", "a1*s2"}).validate_for_stage(2, dims));
  CHECK_THROWS_AS(FeatureMap::parse({"1", "s2"}).validate_for_stage(1, dims), ModelSpecError);
  CHECK_THROWS_AS(FeatureMap::parse({"a1"}).validate_for_stage(1, dims), ModelSpecError);
  CHECK_THROWS_AS(FeatureMap::parse({"a2*s1"}).validate_for_stage(2, dims), ModelSpecError);
  CHECK_THROWS_AS(FeatureMap::parse({"s1_2"}).validate_for_stage(1, dims), ModelSpecError);
  // stage K + 1 sees every action
  CHECK_NOTHROW(FeatureMap::parse({"a2*s2"}).validate_for_stage(3, dims));
}

TEST_CASE("subset_of") {
  const auto big = FeatureMap::parse({"1", "s1", "a1*s1"});
  CHECK(FeatureMap::parse({"s1*a1", "1"}).subset_of(big));
  CHECK_FALSE(FeatureMap::parse({"s1^2"}).subset_of(big));
  CHECK(FeatureMap().subset_of(big));
}

TEST_CASE("build_design") {
  const Dataset d = tiny_two_stage();
  const Matrix x = build_design(d, 2, FeatureMap::parse({"1", "s1", "a1", "a1*s2_2"}));
  REQUIRE(x.rows() == 3);
  REQUIRE(x.cols() == 4);
  CHECK(x(0, 3) == -2.0);
  CHECK(x(1, 2) == 0.0);
  CHECK(x(1, 3) == 0.0);
  CHECK(x(2, 1) == 2.0);
  CHECK(x(2, 3) == 0.0);
  CHECK(x.col(0).isOnes());
  CHECK_THROWS_AS(build_design(d, 0, FeatureMap::parse({"1"})), ModelSpecError);
  CHECK_THROWS_AS(build_design(d, 4, FeatureMap::parse({"1"})), ModelSpecError);
}

TEST_CASE("dataset accessors and validation") {
  Dataset d = tiny_two_stage();
  CHECK(d.column_names() == std::vector<std::string>{"s1_1", "a1", "s2_1", "s2_2", "a2", "y"});
  CHECK(d.actions(2)(1) == 1.0);
  CHECK(d.outcomes()(0) == 3.25);
  CHECK_NOTHROW(d.validate());
  d.trajectories[1].actions[0] = 2;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("trajectory 2"), ParseError);
  d = tiny_two_stage();
  d.trajectories[2].states[1].pop_back();
  CHECK_THROWS_AS(d.validate(), ParseError);
}

TEST_CASE("decision rules") {
  DecisionRule rule{FeatureMap::parse({"1", "s1"}), Vector(2)};
  rule.psi << 1.0, -2.0;
  const std::vector<std::vector<double>> s_pos{{0.25}}, s_tie{{0.5}}, s_neg{{0.75}};
  CHECK(rule.action({s_pos, {}}) == 1);
  CHECK(rule.action({s_tie, {}}) == 0);  // zero contrast selects 0
  CHECK(rule.action({s_neg, {}}) == 0);
  Regime regime{{rule}};
  CHECK(apply_regime(regime, 1, {s_pos, {}}) == 1);
  CHECK_THROWS_AS(apply_regime(regime, 2, {s_pos, {}}), InvalidParameterError);
  rule.psi = Vector::Ones(3);
  CHECK_THROWS_AS(rule.contrast({s_pos, {}}), InvalidParameterError);
}

TEST_CASE("csv round trip is exact") {
  RngStream stream(3, 0);
  const Dataset d = simulate(TwoDecisionParams{}, 200, stream);
  std::stringstream buf;
  write_dataset_csv(buf, d, "first\nsecond");
  const std::string text = buf.str();
  CHECK(text.rfind("# first\n# second\ns1_1,a1,s2_1,a2,y\n", 0) == 0);
  const Dataset back = read_dataset_csv(buf, 2, {1, 1});
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.trajectories[i].states == d.trajectories[i].states);
    CHECK(back.trajectories[i].actions == d.trajectories[i].actions);
    CHECK(back.trajectories[i].outcome == d.trajectories[i].outcome);
  }
}

TEST_CASE("csv from file infers the shape") {
  const std::filesystem::path dir(DTR_TEST_TMP);
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "infer.csv").string();
  const Dataset d = tiny_two_stage();
  write_dataset_csv(path, d);
  const Dataset back = read_dataset_csv(path);
  CHECK(back.stages == 2);
  CHECK(back.state_dims == std::vector<int>{1, 2});
  CHECK(back.trajectories[2].outcome == 1e-17);
  CHECK_THROWS_AS(read_dataset_csv((dir / "absent.csv").string()), ParseError);
}

TEST_CASE("csv errors name the row and column") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return read_dataset_csv(in, 1, {1});
  };
  CHECK(read("s1_1,a1,y\n0.5,1,2\n").size() == 1);
  CHECK(read("y,a1,s1_1\n2,1,0.5\n").trajectories[0].states[0][0] == 0.5);
  CHECK_THROWS_WITH_AS(read("s1_1,a1,y\n0.5,1,2\n0.1,2,3\n"),
                       doctest::Contains("row 2, column a1"), ParseError);
  CHECK_THROWS_WITH_AS(read("s1_1,a1,y\n0.5,,2\n"), doctest::Contains("missing value"),
                       ParseError);
  CHECK_THROWS_WITH_AS(read("s1_1,a1,y\nabc,1,2\n"), doctest::Contains("non-numeric"),
                       ParseError);
  CHECK_THROWS_WITH_AS(read("s1_1,a1,y\n0.5,1\n"), doctest::Contains("expected 3 fields"),
                       ParseError);
  CHECK_THROWS_WITH_AS(read("s1_1,y\n0.5,1\n"), doctest::Contains("missing column a1"),
                       ParseError);
  CHECK_THROWS_AS(read(""), ParseError);
  CHECK_THROWS_AS(read("s1_1,a1,y\nnan,1,2\n"), ParseError);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 4.025127270830006}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

}  // TEST_SUITE
