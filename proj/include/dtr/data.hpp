#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dtr/numeric.hpp"

namespace dtr {

/// A model specification references history that does not exist at the stage
/// it is evaluated for (a future state, the current action, a missing
/// component).
class ModelSpecError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

/// Observed history available when decision k is made: states s_1..s_k and
/// actions a_1..a_{k-1}. Longer spans are allowed; terms only read what they
/// reference.
struct History {
  std::span<const std::vector<double>> states;
  std::span<const int> actions;
};

/// One multiplicative factor of a basis term. Stages and components are
/// 1-based, matching the s{k}_{j} / a{k} column names.
struct Factor {
  enum class Kind { State, Action };
  Kind kind = Kind::State;
  int stage = 1;
  int component = 1;

  bool operator==(const Factor&) const = default;
};

/// A monomial in history variables. The empty product is the constant 1; a
/// repeated factor is a square.
class Term {
public:
  Term() = default;
  static Term constant() { return Term{}; }
  static Term state(int stage, int component = 1);
  static Term action(int stage);

  /// Parses "1", "s2", "s1_2", "a1", "s2^2", "a1*s2" and products thereof.
  static Term parse(const std::string& text);

  Term operator*(const Term& other) const;
  Term squared() const { return *this * *this; }

  double eval(const History& history) const;
  std::string name() const;

  const std::vector<Factor>& factors() const noexcept { return factors_; }
  bool operator==(const Term&) const = default;

private:
  std::vector<Factor> factors_;
};

/// Ordered list of basis terms; row evaluation produces one value per term.
class FeatureMap {
public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<Term> terms) : terms_(std::move(terms)) {}
  static FeatureMap parse(const std::vector<std::string>& names);

  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms() const noexcept { return terms_; }
  std::vector<std::string> names() const;

  void eval(const History& history, std::span<double> out) const;
  Vector eval(const History& history) const;

  /// Throws ModelSpecError unless every term uses only states s_1..s_k with
  /// existing components and actions a_1..a_{k-1}.
  void validate_for_stage(int stage, std::span<const int> state_dims) const;

  /// True when every term of this map also appears in `other`.
  bool subset_of(const FeatureMap& other) const;

private:
  std::vector<Term> terms_;
};

struct Trajectory {
  std::vector<std::vector<double>> states;
  std::vector<int> actions;
  double outcome = 0.0;

  History history() const { return {states, actions}; }
};

struct Dataset {
  int stages = 0;
  std::vector<int> state_dims;
  std::vector<Trajectory> trajectories;

  std::size_t size() const noexcept { return trajectories.size(); }
  /// s1_1,...,a1,...,aK,y in file order.
  std::vector<std::string> column_names() const;
  /// Throws ParseError naming the first inconsistent trajectory.
  void validate() const;
  /// Actions taken at stage k (1-based) as a 0/1 vector.
  Vector actions(int stage) const;
  Vector outcomes() const;
};

/// Design matrix whose row i is `features` evaluated on trajectory i's history
/// through stage k. Stage K + 1 gives access to every action, for outcome
/// regressions.
Matrix build_design(const Dataset& data, int stage, const FeatureMap& features);

struct DecisionRule {
  FeatureMap features;
  Vector psi;

  double contrast(const History& history) const;
  /// I{contrast > 0}; a contrast of exactly zero selects action 0.
  int action(const History& history) const { return contrast(history) > 0.0 ? 1 : 0; }
};

struct Regime {
  std::vector<DecisionRule> rules;

  int stages() const noexcept { return static_cast<int>(rules.size()); }
};

/// Action the regime recommends at stage k for the given history.
int apply_regime(const Regime& regime, int stage, const History& history);

struct KnownPropensity {
  double value = 0.5;
  /// Optional history-dependent propensity; overrides `value` when set.
  std::function<double(const History&)> fn;
};

struct LogisticPropensity {
  FeatureMap features;
};

using PropensityModel = std::variant<KnownPropensity, LogisticPropensity>;

/// Working models at one decision: Q_k = h_k + a_k C_k, plus the propensity
/// model A-learning needs.
struct StageSpec {
  FeatureMap h_features;
  FeatureMap c_features;
  PropensityModel propensity = KnownPropensity{};
};

struct StageFit {
  int stage = 0;
  Vector beta;
  Vector psi;
  std::optional<Vector> phi;
  /// Covariance of (beta, psi) from the stage regression (Q-learning only).
  std::optional<Matrix> xi_covariance;
  std::optional<Matrix> phi_covariance;
  /// Response the stage was fit to: Y at stage K, pseudo-outcomes before.
  Vector response;
  Vector residuals;
  /// Fitted or supplied propensities (A-learning only).
  std::optional<Vector> propensity;
  /// Rows used at this stage (all rows unless a mask was given).
  std::vector<std::size_t> rows;
};

struct LearnResult {
  std::vector<StageFit> stages;
  Regime regime;
  std::vector<std::string> warnings;
};

Dataset read_dataset_csv(std::istream& in, int stages, const std::vector<int>& state_dims);
Dataset read_dataset_csv(const std::string& path, int stages, const std::vector<int>& state_dims);
/// Infers the stage count and state dimensions from the header.
Dataset read_dataset_csv(const std::string& path);

/// Lines starting with '#' before the header are comments. Values are written
/// in shortest round-trip form.
void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::string& comment = {});
void write_dataset_csv(const std::string& path, const Dataset& data,
                       const std::string& comment = {});

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace dtr
