#pragma once

// Run configuration: a versioned JSON document. See README.md for the schema.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtr/calibrate.hpp"
#include "dtr/evaluate.hpp"

namespace dtr {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

/// Invalid configuration. `key` is the dotted path of the offending entry.
class ConfigError : public Error {
public:
  ConfigError(const std::string& key, const std::string& message)
      : Error(key.empty() ? message : key + " " + message), key_(key) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

struct SimulateSection {
  std::size_t n = 1000;
  std::string output = "dataset.csv";
};

struct FitSection {
  std::string data;  ///< dataset CSV; relative paths resolve against the config file
  EstimatorSet estimator = EstimatorSet::Both;
  std::vector<StageSpec> model;  ///< empty: scenario defaults
  std::string output = "fit.json";
  std::string residuals = "residuals.csv";
};

struct ValueSection {
  std::optional<Regime> regime;  ///< absent: the true optimal regime
  ValueMethod method = ValueMethod::Auto;
  std::size_t draws = 1000000;
  std::string output = "value.json";
};

struct StudySection {
  std::size_t n = 200;
  std::size_t reps = 10000;
  EstimatorSet estimators = EstimatorSet::Both;
  ValueMethod value_method = ValueMethod::Auto;
  std::size_t gcomp_draws = 10000;
  std::vector<StageSpec> model;
  std::string output = "study";  ///< writes <output>.json and <output>_reps.csv
};

struct CalibrateSection {
  double grid_lo = -1.0;
  double grid_hi = 1.0;
  double step = 0.05;
  std::size_t n_cal = 10000;
  int poly_max_degree = 20;
  double adj_r2_target = 0.99;
  double max_rel_residual = 0.025;
  /// Replications of the t-statistic check per emitted pair; 0 skips it.
  std::size_t tstat_reps = 0;
  std::string output = "calibration";  ///< <output>_pairs.csv and <output>_poly.json
};

struct RunConfig {
  int version = kConfigVersion;
  Scenario scenario = OneDecisionParams{};
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Relative to the config file when loaded from one.
  std::string out_dir = ".";
  std::string base_dir = ".";  ///< directory of the config file
  std::optional<SimulateSection> simulate;
  std::optional<FitSection> fit;
  std::optional<ValueSection> value;
  std::optional<StudySection> study;
  std::optional<CalibrateSection> calibrate;
};

/// Parses and schema-checks a configuration document. Unknown keys are errors.
RunConfig parse_config(const nlohmann::json& doc);
/// Reads `path`; JSON syntax errors become ConfigError.
RunConfig load_config(const std::string& path);

nlohmann::json scenario_to_json(const Scenario& scenario);
/// Canonical form of everything that affects results (threads and out_dir
/// excluded).
nlohmann::json resolved_config(const RunConfig& config);
/// FNV-1a 64 of the canonical resolved config, as 16 hex digits.
std::string config_hash(const RunConfig& config);

StudyConfig make_study_config(const RunConfig& config);
CalibrationConfig make_calibration_config(const RunConfig& config);

}  // namespace dtr
