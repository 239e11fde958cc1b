#include "dtr/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>

namespace dtr {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "config" : path, "must be an object");
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(join(path, key), "is not a recognized key");
  }
}

double get_number(const json& j, const std::string& path, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(path, key), "must be finite");
  return x;
}

double get_positive(const json& j, const std::string& path, const char* key, double fallback) {
  const double x = get_number(j, path, key, fallback);
  if (!(x > 0.0)) throw ConfigError(join(path, key), "must be > 0");
  return x;
}

std::uint64_t get_count(const json& j, const std::string& path, const char* key,
                        std::uint64_t fallback, std::uint64_t min_value) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "must be an integer");
  if (v.is_number_unsigned()) {
    const auto x = v.get<std::uint64_t>();
    if (x < min_value) throw ConfigError(join(path, key), "must be >= " + std::to_string(min_value));
    return x;
  }
  const auto x = v.get<std::int64_t>();
  if (x < 0 || static_cast<std::uint64_t>(x) < min_value) {
    throw ConfigError(join(path, key), "must be >= " + std::to_string(min_value));
  }
  return static_cast<std::uint64_t>(x);
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string() || v.get<std::string>().empty()) {
    throw ConfigError(join(path, key), "must be a nonempty string");
  }
  return v.get<std::string>();
}

template <std::size_t N>
void get_array(const json& j, const std::string& path, const char* key, std::array<double, N>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string p = join(path, key);
  if (!v.is_array() || v.size() != N) {
    throw ConfigError(p, "must be an array of " + std::to_string(N) + " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw ConfigError(index_path(p, i), "must be a number");
    out[i] = v[i].get<double>();
    if (!std::isfinite(out[i])) throw ConfigError(index_path(p, i), "must be finite");
  }
}

std::vector<std::string> get_names(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "must be an array of term names");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ConfigError(index_path(path, i), "must be a string");
    names.push_back(v[i].get<std::string>());
  }
  return names;
}

FeatureMap get_features(const json& v, const std::string& path) {
  try {
    return FeatureMap::parse(get_names(v, path));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, std::string("is invalid: ") + e.what());
  }
}

Scenario parse_scenario(const json& j, const std::string& path) {
  require_object(j, path);
  const std::string type = get_string(j, path, "type", "");
  if (type.empty()) throw ConfigError(join(path, "type"), "is required");
  Scenario out;
  if (type == "one_decision") {
    check_keys(j, path, {"type", "propensity", "baseline", "contrast", "outcome_sd"});
    OneDecisionParams p;
    get_array(j, path, "propensity", p.phi0);
    get_array(j, path, "baseline", p.beta0);
    get_array(j, path, "contrast", p.psi0);
    p.outcome_sd = get_positive(j, path, "outcome_sd", p.outcome_sd);
    out = p;
  } else if (type == "two_decision") {
    check_keys(j, path, {"type", "propensity1", "s2_mean", "propensity2", "baseline2", "contrast2",
                         "s2_var", "y_var"});
    TwoDecisionParams p;
    get_array(j, path, "propensity1", p.phi1);
    get_array(j, path, "s2_mean", p.delta1);
    get_array(j, path, "propensity2", p.phi2);
    get_array(j, path, "baseline2", p.beta2);
    get_array(j, path, "contrast2", p.psi2);
    p.s2_var = get_positive(j, path, "s2_var", p.s2_var);
    p.y_var = get_positive(j, path, "y_var", p.y_var);
    out = p;
  } else if (type == "moodie") {
    check_keys(j, path, {"type", "propensity1", "propensity2", "contrast1", "contrast2", "s1_mean",
                         "s1_sd", "s2_slope", "s2_sd", "yopt_intercept", "yopt_slope", "yopt_sd"});
    MoodieParams p;
    get_array(j, path, "propensity1", p.phi1);
    get_array(j, path, "propensity2", p.phi2);
    get_array(j, path, "contrast1", p.psi1);
    get_array(j, path, "contrast2", p.psi2);
    p.s1_mean = get_number(j, path, "s1_mean", p.s1_mean);
    p.s1_sd = get_positive(j, path, "s1_sd", p.s1_sd);
    p.s2_slope = get_number(j, path, "s2_slope", p.s2_slope);
    p.s2_sd = get_positive(j, path, "s2_sd", p.s2_sd);
    p.yopt_intercept = get_number(j, path, "yopt_intercept", p.yopt_intercept);
    p.yopt_slope = get_number(j, path, "yopt_slope", p.yopt_slope);
    p.yopt_sd = get_positive(j, path, "yopt_sd", p.yopt_sd);
    out = p;
  } else {
    throw ConfigError(join(path, "type"), "must be one of one_decision, two_decision, moodie");
  }
  return out;
}

std::vector<StageSpec> parse_model(const json& v, const std::string& path, int stages) {
  if (!v.is_array()) throw ConfigError(path, "must be an array with one entry per stage");
  if (stages > 0 && static_cast<int>(v.size()) != stages) {
    throw ConfigError(path, "must have " + std::to_string(stages) + " entries, one per stage");
  }
  std::vector<StageSpec> specs;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = index_path(path, i);
    check_keys(v[i], p, {"h", "c", "propensity"});
    if (!v[i].contains("h")) throw ConfigError(join(p, "h"), "is required");
    if (!v[i].contains("c")) throw ConfigError(join(p, "c"), "is required");
    StageSpec spec;
    spec.h_features = get_features(v[i].at("h"), join(p, "h"));
    spec.c_features = get_features(v[i].at("c"), join(p, "c"));
    if (v[i].contains("propensity")) {
      const std::string pp = join(p, "propensity");
      const json& prop = v[i].at("propensity");
      check_keys(prop, pp, {"logistic", "known"});
      if (prop.size() != 1) throw ConfigError(pp, "must have exactly one of logistic, known");
      if (prop.contains("logistic")) {
        spec.propensity = LogisticPropensity{get_features(prop.at("logistic"), join(pp, "logistic"))};
      } else {
        const double value = get_number(prop, pp, "known", 0.5);
        if (!(value > 0.0 && value < 1.0)) {
          throw ConfigError(join(pp, "known"), "must lie strictly between 0 and 1");
        }
        spec.propensity = KnownPropensity{value, {}};
      }
    }
    const std::vector<int> dims(static_cast<std::size_t>(std::max(stages, static_cast<int>(i) + 1)), 1);
    try {
      spec.h_features.validate_for_stage(static_cast<int>(i) + 1, dims);
      spec.c_features.validate_for_stage(static_cast<int>(i) + 1, dims);
      if (const auto* l = std::get_if<LogisticPropensity>(&spec.propensity)) {
        l->features.validate_for_stage(static_cast<int>(i) + 1, dims);
      }
    } catch (const ModelSpecError& e) {
      if (stages > 0) throw ConfigError(p, std::string("is invalid: ") + e.what());
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

Regime parse_regime(const json& v, const std::string& path, int stages) {
  if (!v.is_array() || static_cast<int>(v.size()) != stages) {
    throw ConfigError(path, "must be an array of " + std::to_string(stages) + " rules");
  }
  Regime regime;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = index_path(path, i);
    check_keys(v[i], p, {"features", "coefficients"});
    if (!v[i].contains("features")) throw ConfigError(join(p, "features"), "is required");
    if (!v[i].contains("coefficients")) throw ConfigError(join(p, "coefficients"), "is required");
    DecisionRule rule;
    rule.features = get_features(v[i].at("features"), join(p, "features"));
    const json& c = v[i].at("coefficients");
    if (!c.is_array() || c.size() != rule.features.size()) {
      throw ConfigError(join(p, "coefficients"), "must have one number per feature");
    }
    rule.psi.resize(static_cast<Eigen::Index>(c.size()));
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (!c[j].is_number()) throw ConfigError(index_path(join(p, "coefficients"), j), "must be a number");
      rule.psi(static_cast<Eigen::Index>(j)) = c[j].get<double>();
    }
    try {
      rule.features.validate_for_stage(static_cast<int>(i) + 1, std::vector<int>(stages, 1));
    } catch (const ModelSpecError& e) {
      throw ConfigError(p, std::string("is invalid: ") + e.what());
    }
    regime.rules.push_back(std::move(rule));
  }
  return regime;
}

EstimatorSet parse_estimators(const json& j, const std::string& path, const char* key) {
  const std::string s = get_string(j, path, key, "both");
  if (s == "both") return EstimatorSet::Both;
  if (s == "q") return EstimatorSet::QLearning;
  if (s == "a") return EstimatorSet::ALearning;
  throw ConfigError(join(path, key), "must be one of q, a, both");
}

ValueMethod parse_method(const json& j, const std::string& path, const char* key) {
  const std::string s = get_string(j, path, key, "auto");
  if (s == "auto") return ValueMethod::Auto;
  if (s == "analytic") return ValueMethod::Analytic;
  if (s == "gcomp") return ValueMethod::GComputation;
  throw ConfigError(join(path, key), "must be one of auto, analytic, gcomp");
}

const char* estimator_name(EstimatorSet e) {
  switch (e) {
    case EstimatorSet::QLearning: return "q";
    case EstimatorSet::ALearning: return "a";
    case EstimatorSet::Both: break;
  }
  return "both";
}

const char* method_name(ValueMethod m) {
  switch (m) {
    case ValueMethod::Analytic: return "analytic";
    case ValueMethod::GComputation: return "gcomp";
    case ValueMethod::Auto: break;
  }
  return "auto";
}

json model_to_json(const std::vector<StageSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) {
    json e{{"h", s.h_features.names()}, {"c", s.c_features.names()}};
    if (const auto* l = std::get_if<LogisticPropensity>(&s.propensity)) {
      e["propensity"] = {{"logistic", l->features.names()}};
    } else {
      e["propensity"] = {{"known", std::get<KnownPropensity>(s.propensity).value}};
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  check_keys(doc, "", {"version", "scenario", "seed", "threads", "out_dir", "simulate", "fit",
                       "value", "study", "calibrate"});
  RunConfig c;
  c.version = static_cast<int>(get_count(doc, "", "version", kConfigVersion, 1));
  if (c.version != kConfigVersion) {
    throw ConfigError("version", "must be " + std::to_string(kConfigVersion));
  }
  if (!doc.contains("scenario")) throw ConfigError("scenario", "is required");
  c.scenario = parse_scenario(doc.at("scenario"), "scenario");
  try {
    validate_scenario(c.scenario);
  } catch (const Error& e) {
    throw ConfigError("scenario", std::string("is invalid: ") + e.what());
  }
  const int stages = scenario_stages(c.scenario);
  c.seed = get_count(doc, "", "seed", 1, 0);
  c.threads = static_cast<unsigned>(get_count(doc, "", "threads", 1, 1));
  c.out_dir = get_string(doc, "", "out_dir", ".");

  if (doc.contains("simulate")) {
    const json& j = doc.at("simulate");
    check_keys(j, "simulate", {"n", "output"});
    SimulateSection s;
    s.n = get_count(j, "simulate", "n", s.n, 1);
    s.output = get_string(j, "simulate", "output", s.output);
    c.simulate = s;
  }
  if (doc.contains("fit")) {
    const json& j = doc.at("fit");
    check_keys(j, "fit", {"data", "estimator", "model", "output", "residuals"});
    FitSection s;
    s.data = get_string(j, "fit", "data", "");
    if (s.data.empty()) throw ConfigError("fit.data", "is required");
    s.estimator = parse_estimators(j, "fit", "estimator");
    // the dataset decides the stage count, so only check it at run time
    if (j.contains("model")) s.model = parse_model(j.at("model"), "fit.model", 0);
    s.output = get_string(j, "fit", "output", s.output);
    s.residuals = get_string(j, "fit", "residuals", s.residuals);
    c.fit = s;
  }
  if (doc.contains("value")) {
    const json& j = doc.at("value");
    check_keys(j, "value", {"regime", "method", "draws", "output"});
    ValueSection s;
    if (j.contains("regime")) s.regime = parse_regime(j.at("regime"), "value.regime", stages);
    s.method = parse_method(j, "value", "method");
    s.draws = get_count(j, "value", "draws", s.draws, 1);
    s.output = get_string(j, "value", "output", s.output);
    c.value = s;
  }
  if (doc.contains("study")) {
    const json& j = doc.at("study");
    check_keys(j, "study", {"n", "reps", "estimators", "value_method", "gcomp_draws", "model",
                            "output"});
    StudySection s;
    s.n = get_count(j, "study", "n", s.n, 1);
    s.reps = get_count(j, "study", "reps", s.reps, 1);
    s.estimators = parse_estimators(j, "study", "estimators");
    s.value_method = parse_method(j, "study", "value_method");
    s.gcomp_draws = get_count(j, "study", "gcomp_draws", s.gcomp_draws, 1);
    if (j.contains("model")) s.model = parse_model(j.at("model"), "study.model", stages);
    s.output = get_string(j, "study", "output", s.output);
    c.study = s;
  }
  if (doc.contains("calibrate")) {
    const json& j = doc.at("calibrate");
    check_keys(j, "calibrate", {"grid", "n_cal", "poly_max_degree", "adj_r2_target", "max_rel_residual",
                                "tstat_reps", "output"});
    if (std::holds_alternative<MoodieParams>(c.scenario)) {
      throw ConfigError("calibrate", "requires a one_decision or two_decision scenario");
    }
    CalibrateSection s;
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      check_keys(g, "calibrate.grid", {"lo", "hi", "step"});
      s.grid_lo = get_number(g, "calibrate.grid", "lo", s.grid_lo);
      s.grid_hi = get_number(g, "calibrate.grid", "hi", s.grid_hi);
      s.step = get_number(g, "calibrate.grid", "step", s.step);
      if (!(s.step > 0.0)) throw ConfigError("calibrate.grid.step", "must be > 0");
      if (s.grid_lo > s.grid_hi) throw ConfigError("calibrate.grid.lo", "must not exceed grid.hi");
    }
    s.n_cal = get_count(j, "calibrate", "n_cal", s.n_cal, 10);
    s.poly_max_degree =
        static_cast<int>(get_count(j, "calibrate", "poly_max_degree", s.poly_max_degree, 0));
    s.adj_r2_target = get_number(j, "calibrate", "adj_r2_target", s.adj_r2_target);
    if (!(s.adj_r2_target <= 1.0)) throw ConfigError("calibrate.adj_r2_target", "must be <= 1");
    s.max_rel_residual = get_positive(j, "calibrate", "max_rel_residual", s.max_rel_residual);
    s.tstat_reps = get_count(j, "calibrate", "tstat_reps", 0, 0);
    s.output = get_string(j, "calibrate", "output", s.output);
    c.calibrate = s;
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = parse_config(doc);
  const auto parent = std::filesystem::path(path).parent_path();
  c.base_dir = parent.empty() ? "." : parent.string();
  // relative paths inside a config file are relative to that file
  if (std::filesystem::path(c.out_dir).is_relative()) {
    c.out_dir = (std::filesystem::path(c.base_dir) / c.out_dir).lexically_normal().string();
  }
  return c;
}

json scenario_to_json(const Scenario& scenario) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, OneDecisionParams>) {
          return {{"type", "one_decision"}, {"propensity", p.phi0}, {"baseline", p.beta0},
                  {"contrast", p.psi0}, {"outcome_sd", p.outcome_sd}};
        } else if constexpr (std::is_same_v<T, TwoDecisionParams>) {
          return {{"type", "two_decision"}, {"propensity1", p.phi1}, {"s2_mean", p.delta1},
                  {"propensity2", p.phi2}, {"baseline2", p.beta2},    {"contrast2", p.psi2},
                  {"s2_var", p.s2_var},     {"y_var", p.y_var}};
        } else {
          return {{"type", "moodie"},           {"propensity1", p.phi1},
                  {"propensity2", p.phi2},      {"contrast1", p.psi1},
                  {"contrast2", p.psi2},        {"s1_mean", p.s1_mean},
                  {"s1_sd", p.s1_sd},           {"s2_slope", p.s2_slope},
                  {"s2_sd", p.s2_sd},           {"yopt_intercept", p.yopt_intercept},
                  {"yopt_slope", p.yopt_slope}, {"yopt_sd", p.yopt_sd}};
        }
      },
      scenario);
}

json resolved_config(const RunConfig& c) {
  json out{{"version", c.version}, {"scenario", scenario_to_json(c.scenario)}, {"seed", c.seed}};
  if (c.simulate) out["simulate"] = {{"n", c.simulate->n}, {"output", c.simulate->output}};
  if (c.fit) {
    out["fit"] = {{"data", c.fit->data},
                  {"estimator", estimator_name(c.fit->estimator)},
                  {"output", c.fit->output},
                  {"residuals", c.fit->residuals}};
    if (!c.fit->model.empty()) out["fit"]["model"] = model_to_json(c.fit->model);
  }
  if (c.value) {
    json v{{"method", method_name(c.value->method)},
           {"draws", c.value->draws},
           {"output", c.value->output}};
    if (c.value->regime) {
      json rules = json::array();
      for (const auto& r : c.value->regime->rules) {
        rules.push_back({{"features", r.features.names()},
                         {"coefficients", std::vector<double>(r.psi.data(), r.psi.data() + r.psi.size())}});
      }
      v["regime"] = rules;
    }
    out["value"] = v;
  }
  if (c.study) {
    out["study"] = {{"n", c.study->n},
                    {"reps", c.study->reps},
                    {"estimators", estimator_name(c.study->estimators)},
                    {"value_method", method_name(c.study->value_method)},
                    {"gcomp_draws", c.study->gcomp_draws},
                    {"output", c.study->output}};
    if (!c.study->model.empty()) out["study"]["model"] = model_to_json(c.study->model);
  }
  if (c.calibrate) {
    const auto& s = *c.calibrate;
    out["calibrate"] = {{"grid", {{"lo", s.grid_lo}, {"hi", s.grid_hi}, {"step", s.step}}},
                        {"n_cal", s.n_cal},
                        {"poly_max_degree", s.poly_max_degree},
                        {"adj_r2_target", s.adj_r2_target},
                        {"max_rel_residual", s.max_rel_residual},
                        {"tstat_reps", s.tstat_reps},
                        {"output", s.output}};
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  const std::string text = resolved_config(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

StudyConfig make_study_config(const RunConfig& config) {
  if (!config.study) throw ConfigError("study", "section is required for this command");
  const auto& s = *config.study;
  StudyConfig out;
  out.scenario = config.scenario;
  out.specs = s.model;
  out.n = s.n;
  out.reps = s.reps;
  out.master_seed = config.seed;
  out.estimators = s.estimators;
  out.value_method = s.value_method;
  out.gcomp_draws = s.gcomp_draws;
  out.threads = config.threads;
  return out;
}

CalibrationConfig make_calibration_config(const RunConfig& config) {
  if (!config.calibrate) throw ConfigError("calibrate", "section is required for this command");
  const auto& s = *config.calibrate;
  CalibrationConfig out;
  out.base = config.scenario;
  out.grid_lo = s.grid_lo;
  out.grid_hi = s.grid_hi;
  out.step = s.step;
  out.n_cal = s.n_cal;
  out.poly_max_degree = s.poly_max_degree;
  out.adj_r2_target = s.adj_r2_target;
  out.max_rel_residual = s.max_rel_residual;
  out.master_seed = config.seed;
  out.threads = config.threads;
  return out;
}

}  // namespace dtr
