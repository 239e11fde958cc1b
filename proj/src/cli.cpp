#include "dtr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dtr/alearn.hpp"
#include "dtr/config.hpp"
#include "dtr/qlearn.hpp"
#include "dtr/report.hpp"

namespace dtr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class OutputError : public Error {
public:
  using Error::Error;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
};

fs::path output_path(const RunConfig& config, const std::string& name) {
  const fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw OutputError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir / name;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

std::string vec_text(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) s += ", ";
    s += format_double(v(i));
  }
  return s + ")";
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  if (!config.simulate) throw ConfigError("simulate", "section is required for this command");
  RngStream stream(config.seed, 0);
  const Dataset data = simulate(config.scenario, config.simulate->n, stream);
  const fs::path path = output_path(config, config.simulate->output);
  auto file = open_output(path);
  write_dataset_csv(file, data, provenance_line(config_hash(config)));
  out << "simulate: wrote " << data.size() << " trajectories to " << path.string() << '\n';
  return kExitOk;
}

int cmd_fit(const RunConfig& config, std::ostream& out) {
  if (!config.fit) throw ConfigError("fit", "section is required for this command");
  const auto& s = *config.fit;
  fs::path data_path(s.data);
  if (data_path.is_relative()) data_path = fs::path(config.base_dir) / data_path;
  Dataset data;
  try {
    data = read_dataset_csv(data_path.string());
  } catch (const Error& e) {
    throw ConfigError("fit.data", std::string("could not be read: ") + e.what());
  }
  std::vector<StageSpec> specs = s.model;
  if (specs.empty()) {
    if (scenario_stages(config.scenario) != data.stages) {
      throw ConfigError("fit.model", "is required when the dataset does not match the scenario");
    }
    specs = default_working_specs(config.scenario);
  }
  if (static_cast<int>(specs.size()) != data.stages) {
    throw ConfigError("fit.model", "must have one entry per stage of the dataset (" +
                                       std::to_string(data.stages) + ")");
  }

  const std::string hash = config_hash(config);
  json doc{{"provenance", provenance_json(hash)}, {"n", data.size()}, {"stages", data.stages}};
  const fs::path res_path = output_path(config, s.residuals);
  auto res = open_output(res_path);
  res << "# " << provenance_line(hash) << '\n';
  bool header = true;
  auto run = [&](const char* name, auto&& fitter) {
    LearnResult fit;
    try {
      fit = fitter(data, specs, LearnOptions{});
    } catch (const ModelSpecError& e) {
      throw ConfigError("fit.model", std::string("is invalid for the dataset: ") + e.what());
    }
    doc["estimators"][name] = fit_to_json(fit);
    write_residuals_csv(res, name, fit, header);
    header = false;
    for (const auto& w : fit.warnings) out << "fit: warning (" << name << "): " << w << '\n';
    for (const auto& st : fit.stages) {
      out << "fit: " << name << " stage " << st.stage << " contrast " << vec_text(st.psi) << '\n';
    }
  };
  if (s.estimator != EstimatorSet::ALearning) run("q", qlearn_fit);
  if (s.estimator != EstimatorSet::QLearning) run("a", alearn_fit);
  const fs::path path = output_path(config, s.output);
  write_json(path, doc);
  out << "fit: wrote " << path.string() << " and " << res_path.string() << '\n';
  return kExitOk;
}

int cmd_value(const RunConfig& config, std::ostream& out) {
  if (!config.value) throw ConfigError("value", "section is required for this command");
  const auto& s = *config.value;
  const Regime regime = s.regime ? *s.regime : true_regime(config.scenario);
  const std::optional<double> analytic = value_analytic(config.scenario, regime);
  if (s.method == ValueMethod::Analytic && !analytic) {
    throw ConfigError("value.regime", "uses terms with no closed-form value; use method gcomp");
  }
  const double optimal = optimal_value(config.scenario);
  json doc{{"provenance", provenance_json(config_hash(config))},
           {"scenario", scenario_name(config.scenario)},
           {"optimal_value", optimal}};
  std::optional<double> reported;
  if (analytic && s.method != ValueMethod::GComputation) {
    doc["analytic"] = *analytic;
    reported = analytic;
  }
  if (s.method == ValueMethod::GComputation || !analytic) {
    RngStream stream(config.seed, 0);
    const ValueEstimate est = value_gcomputation(config.scenario, regime, s.draws, stream);
    doc["gcomputation"] = {{"value", est.value}, {"draws", s.draws}};
    if (est.std_error) doc["gcomputation"]["std_error"] = *est.std_error;
    reported = est.value;
  }
  doc["value"] = *reported;
  doc["efficiency"] = *reported / optimal;
  const fs::path path = output_path(config, s.output);
  write_json(path, doc);
  out << "value: H = " << format_double(*reported) << ", H(optimal) = " << format_double(optimal)
      << "; wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_study(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const StudyConfig study = make_study_config(config);
  const StudyResults results = run_mc_study(study);
  err << "study: " << results.reps << " replications done, " << results.failed << " failed\n";
  const std::string hash = config_hash(config);
  json doc = study_to_json(results);
  doc["provenance"] = provenance_json(hash);
  const fs::path json_path = output_path(config, config.study->output + ".json");
  write_json(json_path, doc);
  const fs::path csv_path = output_path(config, config.study->output + "_reps.csv");
  auto csv = open_output(csv_path);
  csv << "# " << provenance_line(hash) << '\n';
  write_study_reps_csv(csv, results);
  for (const auto& w : results.warnings) out << "study: warning: " << w << '\n';
  if (!results.mse_ratio.empty()) {
    out << "study: MSE ratio (A/Q)";
    for (double r : results.mse_ratio) out << ' ' << format_double(r);
    out << '\n';
  }
  if (results.q) out << "study: R_mean Q " << results.q->r_mean << '\n';
  if (results.a) out << "study: R_mean A " << results.a->r_mean << '\n';
  out << "study: wrote " << json_path.string() << " and " << csv_path.string() << '\n';
  return kExitOk;
}

int cmd_calibrate(const RunConfig& config, std::ostream& out) {
  const CalibrationConfig cal = make_calibration_config(config);
  CalibrationResult result = calibrate_equiv_misspec(cal);
  const auto& s = *config.calibrate;
  if (s.tstat_reps > 0) {
    for (std::size_t i = 0; i < result.pairs.size(); ++i) {
      auto& p = result.pairs[i];
      p.tstat_rel_diff = check_tstat_balance(cal.base, p.beta0, p.phi0, cal.n_cal, s.tstat_reps,
                                             config.seed + 1 + i, config.threads)
                             .rel_diff;
    }
  }
  const std::string hash = config_hash(config);
  const fs::path csv_path = output_path(config, s.output + "_pairs.csv");
  auto csv = open_output(csv_path);
  csv << "# " << provenance_line(hash) << '\n';
  write_pairs_csv(csv, result);
  json doc = calibration_to_json(result);
  doc["provenance"] = provenance_json(hash);
  const fs::path json_path = output_path(config, s.output + "_poly.json");
  write_json(json_path, doc);
  out << "calibrate: polynomial degree " << result.polynomial.degree << ", adjusted R^2 "
      << result.polynomial.adj_r2 << "; wrote " << csv_path.string() << " and "
      << json_path.string() << '\n';
  return kExitOk;
}

int cmd_validate(const RunConfig& config, std::ostream& out) {
  out << "config ok (hash " << config_hash(config) << ")\n";
  out << resolved_config(config).dump(2) << '\n';
  out << "scenario: " << scenario_name(config.scenario) << '\n';
  if (const auto* p = std::get_if<TwoDecisionParams>(&config.scenario)) {
    const Stage1Truth t = derive_stage1_truth(*p);
    out << "stage 1 h coefficients: (" << format_double(t.beta1[0]) << ", "
        << format_double(t.beta1[1]) << ")\n";
    out << "stage 1 contrast coefficients: (" << format_double(t.psi1[0]) << ", "
        << format_double(t.psi1[1]) << ")\n";
  }
  const Regime truth = true_regime(config.scenario);
  for (int k = 1; k <= truth.stages(); ++k) {
    const auto& rule = truth.rules[k - 1];
    out << "stage " << k << " true contrast over [";
    const auto names = rule.features.names();
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? ", " : "") << names[j];
    out << "]: " << vec_text(rule.psi) << '\n';
  }
  out << "optimal value: " << format_double(optimal_value(config.scenario)) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Q- and A-learning for dynamic treatment regimes", "dtr"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_dir;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Draw a dataset from the scenario and write it as CSV"},
      {"fit", "Fit Q- and/or A-learning to a dataset CSV"},
      {"value", "Value of a regime, analytic or by g-computation"},
      {"study", "Monte Carlo comparison of Q- and A-learning"},
      {"calibrate", "Equivalently misspecified (outcome, propensity) pairs"},
      {"validate", "Check a config and print the resolved truth"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "Master seed (overrides config)");
    sub->add_option("--threads", threads, "Worker threads (overrides config)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", out_dir, "Output directory (overrides config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) overrides.seed = seed;
  if (sub->count("--threads")) overrides.threads = threads;
  if (sub->count("--out-dir")) overrides.out_dir = out_dir;
  const std::string command = sub->get_name();

  try {
    RunConfig config = load_config(config_path);
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.threads) config.threads = *overrides.threads;
    if (overrides.out_dir) config.out_dir = *overrides.out_dir;
    if (command == "simulate") return cmd_simulate(config, out);
    if (command == "fit") return cmd_fit(config, out);
    if (command == "value") return cmd_value(config, out);
    if (command == "study") return cmd_study(config, out, err);
    if (command == "calibrate") return cmd_calibrate(config, out);
    return cmd_validate(config, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SingularSystemError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NonConvergenceError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const StudyError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const CalibrationError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const OutputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const Error& e) {
    // model, parse and parameter errors all stem from the configuration
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace dtr
