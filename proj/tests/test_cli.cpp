#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "dtr/cli.hpp"
#include "dtr/data.hpp"

using namespace dtr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::path(DTR_TEST_TMP) / "cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_config(const std::string& name, const json& doc) {
  const fs::path path = work_dir() / name;
  std::ofstream(path) << doc.dump(2);
  return path.string();
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dtr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json base_config(const std::string& out_dir) {
  return {{"version", 1},
          {"scenario", {{"type", "two_decision"}}},
          {"seed", 5},
          {"out_dir", (work_dir() / out_dir).string()},
          {"simulate", {{"n", 300}}},
          {"fit", {{"data", out_dir + "/dataset.csv"}}},
          {"value", {{"method", "gcomp"}, {"draws", 20000}}},
          {"study", {{"n", 150}, {"reps", 30}}},
          {"calibrate",
           {{"grid", {{"lo", -0.2}, {"hi", 0.2}, {"step", 0.1}}},
            {"n_cal", 1500},
            {"adj_r2_target", 0.0},
            {"max_rel_residual", 1.0},
            {"poly_max_degree", 2}}}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate, fit, value, study, calibrate and validate") {
  const std::string cfg = write_config("pipeline.json", base_config("pipe"));
  const fs::path out = work_dir() / "pipe";

  const Run sim = run({"simulate", cfg});
  REQUIRE(sim.code == kExitOk);
  const std::string csv = slurp(out / "dataset.csv");
  CHECK(csv.rfind("# dtr 1.0.0 config ", 0) == 0);
  CHECK(read_dataset_csv((out / "dataset.csv").string()).size() == 300);

  const Run fit = run({"fit", cfg});
  REQUIRE(fit.code == kExitOk);
  const json fit_doc = json::parse(slurp(out / "fit.json"));
  CHECK(fit_doc["provenance"]["version"] == "1.0.0");
  CHECK(fit_doc["estimators"].contains("q"));
  CHECK(fit_doc["estimators"].contains("a"));
  CHECK(slurp(out / "residuals.csv").find("estimator,stage,row,response,residual") !=
        std::string::npos);

  const Run value = run({"value", cfg});
  REQUIRE(value.code == kExitOk);
  const json value_doc = json::parse(slurp(out / "value.json"));
  const double se = value_doc["gcomputation"]["std_error"];
  CHECK(std::abs(value_doc["value"].get<double>() - 4.19883098065416742) < 4.0 * se);

  const Run study = run({"study", cfg});
  REQUIRE(study.code == kExitOk);
  const json study_doc = json::parse(slurp(out / "study.json"));
  CHECK(study_doc["reps"] == 30);
  CHECK(study_doc["mse_ratio"].size() == 5);
  CHECK(slurp(out / "study_reps.csv").find("rep,estimator") != std::string::npos);

  const Run cal = run({"calibrate", cfg});
  REQUIRE(cal.code == kExitOk);
  const json poly = json::parse(slurp(out / "calibration_poly.json"));
  CHECK(poly["polynomial"]["basis"] == "legendre");
  CHECK(slurp(out / "calibration_pairs.csv").find("phi0,beta0,ratio") != std::string::npos);

  const Run val = run({"validate", cfg});
  REQUIRE(val.code == kExitOk);
  CHECK(val.out.find("stage 1 contrast coefficients: (0.36159182970621") != std::string::npos);
  CHECK(val.out.find("config ok (hash ") == 0);
}

TEST_CASE("flags override the config") {
  const std::string cfg = write_config("flags.json", base_config("flags_a"));
  const fs::path other = work_dir() / "flags_b";
  REQUIRE(run({"simulate", cfg}).code == kExitOk);
  REQUIRE(run({"simulate", cfg, "--seed", "6", "--out-dir", other.string()}).code == kExitOk);
  const std::string a = slurp(work_dir() / "flags_a" / "dataset.csv");
  const std::string b = slurp(other / "dataset.csv");
  CHECK_FALSE(a.empty());
  CHECK_FALSE(b.empty());
  CHECK(a != b);
  // the header line carries a different config hash too
  CHECK(a.substr(0, a.find('\n')) != b.substr(0, b.find('\n')));

  const fs::path t1 = work_dir() / "threads1", t4 = work_dir() / "threads4";
  REQUIRE(run({"study", cfg, "--threads", "1", "--out-dir", t1.string()}).code == kExitOk);
  REQUIRE(run({"study", cfg, "--threads", "4", "--out-dir", t4.string()}).code == kExitOk);
  CHECK(slurp(t1 / "study_reps.csv") == slurp(t4 / "study_reps.csv"));
  CHECK(slurp(t1 / "study.json") == slurp(t4 / "study.json"));
}

TEST_CASE("configuration errors exit 2") {
  json doc = base_config("bad");
  doc["calibrate"]["grid"]["step"] = 0;
  const Run step = run({"calibrate", write_config("step.json", doc)});
  CHECK(step.code == kExitConfig);
  CHECK(step.err.find("calibrate.grid.step must be > 0") != std::string::npos);

  doc = base_config("bad");
  doc["stuyd"] = json::object();
  CHECK(run({"validate", write_config("typo.json", doc)}).code == kExitConfig);

  CHECK(run({"validate", (work_dir() / "none.json").string()}).code == kExitConfig);
  CHECK(run({"frobnicate", "x.json"}).code == kExitConfig);
  CHECK(run({"validate"}).code == kExitConfig);
  CHECK(run({"study", write_config("t0.json", base_config("bad")), "--threads", "0"}).code ==
        kExitConfig);

  doc = base_config("bad");
  doc.erase("study");
  CHECK(run({"study", write_config("nostudy.json", doc)}).code == kExitConfig);

  doc = base_config("bad");
  doc["fit"]["data"] = "bad/missing.csv";
  const Run missing = run({"fit", write_config("missing.json", doc)});
  CHECK(missing.code == kExitConfig);
  CHECK(missing.err.find("fit.data") != std::string::npos);

  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("numerical failures exit 3") {
  // every action 0: the contrast columns vanish
  Dataset d;
  d.stages = 2;
  d.state_dims = {1, 1};
  for (int i = 0; i < 40; ++i) {
    d.trajectories.push_back({{{static_cast<double>(i % 2)}, {0.1 * i}}, {0, 0}, 0.5 * i});
  }
  fs::create_directories(work_dir() / "zero");
  write_dataset_csv((work_dir() / "zero" / "dataset.csv").string(), d);
  const Run fit = run({"fit", write_config("zero.json", base_config("zero"))});
  CHECK(fit.code == kExitNumerical);
  CHECK(fit.err.find("numerical failure") != std::string::npos);

  json doc = base_config("sing");
  doc["study"]["model"] = {
      {{"h", {"1", "s1"}}, {"c", {"1", "s1"}}},
      {{"h", {"1", "s2"}}, {"c", {"1", "s2", "s2"}}}};
  CHECK(run({"study", write_config("sing.json", doc)}).code == kExitNumerical);

  doc = base_config("poly");
  doc["calibrate"]["adj_r2_target"] = 1.0;
  doc["calibrate"]["max_rel_residual"] = 1e-12;
  doc["calibrate"]["poly_max_degree"] = 1;
  CHECK(run({"calibrate", write_config("poly.json", doc)}).code == kExitNumerical);
}

}  // TEST_SUITE
