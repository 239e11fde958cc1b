#pragma once

// JSON and CSV renderings of fits, values, studies and calibrations.

#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "dtr/calibrate.hpp"
#include "dtr/evaluate.hpp"

namespace dtr {

/// "dtr <version> config <hash>", the first line of every output file.
std::string provenance_line(const std::string& config_hash);
nlohmann::json provenance_json(const std::string& config_hash);

nlohmann::json fit_to_json(const LearnResult& fit);
/// Columns: estimator, stage, row, response, residual.
void write_residuals_csv(std::ostream& out, const std::string& estimator, const LearnResult& fit,
                         bool header);

nlohmann::json study_to_json(const StudyResults& results);
/// Columns: rep, estimator, one per psi component, H, failed.
void write_study_reps_csv(std::ostream& out, const StudyResults& results);

nlohmann::json calibration_to_json(const CalibrationResult& result);
/// Columns: phi0, beta0, ratio, ratio_se, tstat_rel_diff.
void write_pairs_csv(std::ostream& out, const CalibrationResult& result);

}  // namespace dtr
