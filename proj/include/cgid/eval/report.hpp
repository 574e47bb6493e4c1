#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgid/eval/evaluate.hpp"
#include "cgid/eval/metrics.hpp"

namespace cgid {

struct StageReport {
  std::string method;
  double ood_ratio = 0.0;
  std::int64_t seed = 0;
  std::size_t stage = 0;
  double a_ind = 0.0;
  double f_ind = 0.0;
  std::optional<double> a_ood;  // undefined at the IND stage
  std::optional<double> f_ood;
  double a_all = 0.0;
  std::optional<double> f_all;
  double loss = 0.0;
  double gain = 0.0;
  // Enough to recompute every metric above.
  std::vector<std::size_t> class_sizes;
  std::vector<std::vector<double>> accuracy_rows;  // a[0..stage]
  std::vector<std::optional<double>> compactness;  // per class set Y_0..Y_stage
  std::size_t true_k = 0;
  std::size_t estimated_k = 0;

  bool operator==(const StageReport&) const = default;
};

// Report for stage t; `a` must hold rows 0..t.
StageReport make_stage_report(const AccuracyMatrix& a, std::size_t t, const std::string& method, double ood_ratio,
                              std::int64_t seed);

// Rebuilds the matrix stored in a report (rows 0..stage).
AccuracyMatrix accuracy_matrix_of(const StageReport& report);

nlohmann::json to_json(const StageReport& r);
StageReport stage_report_from_json(const nlohmann::json& j);

struct StructuredReport {
  nlohmann::json config;
  std::vector<StageReport> stages;
};

inline const std::vector<std::string> kTableColumns = {"method", "ood_ratio", "stage", "A_IND", "F_IND", "A_OOD",
                                                       "F_OOD",  "A_ALL",     "F_ALL", "Loss",  "Gain",  "seed"};

// JSON lines: a config record, then one record per stage.
void write_structured_report(std::ostream& out, const nlohmann::json& config, const std::vector<StageReport>& stages);
StructuredReport read_structured_report(std::istream& in);
StructuredReport load_structured_report(const std::filesystem::path& path);

// CSV with kTableColumns; undefined metrics are empty cells.
void write_table(std::ostream& out, const std::vector<StageReport>& stages);

// Embedding-format rows of the cumulative test set with the aligned prediction and truth appended.
void write_feature_dump(std::ostream& out, const StageEvaluation& evaluation);

struct ReportPaths {
  std::filesystem::path structured;
  std::filesystem::path table;
  std::vector<std::filesystem::path> feature_dumps;
};

// Writes report.jsonl, table.csv and features_stage<t>.tsv (one per evaluation) into `dir`.
// Throws IoError on unwritable paths.
ReportPaths emit_report(const std::filesystem::path& dir, const nlohmann::json& config,
                        const std::vector<StageReport>& stages, const std::vector<StageEvaluation>& evaluations);

}  // namespace cgid
