#include "cgid/eval/report.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "cgid/data/corpus.hpp"
#include "cgid/errors.hpp"

namespace cgid {

using nlohmann::json;

StageReport make_stage_report(const AccuracyMatrix& a, std::size_t t, const std::string& method, double ood_ratio,
                              std::int64_t seed) {
  StageReport r;
  r.method = method;
  r.ood_ratio = ood_ratio;
  r.seed = seed;
  r.stage = t;
  r.a_ind = ind_accuracy(a, t);
  r.f_ind = a.at(0, 0) - a.at(t, 0);
  r.a_all = all_accuracy(a, t);
  if (t > 0) {
    const auto acc = cgid_accuracy(a, t);
    const auto fg = cgid_forgetting(a, t);
    r.a_ood = acc.ood;
    r.f_ood = fg.ood;
    r.f_all = fg.all;
  }
  const auto lg = loss_gain(a, t);
  r.loss = lg.loss;
  r.gain = lg.gain;
  r.class_sizes.assign(a.class_sizes().begin(), a.class_sizes().begin() + static_cast<std::ptrdiff_t>(t + 1));
  for (std::size_t s = 0; s <= t; ++s) r.accuracy_rows.push_back(a.row(s));
  return r;
}

AccuracyMatrix accuracy_matrix_of(const StageReport& report) {
  AccuracyMatrix a(report.class_sizes);
  for (const auto& row : report.accuracy_rows) a.push_row(row);
  return a;
}

namespace {

json optional_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

json to_json(const StageReport& r) {
  json compact = json::array();
  for (const auto& c : r.compactness) compact.push_back(optional_json(c));
  return {{"record", "stage"},
          {"method", r.method},
          {"ood_ratio", r.ood_ratio},
          {"stage", r.stage},
          {"A_IND", r.a_ind},
          {"F_IND", r.f_ind},
          {"A_OOD", optional_json(r.a_ood)},
          {"F_OOD", optional_json(r.f_ood)},
          {"A_ALL", r.a_all},
          {"F_ALL", optional_json(r.f_all)},
          {"Loss", r.loss},
          {"Gain", r.gain},
          {"seed", r.seed},
          {"class_sizes", r.class_sizes},
          {"accuracy_rows", r.accuracy_rows},
          {"compactness", compact},
          {"true_k", r.true_k},
          {"estimated_k", r.estimated_k}};
}

StageReport stage_report_from_json(const json& j) {
  StageReport r;
  r.method = j.at("method").get<std::string>();
  r.ood_ratio = j.at("ood_ratio").get<double>();
  r.stage = j.at("stage").get<std::size_t>();
  r.a_ind = j.at("A_IND").get<double>();
  r.f_ind = j.at("F_IND").get<double>();
  r.a_ood = optional_from(j.at("A_OOD"));
  r.f_ood = optional_from(j.at("F_OOD"));
  r.a_all = j.at("A_ALL").get<double>();
  r.f_all = optional_from(j.at("F_ALL"));
  r.loss = j.at("Loss").get<double>();
  r.gain = j.at("Gain").get<double>();
  r.seed = j.at("seed").get<std::int64_t>();
  r.class_sizes = j.at("class_sizes").get<std::vector<std::size_t>>();
  r.accuracy_rows = j.at("accuracy_rows").get<std::vector<std::vector<double>>>();
  for (const auto& c : j.at("compactness")) r.compactness.push_back(optional_from(c));
  r.true_k = j.at("true_k").get<std::size_t>();
  r.estimated_k = j.at("estimated_k").get<std::size_t>();
  return r;
}

void write_structured_report(std::ostream& out, const json& config, const std::vector<StageReport>& stages) {
  out << json{{"record", "config"}, {"config", config}}.dump() << '\n';
  for (const auto& s : stages) out << to_json(s).dump() << '\n';
}

StructuredReport read_structured_report(std::istream& in) {
  StructuredReport report;
  std::string line;
  std::size_t line_no = 0;
  bool have_config = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto kind = j.at("record").get<std::string>();
      if (kind == "config") {
        report.config = j.at("config");
        have_config = true;
      } else if (kind == "stage") {
        report.stages.push_back(stage_report_from_json(j));
      } else {
        throw IngestionError("unknown record '" + kind + "'", line_no);
      }
    } catch (const json::exception& e) {
      throw IngestionError(e.what(), line_no);
    }
  }
  if (!have_config) throw IngestionError("report has no config record", line_no);
  return report;
}

StructuredReport load_structured_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read report " + path.string());
  return read_structured_report(in);
}

void write_table(std::ostream& out, const std::vector<StageReport>& stages) {
  for (std::size_t c = 0; c < kTableColumns.size(); ++c) out << (c ? "," : "") << kTableColumns[c];
  out << '\n';
  for (const auto& r : stages) {
    out << r.method << ',' << format_double(r.ood_ratio) << ',' << r.stage << ',' << format_double(r.a_ind) << ','
        << format_double(r.f_ind) << ',' << cell(r.a_ood) << ',' << cell(r.f_ood) << ',' << format_double(r.a_all)
        << ',' << cell(r.f_all) << ',' << format_double(r.loss) << ',' << format_double(r.gain) << ',' << r.seed
        << '\n';
  }
}

void write_feature_dump(std::ostream& out, const StageEvaluation& evaluation) {
  std::string line;
  for (std::size_t i = 0; i < evaluation.truth.size(); ++i) {
    line = "test\t" + std::to_string(evaluation.truth[i]) + '\t';
    append_features(line, evaluation.projections.row(i));
    line += '\t' + std::to_string(evaluation.aligned[i]) + '\t' + std::to_string(evaluation.truth[i]) + '\n';
    out << line;
  }
}

namespace {

void write_file(const std::filesystem::path& path, auto&& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

ReportPaths emit_report(const std::filesystem::path& dir, const json& config, const std::vector<StageReport>& stages,
                        const std::vector<StageEvaluation>& evaluations) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  ReportPaths paths{dir / "report.jsonl", dir / "table.csv", {}};
  write_file(paths.structured, [&](std::ostream& out) { write_structured_report(out, config, stages); });
  write_file(paths.table, [&](std::ostream& out) { write_table(out, stages); });
  for (std::size_t t = 0; t < evaluations.size(); ++t) {
    paths.feature_dumps.push_back(dir / ("features_stage" + std::to_string(t) + ".tsv"));
    write_file(paths.feature_dumps.back(), [&](std::ostream& out) { write_feature_dump(out, evaluations[t]); });
  }
  return paths;
}

}  // namespace cgid
