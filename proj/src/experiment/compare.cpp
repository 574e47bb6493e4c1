#include "cgid/experiment/compare.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "cgid/data/corpus.hpp"
#include "cgid/errors.hpp"

namespace cgid {

using nlohmann::json;

const ComparisonRow* Comparison::find(const std::string& method, std::size_t stage) const {
  for (const auto& r : rows)
    if (r.method == method && r.stage == stage) return &r;
  return nullptr;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

// Data source and split settings, with seeds that follow the run seed resolved.
json protocol_of(const StructuredReport& report) {
  const json& c = report.config;
  json data = c.at("data");
  json split = c.at("split");
  const auto run_seed = c.at("run").at("seed").get<std::int64_t>();
  if (data.at("seed").get<std::int64_t>() < 0) data["seed"] = run_seed;
  if (split.at("seed").get<std::int64_t>() < 0) split["seed"] = run_seed;
  return {{"data", data}, {"split", split}};
}

std::optional<double> optional_median(const std::vector<std::optional<double>>& values) {
  std::vector<double> present;
  for (const auto& v : values)
    if (v) present.push_back(*v);
  if (present.empty()) return std::nullopt;
  return median(present);
}

}  // namespace

Comparison compare_reports(const std::vector<StructuredReport>& reports) {
  if (reports.empty()) throw ComparisonError("no reports to compare");
  // Reports with the same run seed must describe the same corpus and split; the data and split
  // definitions themselves must match across all reports.
  const auto strip_seeds = [](json p) {
    p["data"].erase("seed");
    p["split"].erase("seed");
    return p;
  };
  const json first = protocol_of(reports.front());
  std::map<std::int64_t, json> by_seed;
  for (const auto& r : reports) {
    const json p = protocol_of(r);
    if (strip_seeds(p) != strip_seeds(first)) {
      throw ComparisonError("reports use different data sources or split settings");
    }
    const auto seed = r.config.at("run").at("seed").get<std::int64_t>();
    const auto [it, inserted] = by_seed.emplace(seed, p);
    if (!inserted && it->second != p) throw ComparisonError("reports with seed " + std::to_string(seed) +
                                                            " were built on different splits");
    if (r.stages.size() != reports.front().stages.size()) throw ComparisonError("reports differ in stage count");
  }

  std::vector<std::string> methods;
  std::map<std::string, std::vector<const StructuredReport*>> grouped;
  for (const auto& r : reports) {
    const std::string m = r.stages.empty() ? r.config.at("run").at("method").get<std::string>() : r.stages[0].method;
    if (!grouped.count(m)) methods.push_back(m);
    grouped[m].push_back(&r);
  }

  Comparison out;
  out.reference = methods.front();
  const std::size_t stages = reports.front().stages.size();
  for (const auto& m : methods) {
    for (std::size_t t = 0; t < stages; ++t) {
      ComparisonRow row;
      row.method = m;
      row.stage = t;
      std::vector<double> a_ind, f_ind, a_all;
      std::vector<std::optional<double>> a_ood, f_ood, f_all;
      for (const auto* r : grouped[m]) {
        const StageReport& s = r->stages[t];
        row.seeds.push_back(s.seed);
        a_ind.push_back(s.a_ind);
        f_ind.push_back(s.f_ind);
        a_all.push_back(s.a_all);
        a_ood.push_back(s.a_ood);
        f_ood.push_back(s.f_ood);
        f_all.push_back(s.f_all);
      }
      row.runs = grouped[m].size();
      row.a_ind = median(a_ind);
      row.f_ind = median(f_ind);
      row.a_all = median(a_all);
      row.a_ood = optional_median(a_ood);
      row.f_ood = optional_median(f_ood);
      row.f_all = optional_median(f_all);
      out.rows.push_back(std::move(row));
    }
  }
  for (auto& row : out.rows) {
    const ComparisonRow* ref = out.find(out.reference, row.stage);
    row.delta_a_all = row.a_all - ref->a_all;
    if (row.f_all && ref->f_all) row.delta_f_all = *row.f_all - *ref->f_all;
  }
  return out;
}

Comparison compare_runs(const std::vector<std::filesystem::path>& report_paths) {
  std::vector<StructuredReport> reports;
  for (const auto& p : report_paths) {
    const auto path = std::filesystem::is_directory(p) ? p / "report.jsonl" : p;
    reports.push_back(load_structured_report(path));
  }
  return compare_reports(reports);
}

void write_comparison(std::ostream& out, const Comparison& c) {
  const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << "method,stage,runs,A_IND,F_IND,A_OOD,F_OOD,A_ALL,F_ALL,dA_ALL,dF_ALL\n";
  for (const auto& r : c.rows) {
    out << r.method << ',' << r.stage << ',' << r.runs << ',' << format_double(r.a_ind) << ','
        << format_double(r.f_ind) << ',' << cell(r.a_ood) << ',' << cell(r.f_ood) << ',' << format_double(r.a_all)
        << ',' << cell(r.f_all) << ',' << format_double(r.delta_a_all) << ',' << cell(r.delta_f_all) << '\n';
  }
}

}  // namespace cgid
