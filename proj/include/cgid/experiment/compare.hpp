#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cgid/eval/report.hpp"

namespace cgid {

// Per-method, per-stage medians across seeds.
struct ComparisonRow {
  std::string method;
  std::size_t stage = 0;
  std::size_t runs = 0;
  std::vector<std::int64_t> seeds;
  double a_ind = 0.0;
  double f_ind = 0.0;
  std::optional<double> a_ood;
  std::optional<double> f_ood;
  double a_all = 0.0;
  std::optional<double> f_all;
  // Median minus the reference method's median at the same stage (the first method listed).
  double delta_a_all = 0.0;
  std::optional<double> delta_f_all;
};

struct Comparison {
  std::string reference;
  std::vector<ComparisonRow> rows;  // methods in first-appearance order, stages ascending

  const ComparisonRow* find(const std::string& method, std::size_t stage) const;
};

double median(std::vector<double> values);

// Throws ComparisonError when the reports disagree on data source, split settings, or stage count.
Comparison compare_reports(const std::vector<StructuredReport>& reports);
Comparison compare_runs(const std::vector<std::filesystem::path>& report_paths);

void write_comparison(std::ostream& out, const Comparison& comparison);

}  // namespace cgid
