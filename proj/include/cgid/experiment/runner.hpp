#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cgid/eval/report.hpp"
#include "cgid/experiment/config.hpp"

namespace cgid {

// Counts of in-run invariant checks at stage boundaries and during training.
struct InvariantLog {
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::vector<std::string> messages;  // first few violations

  void check(bool ok, const std::string& what);
};

struct RunOptions {
  std::filesystem::path output_dir;  // empty: nothing is written
  bool resume = false;               // continue from the newest checkpoint in output_dir
};

struct RunResult {
  RunConfig config;
  AccuracyMatrix accuracy;
  std::vector<StageReport> reports;
  std::vector<std::size_t> head_blocks;  // head width learned per stage
  InvariantLog invariants;
  std::size_t seal_violations = 0;  // attempts to read sealed labels from training code
  std::size_t resumed_from = 0;     // stages restored from a checkpoint
  double seconds = 0.0;
  std::optional<ReportPaths> paths;
};

LabeledCorpus load_corpus(const RunConfig& config);

// IND stage, then T OOD stages with the configured method; evaluation after every stage.
// Per-stage checkpoints are written to output_dir/checkpoints and survive a failed run.
RunResult run_experiment(const RunConfig& config, const RunOptions& options = {});

struct SweepEntry {
  RunConfig config;
  std::filesystem::path output_dir;
};

// Cartesian product of methods × ratios × seeds over a base config; empty lists keep the base value.
std::vector<SweepEntry> plan_sweep(const RunConfig& base, const std::vector<Method>& methods,
                                   const std::vector<double>& ratios, const std::vector<std::int64_t>& seeds,
                                   const std::filesystem::path& root);

// Runs entries on up to `workers` threads (0 means CGID_WORKERS or 1). Results keep plan order.
// A failing entry does not stop the others; its exception is rethrown after all finish.
std::vector<RunResult> run_sweep(const std::vector<SweepEntry>& entries, std::size_t workers);

std::size_t default_worker_count();

}  // namespace cgid
