#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cgid/data/corpus.hpp"

namespace cgid {

namespace eval {
struct SealAccess;
}

// Capability required to read ground-truth labels held in a SealedLabels compartment.
// Only the evaluation module can mint one.
class EvaluationKey {
  EvaluationKey() = default;
  friend struct eval::SealAccess;
};

// Marks the current thread as running a training path; opening sealed labels while
// a scope is active throws and is recorded as a seal violation.
class TrainingScope {
 public:
  TrainingScope();
  ~TrainingScope();
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;

  static bool active() noexcept;
};

// Total attempted opens from inside a TrainingScope, across all threads.
std::size_t seal_violation_count() noexcept;

class SealedLabels {
 public:
  SealedLabels() = default;
  explicit SealedLabels(std::vector<Label> labels) : labels_(std::move(labels)) {}

  std::size_t size() const noexcept { return labels_.size(); }
  std::span<const Label> open(const EvaluationKey&) const;
  std::size_t open_count() const noexcept { return opens_; }

 private:
  std::vector<Label> labels_;
  mutable std::size_t opens_ = 0;
};

struct StageData {
  // Global class ids of Y_t; contiguous and disjoint from every other stage.
  std::vector<Label> classes;
  DenseMatrix train;
  DenseMatrix validation;
  DenseMatrix test;
  // Public labels; populated for the labeled IND stage only.
  std::vector<Label> train_labels;
  std::vector<Label> validation_labels;
  // Ground truth for every partition, evaluation-only.
  SealedLabels sealed_train;
  SealedLabels sealed_validation;
  SealedLabels sealed_test;
  // Corpus row of every sample, for provenance and disjointness audits.
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

enum class PartitionPolicy {
  // OOD class total rounded down to a multiple of the stage count; every stage equal.
  equal,
  // OOD total = round(ratio·C); remainder spread one-per-stage from the earliest stage.
  near_equal,
};

PartitionPolicy parse_partition_policy(const std::string& name);
std::string to_string(PartitionPolicy p);

struct StagedSplit {
  std::vector<StageData> stages;  // index 0 is IND, 1..T are OOD
  std::vector<Label> corpus_label;  // global id -> original corpus label
  std::size_t input_dim = 0;

  std::size_t num_ood_stages() const noexcept { return stages.empty() ? 0 : stages.size() - 1; }
  std::size_t class_count(std::size_t stage) const { return stages.at(stage).classes.size(); }
  std::size_t cumulative_class_count(std::size_t stage) const;
  std::vector<std::size_t> class_counts() const;
};

// Class counts per stage [|Y_0|, |Y_1|, ..., |Y_T|].
std::vector<std::size_t> stage_class_counts(std::size_t num_classes, double ood_ratio, std::size_t num_stages,
                                            PartitionPolicy policy);

StagedSplit build_cgid_split(const LabeledCorpus& corpus, double ood_ratio, std::size_t num_stages, std::uint64_t seed,
                             PartitionPolicy policy = PartitionPolicy::equal);

}  // namespace cgid
