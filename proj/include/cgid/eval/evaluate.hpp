#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cgid/cluster/hungarian.hpp"
#include "cgid/data/split.hpp"
#include "cgid/plrd/model.hpp"

namespace cgid {

namespace eval {

// The only minting point for EvaluationKey.
struct SealAccess {
  static EvaluationKey key() { return EvaluationKey{}; }
};

}  // namespace eval

enum class AlignmentScope {
  joint,      // one assignment over every OOD class id seen so far
  per_block,  // one assignment per OOD stage block
};

AlignmentScope parse_alignment_scope(const std::string& name);
std::string to_string(AlignmentScope s);

struct AlignedPredictions {
  std::vector<Label> aligned;      // kUnmatched where an OOD prediction found no partner
  std::vector<double> accuracies;  // one per class set
  std::vector<AssignmentMap> maps; // one for joint, one per OOD block for per_block
};

// IND ids [0, |Y_0|) are kept as-is; OOD predictions are re-mapped by Hungarian alignment fitted on
// samples whose prediction and truth are both OOD ids (within the same block for per_block).
// class_sets[i] lists the ids of Y_i; sets are contiguous in stage order. predicted_block_sizes
// gives the head block width per stage when it differs from |Y_i| (estimated class counts);
// empty means equal to the class-set sizes.
AlignedPredictions align_and_score(std::span<const Label> predicted, std::span<const Label> truth,
                                   const std::vector<std::vector<Label>>& class_sets, AlignmentScope scope,
                                   const std::vector<std::size_t>& predicted_block_sizes = {});

struct StageEvaluation {
  std::vector<double> row;  // a[t][0..t]
  DenseMatrix test_inputs;
  DenseMatrix projections;  // clean projections of the cumulative test set
  std::vector<Label> truth;
  std::vector<Label> predicted;  // raw argmax
  std::vector<Label> aligned;
  std::vector<double> compactness;  // per class set on normalized projections; NaN when undefined
};

// Evaluates on the cumulative test set of stages 0..t. head_blocks holds the head width learned
// at each stage 0..t (empty means the true class counts); the model's logit dimension must equal
// their sum, otherwise ContractError.
StageEvaluation evaluate_stage(const JointModel& model, const StagedSplit& split, std::size_t t,
                               AlignmentScope scope = AlignmentScope::joint,
                               const std::vector<std::size_t>& head_blocks = {});

}  // namespace cgid
