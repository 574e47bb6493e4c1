#include "cgid/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cgid/errors.hpp"
#include "cgid/eval/metrics.hpp"

namespace cgid {

AlignmentScope parse_alignment_scope(const std::string& name) {
  if (name == "joint") return AlignmentScope::joint;
  if (name == "per_block") return AlignmentScope::per_block;
  throw ConfigError("unknown alignment scope '" + name + "'", "eval.alignment");
}

std::string to_string(AlignmentScope s) { return s == AlignmentScope::joint ? "joint" : "per_block"; }

namespace {

struct Range {
  Label lo = 0;
  Label hi = 0;
  bool contains(Label x) const noexcept { return x >= lo && x < hi; }
  bool empty() const noexcept { return lo >= hi; }
};

// Fits one map on pairs with prediction in `pred` and truth in `truth_range`, and applies it to
// every prediction in `pred`.
AssignmentMap align_range(std::span<const Label> predicted, std::span<const Label> truth, Range pred,
                          Range truth_range, std::vector<Label>& aligned) {
  std::vector<Label> p;
  std::vector<Label> y;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (pred.contains(predicted[i]) && truth_range.contains(truth[i])) {
      p.push_back(predicted[i]);
      y.push_back(truth[i]);
    }
  }
  AssignmentMap map;
  if (!p.empty()) map = hungarian_align(p, y);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (pred.contains(predicted[i])) aligned[i] = map.map(predicted[i]);
  }
  return map;
}

std::vector<Range> contiguous_ranges(const std::vector<std::size_t>& sizes) {
  std::vector<Range> out;
  Label next = 0;
  for (std::size_t n : sizes) {
    out.push_back({next, next + static_cast<Label>(n)});
    next += static_cast<Label>(n);
  }
  return out;
}

Range span_of(const std::vector<Range>& ranges, std::size_t first) {
  Range r{0, 0};
  bool any = false;
  for (std::size_t i = first; i < ranges.size(); ++i) {
    if (ranges[i].empty()) continue;
    r.lo = any ? std::min(r.lo, ranges[i].lo) : ranges[i].lo;
    r.hi = any ? std::max(r.hi, ranges[i].hi) : ranges[i].hi;
    any = true;
  }
  return r;
}

}  // namespace

AlignedPredictions align_and_score(std::span<const Label> predicted, std::span<const Label> truth,
                                   const std::vector<std::vector<Label>>& class_sets, AlignmentScope scope,
                                   const std::vector<std::size_t>& predicted_block_sizes) {
  if (predicted.size() != truth.size()) throw ContractError("align_and_score: prediction and truth lengths differ");
  if (class_sets.empty()) throw ContractError("align_and_score: no class sets");
  AlignedPredictions out;
  out.aligned.assign(predicted.begin(), predicted.end());

  std::vector<Range> truth_ranges;
  for (const auto& set : class_sets) {
    if (set.empty()) {
      truth_ranges.push_back({0, 0});
      continue;
    }
    truth_ranges.push_back({*std::min_element(set.begin(), set.end()), *std::max_element(set.begin(), set.end()) + 1});
  }
  std::vector<Range> pred_ranges = truth_ranges;
  if (!predicted_block_sizes.empty()) {
    if (predicted_block_sizes.size() != class_sets.size()) {
      throw ContractError("align_and_score: one predicted block size per class set required");
    }
    if (predicted_block_sizes[0] != class_sets[0].size()) {
      throw ContractError("align_and_score: the IND block must match the IND class set");
    }
    pred_ranges = contiguous_ranges(predicted_block_sizes);
  }
  if (class_sets.size() > 1) {
    if (scope == AlignmentScope::joint) {
      const Range p = span_of(pred_ranges, 1);
      if (!p.empty()) out.maps.push_back(align_range(predicted, truth, p, span_of(truth_ranges, 1), out.aligned));
    } else {
      for (std::size_t i = 1; i < truth_ranges.size(); ++i) {
        if (pred_ranges[i].empty()) continue;
        out.maps.push_back(align_range(predicted, truth, pred_ranges[i], truth_ranges[i], out.aligned));
      }
    }
  }
  for (std::size_t s = 0; s < class_sets.size(); ++s) {
    std::size_t hits = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (!truth_ranges[s].contains(truth[i])) continue;
      ++total;
      hits += out.aligned[i] == truth[i];
    }
    out.accuracies.push_back(total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total));
  }
  return out;
}

StageEvaluation evaluate_stage(const JointModel& model, const StagedSplit& split, std::size_t t, AlignmentScope scope,
                               const std::vector<std::size_t>& head_blocks) {
  if (t >= split.stages.size()) throw ContractError("evaluate_stage: stage out of range");
  if (!head_blocks.empty() && head_blocks.size() != t + 1) {
    throw ContractError("evaluate_stage: one head block per stage 0..t required");
  }
  std::size_t expected = split.cumulative_class_count(t);
  if (!head_blocks.empty()) expected = std::accumulate(head_blocks.begin(), head_blocks.end(), std::size_t{0});
  if (model.logit_dim() != expected) {
    throw ContractError("evaluate_stage: model has " + std::to_string(model.logit_dim()) + " outputs but " +
                        std::to_string(expected) + " were expected");
  }
  const EvaluationKey key = eval::SealAccess::key();
  StageEvaluation ev;
  std::vector<std::vector<Label>> sets;
  for (std::size_t i = 0; i <= t; ++i) {
    const StageData& s = split.stages[i];
    ev.test_inputs = ev.test_inputs.empty() ? s.test : vstack(ev.test_inputs, s.test);
    const auto labels = s.sealed_test.open(key);
    ev.truth.insert(ev.truth.end(), labels.begin(), labels.end());
    sets.push_back(s.classes);
  }
  const JointForward fwd = joint_forward(model, ev.test_inputs, 0.0, 0);
  ev.projections = fwd.encoder.projections;
  ev.predicted.resize(fwd.logits.rows());
  for (std::size_t i = 0; i < fwd.logits.rows(); ++i) {
    auto r = fwd.logits.row(i);
    ev.predicted[i] = static_cast<Label>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  auto scored = align_and_score(ev.predicted, ev.truth, sets, scope, head_blocks);
  ev.row = std::move(scored.accuracies);
  ev.aligned = std::move(scored.aligned);

  const DenseMatrix normalized = l2_normalize_rows(ev.projections);
  for (const auto& set : sets) {
    try {
      ev.compactness.push_back(compactness(normalized, ev.truth, set));
    } catch (const ContractError&) {
      ev.compactness.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return ev;
}

}  // namespace cgid
