#include "cgid/data/split.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <numeric>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {
namespace {

thread_local int t_training_depth = 0;
std::atomic<std::size_t> g_seal_violations{0};

}  // namespace

TrainingScope::TrainingScope() { ++t_training_depth; }
TrainingScope::~TrainingScope() { --t_training_depth; }
bool TrainingScope::active() noexcept { return t_training_depth > 0; }

std::size_t seal_violation_count() noexcept { return g_seal_violations.load(); }

std::span<const Label> SealedLabels::open(const EvaluationKey&) const {
  if (TrainingScope::active()) {
    ++g_seal_violations;
    throw ContractError("sealed ground-truth labels opened from a training path");
  }
  ++opens_;
  return labels_;
}

PartitionPolicy parse_partition_policy(const std::string& name) {
  if (name == "equal") return PartitionPolicy::equal;
  if (name == "near_equal") return PartitionPolicy::near_equal;
  throw ConfigError("unknown partition policy '" + name + "'");
}

std::string to_string(PartitionPolicy p) { return p == PartitionPolicy::equal ? "equal" : "near_equal"; }

std::size_t StagedSplit::cumulative_class_count(std::size_t stage) const {
  std::size_t total = 0;
  for (std::size_t t = 0; t <= stage; ++t) total += class_count(t);
  return total;
}

std::vector<std::size_t> StagedSplit::class_counts() const {
  std::vector<std::size_t> out;
  for (const auto& s : stages) out.push_back(s.classes.size());
  return out;
}

std::vector<std::size_t> stage_class_counts(std::size_t num_classes, double ood_ratio, std::size_t num_stages,
                                            PartitionPolicy policy) {
  if (!(ood_ratio > 0.0 && ood_ratio < 1.0)) throw ConfigError("ood_ratio must lie in (0, 1)", "split.ood_ratio");
  if (num_stages == 0) throw ConfigError("need at least one OOD stage", "split.num_stages");
  const double raw = ood_ratio * static_cast<double>(num_classes);
  std::size_t ood_total = 0;
  if (policy == PartitionPolicy::equal) {
    const auto per_stage = static_cast<std::size_t>(std::floor(raw / static_cast<double>(num_stages) + 1e-9));
    ood_total = per_stage * num_stages;
  } else {
    ood_total = static_cast<std::size_t>(std::llround(raw));
  }
  if (ood_total >= num_classes) throw ConfigError("OOD ratio leaves no IND classes", "split.ood_ratio");
  std::vector<std::size_t> counts{num_classes - ood_total};
  for (std::size_t t = 0; t < num_stages; ++t) counts.push_back(ood_total / num_stages + (t < ood_total % num_stages ? 1 : 0));
  for (std::size_t c : counts) {
    if (c == 0) throw ConfigError("every stage needs at least one class", "split.ood_ratio");
  }
  return counts;
}

StagedSplit build_cgid_split(const LabeledCorpus& corpus, double ood_ratio, std::size_t num_stages, std::uint64_t seed,
                             PartitionPolicy policy) {
  corpus.validate();
  const auto counts = stage_class_counts(corpus.num_classes, ood_ratio, num_stages, policy);

  std::vector<Label> order(corpus.num_classes);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, tag("class-split")));
  shuffle(order, rng);

  StagedSplit split;
  split.input_dim = corpus.dim();
  split.corpus_label = order;
  std::vector<Label> global_of(corpus.num_classes);
  std::vector<std::size_t> stage_of(corpus.num_classes);
  std::size_t next = 0;
  split.stages.resize(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    for (std::size_t k = 0; k < counts[t]; ++k, ++next) {
      global_of[order[next]] = static_cast<Label>(next);
      stage_of[order[next]] = t;
      split.stages[t].classes.push_back(static_cast<Label>(next));
    }
  }

  struct Partition {
    DenseMatrix x;
    std::vector<Label> y;
    std::vector<std::size_t> rows;
  };
  std::vector<std::array<Partition, 3>> parts(counts.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Label c = corpus.labels[i];
    auto& p = parts[stage_of[c]][static_cast<std::size_t>(corpus.splits[i])];
    p.x.append_row(corpus.features.row(i));
    p.y.push_back(global_of[c]);
    p.rows.push_back(i);
  }
  for (std::size_t t = 0; t < counts.size(); ++t) {
    StageData& s = split.stages[t];
    auto& [tr, va, te] = parts[t];
    s.train = std::move(tr.x);
    s.validation = std::move(va.x);
    s.test = std::move(te.x);
    if (t == 0) {
      s.train_labels = tr.y;
      s.validation_labels = va.y;
    }
    s.sealed_train = SealedLabels(std::move(tr.y));
    s.sealed_validation = SealedLabels(std::move(va.y));
    s.sealed_test = SealedLabels(std::move(te.y));
    s.train_rows = std::move(tr.rows);
    s.validation_rows = std::move(va.rows);
    s.test_rows = std::move(te.rows);
  }
  return split;
}

}  // namespace cgid
