#include "cgid/plrd/memory.hpp"

#include <algorithm>
#include <numeric>

#include "cgid/cluster/sinkhorn.hpp"
#include "cgid/errors.hpp"
#include "cgid/numeric/log.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {

SelectionStrategy parse_selection_strategy(const std::string& name) {
  if (name == "random") return SelectionStrategy::random;
  if (name == "icarl") return SelectionStrategy::icarl;
  if (name == "icarl_contrary") return SelectionStrategy::icarl_contrary;
  throw ConfigError("unknown selection strategy '" + name + "'");
}

std::string to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::random: return "random";
    case SelectionStrategy::icarl: return "icarl";
    case SelectionStrategy::icarl_contrary: return "icarl_contrary";
  }
  return "random";
}

std::size_t ReplayMemory::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [label, entries] : per_class_) n += entries.size();
  return n;
}

void ReplayMemory::store(std::span<const MemoryEntry> entries) {
  std::map<Label, std::size_t> incoming;
  for (const auto& e : entries) {
    if (e.label < 0) throw ContractError("ReplayMemory: negative label");
    ++incoming[e.label];
  }
  for (const auto& [label, count] : incoming) {
    const auto it = per_class_.find(label);
    const std::size_t have = it == per_class_.end() ? 0 : it->second.size();
    if (have + count > capacity_) {
      throw ContractError("ReplayMemory: class " + std::to_string(label) + " would exceed capacity " +
                          std::to_string(capacity_));
    }
  }
  for (const auto& e : entries) per_class_[e.label].push_back(e);
}

const std::vector<MemoryEntry>& ReplayMemory::entries_of(Label label) const {
  static const std::vector<MemoryEntry> none;
  const auto it = per_class_.find(label);
  return it == per_class_.end() ? none : it->second;
}

std::vector<const MemoryEntry*> ReplayMemory::flattened() const {
  std::vector<const MemoryEntry*> out;
  for (const auto& [label, entries] : per_class_)
    for (const auto& e : entries) out.push_back(&e);
  return out;
}

DenseMatrix ReplayMemory::inputs() const {
  DenseMatrix m;
  for (const auto* e : flattened()) m.append_row(e->input);
  return m;
}

std::vector<Label> ReplayMemory::labels() const {
  std::vector<Label> out;
  for (const auto* e : flattened()) out.push_back(e->label);
  return out;
}

bool ReplayMemory::respects_capacity() const noexcept {
  return std::all_of(per_class_.begin(), per_class_.end(),
                     [&](const auto& kv) { return kv.second.size() <= capacity_; });
}

Label ReplayMemory::max_label() const noexcept {
  for (auto it = per_class_.rbegin(); it != per_class_.rend(); ++it)
    if (!it->second.empty()) return it->first;
  return -1;
}

std::vector<MemoryEntry> memory_select(const DenseMatrix& inputs, std::span<const Label> labels, std::size_t n,
                                       SelectionStrategy strategy, const DenseMatrix* representations,
                                       const PrototypeBank* prototypes, std::uint64_t seed, std::size_t stage) {
  if (labels.size() != inputs.rows()) throw ShapeError("memory_select: labels and inputs differ in length");
  if (strategy != SelectionStrategy::random) {
    if (prototypes == nullptr || representations == nullptr) {
      throw ConfigError("memory_select: '" + to_string(strategy) + "' needs prototypes and representations",
                        "memory.strategy");
    }
    if (representations->rows() != inputs.rows()) throw ShapeError("memory_select: representation rows mismatch");
  }
  std::vector<MemoryEntry> out;
  if (n == 0) return out;

  std::map<Label, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  for (auto& [label, rows] : by_class) {
    if (strategy == SelectionStrategy::random) {
      Rng rng(derive_seed(seed, tag("memory-select"), static_cast<std::uint64_t>(label)));
      shuffle(rows, rng);
    } else {
      if (label < 0 || static_cast<std::size_t>(label) >= prototypes->size()) {
        throw ConfigError("memory_select: no prototype for class " + std::to_string(label), "memory.strategy");
      }
      const auto proto = prototypes->prototype(static_cast<std::size_t>(label));
      std::vector<double> sim(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        sim[k] = dot(l2_normalize(representations->row(rows[k])).values, proto);
      }
      std::vector<std::size_t> order(rows.size());
      std::iota(order.begin(), order.end(), 0);
      const bool closest = strategy == SelectionStrategy::icarl;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return closest ? sim[a] > sim[b] : sim[a] < sim[b];
      });
      std::vector<std::size_t> sorted(rows.size());
      for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = rows[order[k]];
      rows = std::move(sorted);
    }
    const std::size_t take = std::min(n, rows.size());
    for (std::size_t k = 0; k < take; ++k) {
      auto r = inputs.row(rows[k]);
      out.push_back({std::vector<double>(r.begin(), r.end()), label, rows[k], stage});
    }
  }
  return out;
}

std::vector<std::size_t> MixedBatch::rows(Origin which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < origin.size(); ++i)
    if (origin[i] == which) out.push_back(i);
  return out;
}

std::size_t MixedBatch::count(Origin which) const {
  return static_cast<std::size_t>(std::count(origin.begin(), origin.end(), which));
}

MixedBatch assemble_batch(const DenseMatrix& new_data, std::span<const std::size_t> new_indices,
                          const ReplayMemory& memory, std::uint64_t seed) {
  MixedBatch batch;
  for (std::size_t idx : new_indices) {
    batch.inputs.append_row(new_data.row(idx));
    batch.origin.push_back(Origin::new_sample);
    batch.old_labels.push_back(-1);
    batch.source.push_back(idx);
  }
  if (new_indices.empty()) return batch;
  const auto flat = memory.flattened();
  if (flat.empty()) {
    log::warning("replay memory is empty; training on new samples only");
    return batch;
  }
  Rng rng(seed);
  for (std::size_t k = 0; k < new_indices.size(); ++k) {
    const auto pick = static_cast<std::size_t>(uniform_index(rng, flat.size()));
    batch.inputs.append_row(flat[pick]->input);
    batch.origin.push_back(Origin::old_sample);
    batch.old_labels.push_back(flat[pick]->label);
    batch.source.push_back(pick);
  }
  return batch;
}

std::vector<double> q_vector(Origin origin, std::optional<Label> old_label, std::span<const double> calibrated_new,
                             std::size_t known_old) {
  std::vector<double> q(known_old + calibrated_new.size(), 0.0);
  if (origin == Origin::old_sample) {
    if (!old_label) throw ContractError("q_vector: old sample without a label");
    if (*old_label < 0 || static_cast<std::size_t>(*old_label) >= q.size()) {
      throw ContractError("q_vector: old label out of range");
    }
    q[static_cast<std::size_t>(*old_label)] = 1.0;
    return q;
  }
  double total = 0.0;
  for (double x : calibrated_new) total += x;
  if (!(total > 0.0)) throw ContractError("q_vector: calibrated assignment has no mass");
  for (std::size_t j = 0; j < calibrated_new.size(); ++j) q[known_old + j] = calibrated_new[j] / total;
  return q;
}

DenseMatrix compute_q(const MixedBatch& batch, const DenseMatrix& new_logits, std::size_t known_old, double epsilon,
                      std::size_t iterations) {
  const auto new_rows = batch.rows(Origin::new_sample);
  if (new_logits.rows() != new_rows.size()) throw ShapeError("compute_q: one logit row per new sample expected");
  const std::size_t k_new = new_logits.cols();
  DenseMatrix q(batch.size(), known_old + k_new);
  DenseMatrix calibrated;
  if (!new_rows.empty() && k_new > 0) calibrated = sinkhorn_calibrate(new_logits, epsilon, iterations).assignment;
  std::size_t next_new = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<double> row;
    if (batch.origin[i] == Origin::old_sample) {
      row = q_vector(Origin::old_sample, batch.old_labels[i], std::span<const double>(), known_old + k_new);
      row.resize(known_old + k_new);
    } else {
      row = q_vector(Origin::new_sample, std::nullopt, calibrated.row(next_new++), known_old);
    }
    std::copy(row.begin(), row.end(), q.row(i).begin());
  }
  return q;
}

}  // namespace cgid
