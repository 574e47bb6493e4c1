#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgid/numeric/matrix.hpp"
#include "cgid/plrd/prototypes.hpp"
#include "cgid/types.hpp"

namespace cgid {

enum class SelectionStrategy { random, icarl, icarl_contrary };

SelectionStrategy parse_selection_strategy(const std::string& name);
std::string to_string(SelectionStrategy s);

struct MemoryEntry {
  std::vector<double> input;
  Label label = 0;               // ground truth for IND classes, pseudo-label otherwise
  std::size_t source_index = 0;  // row in the stage training set it came from
  std::size_t stage = 0;

  bool operator==(const MemoryEntry&) const = default;
};

// Per-class exemplar store holding at most `capacity` entries per class.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity_per_class = 5) : capacity_(capacity_per_class) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
  std::size_t class_count() const noexcept { return per_class_.size(); }

  // Appends entries grouped by label; throws ContractError if a class would exceed capacity.
  void store(std::span<const MemoryEntry> entries);

  const std::vector<MemoryEntry>& entries_of(Label label) const;
  const std::map<Label, std::vector<MemoryEntry>>& classes() const noexcept { return per_class_; }

  // All entries ordered by label, then insertion.
  std::vector<const MemoryEntry*> flattened() const;
  DenseMatrix inputs() const;
  std::vector<Label> labels() const;

  bool respects_capacity() const noexcept;
  // Largest stored label, or -1 if empty.
  Label max_label() const noexcept;

  bool operator==(const ReplayMemory&) const = default;

 private:
  std::size_t capacity_;
  std::map<Label, std::vector<MemoryEntry>> per_class_;
};

// Picks at most n rows per class. random: uniform without replacement; icarl: highest cosine
// similarity to the class prototype; icarl_contrary: lowest. The icarl variants need
// `representations` (rows aligned with `inputs`) and `prototypes` indexed by label.
std::vector<MemoryEntry> memory_select(const DenseMatrix& inputs, std::span<const Label> labels, std::size_t n,
                                       SelectionStrategy strategy, const DenseMatrix* representations,
                                       const PrototypeBank* prototypes, std::uint64_t seed, std::size_t stage = 0);

enum class Origin : unsigned char { old_sample, new_sample };

// New-class rows first, then an equal number of replayed rows.
struct MixedBatch {
  DenseMatrix inputs;
  std::vector<Origin> origin;
  std::vector<Label> old_labels;    // memory label for old rows, -1 for new rows
  std::vector<std::size_t> source;  // new rows: index into the stage data; old rows: flattened memory index

  std::size_t size() const noexcept { return origin.size(); }
  std::vector<std::size_t> rows(Origin which) const;
  std::size_t count(Origin which) const;
};

// Draws |new| replay samples uniformly with replacement from the flattened memory.
// An empty memory yields a new-only batch and a logged warning.
MixedBatch assemble_batch(const DenseMatrix& new_data, std::span<const std::size_t> new_indices,
                          const ReplayMemory& memory, std::uint64_t seed);

// Probability vector over all |Y^all_t| prototypes for one sample: one-hot for old samples,
// zeros on the old block and the renormalized calibrated row on the new block for new samples.
std::vector<double> q_vector(Origin origin, std::optional<Label> old_label, std::span<const double> calibrated_new,
                             std::size_t known_old);

// Q for a whole mixed batch; the new block comes from Sinkhorn calibration of the new-head
// logits of the batch's new rows (in batch order).
DenseMatrix compute_q(const MixedBatch& batch, const DenseMatrix& new_logits, std::size_t known_old, double epsilon,
                      std::size_t iterations);

}  // namespace cgid
