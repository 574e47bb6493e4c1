#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgid/numeric/matrix.hpp"
#include "cgid/types.hpp"

namespace cgid {

enum class SplitTag { train, validation, test };

std::string_view to_string(SplitTag tag);
std::optional<SplitTag> parse_split_tag(std::string_view text);

// Feature vectors with contiguous class labels 0..C-1 and a split tag per sample.
struct LabeledCorpus {
  DenseMatrix features;
  std::vector<Label> labels;
  std::vector<SplitTag> splits;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  // Throws ContractError if labels are not contiguous or a class is missing from a split.
  void validate() const;

  bool operator==(const LabeledCorpus&) const = default;
};

struct MixtureSpec {
  std::size_t num_classes = 20;
  std::size_t dim = 16;
  std::size_t train_per_class = 40;
  std::size_t validation_per_class = 10;
  std::size_t test_per_class = 20;
  // Optional per-class training counts (length num_classes) to synthesize imbalance.
  std::vector<std::size_t> train_counts;
  double class_separation = 4.0;
  double within_class_std = 1.0;
  std::uint64_t seed = 1;
};

// Gaussian class mixture. Class means are random directions scaled so the expected pairwise distance
// is class_separation·within_class_std; rows are ordered by split, then class, then draw.
LabeledCorpus generate_mixture_corpus(const MixtureSpec& spec);

// Tab-separated text: split tag, integer label, whitespace-separated decimal features.
LabeledCorpus read_embedding_corpus(std::istream& in);
LabeledCorpus load_embedding_corpus(const std::filesystem::path& path);
void write_embedding_corpus(std::ostream& out, const LabeledCorpus& corpus);
void export_embedding_corpus(const std::filesystem::path& path, const LabeledCorpus& corpus);

// Shortest round-trip decimal text for a double.
std::string format_double(double value);
void append_features(std::string& line, std::span<const double> features);

}  // namespace cgid
