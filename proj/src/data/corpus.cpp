#include "cgid/data/corpus.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {
namespace {

constexpr std::size_t kMeanPlacementAttempts = 200;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

DenseMatrix place_means(const MixtureSpec& spec, Rng& rng) {
  const double target = spec.class_separation * spec.within_class_std;
  // Random directions on a sphere of radius r are nearly orthogonal, so E|m_a - m_b| ≈ r·sqrt(2).
  const double radius = target / std::sqrt(2.0);
  for (std::size_t attempt = 0; attempt < kMeanPlacementAttempts; ++attempt) {
    DenseMatrix means(spec.num_classes, spec.dim);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      auto row = means.row(c);
      for (double& x : row) x = standard_normal(rng);
      const double n = norm(row);
      for (double& x : row) x *= radius / n;
    }
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < spec.num_classes; ++a)
      for (std::size_t b = a + 1; b < spec.num_classes; ++b)
        min_dist = std::min(min_dist, std::sqrt(squared_distance(means.row(a), means.row(b))));
    if (min_dist >= 0.25 * target) return means;
  }
  throw ConfigError("cannot place " + std::to_string(spec.num_classes) + " class means at separation " +
                    format_double(spec.class_separation) + " in " + std::to_string(spec.dim) + " dimensions");
}

}  // namespace

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "val";
    case SplitTag::test: return "test";
  }
  return "train";
}

std::optional<SplitTag> parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::train;
  if (text == "val" || text == "validation" || text == "dev") return SplitTag::validation;
  if (text == "test") return SplitTag::test;
  return std::nullopt;
}

void LabeledCorpus::validate() const {
  if (features.rows() != labels.size() || splits.size() != labels.size()) {
    throw ContractError("corpus: features, labels and split tags differ in length");
  }
  std::vector<std::array<std::size_t, 3>> counts(num_classes, {0, 0, 0});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ContractError("corpus: label " + std::to_string(labels[i]) + " outside 0.." +
                          std::to_string(num_classes) + "-1");
    }
    ++counts[labels[i]][static_cast<std::size_t>(splits[i])];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (counts[c][s] == 0) {
        throw ContractError("corpus: class " + std::to_string(c) + " has no samples in split '" +
                            std::string(to_string(static_cast<SplitTag>(s))) + "'");
      }
    }
  }
}

LabeledCorpus generate_mixture_corpus(const MixtureSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("mixture needs at least 2 classes", "data.num_classes");
  if (spec.dim < 2) throw ConfigError("mixture needs at least 2 dimensions", "data.dim");
  if (!(spec.class_separation > 0.0)) throw ConfigError("separation must be positive", "data.class_separation");
  if (!(spec.within_class_std > 0.0)) throw ConfigError("std must be positive", "data.within_class_std");
  if (!spec.train_counts.empty() && spec.train_counts.size() != spec.num_classes) {
    throw ConfigError("train_counts must list one count per class", "data.train_counts");
  }
  if (spec.train_per_class == 0 && spec.train_counts.empty()) throw ConfigError("need training samples", "data.train_per_class");
  if (spec.validation_per_class == 0 || spec.test_per_class == 0) {
    throw ConfigError("every class needs validation and test samples", "data");
  }

  Rng rng(derive_seed(spec.seed, tag("means")));
  const DenseMatrix means = place_means(spec, rng);

  LabeledCorpus corpus;
  corpus.num_classes = spec.num_classes;
  Rng sample_rng(derive_seed(spec.seed, tag("samples")));
  std::vector<double> row(spec.dim);
  for (SplitTag split : {SplitTag::train, SplitTag::validation, SplitTag::test}) {
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      std::size_t count = split == SplitTag::train        ? (spec.train_counts.empty() ? spec.train_per_class
                                                                                       : spec.train_counts[c])
                          : split == SplitTag::validation ? spec.validation_per_class
                                                          : spec.test_per_class;
      for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t d = 0; d < spec.dim; ++d) row[d] = means(c, d) + spec.within_class_std * standard_normal(sample_rng);
        corpus.features.append_row(row);
        corpus.labels.push_back(static_cast<Label>(c));
        corpus.splits.push_back(split);
      }
    }
  }
  corpus.validate();
  return corpus;
}

LabeledCorpus read_embedding_corpus(std::istream& in) {
  LabeledCorpus corpus;
  std::map<long long, Label> reindex;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) throw IngestionError("expected '<split>\\t<label>\\t<features>'", line_no);

    const auto split = parse_split_tag(std::string_view(line).substr(0, tab1));
    if (!split) throw IngestionError("unknown split tag '" + line.substr(0, tab1) + "'", line_no);

    long long raw_label = 0;
    const char* lb = line.data() + tab1 + 1;
    const char* le = line.data() + tab2;
    auto [lp, lec] = std::from_chars(lb, le, raw_label);
    if (lec != std::errc() || lp != le) throw IngestionError("malformed label '" + std::string(lb, le) + "'", line_no);

    row.clear();
    const char* p = line.data() + tab2 + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && is_space(*p)) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && !is_space(*next))) {
        const char* tok_end = p;
        while (tok_end < end && !is_space(*tok_end)) ++tok_end;
        throw IngestionError("malformed feature value '" + std::string(p, tok_end) + "'", line_no);
      }
      if (!std::isfinite(v)) throw IngestionError("non-finite feature value", line_no);
      row.push_back(v);
      p = next;
    }
    if (row.empty()) throw IngestionError("row has no features", line_no);
    if (corpus.features.rows() > 0 && row.size() != corpus.features.cols()) {
      throw IngestionError("row has " + std::to_string(row.size()) + " features, expected " +
                               std::to_string(corpus.features.cols()),
                           line_no);
    }
    auto [it, inserted] = reindex.emplace(raw_label, static_cast<Label>(reindex.size()));
    corpus.features.append_row(row);
    corpus.labels.push_back(it->second);
    corpus.splits.push_back(*split);
  }
  corpus.num_classes = reindex.size();
  if (corpus.size() == 0) throw IngestionError("corpus is empty", line_no);
  try {
    corpus.validate();
  } catch (const ContractError& e) {
    throw IngestionError(e.what(), line_no);
  }
  return corpus;
}

LabeledCorpus load_embedding_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  return read_embedding_corpus(in);
}

std::string format_double(double value) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, p);
}

void append_features(std::string& line, std::span<const double> features) {
  char buf[64];
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (j > 0) line.push_back(' ');
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, features[j]);
    line.append(buf, p);
  }
}

void write_embedding_corpus(std::ostream& out, const LabeledCorpus& corpus) {
  std::string line;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    line.assign(to_string(corpus.splits[i]));
    line.push_back('\t');
    line.append(std::to_string(corpus.labels[i]));
    line.push_back('\t');
    append_features(line, corpus.features.row(i));
    line.push_back('\n');
    out << line;
  }
}

void export_embedding_corpus(const std::filesystem::path& path, const LabeledCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  write_embedding_corpus(out, corpus);
  if (!out) throw IoError("failed writing corpus file " + path.string());
}

}  // namespace cgid
