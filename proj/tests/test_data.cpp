#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <type_traits>

#include "cgid/data/corpus.hpp"
#include "cgid/data/split.hpp"
#include "cgid/errors.hpp"
#include "cgid/eval/evaluate.hpp"

using namespace cgid;

static_assert(!std::is_default_constructible_v<EvaluationKey>, "only the evaluation module may mint keys");
static_assert(!std::is_copy_constructible_v<TrainingScope>);

namespace {

double nearest_mean_accuracy(const LabeledCorpus& c) {
  DenseMatrix means(c.num_classes, c.dim());
  std::vector<double> counts(c.num_classes, 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.splits[i] != SplitTag::train) continue;
    const auto l = static_cast<std::size_t>(c.labels[i]);
    for (std::size_t d = 0; d < c.dim(); ++d) means(l, d) += c.features(i, d);
    counts[l] += 1.0;
  }
  for (std::size_t l = 0; l < c.num_classes; ++l)
    for (std::size_t d = 0; d < c.dim(); ++d) means(l, d) /= counts[l];
  std::size_t right = 0, total = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.splits[i] != SplitTag::test) continue;
    std::size_t best = 0;
    for (std::size_t l = 1; l < c.num_classes; ++l)
      if (squared_distance(c.features.row(i), means.row(l)) < squared_distance(c.features.row(i), means.row(best))) best = l;
    right += static_cast<Label>(best) == c.labels[i];
    ++total;
  }
  return static_cast<double>(right) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("generate_mixture_corpus") {
  SUBCASE("well separated classes are nearest-mean separable") {
    const auto c = generate_mixture_corpus(
        {.num_classes = 2, .dim = 4, .train_per_class = 30, .validation_per_class = 10, .test_per_class = 50,
         .class_separation = 100.0, .within_class_std = 1.0, .seed = 3});
    CHECK(nearest_mean_accuracy(c) >= 0.99);
  }
  SUBCASE("split sizes") {
    const auto c = generate_mixture_corpus(
        {.num_classes = 2, .dim = 3, .train_per_class = 10, .validation_per_class = 5, .test_per_class = 5});
    CHECK(std::count(c.splits.begin(), c.splits.end(), SplitTag::train) == 20);
    CHECK(std::count(c.splits.begin(), c.splits.end(), SplitTag::validation) == 10);
    CHECK(std::count(c.splits.begin(), c.splits.end(), SplitTag::test) == 10);
    CHECK_NOTHROW(c.validate());
  }
  SUBCASE("deterministic") {
    const MixtureSpec s{.num_classes = 5, .dim = 4, .seed = 17};
    CHECK(generate_mixture_corpus(s) == generate_mixture_corpus(s));
    auto t = s;
    t.seed = 18;
    CHECK_FALSE(generate_mixture_corpus(s) == generate_mixture_corpus(t));
  }
  SUBCASE("per-class training counts") {
    const auto c = generate_mixture_corpus(
        {.num_classes = 3, .dim = 3, .validation_per_class = 2, .test_per_class = 2, .train_counts = {5, 1, 9}});
    CHECK(std::count(c.splits.begin(), c.splits.end(), SplitTag::train) == 15);
  }
  SUBCASE("invalid requests") {
    CHECK_THROWS_AS(generate_mixture_corpus({.num_classes = 1}), ConfigError);
    CHECK_THROWS_AS(generate_mixture_corpus({.dim = 1}), ConfigError);
    CHECK_THROWS_AS(generate_mixture_corpus({.class_separation = 0.0}), ConfigError);
    CHECK_THROWS_AS(generate_mixture_corpus({.num_classes = 400, .dim = 2, .class_separation = 4.0}), ConfigError);
  }
}

TEST_CASE("stage_class_counts") {
  using V = std::vector<std::size_t>;
  CHECK(stage_class_counts(77, 0.6, 3, PartitionPolicy::equal) == V{32, 15, 15, 15});
  CHECK(stage_class_counts(150, 0.8, 3, PartitionPolicy::equal) == V{30, 40, 40, 40});
  CHECK(stage_class_counts(150, 0.8, 3, PartitionPolicy::near_equal) == V{30, 40, 40, 40});
  CHECK(stage_class_counts(10, 0.4, 2, PartitionPolicy::equal) == V{6, 2, 2});
  CHECK(stage_class_counts(10, 0.4, 2, PartitionPolicy::near_equal) == V{6, 2, 2});
  CHECK(stage_class_counts(77, 0.6, 3, PartitionPolicy::near_equal) == V{31, 16, 15, 15});
  CHECK_THROWS_AS(stage_class_counts(10, 0.0, 2, PartitionPolicy::equal), ConfigError);
  CHECK_THROWS_AS(stage_class_counts(10, 1.0, 2, PartitionPolicy::equal), ConfigError);
  CHECK_THROWS_AS(stage_class_counts(4, 0.2, 2, PartitionPolicy::equal), ConfigError);

  for (std::size_t c = 12; c < 60; ++c) {
    for (double r : {0.25, 0.4, 0.6, 0.75}) {
      const auto counts = stage_class_counts(c, r, 3, PartitionPolicy::near_equal);
      std::size_t ood = 0;
      for (std::size_t t = 1; t < counts.size(); ++t) ood += counts[t];
      CHECK(ood == static_cast<std::size_t>(std::llround(r * static_cast<double>(c))));
      CHECK(*std::max_element(counts.begin() + 1, counts.end()) - *std::min_element(counts.begin() + 1, counts.end()) <= 1);
    }
  }
}

TEST_CASE("build_cgid_split") {
  const auto corpus = generate_mixture_corpus({.num_classes = 10, .dim = 4, .train_per_class = 6,
                                               .validation_per_class = 3, .test_per_class = 4, .seed = 2});
  const auto split = build_cgid_split(corpus, 0.4, 2, 9);
  REQUIRE(split.stages.size() == 3);
  CHECK(split.class_counts() == std::vector<std::size_t>{6, 2, 2});
  CHECK(split.cumulative_class_count(2) == 10);

  std::set<Label> seen_classes;
  std::set<std::size_t> seen_rows;
  const auto key = eval::SealAccess::key();
  for (std::size_t t = 0; t < split.stages.size(); ++t) {
    const auto& s = split.stages[t];
    for (Label c : s.classes) CHECK(seen_classes.insert(c).second);
    for (const auto* rows : {&s.train_rows, &s.validation_rows, &s.test_rows})
      for (std::size_t r : *rows) CHECK(seen_rows.insert(r).second);
    for (Label l : s.sealed_train.open(key)) CHECK(std::find(s.classes.begin(), s.classes.end(), l) != s.classes.end());
    CHECK(s.train.rows() == s.sealed_train.size());
    CHECK(s.test.rows() == s.sealed_test.size());
    if (t == 0) {
      CHECK(s.train_labels.size() == s.train.rows());
    } else {
      CHECK(s.train_labels.empty());
      CHECK(s.validation_labels.empty());
    }
  }
  CHECK(seen_rows.size() == corpus.size());
  CHECK(build_cgid_split(corpus, 0.4, 2, 9).stages[1].train == split.stages[1].train);
  CHECK_THROWS_AS(build_cgid_split(corpus, 1.2, 2, 9), ConfigError);
}

TEST_CASE("sealed labels refuse training-path reads") {
  const SealedLabels sealed(std::vector<Label>{1, 2, 3});
  const auto key = eval::SealAccess::key();
  const auto before = seal_violation_count();
  CHECK(sealed.open(key).size() == 3);
  {
    TrainingScope scope;
    CHECK(TrainingScope::active());
    CHECK_THROWS_AS(sealed.open(key), ContractError);
  }
  CHECK_FALSE(TrainingScope::active());
  CHECK(seal_violation_count() == before + 1);
}

TEST_CASE("embedding corpus files") {
  SUBCASE("small file") {
    std::istringstream in("train\t7\t1 2 3\ntrain\t3\t4 5 6\nval\t7\t1 1 1\nval\t3\t0 0 0\n"
                          "test\t7\t2 2 2\ntest\t3\t3 3 3\n");
    const auto c = read_embedding_corpus(in);
    CHECK(c.size() == 6);
    CHECK(c.num_classes == 2);
    CHECK(c.dim() == 3);
    CHECK(c.labels[0] == 0);
    CHECK(c.labels[1] == 1);
  }
  SUBCASE("class missing from test") {
    std::istringstream in("train\t0\t1 2\ntrain\t1\t1 2\nval\t0\t1 2\nval\t1\t1 2\ntest\t0\t1 2\n");
    CHECK_THROWS_AS(read_embedding_corpus(in), IngestionError);
  }
  SUBCASE("malformed rows report their line") {
    std::istringstream in("train\t0\t1 2\ntrain\t1\t1 x\n");
    try {
      read_embedding_corpus(in);
      FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
      CHECK(e.line() == 2);
    }
    std::istringstream ragged("train\t0\t1 2\ntrain\t1\t1 2 3\n");
    CHECK_THROWS_AS(read_embedding_corpus(ragged), IngestionError);
    std::istringstream tag("holdout\t0\t1 2\n");
    CHECK_THROWS_AS(read_embedding_corpus(tag), IngestionError);
  }
  SUBCASE("export then reload is lossless") {
    const auto c = generate_mixture_corpus({.num_classes = 4, .dim = 5, .seed = 8});
    const auto path = std::filesystem::temp_directory_path() / "cgid_roundtrip.tsv";
    export_embedding_corpus(path, c);
    CHECK(load_embedding_corpus(path) == c);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_embedding_corpus(path), IoError);
  }
}
