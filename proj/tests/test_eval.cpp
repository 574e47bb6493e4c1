#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cgid/errors.hpp"
#include "cgid/eval/evaluate.hpp"
#include "cgid/eval/metrics.hpp"
#include "cgid/eval/report.hpp"
#include "support.hpp"

using namespace cgid;

namespace {

AccuracyMatrix two_stage(double a00, double a10, double a11) {
  AccuracyMatrix a({2, 1});
  a.push_row({a00});
  a.push_row({a10, a11});
  return a;
}

}  // namespace

TEST_CASE("cgid accuracy") {
  SUBCASE("perfect") {
    const auto a = two_stage(1, 1, 1);
    const auto m = cgid_accuracy(a, 1);
    CHECK(m.ind == 1.0);
    CHECK(m.ood == 1.0);
    CHECK(m.all == 1.0);
  }
  SUBCASE("weighted by class count") {
    const auto m = cgid_accuracy(two_stage(0.9, 0.8, 0.7), 1);
    CHECK(m.ind == doctest::Approx(0.8));
    CHECK(m.ood == doctest::Approx(0.7));
    CHECK(m.all == doctest::Approx((2 * 0.8 + 0.7) / 3).epsilon(1e-14));
    CHECK(m.all == doctest::Approx(0.7667).epsilon(1e-4));
  }
  SUBCASE("equal sizes reduce to the plain mean") {
    AccuracyMatrix a({3, 3, 3});
    a.push_row({0.5});
    a.push_row({0.4, 0.6});
    a.push_row({0.3, 0.2, 0.7});
    CHECK(cgid_accuracy(a, 2).all == doctest::Approx((0.3 + 0.2 + 0.7) / 3).epsilon(1e-14));
  }
  SUBCASE("IND stage has no OOD accuracy") {
    CHECK_THROWS_AS(cgid_accuracy(two_stage(1, 1, 1), 0), ContractError);
    CHECK(ind_accuracy(two_stage(0.9, 1, 1), 0) == 0.9);
    CHECK(all_accuracy(two_stage(0.9, 1, 1), 0) == 0.9);
  }
  SUBCASE("row validation") {
    AccuracyMatrix a({2, 1});
    CHECK_THROWS_AS(a.push_row({0.5, 0.5}), ContractError);
    CHECK_THROWS_AS(a.push_row({1.5}), ContractError);
  }
}

TEST_CASE("cgid forgetting") {
  SUBCASE("no forgetting") {
    const auto f = cgid_forgetting(two_stage(0.9, 0.9, 0.7), 1);
    CHECK(f.ind == 0.0);
    CHECK(f.ood == 0.0);
    CHECK(f.all == 0.0);
  }
  SUBCASE("hand values") {
    const auto f = cgid_forgetting(two_stage(0.9, 0.8, 0.7), 1);
    CHECK(f.ind == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(f.ood == 0.0);
    CHECK(f.all == doctest::Approx(0.2 / 3).epsilon(1e-12));
    CHECK(f.all == doctest::Approx(0.0667).epsilon(1e-3));
  }
  SUBCASE("improvement is negative forgetting") {
    AccuracyMatrix a({2, 2, 2});
    a.push_row({0.5});
    a.push_row({0.6, 0.4});
    a.push_row({0.7, 0.5, 0.3});
    const auto f = cgid_forgetting(a, 2);
    CHECK(f.ind == doctest::Approx(-0.2));
    CHECK(f.ood == doctest::Approx(-0.05));
  }
  CHECK_THROWS_AS(cgid_forgetting(two_stage(1, 1, 1), 0), ContractError);
}

TEST_CASE("loss and gain") {
  CHECK(loss_gain(two_stage(0.9, 0.9, 0.5), 1).loss == 0.0);
  CHECK_FALSE(std::signbit(loss_gain(two_stage(0.9, 0.9, 0.5), 1).loss));
  // 3·A_ALL = 2·0.9 when the OOD block scores 0 and IND holds.
  CHECK(loss_gain(two_stage(0.9, 0.9, 0.0), 1).gain == doctest::Approx(0.0));
  AccuracyMatrix fig({17, 10, 10, 10, 10, 10, 10});
  for (std::size_t t = 0; t <= 6; ++t) fig.push_row(std::vector<double>(t + 1, 1.0));
  CHECK(loss_gain(fig, 6).gain == doctest::Approx(77.0 / 17.0 - 1.0).epsilon(1e-14));
  CHECK(loss_gain(fig, 6).gain == doctest::Approx(3.53).epsilon(1e-3));
  CHECK(loss_gain(two_stage(0.8, 0.6, 0.5), 1).loss == doctest::Approx(-0.25));
  CHECK_THROWS_AS(loss_gain(two_stage(0.0, 0.5, 0.5), 1), MetricError);
}

TEST_CASE("metric identity over random matrices") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<std::size_t> sizes;
    for (int i = 0; i < 4; ++i) sizes.push_back(1 + uniform_index(rng, 20));
    AccuracyMatrix a(sizes);
    for (std::size_t t = 0; t < 4; ++t) {
      std::vector<double> row;
      for (std::size_t i = 0; i <= t; ++i) row.push_back(uniform01(rng));
      a.push_row(row);
    }
    for (std::size_t t = 1; t < 4; ++t) {
      const auto m = cgid_accuracy(a, t);
      const double blend = (static_cast<double>(sizes[0]) * m.ind + static_cast<double>(a.class_total(1, t)) * m.ood) /
                           static_cast<double>(a.class_total(0, t));
      CHECK(std::abs(blend - m.all) <= 1e-12);
    }
  }
}

TEST_CASE("alignment and scoring") {
  const std::vector<std::vector<Label>> sets{{0, 1, 2}, {3, 4}};
  SUBCASE("perfect predictions") {
    const std::vector<Label> y{0, 1, 2, 3, 4, 4};
    CHECK(align_and_score(y, y, sets, AlignmentScope::joint).accuracies == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("permuted OOD predictions") {
    const std::vector<Label> y{0, 1, 2, 3, 4, 4};
    const std::vector<Label> p{0, 1, 2, 4, 3, 3};
    CHECK(align_and_score(p, y, sets, AlignmentScope::joint).accuracies == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("hand tabulated confusion") {
    const std::vector<Label> y{0, 0, 1, 1, 2, 2, 3, 3, 3, 4, 4, 4};
    const std::vector<Label> p{0, 0, 1, 2, 2, 2, 4, 4, 3, 3, 3, 0};
    for (auto scope : {AlignmentScope::joint, AlignmentScope::per_block}) {
      const auto r = align_and_score(p, y, sets, scope);
      CHECK(r.accuracies[0] == doctest::Approx(5.0 / 6.0));
      CHECK(r.accuracies[1] == doctest::Approx(4.0 / 6.0));
    }
  }
  SUBCASE("estimated head widths leave extra clusters unmatched") {
    const std::vector<Label> y{0, 1, 2, 2, 2};
    const std::vector<Label> p{0, 1, 3, 3, 2};
    const std::vector<std::vector<Label>> s{{0, 1}, {2}};
    const auto r = align_and_score(p, y, s, AlignmentScope::joint, {2, 2});
    CHECK(r.aligned[2] == 2);
    CHECK(r.aligned[4] == kUnmatched);
    CHECK(r.accuracies[1] == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("aligned accuracy never falls below raw accuracy") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      std::vector<Label> y(60), p(60);
      for (std::size_t i = 0; i < 60; ++i) {
        y[i] = static_cast<Label>(uniform_index(rng, 5));
        p[i] = static_cast<Label>(uniform_index(rng, 5));
      }
      const auto r = align_and_score(p, y, sets, AlignmentScope::joint);
      std::size_t raw = 0, aligned = 0;
      for (std::size_t i = 0; i < 60; ++i) {
        raw += p[i] == y[i];
        aligned += r.aligned[i] == y[i];
      }
      CHECK(aligned >= raw);
    }
  }
}

TEST_CASE("compactness") {
  const std::vector<Label> labels{0, 0, 1, 1};
  const std::vector<Label> both{0, 1};
  SUBCASE("two tight pairs") {
    const double eps = 0.01;
    const DenseMatrix f{{0, eps}, {0, -eps}, {2, eps}, {2, -eps}};
    CHECK(compactness(f, labels, both) == doctest::Approx(2.0 / (2.0 * eps)).epsilon(1e-12));
  }
  SUBCASE("coincident classes") {
    const DenseMatrix f{{1, 1}, {1, 1}, {1, 1}, {1, 1}};
    CHECK(compactness(f, labels, both) == 0.0);
  }
  SUBCASE("rotation invariant") {
    const auto f = test::random_matrix(4, 2, 3);
    const double c = std::cos(0.7), s = std::sin(0.7);
    const auto rotated = matmul(f, DenseMatrix{{c, s}, {-s, c}});
    CHECK(compactness(rotated, labels, both) == doctest::Approx(compactness(f, labels, both)).epsilon(1e-12));
  }
  SUBCASE("singleton class") {
    const DenseMatrix f{{0, 0}, {1, 1}, {2, 2}};
    const std::vector<Label> l{0, 0, 1};
    CHECK_THROWS_AS(compactness(f, l, both), ContractError);
  }
}

TEST_CASE("evaluate_stage rejects mismatched heads") {
  StagedSplit split;
  split.stages.resize(2);
  split.stages[0].classes = {0, 1};
  split.stages[1].classes = {2};
  const auto model = JointModel::create({.input_dim = 2, .hidden = {3}, .feature_dim = 2, .projection_dim = 2}, 2, 1);
  CHECK_THROWS_AS(evaluate_stage(model, split, 1), ContractError);
}

TEST_CASE("reports") {
  AccuracyMatrix a({3, 2, 2});
  a.push_row({0.9});
  a.push_row({0.8, 0.75});
  a.push_row({0.7, 0.5, 0.25});
  std::vector<StageReport> stages;
  for (std::size_t t = 0; t < 3; ++t) stages.push_back(make_stage_report(a, t, "plrd", 0.6, 7));
  stages[2].compactness = {1.5, std::nullopt, 2.0};

  SUBCASE("metrics are reproducible from the stored rows") {
    CHECK(accuracy_matrix_of(stages[2]) == a);
    CHECK(stages[2].a_all == doctest::Approx(cgid_accuracy(a, 2).all));
    CHECK(stages[2].f_ind == doctest::Approx(0.2));
    CHECK_FALSE(stages[0].a_ood.has_value());
  }
  SUBCASE("structured report round trip") {
    std::stringstream ss;
    write_structured_report(ss, {{"label", "x"}}, stages);
    const auto back = read_structured_report(ss);
    CHECK(back.config["label"] == "x");
    CHECK(back.stages == stages);
    std::stringstream bad("{\"kind\":\"config\"}\nnot json\n");
    CHECK_THROWS_AS(read_structured_report(bad), IngestionError);
  }
  SUBCASE("table schema") {
    std::stringstream ss;
    write_table(ss, {});
    CHECK(ss.str() == "method,ood_ratio,stage,A_IND,F_IND,A_OOD,F_OOD,A_ALL,F_ALL,Loss,Gain,seed\n");
    std::stringstream full;
    write_table(full, stages);
    std::string header, first;
    std::getline(full, header);
    std::getline(full, first);
    CHECK(first.rfind("plrd,0.6,0,0.9,0,,,0.9,,", 0) == 0);
  }
  SUBCASE("unwritable directory") {
    CHECK_THROWS_AS(emit_report("/proc/cgid-no-such-dir/out", {}, stages, {}), IoError);
  }
  SUBCASE("files on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "cgid_report_test";
    std::filesystem::remove_all(dir);
    const auto paths = emit_report(dir, {{"label", "y"}}, stages, {});
    CHECK(std::filesystem::exists(paths.table));
    CHECK(load_structured_report(paths.structured).stages == stages);
    std::filesystem::remove_all(dir);
  }
}
