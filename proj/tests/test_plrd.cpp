#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cgid/cluster/hungarian.hpp"
#include "cgid/data/corpus.hpp"
#include "cgid/data/split.hpp"
#include "cgid/errors.hpp"
#include "cgid/eval/evaluate.hpp"
#include "cgid/numeric/log.hpp"
#include "cgid/plrd/checkpoint.hpp"
#include "cgid/plrd/ind_trainer.hpp"
#include "cgid/plrd/losses.hpp"
#include "cgid/plrd/memory.hpp"
#include "cgid/plrd/plrd_trainer.hpp"
#include "gradient_checks.hpp"

using namespace cgid;

namespace {

MemoryEntry entry(Label label, std::vector<double> input, std::size_t source = 0) {
  return MemoryEntry{std::move(input), label, source, 0};
}

// Trains IND on stage 0 of a well separated mixture and opens the first OOD stage.
struct Pipeline {
  StagedSplit split;
  LearnerState state;
};

Pipeline separated_pipeline(std::uint64_t seed) {
  Pipeline p;
  const auto corpus = generate_mixture_corpus({.num_classes = 6, .dim = 8, .train_per_class = 40,
                                               .validation_per_class = 10, .test_per_class = 20,
                                               .class_separation = 12.0, .within_class_std = 1.0, .seed = seed});
  p.split = build_cgid_split(corpus, 0.5, 1, seed);
  const auto& ind = p.split.stages[0];
  p.state.model = JointModel::create({.input_dim = 8, .hidden = {32, 32}, .feature_dim = 16, .projection_dim = 8},
                                     ind.classes.size(), seed);
  train_ind_stage(p.state.model, ind.train, ind.train_labels, ind.validation, ind.validation_labels,
                  {.epochs = 20, .batch_size = 16, .dropout = 0.1, .optimizer = {.peak_lr = 0.05}}, seed);
  close_ind_stage(p.state, ind.train, ind.train_labels, 5, SelectionStrategy::random, seed);
  return p;
}

}  // namespace

TEST_CASE("loss gradients match finite differences through the network") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    CAPTURE(seed);
    CHECK(test::ce_gradient_error(seed) < test::kFdTolerance);
    CHECK(test::pcl_gradient_error(seed) < test::kFdTolerance);
    CHECK(test::ins_gradient_error(seed) < test::kFdTolerance);
    CHECK(test::fd_gradient_error(seed) < test::kFdTolerance);
    CHECK(test::total_gradient_error(seed) < test::kFdTolerance);
  }
}

TEST_CASE("loss values") {
  SUBCASE("cross-entropy by hand") {
    const DenseMatrix l{{1.0, 2.0, 0.0}};
    const std::vector<Label> y{1};
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + 1.0);
    CHECK(cross_entropy(l, y).value == doctest::Approx(lse - 2.0).epsilon(1e-14));
    const std::vector<double> w{2.5};
    CHECK(cross_entropy(l, y, w).value == doctest::Approx(2.5 * (lse - 2.0)).epsilon(1e-14));
  }
  SUBCASE("pcl with a single prototype is zero") {
    const DenseMatrix z{{0.3, -1.0, 2.0}};
    CHECK(pcl_loss(z, DenseMatrix{{1.0, 0.0, 0.0}}, DenseMatrix{{1.0}}, 0.5).value == doctest::Approx(0.0));
  }
  SUBCASE("pcl with orthogonal prototypes") {
    const DenseMatrix mu{{1.0, 0.0}, {0.0, 1.0}};
    const auto r = pcl_loss(DenseMatrix{{1.0, 0.0}}, mu, DenseMatrix{{1.0, 0.0}}, 1.0);
    CHECK(r.value == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(r.value == doctest::Approx(0.3133).epsilon(1e-4));
  }
  SUBCASE("instance loss on orthogonal pair") {
    const DenseMatrix z{{1.0, 0.0}, {0.0, 1.0}};
    CHECK(instance_cl_loss(z, z, 1.0).value == doctest::Approx(-2.0).epsilon(1e-14));
  }
  SUBCASE("instance loss depends only on directions") {
    const auto z = test::random_matrix(4, 3, 5);
    const auto za = test::random_matrix(4, 3, 6);
    auto z2 = z, za2 = za;
    scale_in_place(z2, 3.7);
    scale_in_place(za2, 0.2);
    CHECK(instance_cl_loss(z, za, 0.5).value == doctest::Approx(instance_cl_loss(z2, za2, 0.5).value).epsilon(1e-12));
  }
  SUBCASE("feature distillation") {
    CHECK(feature_distill_loss(DenseMatrix{{1.0, 2.0}}, DenseMatrix{{1.0, 2.0}}).value == 0.0);
    const auto r = feature_distill_loss(DenseMatrix{{4.0}}, DenseMatrix{{1.0}});
    CHECK(r.value == 9.0);
    CHECK(r.grad(0, 0) == 6.0);
    CHECK_THROWS_AS(feature_distill_loss(DenseMatrix(2, 2), DenseMatrix(2, 3)), ContractError);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(instance_cl_loss(DenseMatrix{{1.0, 0.0}}, DenseMatrix{{1.0, 0.0}}, 0.5), ContractError);
    CHECK_THROWS_AS(pcl_loss(DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, DenseMatrix{{1.0}}, 0.0), ConfigError);
    CHECK_THROWS_AS(instance_cl_loss(DenseMatrix(2, 2, 1.0), DenseMatrix(2, 2, 1.0), -1.0), ConfigError);
  }
  SUBCASE("direct pcl and instance gradients on raw projections") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto z = test::random_matrix(4, 3, seed);
      auto za = test::random_matrix(4, 3, seed + 9);
      const auto mu = test::random_matrix(3, 3, seed + 1);
      const auto q = test::random_distribution(4, 3, seed + 2);
      const auto p = pcl_loss(z, mu, q, 0.5);
      CHECK(test::relative_error(p.grad.values(),
                                 test::numeric_gradient(z.values(), [&] { return pcl_loss(z, mu, q, 0.5).value; })) <
            1e-4);
      const auto ins = instance_cl_loss(z, za, 0.5);
      CHECK(test::relative_error(ins.grad_a.values(), test::numeric_gradient(z.values(), [&] {
                                   return instance_cl_loss(z, za, 0.5).value;
                                 })) < 1e-4);
      CHECK(test::relative_error(ins.grad_b.values(), test::numeric_gradient(za.values(), [&] {
                                   return instance_cl_loss(z, za, 0.5).value;
                                 })) < 1e-4);
    }
  }
}

TEST_CASE("replay memory") {
  const DenseMatrix x{{1, 0}, {0, 1}, {1, 1}, {-1, 0}, {2, 2}, {0, -3}};
  const std::vector<Label> y{0, 0, 0, 1, 1, 1};
  SUBCASE("n = 0 selects nothing") {
    CHECK(memory_select(x, y, 0, SelectionStrategy::random, nullptr, nullptr, 1).empty());
  }
  SUBCASE("small classes contribute everything") {
    const auto e = memory_select(x, y, 5, SelectionStrategy::random, nullptr, nullptr, 1);
    CHECK(e.size() == 6);
  }
  SUBCASE("icarl picks the most similar rows, contrary the least") {
    const DenseMatrix reps{{1.0, 0.1}, {0.0, 1.0}, {1.0, 1.0}, {0.9, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    const std::vector<Label> labels{0, 0, 0, 0, 1, 1};
    PrototypeBank bank(2, 0.7);
    bank.append(std::vector<double>{1.0, 0.0});
    bank.append(std::vector<double>{0.0, 1.0});
    const auto near = memory_select(reps, labels, 2, SelectionStrategy::icarl, &reps, &bank, 0);
    const auto far = memory_select(reps, labels, 2, SelectionStrategy::icarl_contrary, &reps, &bank, 0);
    // Exhaustive sort of class 0 by cosine to (1, 0).
    std::vector<std::size_t> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return reps(a, 0) / norm(reps.row(a)) > reps(b, 0) / norm(reps.row(b));
    });
    std::vector<std::size_t> got_near, got_far;
    for (const auto& e : near)
      if (e.label == 0) got_near.push_back(e.source_index);
    for (const auto& e : far)
      if (e.label == 0) got_far.push_back(e.source_index);
    std::sort(got_near.begin(), got_near.end());
    std::sort(got_far.begin(), got_far.end());
    std::vector<std::size_t> want_near{order[0], order[1]}, want_far{order[2], order[3]};
    std::sort(want_near.begin(), want_near.end());
    std::sort(want_far.begin(), want_far.end());
    CHECK(got_near == want_near);
    CHECK(got_far == want_far);
  }
  SUBCASE("icarl without prototypes") {
    CHECK_THROWS_AS(memory_select(x, y, 2, SelectionStrategy::icarl, nullptr, nullptr, 0), ConfigError);
  }
  SUBCASE("capacity") {
    ReplayMemory m(2);
    const std::vector<MemoryEntry> two{entry(0, {1, 2}), entry(0, {3, 4})};
    m.store(two);
    CHECK(m.respects_capacity());
    CHECK_THROWS_AS(m.store(std::vector<MemoryEntry>{entry(0, {5, 6})}), ContractError);
    CHECK(m.max_label() == 0);
    CHECK(ReplayMemory(3).max_label() == -1);
  }
  SUBCASE("random selection is seeded") {
    const auto a = memory_select(x, y, 2, SelectionStrategy::random, nullptr, nullptr, 4);
    const auto b = memory_select(x, y, 2, SelectionStrategy::random, nullptr, nullptr, 4);
    CHECK(a == b);
  }
}

TEST_CASE("assemble_batch") {
  const auto data = test::random_matrix(10, 3, 1);
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), 0);
  ReplayMemory mem(5);
  mem.store(std::vector<MemoryEntry>{entry(0, {1, 1, 1}), entry(1, {2, 2, 2})});
  SUBCASE("equal halves") {
    const auto b = assemble_batch(data, idx, mem, 3);
    CHECK(b.size() == 16);
    CHECK(b.count(Origin::old_sample) == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(b.origin[i] == Origin::new_sample);
  }
  SUBCASE("single stored sample repeats") {
    ReplayMemory one(5);
    one.store(std::vector<MemoryEntry>{entry(3, {7, 8, 9})});
    const std::vector<std::size_t> four{0, 1, 2, 3};
    const auto b = assemble_batch(data, four, one, 3);
    for (std::size_t r : b.rows(Origin::old_sample)) {
      CHECK(b.inputs(r, 0) == 7.0);
      CHECK(b.old_labels[r] == 3);
    }
    CHECK(b.count(Origin::old_sample) == 4);
  }
  SUBCASE("empty memory falls back to new rows with a warning") {
    const auto before = cgid::log::warning_count();
    const auto prev = cgid::log::level();
    cgid::log::set_level(cgid::log::Level::silent);
    const auto b = assemble_batch(data, idx, ReplayMemory(5), 3);
    cgid::log::set_level(prev);
    CHECK(b.size() == 8);
    CHECK(cgid::log::warning_count() == before + 1);
  }
  SUBCASE("replay draws are uniform") {
    ReplayMemory five(5);
    std::vector<MemoryEntry> es;
    for (int k = 0; k < 5; ++k) es.push_back(entry(0, {static_cast<double>(k), 0, 0}, static_cast<std::size_t>(k)));
    five.store(es);
    std::vector<std::size_t> counts(5, 0);
    const std::vector<std::size_t> hundred_rows(100, 0);
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto b = assemble_batch(data, hundred_rows, five, s);
      for (std::size_t r : b.rows(Origin::old_sample)) ++counts[b.source[r]];
    }
    const double sigma = std::sqrt(10000.0 * 0.2 * 0.8);
    for (std::size_t c : counts) CHECK(std::abs(static_cast<double>(c) - 2000.0) <= 3.0 * sigma);
  }
}

TEST_CASE("q vectors") {
  SUBCASE("old sample is one-hot") {
    const std::vector<double> none(3, 0.0);
    CHECK(q_vector(Origin::old_sample, 2, none, 4) == std::vector<double>{0, 0, 1, 0, 0, 0, 0});
    CHECK_THROWS_AS(q_vector(Origin::old_sample, std::nullopt, none, 4), ContractError);
  }
  SUBCASE("identical new rows are uniform over the new block") {
    MixedBatch b;
    b.inputs = DenseMatrix(3, 1);
    b.origin = {Origin::new_sample, Origin::new_sample, Origin::old_sample};
    b.old_labels = {-1, -1, 1};
    b.source = {0, 1, 0};
    const auto q = compute_q(b, DenseMatrix(2, 3, 0.4), 2, 0.05, 3);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(q(i, 0) == 0.0);
      CHECK(q(i, 1) == 0.0);
      for (std::size_t j = 2; j < 5; ++j) CHECK(q(i, j) == doctest::Approx(1.0 / 3.0));
    }
    CHECK(q(2, 1) == 1.0);
  }
  SUBCASE("diagonal logits follow the hand recurrence") {
    MixedBatch b;
    b.inputs = DenseMatrix(2, 1);
    b.origin = {Origin::new_sample, Origin::new_sample};
    b.old_labels = {-1, -1};
    b.source = {0, 1};
    const DenseMatrix l{{0.5, 0.0}, {0.0, 0.5}};
    const auto q = compute_q(b, l, 1, 0.05, 3);
    const auto ref = test::reference_sinkhorn(l, 0.05, 3);
    CHECK(q(0, 1) == doctest::Approx(ref(0, 0)).epsilon(1e-12));
    CHECK(q(1, 2) == doctest::Approx(ref(1, 1)).epsilon(1e-12));
    CHECK(q(0, 1) > 0.99);
  }
}

TEST_CASE("prototype bank") {
  const DenseMatrix z{{3.0, 4.0}, {1.0, 0.0}};
  const DenseMatrix q{{0.2, 0.8}, {0.3, 0.7}};
  auto make = [](double gamma) {
    PrototypeBank b(2, gamma);
    b.append(std::vector<double>{1.0, 0.0});
    b.append(std::vector<double>{0.0, 1.0});
    return b;
  };
  SUBCASE("gamma 1 keeps the bank") {
    auto b = make(1.0);
    const auto before = b;
    b.update(z, q);
    CHECK(b == before);
  }
  SUBCASE("gamma 0 copies the sample") {
    auto b = make(0.0);
    b.update(DenseMatrix{{3.0, 4.0}}, DenseMatrix{{0.0, 1.0}});
    CHECK(b.prototype(1)[0] == doctest::Approx(0.6));
    CHECK(b.prototype(1)[1] == doctest::Approx(0.8));
  }
  SUBCASE("two sequential updates at gamma 0.7") {
    auto b = make(0.7);
    b.update(z, q);
    // step 1: 0.7·(0,1) + 0.3·(0.6,0.8) = (0.18, 0.94); step 2 mixes in (1, 0).
    double m0 = 0.18, m1 = 0.94;
    double n = std::hypot(m0, m1);
    m0 /= n;
    m1 /= n;
    m0 = 0.7 * m0 + 0.3;
    m1 = 0.7 * m1;
    n = std::hypot(m0, m1);
    CHECK(b.prototype(1)[0] == doctest::Approx(m0 / n).epsilon(1e-14));
    CHECK(b.prototype(1)[1] == doctest::Approx(m1 / n).epsilon(1e-14));
    CHECK(b.prototype(0)[0] == 1.0);
    CHECK(b.all_unit_norm());
  }
  SUBCASE("argmax ties go to the lowest index") {
    auto b = make(0.0);
    b.update(DenseMatrix{{0.0, -1.0}}, DenseMatrix{{0.5, 0.5}});
    CHECK(b.prototype(0)[1] == doctest::Approx(-1.0));
  }
  SUBCASE("pseudo-labels") {
    PrototypeBank b(2, 0.7);
    for (int k = 0; k < 5; ++k) b.append(std::vector<double>{1.0, 0.0});
    b.append(std::vector<double>{1.0, 1.0});
    b.append(std::vector<double>{1.0, -1.0});
    CHECK(assign_pseudo_labels(DenseMatrix{{2.0, 2.0}}, b, 5, 7) == std::vector<Label>{5});
    CHECK(assign_pseudo_labels(DenseMatrix{{1.0, 0.0}}, b, 5, 7) == std::vector<Label>{5});
    CHECK(assign_pseudo_labels(DenseMatrix{{1.0, -1.0}}, b, 5, 7) == std::vector<Label>{6});
    PrototypeBank r(3, 0.7);
    r.append_random(3, 9);
    const auto pts = test::random_matrix(10, 3, 10);
    auto scaled = pts;
    scale_in_place(scaled, 4.0);
    const auto got = assign_pseudo_labels(pts, r, 0, 3);
    CHECK(got == assign_pseudo_labels(scaled, r, 0, 3));
    for (std::size_t i = 0; i < 10; ++i) {
      Label best = 0;
      double best_sim = -2.0;
      const auto zi = l2_normalize(pts.row(i)).values;
      for (Label j = 0; j < 3; ++j) {
        const double s = dot(zi, r.prototype(static_cast<std::size_t>(j)));
        if (s > best_sim) best_sim = s, best = j;
      }
      CHECK(got[i] == best);
    }
  }
}

TEST_CASE("classifier growth") {
  auto m = JointModel::create({.input_dim = 4, .hidden = {6}, .feature_dim = 3, .projection_dim = 2}, 5, 1);
  const auto x = test::random_matrix(3, 4, 2);
  const auto before = joint_logits(m, x);
  expand_classifier(m, 0, 3);
  CHECK(joint_logits(m, x) == before);
  expand_classifier(m, 3, 3);
  CHECK(m.logit_dim() == 8);
  const auto after = joint_logits(m, x);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(after(i, j) == before(i, j));
  CHECK_THROWS_AS(expand_classifier(m, 2, 4), ContractError);
  merge_heads(m);
  CHECK(m.old_classes == 8);
  CHECK(m.new_classes == 0);
}

TEST_CASE("train_ind_stage") {
  const auto corpus = generate_mixture_corpus({.num_classes = 2, .dim = 4, .train_per_class = 30,
                                               .validation_per_class = 20, .test_per_class = 5,
                                               .class_separation = 8.0, .seed = 4});
  DenseMatrix tx(0, 4), vx(0, 4);
  std::vector<Label> ty, vy;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.splits[i] == SplitTag::train) tx.append_row(corpus.features.row(i)), ty.push_back(corpus.labels[i]);
    if (corpus.splits[i] == SplitTag::validation) vx.append_row(corpus.features.row(i)), vy.push_back(corpus.labels[i]);
  }
  const EncoderConfig ec{.input_dim = 4, .hidden = {8}, .feature_dim = 4, .projection_dim = 2};
  SUBCASE("separable data") {
    auto m = JointModel::create(ec, 2, 5);
    const auto r = train_ind_stage(m, tx, ty, vx, vy, {.epochs = 10, .batch_size = 8}, 6);
    CHECK(r.validation_accuracy >= 0.95);
    CHECK(accuracy(m, vx, vy) == r.validation_accuracy);
  }
  SUBCASE("zero epochs") {
    auto m = JointModel::create(ec, 2, 5);
    const auto copy = m;
    train_ind_stage(m, tx, ty, vx, vy, {.epochs = 0}, 6);
    CHECK(m.encoder.same_values(copy.encoder));
    CHECK(m.classifier == copy.classifier);
  }
  SUBCASE("deterministic") {
    auto a = JointModel::create(ec, 2, 5);
    auto b = JointModel::create(ec, 2, 5);
    train_ind_stage(a, tx, ty, vx, vy, {.epochs = 3, .batch_size = 8}, 6);
    train_ind_stage(b, tx, ty, vx, vy, {.epochs = 3, .batch_size = 8}, 6);
    CHECK(a.encoder.same_values(b.encoder));
  }
}

TEST_CASE("train_ood_stage") {
  auto p = separated_pipeline(21);
  const PlrdConfig cfg{.epochs = 30, .batch_size = 16, .dropout = 0.5, .optimizer = {.peak_lr = 0.01}};
  SUBCASE("zero new classes is a no-op") {
    const auto dim = p.state.model.logit_dim();
    const auto x = p.split.stages[0].test;
    const auto before = joint_logits(p.state.model, x);
    train_ood_stage(p.state, p.split.stages[1].train, 0, cfg, 3);
    CHECK(p.state.model.logit_dim() == dim);
    CHECK(joint_logits(p.state.model, x) == before);
    CHECK(p.state.stage == 1);
  }
  SUBCASE("separated OOD classes are discovered") {
    const auto& s1 = p.split.stages[1];
    const EncoderParams start = p.state.model.encoder;
    std::size_t frozen_checks = 0, additivity_checks = 0;
    StageObserver obs;
    obs.on_expanded = [&](const LearnerState& st) { CHECK(st.model.frozen_encoder->same_values(start)); };
    obs.on_batch = [&](const LearnerState& st, const LossBreakdown& b) {
      frozen_checks += st.model.frozen_encoder->same_values(start);
      additivity_checks += std::abs(b.total - (b.ce + b.pcl + b.ins + b.fd)) <= 1e-12;
      CHECK(st.bank.all_unit_norm());
    };
    const auto log = train_ood_stage(p.state, s1.train, s1.classes.size(), cfg, 5, obs);
    CHECK(frozen_checks == log.batches);
    CHECK(additivity_checks == log.batches);
    CHECK(p.state.model.old_classes == 6);
    CHECK(p.state.memory.respects_capacity());
    CHECK(p.state.memory.max_label() < 6);

    const auto key = eval::SealAccess::key();
    const auto truth = s1.sealed_test.open(key);
    const auto pred = predict(p.state.model, s1.test);
    const auto map = hungarian_align(pred, truth);
    std::size_t right = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) right += map.map(pred[i]) == truth[i];
    CHECK(static_cast<double>(right) / static_cast<double>(pred.size()) >= 0.9);
  }
}

TEST_CASE("checkpoints") {
  auto p = separated_pipeline(3);
  open_stage(p.state, 2, {}, 4);
  const auto dir = std::filesystem::temp_directory_path() / "cgid_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "stage.json";
  save_checkpoint(path, {p.state, {{"note", "x"}}});
  const auto back = load_checkpoint(path);
  CHECK(back.state.model.encoder.same_values(p.state.model.encoder));
  CHECK(back.state.model.classifier == p.state.model.classifier);
  CHECK(back.state.model.frozen_encoder.has_value());
  CHECK(back.state.memory == p.state.memory);
  CHECK(back.state.bank == p.state.bank);
  CHECK(back.extras["note"] == "x");

  { std::ofstream(path) << "{not json"; }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  { std::ofstream(path) << R"({"format_version": 99})"; }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}
