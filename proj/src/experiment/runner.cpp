#include "cgid/experiment/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "cgid/cluster/kmeans.hpp"
#include "cgid/errors.hpp"
#include "cgid/numeric/log.hpp"
#include "cgid/numeric/rng.hpp"
#include "cgid/plrd/checkpoint.hpp"

namespace cgid {

using nlohmann::json;

void InvariantLog::check(bool ok, const std::string& what) {
  ++checks;
  if (ok) return;
  ++violations;
  if (messages.size() < 20) messages.push_back(what);
  log::warning("invariant violated: " + what);
}

LabeledCorpus load_corpus(const RunConfig& config) {
  if (config.data.source == "file") return load_embedding_corpus(config.data.path);
  MixtureSpec spec = config.data.mixture;
  spec.seed = config.data_seed();
  return generate_mixture_corpus(spec);
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t stage) {
  return dir / "checkpoints" / ("stage" + std::to_string(stage) + ".json");
}

std::optional<std::size_t> newest_checkpoint(const std::filesystem::path& dir, std::size_t last_stage) {
  for (std::size_t t = last_stage + 1; t-- > 0;) {
    if (std::filesystem::exists(checkpoint_path(dir, t))) return t;
  }
  return std::nullopt;
}

json optional_vector_json(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return out;
}

std::vector<double> vector_from(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  return out;
}

DenseMatrix probe_rows(const DenseMatrix& source, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min(count, source.rows()); ++i) idx.push_back(i);
  return select_rows(source, idx);
}

// Bookkeeping carried across stages and through checkpoints.
struct Progress {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> head_blocks;
  std::vector<std::size_t> estimated_k;
  std::vector<std::vector<double>> compactness;
  std::optional<EncoderParams> ind_encoder;
  std::size_t checks = 0;
  std::size_t violations = 0;

  json to_json_doc(const RunConfig& config) const {
    json comp = json::array();
    for (const auto& c : compactness) comp.push_back(optional_vector_json(c));
    return {{"config", to_json(config)},
            {"accuracy_rows", rows},
            {"head_blocks", head_blocks},
            {"estimated_k", estimated_k},
            {"compactness", comp},
            {"ind_encoder", ind_encoder ? to_json(*ind_encoder) : json(nullptr)},
            {"invariant_checks", checks},
            {"invariant_violations", violations}};
  }

  static Progress from_json_doc(const json& j) {
    Progress p;
    p.rows = j.at("accuracy_rows").get<std::vector<std::vector<double>>>();
    p.head_blocks = j.at("head_blocks").get<std::vector<std::size_t>>();
    p.estimated_k = j.at("estimated_k").get<std::vector<std::size_t>>();
    for (const auto& c : j.at("compactness")) p.compactness.push_back(vector_from(c));
    if (!j.at("ind_encoder").is_null()) p.ind_encoder = encoder_params_from_json(j.at("ind_encoder"));
    p.checks = j.at("invariant_checks").get<std::size_t>();
    p.violations = j.at("invariant_violations").get<std::size_t>();
    return p;
  }
};

void check_stage_close(const LearnerState& state, bool plrd, InvariantLog& inv) {
  const auto& m = state.model;
  const std::string at = "stage " + std::to_string(state.stage) + ": ";
  inv.check(m.new_classes == 0, at + "new-head block not merged at stage close");
  inv.check(m.classifier.out_features() == m.logit_dim(), at + "classifier rows differ from the head block sizes");
  inv.check(state.memory.respects_capacity(), at + "memory exceeds its per-class capacity");
  inv.check(state.memory.max_label() < static_cast<Label>(m.logit_dim()), at + "memory holds an unknown label");
  if (plrd && state.stage > 0) {
    inv.check(state.bank.size() == m.logit_dim(), at + "prototype count differs from the known-class count");
    inv.check(state.bank.all_unit_norm(1e-9), at + "prototype lost unit norm");
  }
}

void write_feature_dump_file(const std::filesystem::path& dir, std::size_t t, const StageEvaluation& ev) {
  std::filesystem::create_directories(dir);
  const auto path = dir / ("features_stage" + std::to_string(t) + ".tsv");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_feature_dump(out, ev);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

RunResult run_experiment(const RunConfig& config, const RunOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t seals_before = seal_violation_count();
  RunResult result;
  result.config = config;
  const bool plrd = config.method == Method::plrd;
  const bool write = !options.output_dir.empty();
  const auto seed = static_cast<std::uint64_t>(config.seed);

  const LabeledCorpus corpus = load_corpus(config);
  const StagedSplit split =
      build_cgid_split(corpus, config.split.ood_ratio, config.split.num_stages, config.split_seed(), config.split.policy);
  EncoderConfig encoder_config = config.model;
  encoder_config.input_dim = split.input_dim;
  const std::size_t last_stage = split.num_ood_stages();

  LearnerState state;
  Progress progress;
  InvariantLog& inv = result.invariants;
  std::size_t next_stage = 0;

  const auto save = [&](std::size_t t) {
    if (!write || !config.checkpoints) return;
    std::filesystem::create_directories(options.output_dir / "checkpoints");
    progress.checks = inv.checks;
    progress.violations = inv.violations;
    save_checkpoint(checkpoint_path(options.output_dir, t), {state, progress.to_json_doc(config)});
  };
  const auto record = [&](std::size_t t) {
    const StageEvaluation ev = evaluate_stage(state.model, split, t, config.alignment, progress.head_blocks);
    progress.rows.push_back(ev.row);
    progress.compactness.push_back(ev.compactness);
    if (write && config.feature_dumps) write_feature_dump_file(options.output_dir, t, ev);
  };

  if (options.resume && write) {
    if (const auto t = newest_checkpoint(options.output_dir, last_stage)) {
      Checkpoint ck = load_checkpoint(checkpoint_path(options.output_dir, *t));
      if (ck.extras.value("config", json()) != to_json(config)) {
        throw ConfigError("checkpoint in " + options.output_dir.string() + " was written for a different config",
                          "resume");
      }
      state = std::move(ck.state);
      progress = Progress::from_json_doc(ck.extras);
      inv.checks = progress.checks;
      inv.violations = progress.violations;
      next_stage = *t + 1;
      result.resumed_from = next_stage;
      log::info("resuming after stage " + std::to_string(*t));
    }
  }

  if (next_stage == 0) {
    const StageData& ind = split.stages[0];
    state.model = JointModel::create(encoder_config, ind.classes.size(), derive_seed(seed, tag("model")));
    {
      TrainingScope scope;
      train_ind_stage(state.model, ind.train, ind.train_labels, ind.validation, ind.validation_labels, config.ind,
                      derive_seed(seed, tag("ind")));
      close_ind_stage(state, ind.train, ind.train_labels, config.memory_per_class, config.selection,
                      derive_seed(seed, tag("ind-close")));
    }
    check_stage_close(state, plrd, inv);
    progress.head_blocks = {ind.classes.size()};
    progress.estimated_k = {ind.classes.size()};
    progress.ind_encoder = state.model.encoder;
    record(0);
    save(0);
    next_stage = 1;
  }

  for (std::size_t t = next_stage; t <= last_stage; ++t) {
    const StageData& stage = split.stages[t];
    const std::uint64_t stage_seed = derive_seed(seed, tag("stage"), t);
    const std::size_t true_k = stage.classes.size();
    std::size_t k = true_k;
    if (config.k.mode != KMode::ground_truth) {
      const EncoderParams& extractor =
          config.k.mode == KMode::estimate_self ? state.model.encoder : *progress.ind_encoder;
      const std::size_t k_prime =
          std::min(stage.train.rows(), config.k.k_prime > 0 ? config.k.k_prime : 2 * true_k);
      k = estimate_num_classes(encoder_features(extractor, stage.train), k_prime,
                               derive_seed(stage_seed, tag("estimate-k")), config.k.max_iterations);
      k = std::clamp<std::size_t>(k, 1, stage.train.rows());
    }

    const DenseMatrix probe = probe_rows(split.stages[0].test, 16);
    const DenseMatrix before = joint_logits(state.model, probe);
    const EncoderParams pre_stage = state.model.encoder;
    const std::size_t old_before = state.model.logit_dim();
    const std::string at = "stage " + std::to_string(t) + ": ";

    StageObserver observer;
    observer.on_expanded = [&](const LearnerState& s) {
      const DenseMatrix after = joint_logits(s.model, probe);
      bool preserved = after.rows() == before.rows() && after.cols() == old_before + k;
      for (std::size_t i = 0; preserved && i < before.rows(); ++i)
        for (std::size_t j = 0; j < old_before; ++j) preserved = preserved && after(i, j) == before(i, j);
      inv.check(preserved, at + "old-block logits changed by head expansion");
      inv.check(s.model.frozen_encoder && s.model.frozen_encoder->same_values(pre_stage),
                at + "frozen encoder copy differs from the pre-stage encoder");
    };
    observer.on_batch = [&](const LearnerState& s, const LossBreakdown&) {
      inv.check(s.model.frozen_encoder && s.model.frozen_encoder->same_values(pre_stage),
                at + "frozen encoder copy changed during the stage");
    };
    observer.on_closed = [&](const LearnerState& s) { check_stage_close(s, plrd, inv); };

    {
      TrainingScope scope;
      if (plrd) {
        train_ood_stage(state, stage.train, k, config.plrd_settings(), stage_seed, observer);
      } else {
        run_baseline_stage(state, stage.train, k, config.baseline_settings(), stage_seed, observer);
      }
    }
    progress.head_blocks.push_back(k);
    progress.estimated_k.push_back(k);
    record(t);
    save(t);
  }

  result.accuracy = AccuracyMatrix(split.class_counts());
  for (const auto& row : progress.rows) result.accuracy.push_row(row);
  for (std::size_t t = 0; t <= last_stage; ++t) {
    StageReport r = make_stage_report(result.accuracy, t, config.method_label(), config.split.ood_ratio, config.seed);
    for (double c : progress.compactness[t]) {
      r.compactness.push_back(std::isfinite(c) ? std::optional<double>(c) : std::nullopt);
    }
    r.true_k = split.class_count(t);
    r.estimated_k = progress.estimated_k[t];
    result.reports.push_back(std::move(r));
  }
  result.head_blocks = progress.head_blocks;
  result.seal_violations = seal_violation_count() - seals_before;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (write) {
    result.paths = emit_report(options.output_dir, to_json(config), result.reports, {});
    const json timing = {{"seconds", result.seconds},
                         {"resumed_from_stage", result.resumed_from},
                         {"invariant_checks", inv.checks},
                         {"invariant_violations", inv.violations},
                         {"seal_violations", result.seal_violations}};
    std::ofstream out(options.output_dir / "timing.json", std::ios::trunc);
    out << timing.dump(2) << '\n';
  }
  return result;
}

std::vector<SweepEntry> plan_sweep(const RunConfig& base, const std::vector<Method>& methods,
                                   const std::vector<double>& ratios, const std::vector<std::int64_t>& seeds,
                                   const std::filesystem::path& root) {
  const std::vector<Method> ms = methods.empty() ? std::vector<Method>{base.method} : methods;
  const std::vector<double> rs = ratios.empty() ? std::vector<double>{base.split.ood_ratio} : ratios;
  const std::vector<std::int64_t> ss = seeds.empty() ? std::vector<std::int64_t>{base.seed} : seeds;
  std::vector<SweepEntry> out;
  for (Method m : ms)
    for (double r : rs)
      for (std::int64_t s : ss) {
        RunConfig c = base;
        c.method = m;
        if (methods.size() > 1) c.label.clear();
        c.split.ood_ratio = r;
        c.seed = s;
        std::ostringstream name;
        name << c.method_label() << "_r" << static_cast<int>(std::lround(r * 100)) << "_s" << s;
        out.push_back({c, root.empty() ? root : root / name.str()});
      }
  return out;
}

std::size_t default_worker_count() {
  if (const char* env = std::getenv("CGID_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

std::vector<RunResult> run_sweep(const std::vector<SweepEntry>& entries, std::size_t workers) {
  if (workers == 0) workers = default_worker_count();
  workers = std::max<std::size_t>(1, std::min(workers, entries.size()));
  std::vector<RunResult> results(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        results[i] = run_experiment(entries[i].config, {entries[i].output_dir, false});
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace cgid
