#include "cgid/experiment/config.hpp"

#include <fstream>
#include <string_view>

#include "cgid/errors.hpp"

namespace cgid {

using nlohmann::json;

Method parse_method(const std::string& name) {
  if (name == "plrd") return Method::plrd;
  if (name == "kmeans") return Method::kmeans;
  if (name == "deepaligned") return Method::deepaligned;
  if (name == "e2e") return Method::e2e;
  throw ConfigError("unknown method '" + name + "' (expected plrd, kmeans, deepaligned or e2e)", "run.method");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::plrd: return "plrd";
    case Method::kmeans: return "kmeans";
    case Method::deepaligned: return "deepaligned";
    case Method::e2e: return "e2e";
  }
  return "plrd";
}

KMode parse_k_mode(const std::string& name) {
  if (name == "ground_truth") return KMode::ground_truth;
  if (name == "estimate_self") return KMode::estimate_self;
  if (name == "estimate_ind_frozen") return KMode::estimate_ind_frozen;
  throw ConfigError("unknown K mode '" + name + "'", "k.mode");
}

std::string to_string(KMode m) {
  switch (m) {
    case KMode::ground_truth: return "ground_truth";
    case KMode::estimate_self: return "estimate_self";
    case KMode::estimate_ind_frozen: return "estimate_ind_frozen";
  }
  return "ground_truth";
}

std::uint64_t RunConfig::data_seed() const {
  return static_cast<std::uint64_t>(data.seed < 0 ? seed : data.seed);
}

std::uint64_t RunConfig::split_seed() const {
  return static_cast<std::uint64_t>(split.seed < 0 ? seed : split.seed);
}

double RunConfig::effective_gamma() const {
  if (gamma) return *gamma;
  return split.ood_ratio > 0.6 + 1e-9 ? 0.9 : 0.7;
}

double RunConfig::effective_replay_weight() const {
  if (replay_weight) return *replay_weight;
  return method == Method::e2e ? 1.0 : 3.0;
}

PlrdConfig RunConfig::plrd_settings() const {
  PlrdConfig c = plrd;
  c.gamma = effective_gamma();
  c.memory_per_class = memory_per_class;
  c.selection = selection;
  return c;
}

BaselineConfig RunConfig::baseline_settings() const {
  BaselineConfig c = baseline;
  switch (method) {
    case Method::kmeans: c.method = BaselineMethod::kmeans; break;
    case Method::deepaligned: c.method = BaselineMethod::deepaligned; break;
    case Method::e2e: c.method = BaselineMethod::e2e; break;
    case Method::plrd: break;
  }
  c.replay_weight = effective_replay_weight();
  c.memory_per_class = memory_per_class;
  c.selection = selection;
  return c;
}

namespace {

json optimizer_json(const SgdConfig& s) {
  return {{"lr", s.peak_lr},
          {"warmup_ratio", s.warmup_ratio},
          {"weight_decay", s.weight_decay},
          {"momentum", s.momentum},
          {"schedule", to_string(s.schedule)}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const RunConfig& c) {
  const auto& m = c.data.mixture;
  const auto& p = c.plrd;
  const auto& b = c.baseline;
  return {
      {"run", {{"label", c.label}, {"method", to_string(c.method)}, {"seed", c.seed}}},
      {"data",
       {{"source", c.data.source},
        {"path", c.data.path},
        {"seed", c.data.seed},
        {"num_classes", m.num_classes},
        {"dim", m.dim},
        {"train_per_class", m.train_per_class},
        {"validation_per_class", m.validation_per_class},
        {"test_per_class", m.test_per_class},
        {"train_counts", m.train_counts},
        {"separation", m.class_separation},
        {"std", m.within_class_std}}},
      {"split",
       {{"ood_ratio", c.split.ood_ratio},
        {"num_stages", c.split.num_stages},
        {"policy", to_string(c.split.policy)},
        {"seed", c.split.seed}}},
      {"model",
       {{"hidden", c.model.hidden},
        {"feature_dim", c.model.feature_dim},
        {"projection_dim", c.model.projection_dim},
        {"activation", to_string(c.model.activation)}}},
      {"ind",
       {{"epochs", c.ind.epochs},
        {"batch_size", c.ind.batch_size},
        {"dropout", c.ind.dropout},
        {"optimizer", optimizer_json(c.ind.optimizer)}}},
      {"memory", {{"per_class", c.memory_per_class}, {"strategy", to_string(c.selection)}}},
      {"plrd",
       {{"epochs", p.epochs},
        {"batch_size", p.batch_size},
        {"dropout", p.dropout},
        {"tau", p.tau},
        {"gamma", optional_json(c.gamma)},
        {"sinkhorn_epsilon", p.sinkhorn_epsilon},
        {"sinkhorn_iterations", p.sinkhorn_iterations},
        {"weights", {{"ce", p.weights.ce}, {"pcl", p.weights.pcl}, {"ins", p.weights.ins}, {"fd", p.weights.fd}}},
        {"optimizer", optimizer_json(p.optimizer)}}},
      {"baseline",
       {{"replay_weight", optional_json(c.replay_weight)},
        {"epochs", b.epochs},
        {"batch_size", b.batch_size},
        {"dropout", b.dropout},
        {"kmeans_iterations", b.kmeans_iterations},
        {"align_rounds", b.align_rounds},
        {"e2e_temperature", b.e2e_temperature},
        {"sinkhorn_epsilon", b.sinkhorn_epsilon},
        {"sinkhorn_iterations", b.sinkhorn_iterations},
        {"heads", b.heads},
        {"optimizer", optimizer_json(b.optimizer)}}},
      {"k", {{"mode", to_string(c.k.mode)}, {"k_prime", c.k.k_prime}, {"max_iterations", c.k.max_iterations}}},
      {"eval", {{"alignment", to_string(c.alignment)}}},
      {"output", {{"feature_dumps", c.feature_dumps}, {"checkpoints", c.checkpoints}}},
  };
}

namespace {

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

bool same_kind(const json& reference, const json& value) {
  if (reference.is_null()) return value.is_null() || value.is_number();
  if (reference.is_number()) return value.is_number();
  if (reference.is_string()) return value.is_string();
  if (reference.is_boolean()) return value.is_boolean();
  if (reference.is_array()) return value.is_array();
  if (reference.is_object()) return value.is_object();
  return false;
}

void merge_strict(json& into, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("expected a section object", path.empty() ? "<root>" : path);
  for (const auto& [key, value] : user.items()) {
    const std::string here = join(path, key);
    if (!into.contains(key)) throw ConfigError("unknown key", here);
    json& slot = into[key];
    if (!same_kind(slot, value)) throw ConfigError("wrong type (expected like " + slot.dump() + ")", here);
    if (slot.is_object()) {
      merge_strict(slot, value, here);
    } else {
      slot = value;
    }
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& node(const std::string& path) const {
    const json* cur = &root_;
    std::size_t start = 0;
    while (start <= path.size()) {
      const std::size_t dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      cur = &cur->at(key);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *cur;
  }

  double number(const std::string& path) const {
    const json& n = node(path);
    if (!n.is_number()) throw ConfigError("expected a number", path);
    return n.get<double>();
  }

  std::optional<double> optional_number(const std::string& path) const {
    const json& n = node(path);
    if (n.is_null()) return std::nullopt;
    return number(path);
  }

  std::int64_t integer(const std::string& path) const {
    const json& n = node(path);
    if (!n.is_number_integer()) throw ConfigError("expected an integer", path);
    return n.get<std::int64_t>();
  }

  std::size_t count(const std::string& path) const {
    const auto v = integer(path);
    if (v < 0) throw ConfigError("expected a non-negative integer", path);
    return static_cast<std::size_t>(v);
  }

  std::vector<std::size_t> counts(const std::string& path) const {
    std::vector<std::size_t> out;
    const json& n = node(path);
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (!n[i].is_number_integer() || n[i].get<std::int64_t>() < 0) {
        throw ConfigError("expected non-negative integers", path + "[" + std::to_string(i) + "]");
      }
      out.push_back(n[i].get<std::size_t>());
    }
    return out;
  }

  std::string text(const std::string& path) const { return node(path).get<std::string>(); }
  bool flag(const std::string& path) const { return node(path).get<bool>(); }

  template <typename F>
  auto parse(const std::string& path, F&& parser) const {
    try {
      return parser(text(path));
    } catch (const ConfigError& e) {
      if (!e.path().empty()) throw;
      throw ConfigError(e.what(), path);
    }
  }

 private:
  const json& root_;
};

void require(bool ok, const std::string& what, const std::string& path) {
  if (!ok) throw ConfigError(what, path);
}

SgdConfig read_optimizer(const Reader& r, const std::string& base) {
  SgdConfig s;
  s.peak_lr = r.number(base + ".lr");
  s.warmup_ratio = r.number(base + ".warmup_ratio");
  s.weight_decay = r.number(base + ".weight_decay");
  s.momentum = r.number(base + ".momentum");
  s.schedule = r.parse(base + ".schedule", [](const std::string& v) { return parse_lr_schedule(v); });
  require(s.peak_lr >= 0.0, "must be non-negative", base + ".lr");
  require(s.warmup_ratio >= 0.0 && s.warmup_ratio <= 1.0, "must lie in [0, 1]", base + ".warmup_ratio");
  require(s.weight_decay >= 0.0, "must be non-negative", base + ".weight_decay");
  require(s.momentum >= 0.0 && s.momentum < 1.0, "must lie in [0, 1)", base + ".momentum");
  return s;
}

void require_dropout(double p, const std::string& path) { require(p >= 0.0 && p < 1.0, "must lie in [0, 1)", path); }

}  // namespace

RunConfig run_config_from_json(const json& user) {
  json doc = to_json(RunConfig{});
  merge_strict(doc, user, "");
  const Reader r(doc);
  RunConfig c;

  c.label = r.text("run.label");
  c.method = r.parse("run.method", [](const std::string& v) { return parse_method(v); });
  c.seed = r.integer("run.seed");
  require(c.seed >= 0, "must be non-negative", "run.seed");

  c.data.source = r.text("data.source");
  require(c.data.source == "mixture" || c.data.source == "file", "must be 'mixture' or 'file'", "data.source");
  c.data.path = r.text("data.path");
  require(c.data.source != "file" || !c.data.path.empty(), "a path is required for file data", "data.path");
  c.data.seed = r.integer("data.seed");
  auto& m = c.data.mixture;
  m.num_classes = r.count("data.num_classes");
  require(m.num_classes >= 2, "at least 2 classes are required", "data.num_classes");
  m.dim = r.count("data.dim");
  require(m.dim >= 1, "must be positive", "data.dim");
  m.train_per_class = r.count("data.train_per_class");
  m.validation_per_class = r.count("data.validation_per_class");
  m.test_per_class = r.count("data.test_per_class");
  m.train_counts = r.counts("data.train_counts");
  require(m.train_counts.empty() || m.train_counts.size() == m.num_classes, "needs one entry per class",
          "data.train_counts");
  m.class_separation = r.number("data.separation");
  require(m.class_separation >= 0.0, "must be non-negative", "data.separation");
  m.within_class_std = r.number("data.std");
  require(m.within_class_std > 0.0, "must be positive", "data.std");
  m.seed = c.data_seed();

  c.split.ood_ratio = r.number("split.ood_ratio");
  require(c.split.ood_ratio > 0.0 && c.split.ood_ratio < 1.0, "must lie in (0, 1)", "split.ood_ratio");
  c.split.num_stages = r.count("split.num_stages");
  require(c.split.num_stages >= 1, "at least one OOD stage is required", "split.num_stages");
  c.split.policy = r.parse("split.policy", [](const std::string& v) { return parse_partition_policy(v); });
  c.split.seed = r.integer("split.seed");

  c.model.hidden = r.counts("model.hidden");
  for (std::size_t i = 0; i < c.model.hidden.size(); ++i) {
    require(c.model.hidden[i] > 0, "must be positive", "model.hidden[" + std::to_string(i) + "]");
  }
  c.model.feature_dim = r.count("model.feature_dim");
  require(c.model.feature_dim > 0, "must be positive", "model.feature_dim");
  c.model.projection_dim = r.count("model.projection_dim");
  require(c.model.projection_dim > 0, "must be positive", "model.projection_dim");
  c.model.activation = r.parse("model.activation", [](const std::string& v) { return parse_activation(v); });

  c.ind.epochs = r.count("ind.epochs");
  c.ind.batch_size = r.count("ind.batch_size");
  require(c.ind.batch_size > 0, "must be positive", "ind.batch_size");
  c.ind.dropout = r.number("ind.dropout");
  require_dropout(c.ind.dropout, "ind.dropout");
  c.ind.optimizer = read_optimizer(r, "ind.optimizer");

  c.memory_per_class = r.count("memory.per_class");
  c.selection = r.parse("memory.strategy", [](const std::string& v) { return parse_selection_strategy(v); });

  auto& p = c.plrd;
  p.epochs = r.count("plrd.epochs");
  p.batch_size = r.count("plrd.batch_size");
  require(p.batch_size > 0, "must be positive", "plrd.batch_size");
  p.dropout = r.number("plrd.dropout");
  require_dropout(p.dropout, "plrd.dropout");
  p.tau = r.number("plrd.tau");
  require(p.tau > 0.0, "must be positive", "plrd.tau");
  c.gamma = r.optional_number("plrd.gamma");
  require(!c.gamma || (*c.gamma >= 0.0 && *c.gamma <= 1.0), "must lie in [0, 1]", "plrd.gamma");
  p.sinkhorn_epsilon = r.number("plrd.sinkhorn_epsilon");
  require(p.sinkhorn_epsilon > 0.0, "must be positive", "plrd.sinkhorn_epsilon");
  p.sinkhorn_iterations = r.count("plrd.sinkhorn_iterations");
  for (const char* term : {"ce", "pcl", "ins", "fd"}) {
    const std::string path = std::string("plrd.weights.") + term;
    require(r.number(path) >= 0.0, "must be non-negative", path);
  }
  p.weights = {r.number("plrd.weights.ce"), r.number("plrd.weights.pcl"), r.number("plrd.weights.ins"),
               r.number("plrd.weights.fd")};
  p.optimizer = read_optimizer(r, "plrd.optimizer");

  auto& b = c.baseline;
  c.replay_weight = r.optional_number("baseline.replay_weight");
  require(!c.replay_weight || *c.replay_weight >= 0.0, "must be non-negative", "baseline.replay_weight");
  b.epochs = r.count("baseline.epochs");
  b.batch_size = r.count("baseline.batch_size");
  require(b.batch_size > 0, "must be positive", "baseline.batch_size");
  b.dropout = r.number("baseline.dropout");
  require_dropout(b.dropout, "baseline.dropout");
  b.kmeans_iterations = r.count("baseline.kmeans_iterations");
  require(b.kmeans_iterations > 0, "must be positive", "baseline.kmeans_iterations");
  b.align_rounds = r.count("baseline.align_rounds");
  require(b.align_rounds > 0, "must be positive", "baseline.align_rounds");
  b.e2e_temperature = r.number("baseline.e2e_temperature");
  require(b.e2e_temperature > 0.0, "must be positive", "baseline.e2e_temperature");
  b.sinkhorn_epsilon = r.number("baseline.sinkhorn_epsilon");
  require(b.sinkhorn_epsilon > 0.0, "must be positive", "baseline.sinkhorn_epsilon");
  b.sinkhorn_iterations = r.count("baseline.sinkhorn_iterations");
  b.heads = r.count("baseline.heads");
  require(b.heads == 1, "only a single clustering head is supported", "baseline.heads");
  b.optimizer = read_optimizer(r, "baseline.optimizer");

  c.k.mode = r.parse("k.mode", [](const std::string& v) { return parse_k_mode(v); });
  c.k.k_prime = r.count("k.k_prime");
  c.k.max_iterations = r.count("k.max_iterations");
  require(c.k.max_iterations > 0, "must be positive", "k.max_iterations");

  c.alignment = r.parse("eval.alignment", [](const std::string& v) { return parse_alignment_scope(v); });
  c.feature_dumps = r.flag("output.feature_dumps");
  c.checkpoints = r.flag("output.checkpoints");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), path.string());
  }
  return run_config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like section.key=value", assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  const json defaults = to_json(RunConfig{});

  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  const json* ref = &defaults;
  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!ref->is_object() || !ref->contains(key)) throw ConfigError("unknown key", path);
    ref = &ref->at(key);
    if (!cur->is_object()) *cur = json::object();
    if (dot == std::string::npos) {
      // A bare word for a string field stays a string even if it parses as JSON.
      if (ref->is_string() && !value.is_string()) value = raw;
      if (!same_kind(*ref, value)) throw ConfigError("wrong type (expected like " + ref->dump() + ")", path);
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

std::vector<std::string> preset_names() { return {"desk-banking-like", "desk-clinc-like", "smoke"}; }

json preset(const std::string& name) {
  if (name == "desk-banking-like") {
    return json::parse(R"({
      "data": {"num_classes": 20, "dim": 16, "train_per_class": 40, "validation_per_class": 10,
               "test_per_class": 20, "separation": 4.0, "std": 1.0},
      "split": {"ood_ratio": 0.6, "num_stages": 3},
      "model": {"hidden": [64, 64], "feature_dim": 32, "projection_dim": 16},
      "ind": {"epochs": 30},
      "memory": {"per_class": 5},
      "plrd": {"epochs": 30},
      "baseline": {"epochs": 30}
    })");
  }
  if (name == "desk-clinc-like") {
    return json::parse(R"({
      "data": {"num_classes": 30, "dim": 16, "train_per_class": 30, "validation_per_class": 10,
               "test_per_class": 20, "separation": 4.5, "std": 1.0},
      "split": {"ood_ratio": 0.6, "num_stages": 3},
      "model": {"hidden": [64, 64], "feature_dim": 32, "projection_dim": 16},
      "ind": {"epochs": 30},
      "memory": {"per_class": 5},
      "plrd": {"epochs": 30},
      "baseline": {"epochs": 30}
    })");
  }
  if (name == "smoke") {
    return json::parse(R"({
      "data": {"num_classes": 8, "dim": 6, "train_per_class": 12, "validation_per_class": 4,
               "test_per_class": 6, "separation": 6.0},
      "split": {"ood_ratio": 0.5, "num_stages": 2},
      "model": {"hidden": [16], "feature_dim": 8, "projection_dim": 4},
      "ind": {"epochs": 5},
      "plrd": {"epochs": 3, "batch_size": 8},
      "baseline": {"epochs": 3, "batch_size": 8, "align_rounds": 3}
    })");
  }
  throw ConfigError("unknown preset '" + name + "'", "preset");
}

}  // namespace cgid
