#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgid/baselines/baselines.hpp"
#include "cgid/data/split.hpp"
#include "cgid/eval/evaluate.hpp"
#include "cgid/numeric/encoder.hpp"
#include "cgid/plrd/ind_trainer.hpp"
#include "cgid/plrd/plrd_trainer.hpp"

namespace cgid {

enum class Method { plrd, kmeans, deepaligned, e2e };
enum class KMode { ground_truth, estimate_self, estimate_ind_frozen };

Method parse_method(const std::string& name);
std::string to_string(Method m);
KMode parse_k_mode(const std::string& name);
std::string to_string(KMode m);

struct DataConfig {
  std::string source = "mixture";  // "mixture" or "file"
  std::string path;                // embedding file when source == "file"
  MixtureSpec mixture;
  std::int64_t seed = -1;          // -1 follows the run seed
};

struct SplitConfig {
  double ood_ratio = 0.6;
  std::size_t num_stages = 3;
  PartitionPolicy policy = PartitionPolicy::equal;
  std::int64_t seed = -1;  // -1 follows the run seed
};

struct KConfig {
  KMode mode = KMode::ground_truth;
  std::size_t k_prime = 0;  // 0 means twice the true stage class count
  std::size_t max_iterations = 100;
};

struct RunConfig {
  std::string label;  // method column of the report; empty means the method name
  Method method = Method::plrd;
  std::int64_t seed = 1;
  DataConfig data;
  SplitConfig split;
  EncoderConfig model;  // input_dim is taken from the data
  IndTrainConfig ind;
  std::size_t memory_per_class = 5;
  SelectionStrategy selection = SelectionStrategy::random;
  PlrdConfig plrd;
  std::optional<double> gamma;  // unset: 0.7 up to a 60% OOD ratio, 0.9 above
  BaselineConfig baseline;
  std::optional<double> replay_weight;  // unset: 3 for pipelines, 1 for e2e
  KConfig k;
  AlignmentScope alignment = AlignmentScope::joint;
  bool feature_dumps = true;
  bool checkpoints = true;

  std::string method_label() const { return label.empty() ? to_string(method) : label; }
  std::uint64_t data_seed() const;
  std::uint64_t split_seed() const;
  double effective_gamma() const;
  double effective_replay_weight() const;
  // PLRD and baseline settings with the shared fields (memory, selection, γ, λ) filled in.
  PlrdConfig plrd_settings() const;
  BaselineConfig baseline_settings() const;
};

// Every field, defaults included, as nested sections.
nlohmann::json to_json(const RunConfig& config);

// Strict parse over the defaults: unknown keys, wrong types and invalid values raise ConfigError
// naming the dotted path.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies "a.b.c=value" to a config document; value is parsed as JSON when possible, otherwise
// taken as a string. The path must name an existing field.
void apply_override(nlohmann::json& doc, const std::string& assignment);

std::vector<std::string> preset_names();
// Throws ConfigError for unknown names.
nlohmann::json preset(const std::string& name);

}  // namespace cgid
