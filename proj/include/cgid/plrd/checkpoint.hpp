#pragma once

#include <filesystem>

#include <json.hpp>

#include "cgid/plrd/state.hpp"

namespace cgid {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  LearnerState state;
  nlohmann::json extras = nlohmann::json::object();  // caller-owned bookkeeping (run id, stage results, ...)
};

nlohmann::json to_json(const EncoderParams& encoder);
EncoderParams encoder_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LearnerState& state);
LearnerState learner_state_from_json(const nlohmann::json& j);

// Text snapshot with a format_version field; doubles round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws IoError on unreadable files, bad JSON, or an unsupported format version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cgid
