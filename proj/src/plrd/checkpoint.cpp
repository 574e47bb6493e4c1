#include "cgid/plrd/checkpoint.hpp"

#include <fstream>

#include "cgid/errors.hpp"

namespace cgid {

using nlohmann::json;

namespace {

json matrix_json(const DenseMatrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

DenseMatrix matrix_from(const json& j) {
  return DenseMatrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                     j.at("values").get<std::vector<double>>());
}

json linear_json(const Linear& l) { return {{"weight", matrix_json(l.weight)}, {"bias", l.bias}}; }

Linear linear_from(const json& j) {
  Linear l;
  l.weight = matrix_from(j.at("weight"));
  l.bias = j.at("bias").get<std::vector<double>>();
  if (l.bias.size() != l.weight.rows()) throw ShapeError("checkpoint: bias length does not match weight rows");
  return l;
}

json encoder_json(const EncoderParams& e) {
  json hidden = json::array();
  for (const auto& h : e.hidden) hidden.push_back(linear_json(h));
  return {{"hidden", hidden},
          {"output", linear_json(e.output)},
          {"projection", linear_json(e.projection)},
          {"activation", to_string(e.activation)},
          {"frozen", e.frozen},
          {"version", e.version}};
}

EncoderParams encoder_from(const json& j) {
  EncoderParams e;
  for (const auto& h : j.at("hidden")) e.hidden.push_back(linear_from(h));
  e.output = linear_from(j.at("output"));
  e.projection = linear_from(j.at("projection"));
  e.activation = parse_activation(j.at("activation").get<std::string>());
  e.frozen = j.at("frozen").get<std::vector<bool>>();
  e.version = j.at("version").get<std::uint64_t>();
  return e;
}

}  // namespace

json to_json(const EncoderParams& encoder) { return encoder_json(encoder); }

EncoderParams encoder_params_from_json(const json& j) { return encoder_from(j); }

json to_json(const LearnerState& state) {
  const JointModel& m = state.model;
  json model = {{"encoder", encoder_json(m.encoder)},
                {"classifier", linear_json(m.classifier)},
                {"old_classes", m.old_classes},
                {"new_classes", m.new_classes}};
  model["frozen_encoder"] = m.frozen_encoder ? encoder_json(*m.frozen_encoder) : json(nullptr);

  json entries = json::array();
  for (const auto* e : state.memory.flattened()) {
    entries.push_back({{"input", e->input}, {"label", e->label}, {"source_index", e->source_index}, {"stage", e->stage}});
  }
  return {{"model", model},
          {"memory", {{"capacity", state.memory.capacity()}, {"entries", entries}}},
          {"bank", {{"gamma", state.bank.gamma()}, {"prototypes", matrix_json(state.bank.matrix())}}},
          {"stage", state.stage}};
}

LearnerState learner_state_from_json(const json& j) {
  LearnerState s;
  const json& model = j.at("model");
  s.model.encoder = encoder_from(model.at("encoder"));
  s.model.classifier = linear_from(model.at("classifier"));
  s.model.old_classes = model.at("old_classes").get<std::size_t>();
  s.model.new_classes = model.at("new_classes").get<std::size_t>();
  if (!model.at("frozen_encoder").is_null()) s.model.frozen_encoder = encoder_from(model.at("frozen_encoder"));
  if (s.model.classifier.out_features() != s.model.logit_dim()) {
    throw ShapeError("checkpoint: classifier rows do not match the head block sizes");
  }

  const json& memory = j.at("memory");
  s.memory = ReplayMemory(memory.at("capacity").get<std::size_t>());
  std::vector<MemoryEntry> entries;
  for (const auto& e : memory.at("entries")) {
    entries.push_back({e.at("input").get<std::vector<double>>(), e.at("label").get<Label>(),
                       e.at("source_index").get<std::size_t>(), e.at("stage").get<std::size_t>()});
  }
  s.memory.store(entries);

  const json& bank = j.at("bank");
  s.bank = PrototypeBank::from_matrix(matrix_from(bank.at("prototypes")), bank.at("gamma").get<double>());
  s.stage = j.at("stage").get<std::size_t>();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const json doc = {{"format_version", kCheckpointFormatVersion},
                    {"state", to_json(checkpoint.state)},
                    {"extras", checkpoint.extras}};
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << doc.dump() << '\n';
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto version = doc.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw IoError("checkpoint " + path.string() + " has unsupported format_version " + std::to_string(version));
  }
  try {
    return {learner_state_from_json(doc.at("state")), doc.value("extras", json::object())};
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace cgid
