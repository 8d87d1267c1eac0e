// SPDX-License-Identifier: Apache-2.0
#include "uncurl/models/checkpoint.hpp"

#include <stdexcept>

#include "json.hpp"
#include "uncurl/io.hpp"

namespace uncurl {

using nlohmann::json;

namespace {

json tensors_to_json(const std::vector<Var>& params, const std::vector<std::string>& names) {
  json out = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({{"name", names[i]}, {"shape", params[i].shape()}, {"data", params[i].value().values()}});
  }
  return out;
}

std::vector<Tensor> tensors_from_json(const json& doc, const std::vector<std::string>& names) {
  const json& arr = doc.at("tensors");
  if (!arr.is_array() || arr.size() != names.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(names.size()) + " tensors");
  }
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const json& t = arr[i];
    if (t.at("name").get<std::string>() != names[i]) {
      throw std::runtime_error("checkpoint: tensor " + std::to_string(i) + " should be '" + names[i] + "'");
    }
    out.emplace_back(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>());
  }
  return out;
}

json parse_header(const std::string& text, const std::string& kind) {
  json doc = json::parse(text);
  if (doc.value("format", "") != kCheckpointFormat) throw std::runtime_error("not an uncurl checkpoint");
  const int version = doc.value("version", -1);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  if (doc.value("kind", "") != kind) {
    throw std::runtime_error("checkpoint kind is '" + doc.value("kind", "") + "', expected '" + kind + "'");
  }
  return doc;
}

}  // namespace

TinyCausalLM LmCheckpoint::build() const {
  TinyCausalLM model(config, RngStream(0));
  model.load_parameters(tensors);
  return model;
}

MlpClassifier MlpCheckpoint::build() const {
  MlpClassifier model(config, RngStream(0));
  model.load_parameters(tensors);
  return model;
}

std::string lm_checkpoint_to_string(const TinyCausalLM& model, const Vocabulary& vocab) {
  const auto& c = model.config();
  json doc = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"kind", "tiny_lm"},
      {"config",
       {{"vocab_size", c.vocab_size},
        {"context", c.context},
        {"embed", c.embed},
        {"hidden1", c.hidden1},
        {"hidden2", c.hidden2}}},
      {"vocabulary", vocab.symbols()},
      {"tensors", tensors_to_json(model.parameters(), TinyCausalLM::parameter_names())},
  };
  return doc.dump() + "\n";
}

LmCheckpoint lm_checkpoint_from_string(const std::string& text) {
  const json doc = parse_header(text, "tiny_lm");
  LmCheckpoint ck;
  const json& c = doc.at("config");
  ck.config.vocab_size = c.at("vocab_size").get<std::size_t>();
  ck.config.context = c.at("context").get<std::size_t>();
  ck.config.embed = c.at("embed").get<std::size_t>();
  ck.config.hidden1 = c.at("hidden1").get<std::size_t>();
  ck.config.hidden2 = c.at("hidden2").get<std::size_t>();
  ck.vocabulary = Vocabulary(doc.at("vocabulary").get<std::string>());
  if (ck.vocabulary.size() != ck.config.vocab_size) throw std::runtime_error("checkpoint vocabulary size mismatch");
  ck.tensors = tensors_from_json(doc, TinyCausalLM::parameter_names());
  return ck;
}

void save_lm_checkpoint(const std::filesystem::path& path, const TinyCausalLM& model, const Vocabulary& vocab) {
  write_file_atomic(path, lm_checkpoint_to_string(model, vocab));
}

LmCheckpoint load_lm_checkpoint(const std::filesystem::path& path) { return lm_checkpoint_from_string(read_file(path)); }

std::string mlp_checkpoint_to_string(const MlpClassifier& model) {
  const auto& c = model.config();
  json doc = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"kind", "mlp"},
      {"config",
       {{"input_width", c.input_width}, {"hidden1", c.hidden1}, {"hidden2", c.hidden2}, {"classes", c.classes}}},
      {"tensors", tensors_to_json(model.parameters(), MlpClassifier::parameter_names())},
  };
  return doc.dump() + "\n";
}

MlpCheckpoint mlp_checkpoint_from_string(const std::string& text) {
  const json doc = parse_header(text, "mlp");
  MlpCheckpoint ck;
  const json& c = doc.at("config");
  ck.config.input_width = c.at("input_width").get<std::size_t>();
  ck.config.hidden1 = c.at("hidden1").get<std::size_t>();
  ck.config.hidden2 = c.at("hidden2").get<std::size_t>();
  ck.config.classes = c.at("classes").get<std::size_t>();
  ck.tensors = tensors_from_json(doc, MlpClassifier::parameter_names());
  return ck;
}

void save_mlp_checkpoint(const std::filesystem::path& path, const MlpClassifier& model) {
  write_file_atomic(path, mlp_checkpoint_to_string(model));
}

MlpCheckpoint load_mlp_checkpoint(const std::filesystem::path& path) {
  return mlp_checkpoint_from_string(read_file(path));
}

}  // namespace uncurl
