#include "model.hpp"

namespace relpara::model {

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig d;
  d.hidden = hidden;
  d.vocab_size = vocab_size;
  d.templates = templates;
  d.feature_channels = backbone.grid_channels();
  return d;
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["input_height"] = c.backbone.input_height;
  j["input_width"] = c.backbone.input_width;
  j["input_channels"] = c.backbone.input_channels;
  j["channels"] = c.backbone.channels;
  j["conv_bias"] = c.backbone.conv_bias;
  j["hidden"] = c.hidden;
  j["vocab_size"] = c.vocab_size;
  j["abnormalities"] = c.abnormalities;
  j["templates"] = c.templates;
  j["seed"] = c.seed;
  return nlohmann::json(j);
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.backbone.input_height = j.at("input_height").get<int>();
    c.backbone.input_width = j.at("input_width").get<int>();
    c.backbone.input_channels = j.at("input_channels").get<int>();
    c.backbone.channels = j.at("channels").get<std::vector<int>>();
    c.backbone.conv_bias = j.at("conv_bias").get<bool>();
    c.hidden = j.at("hidden").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.abnormalities = j.at("abnormalities").get<int>();
    c.templates = j.at("templates").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("model config: ") + e.what());
  }
}

Group group_of(const std::string& name) {
  auto starts = [&name](std::string_view p) { return name.compare(0, p.size(), p) == 0; };
  if (starts("backbone.")) return Group::Backbone;
  if (starts("decoder.embedder.")) return Group::Embedder;
  if (starts("decoder.topic.")) return Group::Topic;
  if (starts("decoder.generator.")) return Group::Generator;
  if (starts("decoder.word.")) return Group::Word;
  fail(ErrorKind::InvalidArgument, "unknown parameter group for '" + name + "'");
}

std::string_view to_string(Group group) {
  switch (group) {
    case Group::Backbone: return "backbone";
    case Group::Embedder: return "embedder";
    case Group::Topic: return "topic";
    case Group::Generator: return "generator";
    case Group::Word: return "word";
  }
  return "?";
}

Model::Model(ModelConfig config)
    : backbone(config.backbone, config.abnormalities), decoder(config.decoder()), config_(std::move(config)) {
  Rng rng(config_.seed);
  backbone.initialize(rng);
  decoder.initialize(rng);
}

std::vector<const ad::Parameter*> Model::parameters() const {
  std::vector<const ad::Parameter*> out;
  backbone.collect(out);
  decoder.collect(out);
  return out;
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  for (const ad::Parameter* p : std::as_const(*this).parameters()) out.push_back(const_cast<ad::Parameter*>(p));
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

void Model::zero_grad() const {
  for (const ad::Parameter* p : parameters()) p->zero_grad();
}

}  // namespace relpara::model
