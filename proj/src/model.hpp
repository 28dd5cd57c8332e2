#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "backbone.hpp"
#include "decoder.hpp"

namespace relpara::model {

struct ModelConfig {
  BackboneConfig backbone;
  int hidden = 512;
  int vocab_size = 0;
  int abnormalities = 0;
  int templates = 0;
  std::uint64_t seed = 1;

  DecoderConfig decoder() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Parameter groups used for freezing and gradient-probe tests.
enum class Group { Backbone, Embedder, Topic, Generator, Word };
Group group_of(const std::string& parameter_name);
std::string_view to_string(Group group);

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  // Canonical order: backbone, then decoder in declaration order.
  std::vector<const ad::Parameter*> parameters() const;
  std::vector<ad::Parameter*> parameters();
  std::size_t parameter_count() const;
  void zero_grad() const;

  Backbone backbone;
  Decoder decoder;

 private:
  ModelConfig config_;
};

}  // namespace relpara::model
