#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "corpus.hpp"
#include "model.hpp"

namespace relpara::checkpoint {

struct ArtifactHashes {
  std::uint64_t vocab = 0;
  std::uint64_t abnormalities = 0;
  std::uint64_t templates = 0;
  static ArtifactHashes of(const corpus::Dataset& dataset);
  bool operator==(const ArtifactHashes&) const = default;
};

struct Checkpoint {
  std::unique_ptr<model::Model> model;
  ArtifactHashes hashes;
  nlohmann::json train_config;  // echo of the run that produced it
};

// Layout: "RPNCKPT1", u64 header length, JSON header (model config, tensor
// index, artifact hashes, train config), little-endian f64 payload, u64
// FNV-1a of everything before it.
std::string serialize(const model::Model& model, const ArtifactHashes& hashes, const nlohmann::json& train_config);
Checkpoint parse(std::string_view bytes);

void save(const std::filesystem::path& path, const model::Model& model, const ArtifactHashes& hashes,
          const nlohmann::json& train_config);
Checkpoint load(const std::filesystem::path& path);

// Refuses (HashMismatch) when the checkpoint was trained on other artifacts.
void check_compatible(const Checkpoint& checkpoint, const corpus::Dataset& dataset);

}  // namespace relpara::checkpoint
