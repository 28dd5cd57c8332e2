#pragma once

#include <filesystem>

#include <json.hpp>

#include "corpus.hpp"
#include "synthetic.hpp"

namespace relpara::io {

inline constexpr int kSchemaVersion = 1;

nlohmann::json image_to_json(const corpus::Image& image);
corpus::Image image_from_json(const nlohmann::json& j);

nlohmann::json sample_to_json(const corpus::Sample& sample);
corpus::Sample sample_from_json(const nlohmann::json& j);

nlohmann::json raw_record_to_json(const corpus::RawRecord& record);
corpus::RawRecord raw_record_from_json(const nlohmann::json& j);

// Prepared dataset directory:
//   manifest.json  {schema_version, kind:"prepared", seed, options, counts, hashes}
//   train.jsonl / val.jsonl / test.jsonl   one Sample per line
//   vocab.tsv (token<TAB>id), abnormalities.tsv (term<TAB>index),
//   templates.tsv (index<TAB>frequency<TAB>text)
void save_dataset(const corpus::Dataset& dataset, const std::filesystem::path& dir);
corpus::Dataset load_dataset(const std::filesystem::path& dir);

// Raw corpus directory (input to prepare): manifest.json {schema_version,
// kind:"raw", seed, counts, generator} and one RawRecord per line per split.
// A raw record may carry "report" free text instead of "sentences".
void save_raw_corpus(const corpus::RawCorpus& raw, const std::filesystem::path& dir,
                     const nlohmann::json& generator = nlohmann::json::object());
corpus::RawCorpus load_raw_corpus(const std::filesystem::path& dir);

// Options objects. The *_from_json readers start from `base`, override the
// keys present and reject unknown keys.
nlohmann::ordered_json to_json(const corpus::PrepareOptions& options);
corpus::PrepareOptions prepare_options_from_json(const nlohmann::json& j, corpus::PrepareOptions base = {});
nlohmann::ordered_json to_json(const synthetic::SyntheticConfig& config);
synthetic::SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, synthetic::SyntheticConfig base = {});

// Reads manifest.json and enforces the schema version.
nlohmann::json read_manifest(const std::filesystem::path& dir, const char* expected_kind);

// One JSON value per non-empty line; any unparseable line fails the whole read.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<nlohmann::json>& records);

}  // namespace relpara::io
