#include "dataset_io.hpp"

#include <fstream>

#include "util.hpp"

namespace relpara::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kSplits[] = {"train", "val", "test"};

std::vector<corpus::Sample>& split_of(corpus::Dataset& ds, std::string_view name) {
  if (name == "train") return ds.train;
  if (name == "val") return ds.val;
  return ds.test;
}

std::vector<corpus::RawRecord>& split_of(corpus::RawCorpus& raw, std::string_view name) {
  if (name == "train") return raw.train;
  if (name == "val") return raw.val;
  return raw.test;
}

template <class T>
T field(const json& j, const char* key, const char* what) {
  require(j.is_object() && j.contains(key), ErrorKind::Format, std::string(what) + " lacks field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string(what) + " field '" + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace

json image_to_json(const corpus::Image& image) {
  return json{{"height", image.height}, {"width", image.width}, {"channels", image.channels}, {"data", image.data}};
}

corpus::Image image_from_json(const json& j) {
  corpus::Image img;
  img.height = field<int>(j, "height", "image");
  img.width = field<int>(j, "width", "image");
  img.channels = field<int>(j, "channels", "image");
  img.data = field<std::vector<double>>(j, "data", "image");
  require(img.height > 0 && img.width > 0 && img.channels > 0 &&
              img.data.size() == static_cast<std::size_t>(img.height) * img.width * img.channels,
          ErrorKind::Format, "image data does not match its declared shape");
  return img;
}

json sample_to_json(const corpus::Sample& sample) {
  json sentences = json::array();
  for (const auto& s : sample.report) {
    sentences.push_back({{"text", s.raw_text}, {"token_ids", s.token_ids}, {"template_index", s.template_index}});
  }
  return json{{"image_id", sample.image_id},
              {"image", image_to_json(sample.image)},
              {"labels", sample.labels},
              {"sentences", std::move(sentences)}};
}

corpus::Sample sample_from_json(const json& j) {
  corpus::Sample s;
  s.image_id = field<std::string>(j, "image_id", "sample");
  require(j.contains("image"), ErrorKind::Format, "sample '" + s.image_id + "' lacks an inline image");
  s.image = image_from_json(j.at("image"));
  s.labels = field<std::vector<int>>(j, "labels", "sample");
  for (const auto& sj : field<json>(j, "sentences", "sample")) {
    corpus::Sentence sent;
    sent.raw_text = field<std::string>(sj, "text", "sentence");
    sent.token_ids = field<std::vector<int>>(sj, "token_ids", "sentence");
    sent.template_index = field<int>(sj, "template_index", "sentence");
    s.report.push_back(std::move(sent));
  }
  return s;
}

json raw_record_to_json(const corpus::RawRecord& record) {
  json sentences = json::array();
  for (const auto& s : record.sentences) {
    json sj{{"text", s.text}};
    if (s.abnormal.has_value()) sj["abnormal"] = *s.abnormal;
    sentences.push_back(std::move(sj));
  }
  return json{{"image_id", record.image_id},
              {"image", image_to_json(record.image)},
              {"tags", record.tags},
              {"sentences", std::move(sentences)}};
}

corpus::RawRecord raw_record_from_json(const json& j) {
  corpus::RawRecord r;
  r.image_id = field<std::string>(j, "image_id", "raw record");
  require(j.contains("image"), ErrorKind::Format, "raw record '" + r.image_id + "' lacks an inline image");
  r.image = image_from_json(j.at("image"));
  if (j.contains("tags")) r.tags = field<std::vector<std::string>>(j, "tags", "raw record");
  if (j.contains("sentences")) {
    for (const auto& sj : j.at("sentences")) {
      corpus::RawSentence s;
      if (sj.is_string()) {
        s.text = sj.get<std::string>();
      } else {
        s.text = field<std::string>(sj, "text", "raw sentence");
        if (sj.contains("abnormal")) s.abnormal = field<bool>(sj, "abnormal", "raw sentence");
      }
      r.sentences.push_back(std::move(s));
    }
  } else {
    for (auto& text : corpus::split_sentences(field<std::string>(j, "report", "raw record"))) {
      r.sentences.push_back({std::move(text), std::nullopt});
    }
  }
  return r;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": unparseable record (" + e.what() + ")");
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out.push_back('\n');
  }
  return out;
}

json read_manifest(const fs::path& dir, const char* expected_kind) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, (dir / "manifest.json").string() + " is not valid JSON: " + e.what());
  }
  const int version = field<int>(manifest, "schema_version", "manifest");
  require(version == kSchemaVersion, ErrorKind::SchemaVersion,
          "schema version mismatch: " + (dir / "manifest.json").string() + " has schema_version " +
              std::to_string(version) + ", this build reads schema_version " + std::to_string(kSchemaVersion));
  const auto kind = field<std::string>(manifest, "kind", "manifest");
  require(kind == expected_kind, ErrorKind::Format,
          (dir / "manifest.json").string() + " describes a '" + kind + "' directory, expected '" + expected_kind + "'");
  return manifest;
}

void save_dataset(const corpus::Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string vocab = ds.vocab.serialize();
  const std::string abn = ds.abnormalities.serialize();
  const std::string tpl = ds.templates.serialize();
  json counts = json::object();
  for (const char* split : kSplits) {
    std::vector<json> records;
    for (const auto& s : ds.split(split)) records.push_back(sample_to_json(s));
    counts[split] = records.size();
    write_file(dir / (std::string(split) + ".jsonl"), to_jsonl(records));
  }
  write_file(dir / "vocab.tsv", vocab);
  write_file(dir / "abnormalities.tsv", abn);
  write_file(dir / "templates.tsv", tpl);
  json manifest{{"schema_version", kSchemaVersion},
                {"kind", "prepared"},
                {"seed", ds.seed},
                {"options", json(to_json(ds.options))},
                {"counts", counts},
                {"hashes",
                 {{"vocab", hex64(fnv1a(vocab))}, {"abnormalities", hex64(fnv1a(abn))}, {"templates", hex64(fnv1a(tpl))}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

corpus::Dataset load_dataset(const fs::path& dir) {
  const json manifest = read_manifest(dir, "prepared");
  corpus::Dataset ds;
  ds.seed = field<std::uint64_t>(manifest, "seed", "manifest");
  const json options = field<json>(manifest, "options", "manifest");
  ds.options.min_token_freq = field<int>(options, "min_token_freq", "manifest options");
  ds.options.min_tag_freq = field<int>(options, "min_tag_freq", "manifest options");
  ds.options.min_template_freq = field<int>(options, "min_template_freq", "manifest options");
  ds.options.max_words = field<std::size_t>(options, "max_words", "manifest options");
  ds.options.mode = corpus::parse_tokenize_mode(field<std::string>(options, "tokenize", "manifest options"));

  const json hashes = field<json>(manifest, "hashes", "manifest");
  auto sidecar = [&](const char* file, const char* key) {
    std::string text = read_file(dir / file);
    require(hex64(fnv1a(text)) == field<std::string>(hashes, key, "manifest hashes"), ErrorKind::HashMismatch,
            (dir / file).string() + " does not match the hash recorded in manifest.json");
    return text;
  };
  ds.vocab = corpus::Vocabulary::parse(sidecar("vocab.tsv", "vocab"));
  ds.abnormalities = corpus::AbnormalityVocab::parse(sidecar("abnormalities.tsv", "abnormalities"));
  ds.templates = corpus::TemplateDb::parse(sidecar("templates.tsv", "templates"));
  ds.templates.encode(ds.vocab, ds.options.mode, ds.options.max_words);

  const json counts = field<json>(manifest, "counts", "manifest");
  for (const char* split : kSplits) {
    const fs::path path = dir / (std::string(split) + ".jsonl");
    const auto records = read_jsonl(path);
    const auto expected = field<std::size_t>(counts, split, "manifest counts");
    require(records.size() == expected, ErrorKind::Format,
            path.string() + " holds " + std::to_string(records.size()) + " records, manifest declares " +
                std::to_string(expected) + " (truncated file?)");
    auto& out = split_of(ds, split);
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(sample_from_json(r));
  }
  corpus::validate(ds);
  return ds;
}

void save_raw_corpus(const corpus::RawCorpus& raw, const fs::path& dir, const json& generator) {
  fs::create_directories(dir);
  json counts = json::object();
  for (const char* split : kSplits) {
    const auto& records = split == std::string_view("train") ? raw.train
                          : split == std::string_view("val") ? raw.val
                                                             : raw.test;
    std::vector<json> lines;
    for (const auto& r : records) lines.push_back(raw_record_to_json(r));
    counts[split] = lines.size();
    write_file(dir / (std::string(split) + ".jsonl"), to_jsonl(lines));
  }
  json manifest{{"schema_version", kSchemaVersion},
                {"kind", "raw"},
                {"seed", raw.seed},
                {"counts", counts},
                {"generator", generator}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

corpus::RawCorpus load_raw_corpus(const fs::path& dir) {
  const json manifest = read_manifest(dir, "raw");
  corpus::RawCorpus raw;
  raw.seed = manifest.value("seed", std::uint64_t{0});
  const json counts = manifest.value("counts", json::object());
  for (const char* split : kSplits) {
    const fs::path path = dir / (std::string(split) + ".jsonl");
    if (!fs::exists(path)) {
      require(!counts.contains(split) || counts.at(split).get<std::size_t>() == 0, ErrorKind::Io,
              "missing split file " + path.string());
      continue;
    }
    const auto records = read_jsonl(path);
    if (counts.contains(split)) {
      require(records.size() == counts.at(split).get<std::size_t>(), ErrorKind::Format,
              path.string() + " holds " + std::to_string(records.size()) + " records, manifest declares " +
                  std::to_string(counts.at(split).get<std::size_t>()) + " (truncated file?)");
    }
    auto& out = split_of(raw, split);
    for (const auto& r : records) out.push_back(raw_record_from_json(r));
  }
  return raw;
}

nlohmann::ordered_json to_json(const corpus::PrepareOptions& o) {
  nlohmann::ordered_json j;
  j["min_token_freq"] = o.min_token_freq;
  j["min_tag_freq"] = o.min_tag_freq;
  j["min_template_freq"] = o.min_template_freq;
  j["max_words"] = o.max_words;
  j["tokenize"] = std::string(corpus::to_string(o.mode));
  return j;
}

corpus::PrepareOptions prepare_options_from_json(const json& j, corpus::PrepareOptions o) {
  require(j.is_object(), ErrorKind::InvalidArgument, "prepare options: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "min_token_freq") o.min_token_freq = v.get<int>();
      else if (key == "min_tag_freq") o.min_tag_freq = v.get<int>();
      else if (key == "min_template_freq") o.min_template_freq = v.get<int>();
      else if (key == "max_words") o.max_words = v.get<std::size_t>();
      else if (key == "tokenize") o.mode = corpus::parse_tokenize_mode(v.get<std::string>());
      else fail(ErrorKind::InvalidArgument, "prepare options: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("prepare options: ") + e.what());
  }
  require(o.min_token_freq >= 1 && o.min_tag_freq >= 1 && o.min_template_freq >= 1 && o.max_words >= 1,
          ErrorKind::InvalidArgument, "prepare options: thresholds and max_words must be >= 1");
  return o;
}

nlohmann::ordered_json to_json(const synthetic::SyntheticConfig& c) {
  nlohmann::ordered_json j;
  j["abnormalities"] = c.abnormalities;
  j["templates"] = c.templates;
  j["vocab_size"] = c.vocab_size;
  j["train_samples"] = c.train_samples;
  j["val_samples"] = c.val_samples;
  j["test_samples"] = c.test_samples;
  auto clusters = nlohmann::ordered_json::array();
  for (const auto& cl : c.clusters) clusters.push_back({{"members", cl.members}, {"weight", cl.weight}});
  j["clusters"] = std::move(clusters);
  j["triggers"] = c.triggers;
  j["retrieval_ratio"] = c.retrieval_ratio;
  j["cofire"] = c.cofire;
  j["background"] = c.background;
  j["normal_sentences"] = c.normal_sentences;
  j["image_size"] = c.image_size;
  j["seed"] = c.seed;
  return j;
}

synthetic::SyntheticConfig synthetic_config_from_json(const json& j, synthetic::SyntheticConfig c) {
  require(j.is_object(), ErrorKind::InvalidArgument, "synthetic config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "abnormalities") c.abnormalities = v.get<int>();
      else if (key == "templates") c.templates = v.get<int>();
      else if (key == "vocab_size") c.vocab_size = v.get<int>();
      else if (key == "train_samples") c.train_samples = v.get<int>();
      else if (key == "val_samples") c.val_samples = v.get<int>();
      else if (key == "test_samples") c.test_samples = v.get<int>();
      else if (key == "clusters") {
        c.clusters.clear();
        for (const auto& cl : v) {
          synthetic::Cluster x;
          x.members = cl.at("members").get<std::vector<int>>();
          x.weight = cl.value("weight", 1.0);
          c.clusters.push_back(std::move(x));
        }
      } else if (key == "triggers") c.triggers = v.get<std::vector<std::vector<int>>>();
      else if (key == "retrieval_ratio") c.retrieval_ratio = v.get<double>();
      else if (key == "cofire") c.cofire = v.get<double>();
      else if (key == "background") c.background = v.get<double>();
      else if (key == "normal_sentences") c.normal_sentences = v.get<int>();
      else if (key == "image_size") c.image_size = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else fail(ErrorKind::InvalidArgument, "synthetic config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("synthetic config: ") + e.what());
  }
  return c;
}

}  // namespace relpara::io
