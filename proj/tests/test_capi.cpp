// Links only the shared library: everything goes through the C header.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "relpara/relpara.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json take(char* s) {
  REQUIRE(s != nullptr);
  json j = json::parse(s);
  rp_string_free(s);
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* leaf) const { return (path / leaf).string(); }
};

const char* kSynth = R"({"train_samples": 24, "val_samples": 6, "test_samples": 6, "image_size": 16})";
const char* kTrain = R"({"hidden": 8, "channels": [4, 8], "epochs": 2, "batch_size": 8, "learning_rate": 0.005})";

void count_epochs(const char* record, void* user) {
  CHECK(json::parse(record).contains("epoch"));
  ++*static_cast<int*>(user);
}

}  // namespace

TEST_CASE("status names, version and argument checks") {
  rp_set_warnings(0);
  CHECK(std::string(rp_version()).size() > 0);
  CHECK(std::string(rp_status_name(RP_OK)) == "ok");
  CHECK(std::string(rp_status_name(RP_ERR_HASH_MISMATCH)) == "hash_mismatch");
  char* out = nullptr;
  CHECK(rp_defaults(nullptr, &out) == RP_ERR_INVALID_ARGUMENT);
  CHECK(std::string(rp_last_error()).find("kind") != std::string::npos);
  CHECK(rp_defaults("nope", &out) == RP_ERR_INVALID_ARGUMENT);
  REQUIRE(rp_defaults("train", &out) == RP_OK);
  const json d = take(out);
  CHECK(d.at("hidden") == 512);
  CHECK(d.at("learning_rate") == 5e-4);

  rp_dataset* ds = nullptr;
  CHECK(rp_dataset_load("/nonexistent/relpara", &ds) == RP_ERR_IO);
  CHECK(ds == nullptr);
  CHECK(std::string(rp_last_error()).size() > 0);
  CHECK(rp_synth_write("{not json", "/tmp/relpara_never", &out) == RP_ERR_INVALID_ARGUMENT);
  CHECK(rp_synth_write(R"({"abnormalities": "eight"})", "/tmp/relpara_never", &out) == RP_ERR_INVALID_ARGUMENT);
  rp_dataset_free(nullptr);
  rp_relations_free(nullptr);
  rp_model_free(nullptr);
  rp_string_free(nullptr);
}

TEST_CASE("pipeline through the C interface") {
  rp_set_warnings(0);
  TempDir dir("relpara_capi_test");
  char* out = nullptr;
  REQUIRE(rp_synth_write(kSynth, (dir / "raw").c_str(), &out) == RP_OK);
  CHECK(take(out).at("counts").at("train") == 24);
  REQUIRE(rp_prepare((dir / "raw").c_str(), nullptr, (dir / "prepared").c_str(), &out) == RP_OK);
  const json summary = take(out);
  CHECK(summary.at("kind") == "prepared");

  rp_dataset* ds = nullptr;
  REQUIRE(rp_dataset_load((dir / "prepared").c_str(), &ds) == RP_OK);
  rp_relations* rel = nullptr;
  REQUIRE(rp_relations_build(ds, &rel) == RP_OK);
  std::size_t m = 0;
  REQUIRE(rp_relations_size(rel, &m) == RP_OK);
  CHECK(m == summary.at("abnormalities").size());
  double v = -1;
  REQUIRE(rp_relations_value(rel, 0, 0, &v) == RP_OK);
  CHECK(v == 0.0);
  CHECK(rp_relations_value(rel, m, 0, &v) == RP_ERR_INVALID_ARGUMENT);
  REQUIRE(rp_relations_save(rel, (dir / "rel.txt").c_str()) == RP_OK);
  rp_relations* rel2 = nullptr;
  REQUIRE(rp_relations_load((dir / "rel.txt").c_str(), &rel2) == RP_OK);
  double v2 = 0;
  REQUIRE(rp_relations_value(rel, 0, 1, &v) == RP_OK);
  REQUIRE(rp_relations_value(rel2, 0, 1, &v2) == RP_OK);
  CHECK(v == v2);

  rp_model* model = nullptr;
  int epochs = 0;
  REQUIRE(rp_train(ds, rel, kTrain, (dir / "log.jsonl").c_str(), count_epochs, &epochs, &model) == RP_OK);
  CHECK(epochs == 2);
  REQUIRE(rp_model_save(model, (dir / "model.ckpt").c_str()) == RP_OK);
  REQUIRE(rp_model_info(model, &out) == RP_OK);
  CHECK(take(out).at("model").at("hidden") == 8);

  rp_model* loaded = nullptr;
  REQUIRE(rp_model_load((dir / "model.ckpt").c_str(), ds, &loaded) == RP_OK);
  char* p1 = nullptr;
  char* p2 = nullptr;
  REQUIRE(rp_model_probe(model, ds, "test", 3, &p1) == RP_OK);
  REQUIRE(rp_model_probe(loaded, ds, "test", 3, &p2) == RP_OK);
  const json a = take(p1), b = take(p2);
  CHECK(a == b);
  CHECK(a.at("samples").size() == 3);
  CHECK(rp_model_probe(model, ds, "dev", 3, &p1) == RP_ERR_INVALID_ARGUMENT);

  REQUIRE(rp_generate(loaded, ds, "test", R"({"max_words": 8})", (dir / "gen.jsonl").c_str(), 0, &out) == RP_OK);
  const json gen = take(out);
  CHECK(gen.at("reports") == 6);
  CHECK(gen.at("limits").at("max_words") == 8);
  REQUIRE(rp_generate(loaded, ds, "test", nullptr, (dir / "gen2.jsonl").c_str(), 0, &out) == RP_OK);
  rp_string_free(out);
  REQUIRE(rp_generate(model, ds, "test", R"({"max_words": 8})", (dir / "gen3.jsonl").c_str(), 0, &out) == RP_OK);
  rp_string_free(out);
  CHECK(slurp(dir.path / "gen.jsonl") == slurp(dir.path / "gen3.jsonl"));

  REQUIRE(rp_evaluate((dir / "gen.jsonl").c_str(), ds, "test", nullptr, &out) == RP_OK);
  const json ev = take(out);
  for (const char* k : {"cider", "rouge_l", "bleu_1", "bleu_4", "table"}) CHECK(ev.contains(k));
  CHECK(rp_evaluate((dir / "gen.jsonl").c_str(), ds, "val", nullptr, &out) == RP_ERR_MISSING_ID);

  for (const char* leaf : {"raw", "prepared", "rel.txt", "model.ckpt", "gen.jsonl", "log.jsonl"}) {
    REQUIRE(rp_inspect((dir / leaf).c_str(), &out) == RP_OK);
    CHECK(take(out).contains("kind"));
  }

  // A checkpoint refuses a dataset built with a different abnormality count.
  REQUIRE(rp_synth_write(R"({"train_samples": 24, "val_samples": 6, "test_samples": 6, "image_size": 16,
                             "abnormalities": 9})",
                         (dir / "raw9").c_str(), &out) == RP_OK);
  rp_string_free(out);
  REQUIRE(rp_prepare((dir / "raw9").c_str(), nullptr, (dir / "prepared9").c_str(), &out) == RP_OK);
  rp_string_free(out);
  rp_dataset* ds9 = nullptr;
  REQUIRE(rp_dataset_load((dir / "prepared9").c_str(), &ds9) == RP_OK);
  rp_model* refused = nullptr;
  CHECK(rp_model_load((dir / "model.ckpt").c_str(), ds9, &refused) == RP_ERR_HASH_MISMATCH);
  CHECK(refused == nullptr);

  rp_dataset_free(ds9);
  rp_model_free(loaded);
  rp_model_free(model);
  rp_relations_free(rel2);
  rp_relations_free(rel);
  rp_dataset_free(ds);
}
