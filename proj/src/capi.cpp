#include "relpara/relpara.h"

#include <cstring>
#include <fstream>
#include <new>

#include "checkpoint.hpp"
#include "dataset_io.hpp"
#include "inference.hpp"
#include "metrics.hpp"
#include "relation_graph.hpp"
#include "synthetic.hpp"
#include "training.hpp"
#include "util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace relpara;

struct rp_dataset {
  corpus::Dataset data;
};

struct rp_relations {
  relation::RelationMatrix matrix;
};

struct rp_model {
  checkpoint::Checkpoint ck;
};

namespace {

thread_local std::string last_error;

rp_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return RP_ERR_INVALID_ARGUMENT;
    case ErrorKind::Io: return RP_ERR_IO;
    case ErrorKind::Format: return RP_ERR_FORMAT;
    case ErrorKind::SchemaVersion: return RP_ERR_SCHEMA_VERSION;
    case ErrorKind::HashMismatch: return RP_ERR_HASH_MISMATCH;
    case ErrorKind::Dimension: return RP_ERR_DIMENSION;
    case ErrorKind::Diverged: return RP_ERR_DIVERGED;
    case ErrorKind::MissingId: return RP_ERR_MISSING_ID;
  }
  return RP_ERR_INTERNAL;
}

template <class F>
rp_status guard(F&& body) {
  try {
    last_error.clear();
    body();
    return RP_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const fs::filesystem_error& e) {
    last_error = e.what();
    return RP_ERR_IO;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return RP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = std::string("internal error: ") + e.what();
    return RP_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorKind::InvalidArgument, std::string(what) + " must not be NULL");
}

json parse_options(const char* text, const char* what) {
  if (text == nullptr || *text == '\0') return json::object();
  try {
    json j = json::parse(text);
    require(j.is_object(), ErrorKind::InvalidArgument, std::string(what) + ": expected a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string(what) + " is not valid JSON: " + e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const ordered_json& j) {
  if (out != nullptr) *out = dup_string(j.dump());
}

const std::vector<corpus::Sample>& split_of(const corpus::Dataset& ds, const char* split) {
  need(split, "split");
  const std::string_view s(split);
  require(s == "train" || s == "val" || s == "test", ErrorKind::InvalidArgument,
          "unknown split '" + std::string(s) + "' (train, val, test)");
  return ds.split(s);
}

double template_share(const std::vector<corpus::Sample>& samples) {
  long total = 0;
  long templated = 0;
  for (const auto& s : samples) {
    for (const auto& sentence : s.report) {
      ++total;
      templated += sentence.template_index > 0 ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(templated) / static_cast<double>(total);
}

ordered_json dataset_summary(const corpus::Dataset& ds) {
  ordered_json j;
  j["kind"] = "prepared";
  j["seed"] = ds.seed;
  j["options"] = io::to_json(ds.options);
  j["counts"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};
  j["vocab_size"] = ds.vocab.size();
  j["abnormalities"] = ds.abnormalities.terms();
  j["templates"] = ds.templates.size();
  j["template_share"] = {{"train", template_share(ds.train)},
                         {"val", template_share(ds.val)},
                         {"test", template_share(ds.test)}};
  const auto h = checkpoint::ArtifactHashes::of(ds);
  j["hashes"] = {{"vocab", hex64(h.vocab)}, {"abnormalities", hex64(h.abnormalities)}, {"templates", hex64(h.templates)}};
  return j;
}

ordered_json vector_json(const Eigen::VectorXd& v) {
  return ordered_json(std::vector<double>(v.data(), v.data() + v.size()));
}

ordered_json relation_summary(const relation::RelationMatrix& m, std::size_t k) {
  ordered_json j;
  j["kind"] = "relations";
  j["M"] = m.size();
  j["R_star"] = m.nonzero_count;
  j["F"] = m.total;
  j["frequency"] = vector_json(m.frequency);
  auto pairs = ordered_json::array();
  for (const auto& p : relation::top_pairs(m, k)) pairs.push_back({{"i", p.i}, {"j", p.j}, {"value", p.value}});
  j["top_pairs"] = std::move(pairs);
  return j;
}

ordered_json model_summary(const checkpoint::Checkpoint& ck) {
  ordered_json j;
  j["kind"] = "checkpoint";
  j["model"] = model::to_json(ck.model->config());
  j["parameters"] = ck.model->parameter_count();
  j["tensors"] = ck.model->parameters().size();
  j["hashes"] = {{"vocab", hex64(ck.hashes.vocab)},
                 {"abnormalities", hex64(ck.hashes.abnormalities)},
                 {"templates", hex64(ck.hashes.templates)}};
  j["train_config"] = ck.train_config;
  return j;
}

ordered_json generated_summary(const std::vector<inference::ComposedReport>& reports) {
  ordered_json j;
  j["kind"] = "generated";
  j["reports"] = reports.size();
  long sentences = 0;
  long retrieved = 0;
  auto records = ordered_json::array();
  for (const auto& r : reports) {
    sentences += static_cast<long>(r.sentences.size());
    retrieved += r.retrieved();
    std::vector<int> decisions;
    for (const auto& s : r.sentences) decisions.push_back(s.decision_index);
    ordered_json o;
    o["image_id"] = r.image_id;
    o["z_trace"] = r.z_trace;
    o["decisions"] = decisions;
    if (!r.attention.empty()) o["attention"] = r.attention;
    records.push_back(std::move(o));
  }
  j["sentences"] = sentences;
  j["retrieval_ratio"] = sentences == 0 ? 0.0 : static_cast<double>(retrieved) / static_cast<double>(sentences);
  j["records"] = std::move(records);
  return j;
}

corpus::PrepareOptions resolve_prepare(const char* raw_dir, const char* options_json) {
  const json manifest = io::read_manifest(raw_dir, "raw");
  corpus::PrepareOptions base;
  if (manifest.contains("generator") && manifest.at("generator").contains("prepare_defaults")) {
    base = io::prepare_options_from_json(manifest.at("generator").at("prepare_defaults"));
  }
  return io::prepare_options_from_json(parse_options(options_json, "prepare options"), base);
}

}  // namespace

extern "C" {

const char* rp_version(void) { return "0.1.0"; }

const char* rp_status_name(rp_status status) {
  switch (status) {
    case RP_OK: return "ok";
    case RP_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RP_ERR_IO: return "io";
    case RP_ERR_FORMAT: return "format";
    case RP_ERR_SCHEMA_VERSION: return "schema_version";
    case RP_ERR_HASH_MISMATCH: return "hash_mismatch";
    case RP_ERR_DIMENSION: return "dimension";
    case RP_ERR_DIVERGED: return "diverged";
    case RP_ERR_MISSING_ID: return "missing_id";
    case RP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* rp_last_error(void) { return last_error.c_str(); }

void rp_string_free(char* s) { std::free(s); }

void rp_set_warnings(int enabled) {
  set_warning_sink(enabled ? nullptr : +[](std::string_view) {});
}

rp_status rp_defaults(const char* kind, char** defaults_json) {
  return guard([&] {
    need(kind, "kind");
    need(defaults_json, "defaults_json");
    const std::string_view k(kind);
    if (k == "synth") {
      emit(defaults_json, io::to_json(synthetic::SyntheticConfig{}));
    } else if (k == "prepare") {
      emit(defaults_json, io::to_json(corpus::PrepareOptions{}));
    } else if (k == "train") {
      emit(defaults_json, training::to_json(training::TrainConfig{}));
    } else if (k == "limits") {
      emit(defaults_json, inference::to_json(inference::ComposeLimits{}));
    } else if (k == "evaluate") {
      emit(defaults_json, ordered_json{{"rouge_beta", 1.0}, {"cider", "classic"}, {"per_sample", false}});
    } else {
      fail(ErrorKind::InvalidArgument, "rp_defaults: unknown kind '" + std::string(k) + "'");
    }
  });
}

rp_status rp_synth_write(const char* config_json, const char* out_dir, char** summary_json) {
  return guard([&] {
    need(out_dir, "out_dir");
    const auto cfg = io::synthetic_config_from_json(parse_options(config_json, "synthetic config"));
    const synthetic::RawSynthetic raw = synthetic::generate_raw(cfg);
    ordered_json planted = {{"train", raw.train.ratio()}, {"val", raw.val.ratio()}, {"test", raw.test.ratio()}};
    ordered_json generator;
    generator["name"] = "synthetic";
    generator["config"] = io::to_json(raw.plan.config);
    generator["prepare_defaults"] = io::to_json(synthetic::synthetic_prepare_options());
    generator["abnormality_names"] = raw.plan.names;
    generator["template_texts"] = raw.plan.template_texts;
    generator["planted_ratio"] = planted;
    generator["expected_templates_per_report"] = raw.plan.expected_templates();
    io::save_raw_corpus(raw.corpus, out_dir, json(generator));
    ordered_json summary;
    summary["out_dir"] = out_dir;
    summary["counts"] = {{"train", raw.corpus.train.size()}, {"val", raw.corpus.val.size()}, {"test", raw.corpus.test.size()}};
    summary["planted_ratio"] = planted;
    emit(summary_json, summary);
  });
}

rp_status rp_prepare_resolve(const char* raw_dir, const char* options_json, char** effective_json) {
  return guard([&] {
    need(raw_dir, "raw_dir");
    need(effective_json, "effective_json");
    emit(effective_json, io::to_json(resolve_prepare(raw_dir, options_json)));
  });
}

rp_status rp_prepare(const char* raw_dir, const char* options_json, const char* out_dir, char** summary_json) {
  return guard([&] {
    need(raw_dir, "raw_dir");
    need(out_dir, "out_dir");
    const auto options = resolve_prepare(raw_dir, options_json);
    const corpus::RawCorpus raw = io::load_raw_corpus(raw_dir);
    const corpus::Dataset ds = corpus::prepare(raw, options);
    io::save_dataset(ds, out_dir);
    emit(summary_json, dataset_summary(ds));
  });
}

rp_status rp_dataset_load(const char* dir, rp_dataset** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    auto ds = std::make_unique<rp_dataset>();
    ds->data = io::load_dataset(dir);
    *out = ds.release();
  });
}

void rp_dataset_free(rp_dataset* dataset) { delete dataset; }

rp_status rp_dataset_info(const rp_dataset* dataset, char** info_json) {
  return guard([&] {
    need(dataset, "dataset");
    need(info_json, "info_json");
    emit(info_json, dataset_summary(dataset->data));
  });
}

rp_status rp_relations_build(const rp_dataset* dataset, rp_relations** out) {
  return guard([&] {
    need(dataset, "dataset");
    need(out, "out");
    *out = nullptr;
    std::vector<std::vector<int>> labels;
    for (const auto& s : dataset->data.train) labels.push_back(s.labels);
    require(!labels.empty(), ErrorKind::InvalidArgument, "relations: the training split is empty");
    auto r = std::make_unique<rp_relations>();
    r->matrix = relation::build_relation_matrix(labels);
    *out = r.release();
  });
}

rp_status rp_relations_load(const char* path, rp_relations** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto r = std::make_unique<rp_relations>();
    r->matrix = relation::load(path);
    *out = r.release();
  });
}

rp_status rp_relations_save(const rp_relations* relations, const char* path) {
  return guard([&] {
    need(relations, "relations");
    need(path, "path");
    relation::save(relations->matrix, path);
  });
}

rp_status rp_relations_size(const rp_relations* relations, size_t* m) {
  return guard([&] {
    need(relations, "relations");
    need(m, "m");
    *m = relations->matrix.size();
  });
}

rp_status rp_relations_value(const rp_relations* relations, size_t i, size_t j, double* value) {
  return guard([&] {
    need(relations, "relations");
    need(value, "value");
    const std::size_t m = relations->matrix.size();
    require(i < m && j < m, ErrorKind::InvalidArgument,
            "relations: index (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " + std::to_string(m) +
                "x" + std::to_string(m));
    *value = relations->matrix.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  });
}

rp_status rp_relations_top_pairs(const rp_relations* relations, size_t k, char** pairs_json) {
  return guard([&] {
    need(relations, "relations");
    need(pairs_json, "pairs_json");
    emit(pairs_json, relation_summary(relations->matrix, k)["top_pairs"]);
  });
}

void rp_relations_free(rp_relations* relations) { delete relations; }

rp_status rp_train(const rp_dataset* dataset, const rp_relations* relations, const char* config_json,
                   const char* log_path, rp_epoch_callback callback, void* user, rp_model** out) {
  return guard([&] {
    need(dataset, "dataset");
    need(relations, "relations");
    need(out, "out");
    *out = nullptr;
    const auto config = training::train_config_from_json(parse_options(config_json, "train config"));
    const corpus::Dataset& ds = dataset->data;
    auto m = std::make_unique<rp_model>();
    m->ck.model = std::make_unique<model::Model>(training::model_config_for(ds, config));
    m->ck.hashes = checkpoint::ArtifactHashes::of(ds);
    m->ck.train_config = json(training::to_json(config));

    std::ofstream log;
    if (log_path != nullptr && *log_path != '\0') {
      const fs::path p(log_path);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      log.open(p, std::ios::trunc);
      require(log.good(), ErrorKind::Io, std::string("cannot open log file ") + log_path);
    }
    training::train(*m->ck.model, ds, relations->matrix, config, [&](const training::EpochRecord& rec) {
      const std::string line = training::to_json(rec).dump();
      if (log.is_open()) {
        log << line << '\n';
        log.flush();
      }
      if (callback != nullptr) callback(line.c_str(), user);
    });
    *out = m.release();
  });
}

rp_status rp_model_save(const rp_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    checkpoint::save(path, *model->ck.model, model->ck.hashes, model->ck.train_config);
  });
}

rp_status rp_model_load(const char* path, const rp_dataset* dataset, rp_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<rp_model>();
    m->ck = checkpoint::load(path);
    if (dataset != nullptr) checkpoint::check_compatible(m->ck, dataset->data);
    *out = m.release();
  });
}

rp_status rp_model_info(const rp_model* model, char** info_json) {
  return guard([&] {
    need(model, "model");
    need(info_json, "info_json");
    emit(info_json, model_summary(model->ck));
  });
}

void rp_model_free(rp_model* model) { delete model; }

rp_status rp_model_probe(const rp_model* model, const rp_dataset* dataset, const char* split, size_t n,
                         char** probe_json) {
  return guard([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(probe_json, "probe_json");
    checkpoint::check_compatible(model->ck, dataset->data);
    const model::Model& mdl = *model->ck.model;
    const auto& samples = split_of(dataset->data, split);
    auto rows = ordered_json::array();
    training::DecisionStats stats;
    for (std::size_t k = 0; k < samples.size() && k < n; ++k) {
      const corpus::Sample& s = samples[k];
      const auto grid = mdl.backbone.encode_image(s.image);
      const auto pred = mdl.backbone.classify(grid);
      const auto trace = training::teacher_forced_trace(mdl, s);
      ordered_json row;
      row["image_id"] = s.image_id;
      row["abnormality_scores"] = vector_json(pred.probabilities);
      auto z = ordered_json::array();
      auto d = ordered_json::array();
      for (std::size_t i = 0; i < trace.size(); ++i) {
        z.push_back(trace[i].stop);
        d.push_back(vector_json(trace[i].decision));
        ++stats.sentences;
        if (model::argmax(trace[i].decision) == s.report[i].template_index) ++stats.correct;
      }
      row["teacher_forced_stop"] = std::move(z);
      row["teacher_forced_decision"] = std::move(d);
      inference::ComposedReport r =
          inference::compose_report(mdl, s.image, dataset->data.templates, dataset->data.vocab, {});
      r.image_id = s.image_id;
      row["report"] = inference::to_json(r, false);
      rows.push_back(std::move(row));
    }
    ordered_json j;
    j["split"] = split;
    j["decision_accuracy"] = stats.accuracy();
    j["sentences"] = stats.sentences;
    j["samples"] = std::move(rows);
    emit(probe_json, j);
  });
}

rp_status rp_generate(const rp_model* model, const rp_dataset* dataset, const char* split, const char* limits_json,
                      const char* out_path, int with_attention, char** summary_json) {
  return guard([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(out_path, "out_path");
    checkpoint::check_compatible(model->ck, dataset->data);
    const auto limits = inference::limits_from_json(parse_options(limits_json, "limits"));
    const auto& samples = split_of(dataset->data, split);
    const inference::Generation gen =
        inference::batch_generate(*model->ck.model, samples, dataset->data.templates, dataset->data.vocab, limits);
    write_file(out_path, inference::to_jsonl(gen, with_attention != 0));
    ordered_json j;
    j["split"] = split;
    j["reports"] = gen.reports.size();
    j["sentences"] = gen.sentences;
    j["retrieved"] = gen.retrieved;
    j["retrieval_ratio"] = gen.retrieval_ratio();
    j["limits"] = inference::to_json(limits);
    emit(summary_json, j);
  });
}

rp_status rp_evaluate(const char* generated_path, const rp_dataset* dataset, const char* split,
                      const char* options_json, char** result_json) {
  return guard([&] {
    need(generated_path, "generated_path");
    need(dataset, "dataset");
    need(result_json, "result_json");
    const json opts = parse_options(options_json, "evaluate options");
    metrics::EvalOptions eo;
    eo.mode = dataset->data.options.mode;
    bool per_sample = false;
    try {
      for (const auto& [key, v] : opts.items()) {
        if (key == "rouge_beta") eo.rouge_beta = v.get<double>();
        else if (key == "cider") eo.cider_mode = metrics::parse_cider_mode(v.get<std::string>());
        else if (key == "per_sample") per_sample = v.get<bool>();
        else fail(ErrorKind::InvalidArgument, "evaluate options: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidArgument, std::string("evaluate options: ") + e.what());
    }
    const auto reports = inference::read_generated(generated_path);
    std::vector<metrics::Candidate> cands;
    for (const auto& r : reports) cands.push_back(inference::candidate(r));
    const metrics::EvalResult r = metrics::evaluate(cands, split_of(dataset->data, split), eo);
    ordered_json j = metrics::to_json(r, per_sample);
    j["split"] = split;
    j["cider_mode"] = std::string(metrics::to_string(eo.cider_mode));
    j["rouge_beta"] = eo.rouge_beta;
    j["table"] = metrics::format_table(r);
    emit(result_json, j);
  });
}

rp_status rp_inspect(const char* path, char** summary_json) {
  return guard([&] {
    need(path, "path");
    need(summary_json, "summary_json");
    const fs::path p(path);
    require(fs::exists(p), ErrorKind::Io, std::string("no such file or directory: ") + path);
    if (fs::is_directory(p)) {
      const json manifest = json::parse(read_file(p / "manifest.json"));
      const std::string kind = manifest.value("kind", "");
      if (kind == "prepared") {
        emit(summary_json, dataset_summary(io::load_dataset(p)));
        return;
      }
      const json m = io::read_manifest(p, "raw");
      ordered_json j;
      j["kind"] = "raw";
      j["manifest"] = m;
      emit(summary_json, j);
      return;
    }
    const std::string bytes = read_file(p);
    if (bytes.rfind("RPNCKPT1", 0) == 0) {
      emit(summary_json, model_summary(checkpoint::parse(bytes)));
      return;
    }
    const std::string first = bytes.substr(0, bytes.find('\n'));
    json head;
    try {
      head = json::parse(first);
    } catch (const json::exception&) {
      try {
        head = json::parse(bytes);
      } catch (const json::exception&) {
        fail(ErrorKind::Format, std::string("unrecognized artifact: ") + path);
      }
    }
    if (head.is_object() && head.value("format", "") == "relpara-relation-matrix") {
      emit(summary_json, relation_summary(relation::parse(bytes), 10));
    } else if (head.is_object() && head.contains("image_id") && head.contains("sentences")) {
      emit(summary_json, generated_summary(inference::read_generated(p)));
    } else if (head.is_object() && head.contains("epoch") && head.contains("lr")) {
      ordered_json j;
      j["kind"] = "train_log";
      auto epochs = ordered_json::array();
      for (const auto& r : io::read_jsonl(p)) epochs.push_back(ordered_json::parse(r.dump()));
      j["epochs"] = std::move(epochs);
      emit(summary_json, j);
    } else if (head.is_object() && head.contains("cider") && head.contains("rouge_l")) {
      ordered_json j;
      j["kind"] = "evaluation";
      j["record"] = head;
      emit(summary_json, j);
    } else {
      fail(ErrorKind::Format, std::string("unrecognized artifact: ") + path);
    }
  });
}

}  // extern "C"
