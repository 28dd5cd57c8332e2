// relpara command line: synth -> prepare -> relations -> train -> generate -> evaluate, plus inspect.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "relpara/relpara.h"

namespace {

using nlohmann::ordered_json;

struct Failure {
  rp_status status;
  std::string message;
};

void check(rp_status s) {
  if (s != RP_OK) throw Failure{s, rp_last_error()};
}

ordered_json take_json(char* s) {
  ordered_json j = ordered_json::parse(s);
  rp_string_free(s);
  return j;
}

ordered_json defaults(const char* kind) {
  char* out = nullptr;
  check(rp_defaults(kind, &out));
  return take_json(out);
}

// Options that were given on the command line or in the config file,
// collected into a JSON object keyed like the library's option objects.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *holder, help);
    appliers_.push_back([opt, holder, key](ordered_json& j) {
      if (opt->count() > 0) j[key] = *holder;
    });
    return opt;
  }

  // A presence flag that sets key to value.
  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key, bool value,
                    const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    appliers_.push_back([opt, key, value](ordered_json& j) {
      if (opt->count() > 0) j[key] = value;
    });
    return opt;
  }

  ordered_json apply(ordered_json base) const {
    for (const auto& f : appliers_) f(base);
    return base;
  }

 private:
  std::vector<std::function<void(ordered_json&)>> appliers_;
};

void print_effective(const std::string& subcommand, const ordered_json& paths, const ordered_json& options) {
  ordered_json j;
  j["subcommand"] = subcommand;
  j["paths"] = paths;
  j["options"] = options;
  std::cerr << "effective config " << j.dump() << std::endl;
}

struct DatasetHandle {
  rp_dataset* p = nullptr;
  ~DatasetHandle() { rp_dataset_free(p); }
};
struct RelationsHandle {
  rp_relations* p = nullptr;
  ~RelationsHandle() { rp_relations_free(p); }
};
struct ModelHandle {
  rp_model* p = nullptr;
  ~ModelHandle() { rp_model_free(p); }
};

void epoch_printer(const char* record, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::cout << record << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  const char* env_root = std::getenv("RELPARA_DATA_ROOT");
  const std::filesystem::path root = env_root != nullptr && *env_root != '\0' ? env_root : "data";
  auto under = [&root](const char* name) { return (root / name).string(); };

  CLI::App app{"Hybrid retrieval/generation radiology report pipeline.\nRELPARA_DATA_ROOT sets the default data root (" +
               root.string() + ")."};
  app.set_config("--config", "", "TOML/INI file with option values; [subcommand] sections apply to subcommands");
  app.set_version_flag("--version", std::string(rp_version()));
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings and per-epoch progress");
  app.require_subcommand(1);

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic raw corpus");
  std::string synth_out = under("raw");
  synth->add_option("-o,--out", synth_out, "Output directory")->capture_default_str();
  Overrides synth_o;
  synth_o.add<std::uint64_t>(synth, "--seed", "seed", "Generator seed");
  synth_o.add<int>(synth, "--abnormalities", "abnormalities", "Number of abnormality terms M");
  synth_o.add<int>(synth, "--templates", "templates", "Number of planted templates N");
  synth_o.add<int>(synth, "--vocab-size", "vocab_size", "Target distinct tokens");
  synth_o.add<int>(synth, "--train-samples", "train_samples", "Training samples");
  synth_o.add<int>(synth, "--val-samples", "val_samples", "Validation samples");
  synth_o.add<int>(synth, "--test-samples", "test_samples", "Test samples");
  synth_o.add<double>(synth, "--ratio", "retrieval_ratio", "Planted template share of sentences");
  synth_o.add<double>(synth, "--cofire", "cofire", "Probability a cluster member fires with its cluster");
  synth_o.add<double>(synth, "--background", "background", "Per-abnormality background rate");
  synth_o.add<int>(synth, "--normal-sentences", "normal_sentences", "Normal sentences per report");
  synth_o.add<int>(synth, "--image-size", "image_size", "Image side length");

  // prepare
  CLI::App* prepare = app.add_subcommand("prepare", "Tokenize, build vocabularies and templates, align sentences");
  std::string prepare_raw = under("raw");
  std::string prepare_out = under("prepared");
  prepare->add_option("-r,--raw", prepare_raw, "Raw corpus directory")->capture_default_str();
  prepare->add_option("-o,--out", prepare_out, "Prepared dataset directory")->capture_default_str();
  Overrides prepare_o;
  prepare_o.add<int>(prepare, "--min-token-freq", "min_token_freq", "Tokens rarer than this become <unk>");
  prepare_o.add<int>(prepare, "--min-tag-freq", "min_tag_freq", "Abnormality tags rarer than this are dropped");
  prepare_o.add<int>(prepare, "--min-template-freq", "min_template_freq", "Abnormal sentences this frequent become templates");
  prepare_o.add<int>(prepare, "--max-words", "max_words", "Sentence truncation length");
  prepare_o.add<std::string>(prepare, "--tokenize", "tokenize", "whitespace or char");

  // relations
  CLI::App* relations = app.add_subcommand("relations", "Build the abnormality relation matrix from training labels");
  std::string rel_data = under("prepared");
  std::string rel_out = under("relations.txt");
  std::size_t rel_top = 5;
  relations->add_option("-d,--data", rel_data, "Prepared dataset directory")->capture_default_str();
  relations->add_option("-o,--out", rel_out, "Relation matrix file")->capture_default_str();
  relations->add_option("--top", rel_top, "Pairs to print")->capture_default_str();

  // train
  CLI::App* train = app.add_subcommand("train", "Train the model with teacher forcing");
  std::string train_data = under("prepared");
  std::string train_rel = under("relations.txt");
  std::string train_out = under("model.ckpt");
  std::string train_log = under("train_log.jsonl");
  train->add_option("-d,--data", train_data, "Prepared dataset directory")->capture_default_str();
  train->add_option("--relations", train_rel, "Relation matrix file")->capture_default_str();
  train->add_option("-o,--out", train_out, "Checkpoint path")->capture_default_str();
  train->add_option("--log", train_log, "Per-epoch JSONL log")->capture_default_str();
  Overrides train_o;
  train_o.add<double>(train, "--lr", "learning_rate", "Initial learning rate");
  train_o.add<int>(train, "--batch-size", "batch_size", "Samples per update");
  train_o.add<int>(train, "--epochs", "epochs", "Training epochs");
  train_o.add<double>(train, "--decay", "decay", "Learning-rate decay factor");
  train_o.add<int>(train, "--decay-every", "decay_every", "Epochs between decays");
  train_o.add<int>(train, "--hidden", "hidden", "Hidden size D");
  train_o.add<std::vector<int>>(train, "--channels", "channels", "Backbone block widths");
  train_o.add<bool>(train, "--conv-bias", "conv_bias", "Bias terms in the conv blocks (true/false)");
  train_o.add<std::uint64_t>(train, "--seed", "seed", "Initialization seed");
  train_o.add<std::uint64_t>(train, "--shuffle-seed", "shuffle_seed", "Batch order seed");
  train_o.add<double>(train, "--clip-norm", "clip_norm", "Global gradient norm cap (<= 0 disables)");
  train_o.add<bool>(train, "--relation-constraint", "relation_constraint", "Apply the relation constraint (true/false)");
  train_o.add<std::vector<std::string>>(train, "--freeze", "freeze", "Parameter groups to hold fixed");
  train_o.add<double>(train, "--weight-cls", "weight_cls", "Classification loss weight");
  train_o.add<double>(train, "--weight-stop", "weight_stop", "Stop loss weight");
  train_o.add<double>(train, "--weight-tem", "weight_tem", "Decision loss weight");
  train_o.add<double>(train, "--weight-word", "weight_word", "Word loss weight");
  train_o.add<bool>(train, "--validate-each-epoch", "validate_each_epoch", "Validation metrics per epoch (true/false)");

  // generate
  CLI::App* generate = app.add_subcommand("generate", "Compose reports for a split");
  std::string gen_data = under("prepared");
  std::string gen_ckpt = under("model.ckpt");
  std::string gen_split = "test";
  std::string gen_out;
  bool gen_attention = false;
  generate->add_option("-d,--data", gen_data, "Prepared dataset directory")->capture_default_str();
  generate->add_option("-c,--checkpoint", gen_ckpt, "Checkpoint path")->capture_default_str();
  generate->add_option("-s,--split", gen_split, "train, val or test")->capture_default_str();
  generate->add_option("-o,--out", gen_out, "Output JSONL (default <root>/generated_<split>.jsonl)");
  generate->add_flag("--attention", gen_attention, "Include attention maps");
  Overrides gen_o;
  gen_o.add<int>(generate, "--max-sentences", "max_sentences", "S_Max");
  gen_o.add<int>(generate, "--max-words", "max_words", "W_Max");
  gen_o.add<double>(generate, "--stop-threshold", "stop_threshold", "Stop when z exceeds this");

  // evaluate
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score generated reports against the gold split");
  std::string eval_data = under("prepared");
  std::string eval_split = "test";
  std::string eval_gen;
  std::string eval_out;
  evaluate->add_option("-d,--data", eval_data, "Prepared dataset directory")->capture_default_str();
  evaluate->add_option("-s,--split", eval_split, "train, val or test")->capture_default_str();
  evaluate->add_option("-g,--generated", eval_gen, "Generated JSONL (default <root>/generated_<split>.jsonl)");
  evaluate->add_option("-o,--out", eval_out, "Write the machine record here as JSON");
  Overrides eval_o;
  eval_o.add<double>(evaluate, "--rouge-beta", "rouge_beta", "ROUGE-L F-measure beta");
  eval_o.add<std::string>(evaluate, "--cider", "cider", "classic or d");
  eval_o.flag(evaluate, "--per-sample", "per_sample", true, "Include the per-sample table");

  // inspect
  CLI::App* inspect = app.add_subcommand("inspect", "Summarize any artifact as JSON");
  std::string inspect_path;
  inspect->add_option("path", inspect_path, "Dataset directory, relation matrix, checkpoint, generated or log file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << app.help() << ordered_json{{"error", "invalid_argument"}, {"message", e.what()}}.dump() << std::endl;
    return static_cast<int>(RP_ERR_INVALID_ARGUMENT);
  }
  if (quiet) rp_set_warnings(0);

  try {
    if (synth->parsed()) {
      const ordered_json options = synth_o.apply(defaults("synth"));
      print_effective("synth", {{"out", synth_out}}, options);
      char* summary = nullptr;
      check(rp_synth_write(options.dump().c_str(), synth_out.c_str(), &summary));
      std::cout << take_json(summary).dump() << std::endl;
    } else if (prepare->parsed()) {
      const std::string overrides = prepare_o.apply(ordered_json::object()).dump();
      char* effective = nullptr;
      check(rp_prepare_resolve(prepare_raw.c_str(), overrides.c_str(), &effective));
      print_effective("prepare", {{"raw", prepare_raw}, {"out", prepare_out}}, take_json(effective));
      char* summary = nullptr;
      check(rp_prepare(prepare_raw.c_str(), overrides.c_str(), prepare_out.c_str(), &summary));
      std::cout << take_json(summary).dump() << std::endl;
    } else if (relations->parsed()) {
      print_effective("relations", {{"data", rel_data}, {"out", rel_out}}, {{"top", rel_top}});
      DatasetHandle ds;
      check(rp_dataset_load(rel_data.c_str(), &ds.p));
      RelationsHandle rel;
      check(rp_relations_build(ds.p, &rel.p));
      check(rp_relations_save(rel.p, rel_out.c_str()));
      char* pairs = nullptr;
      check(rp_relations_top_pairs(rel.p, rel_top, &pairs));
      std::size_t m = 0;
      check(rp_relations_size(rel.p, &m));
      std::cout << ordered_json{{"out", rel_out}, {"M", m}, {"top_pairs", take_json(pairs)}}.dump() << std::endl;
    } else if (train->parsed()) {
      const ordered_json options = train_o.apply(defaults("train"));
      print_effective("train", {{"data", train_data}, {"relations", train_rel}, {"out", train_out}, {"log", train_log}},
                      options);
      DatasetHandle ds;
      check(rp_dataset_load(train_data.c_str(), &ds.p));
      RelationsHandle rel;
      check(rp_relations_load(train_rel.c_str(), &rel.p));
      ModelHandle model;
      check(rp_train(ds.p, rel.p, options.dump().c_str(), train_log.c_str(), epoch_printer, &quiet, &model.p));
      check(rp_model_save(model.p, train_out.c_str()));
      std::cout << ordered_json{{"checkpoint", train_out}, {"log", train_log}}.dump() << std::endl;
    } else if (generate->parsed()) {
      if (gen_out.empty()) gen_out = under(("generated_" + gen_split + ".jsonl").c_str());
      const ordered_json limits = gen_o.apply(defaults("limits"));
      print_effective("generate",
                      {{"data", gen_data}, {"checkpoint", gen_ckpt}, {"split", gen_split}, {"out", gen_out},
                       {"attention", gen_attention}},
                      limits);
      DatasetHandle ds;
      check(rp_dataset_load(gen_data.c_str(), &ds.p));
      ModelHandle model;
      check(rp_model_load(gen_ckpt.c_str(), ds.p, &model.p));
      char* summary = nullptr;
      check(rp_generate(model.p, ds.p, gen_split.c_str(), limits.dump().c_str(), gen_out.c_str(), gen_attention ? 1 : 0,
                        &summary));
      ordered_json s = take_json(summary);
      s["out"] = gen_out;
      std::cout << s.dump() << std::endl;
    } else if (evaluate->parsed()) {
      if (eval_gen.empty()) eval_gen = under(("generated_" + eval_split + ".jsonl").c_str());
      const ordered_json options = eval_o.apply(defaults("evaluate"));
      print_effective("evaluate", {{"data", eval_data}, {"split", eval_split}, {"generated", eval_gen}, {"out", eval_out}},
                      options);
      DatasetHandle ds;
      check(rp_dataset_load(eval_data.c_str(), &ds.p));
      char* result = nullptr;
      check(rp_evaluate(eval_gen.c_str(), ds.p, eval_split.c_str(), options.dump().c_str(), &result));
      ordered_json r = take_json(result);
      const std::string table = r["table"].get<std::string>();
      r.erase("table");
      std::cout << table << r.dump() << std::endl;
      if (!eval_out.empty()) {
        std::filesystem::path p(eval_out);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::FILE* f = std::fopen(eval_out.c_str(), "w");
        if (f == nullptr) throw Failure{RP_ERR_IO, "cannot write " + eval_out};
        const std::string text = r.dump(2) + "\n";
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
      }
    } else if (inspect->parsed()) {
      print_effective("inspect", {{"path", inspect_path}}, ordered_json::object());
      char* summary = nullptr;
      check(rp_inspect(inspect_path.c_str(), &summary));
      std::cout << take_json(summary).dump(2) << std::endl;
    }
  } catch (const Failure& f) {
    std::cerr << ordered_json{{"error", rp_status_name(f.status)}, {"message", f.message}}.dump() << std::endl;
    return static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::cerr << ordered_json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    return static_cast<int>(RP_ERR_INTERNAL);
  }
  return 0;
}
