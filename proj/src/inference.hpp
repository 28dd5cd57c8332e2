#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "metrics.hpp"
#include "model.hpp"

namespace relpara::inference {

struct ComposeLimits {
  int max_sentences = 10;  // S_Max
  int max_words = 15;      // W_Max
  double stop_threshold = 0.5;
  void validate() const;
};

nlohmann::ordered_json to_json(const ComposeLimits& limits);
// Missing keys keep their defaults; unknown keys are rejected.
ComposeLimits limits_from_json(const nlohmann::json& j, ComposeLimits base = {});

struct SentenceStep {
  double stop = 0.0;               // z
  Eigen::VectorXd decision;        // d, length N + 1
  Eigen::VectorXd attention;       // alpha over grid cells (may be empty)
};

// What compose_report needs from a decoder. The model-backed implementation
// runs the hierarchical decoder; tests substitute scripted ones.
class Roller {
 public:
  virtual ~Roller() = default;
  virtual SentenceStep next_sentence() = 0;
  // Priming with the topic vector of the current sentence.
  virtual void begin_words() = 0;
  // Distribution over the vocabulary after feeding prev_token.
  virtual Eigen::VectorXd next_word(int prev_token) = 0;
  // The emitted sentence becomes E for the next step.
  virtual void end_sentence(std::span<const int> tokens) = 0;
};

class ModelRoller : public Roller {
 public:
  ModelRoller(const model::Model& model, const Eigen::MatrixXd& grid);
  ~ModelRoller() override;

  SentenceStep next_sentence() override;
  void begin_words() override;
  Eigen::VectorXd next_word(int prev_token) override;
  void end_sentence(std::span<const int> tokens) override;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct ComposedSentence {
  std::string text;
  std::vector<int> token_ids;
  int decision_index = 0;  // 0 = written, k = template k
  bool retrieved() const { return decision_index > 0; }
};

struct ComposedReport {
  std::string image_id;
  std::vector<ComposedSentence> sentences;
  std::vector<double> z_trace;
  std::vector<std::vector<double>> attention;  // per sentence
  std::vector<double> abnormality_scores;
  int decoder_steps = 0;

  std::string text() const;
  int retrieved() const;
};

ComposedReport compose_report(Roller& roller, const corpus::TemplateDb& templates, const corpus::Vocabulary& vocab,
                              const ComposeLimits& limits);

ComposedReport compose_report(const model::Model& model, const corpus::Image& image,
                              const corpus::TemplateDb& templates, const corpus::Vocabulary& vocab,
                              const ComposeLimits& limits);

struct Generation {
  std::vector<ComposedReport> reports;
  long sentences = 0;
  long retrieved = 0;
  double retrieval_ratio() const { return sentences == 0 ? 0.0 : static_cast<double>(retrieved) / sentences; }
};

Generation batch_generate(const model::Model& model, std::span<const corpus::Sample> samples,
                          const corpus::TemplateDb& templates, const corpus::Vocabulary& vocab,
                          const ComposeLimits& limits);

nlohmann::ordered_json to_json(const ComposedReport& report, bool with_attention);
ComposedReport report_from_json(const nlohmann::json& j);
std::string to_jsonl(const Generation& generation, bool with_attention);
std::vector<ComposedReport> read_generated(const std::filesystem::path& path);

metrics::Candidate candidate(const ComposedReport& report);

}  // namespace relpara::inference
