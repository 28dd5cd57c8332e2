#include "inference.hpp"

#include <sstream>

#include "util.hpp"

namespace relpara::inference {

void ComposeLimits::validate() const {
  require(max_sentences >= 1, ErrorKind::InvalidArgument, "limits: max_sentences must be >= 1");
  require(max_words >= 1, ErrorKind::InvalidArgument, "limits: max_words must be >= 1");
  require(stop_threshold > 0.0 && stop_threshold < 1.0, ErrorKind::InvalidArgument,
          "limits: stop_threshold must lie in (0, 1)");
}

nlohmann::ordered_json to_json(const ComposeLimits& l) {
  return {{"max_sentences", l.max_sentences}, {"max_words", l.max_words}, {"stop_threshold", l.stop_threshold}};
}

ComposeLimits limits_from_json(const nlohmann::json& j, ComposeLimits l) {
  require(j.is_object(), ErrorKind::InvalidArgument, "limits: expected a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "max_sentences") {
        l.max_sentences = value.get<int>();
      } else if (key == "max_words") {
        l.max_words = value.get<int>();
      } else if (key == "stop_threshold") {
        l.stop_threshold = value.get<double>();
      } else {
        fail(ErrorKind::InvalidArgument, "limits: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("limits: ") + e.what());
  }
  l.validate();
  return l;
}

struct ModelRoller::State {
  const model::Model& model;
  ad::Graph g;
  model::BoundDecoder d;
  ad::Var grid;
  ad::LstmState topic;
  ad::LstmState generator;
  ad::Var e_prev;
  ad::Var q;
  ad::LstmState words;

  State(const model::Model& m, const Eigen::MatrixXd& v) : model(m) {
    const int D = m.config().hidden;
    d = model::bind(g, m.decoder);
    grid = g.constant(v);
    topic = model::zero_state(g, D);
    generator = model::zero_state(g, D);
    e_prev = model::zero_vector(g, D);
  }
};

ModelRoller::ModelRoller(const model::Model& model, const Eigen::MatrixXd& grid)
    : state_(std::make_unique<State>(model, grid)) {}

ModelRoller::~ModelRoller() = default;

SentenceStep ModelRoller::next_sentence() {
  State& s = *state_;
  model::TopicStep t = model::topic_step(s.g, s.d, s.e_prev, s.generator.h, s.topic, s.grid);
  model::DecisionStep dec = model::decide(s.g, s.d, t.state.h, t.out.attention.context, s.generator);
  s.topic = t.state;
  s.generator = dec.state;
  s.q = t.out.topic;
  SentenceStep out;
  out.stop = s.g.scalar(t.out.stop);
  out.decision = model::softmax(s.g.value(dec.logits).col(0));
  out.attention = s.g.value(t.out.attention.weights).row(0).transpose();
  return out;
}

void ModelRoller::begin_words() { state_->words = model::word_prime(state_->g, state_->d, state_->q); }

Eigen::VectorXd ModelRoller::next_word(int prev_token) {
  State& s = *state_;
  model::WordStep w = model::word_step(s.g, s.d, prev_token, s.words);
  s.words = w.state;
  return model::softmax(s.g.value(w.logits).col(0));
}

void ModelRoller::end_sentence(std::span<const int> tokens) {
  state_->e_prev = model::embed_sentence(state_->g, state_->d, tokens);
}

std::string ComposedReport::text() const {
  std::string out;
  for (const auto& s : sentences) {
    if (s.text.empty()) continue;
    if (!out.empty()) out += ' ';
    out += s.text;
  }
  return out;
}

int ComposedReport::retrieved() const {
  int n = 0;
  for (const auto& s : sentences) n += s.retrieved() ? 1 : 0;
  return n;
}

ComposedReport compose_report(Roller& roller, const corpus::TemplateDb& templates, const corpus::Vocabulary& vocab,
                              const ComposeLimits& limits) {
  limits.validate();
  ComposedReport report;
  for (int i = 1; i <= limits.max_sentences; ++i) {
    const SentenceStep step = roller.next_sentence();
    ++report.decoder_steps;
    require(step.decision.size() == static_cast<Eigen::Index>(templates.size()) + 1, ErrorKind::Dimension,
            "compose_report: decision head has " + std::to_string(step.decision.size()) +
                " outcomes but the template database has " + std::to_string(templates.size()) + " entries");
    ComposedSentence sentence;
    sentence.decision_index = model::argmax(step.decision);
    if (sentence.decision_index > 0) {
      const corpus::Template& t = templates.entry(sentence.decision_index);
      sentence.text = t.text;
      sentence.token_ids = t.token_ids;
    } else {
      roller.begin_words();
      ++report.decoder_steps;
      int prev = corpus::Vocabulary::kStart;
      while (static_cast<int>(sentence.token_ids.size()) < limits.max_words) {
        const Eigen::VectorXd p = roller.next_word(prev);
        ++report.decoder_steps;
        const int w = model::argmax(p);
        if (w == corpus::Vocabulary::kEnd) break;
        sentence.token_ids.push_back(w);
        prev = w;
      }
      sentence.text = vocab.decode(sentence.token_ids);
    }
    report.z_trace.push_back(step.stop);
    report.attention.emplace_back(step.attention.data(), step.attention.data() + step.attention.size());
    report.sentences.push_back(std::move(sentence));
    if (step.stop > limits.stop_threshold || i == limits.max_sentences) break;
    roller.end_sentence(report.sentences.back().token_ids);
  }
  return report;
}

ComposedReport compose_report(const model::Model& model, const corpus::Image& image,
                              const corpus::TemplateDb& templates, const corpus::Vocabulary& vocab,
                              const ComposeLimits& limits) {
  require(static_cast<std::size_t>(model.config().templates) == templates.size(), ErrorKind::InvalidArgument,
          "model was built for " + std::to_string(model.config().templates) + " templates, database has " +
              std::to_string(templates.size()));
  const model::FeatureGrid grid = model.backbone.encode_image(image);
  const model::AbnormalityPrediction pred = model.backbone.classify(grid);
  ModelRoller roller(model, grid.values);
  ComposedReport report = compose_report(roller, templates, vocab, limits);
  report.abnormality_scores.assign(pred.probabilities.data(), pred.probabilities.data() + pred.probabilities.size());
  return report;
}

Generation batch_generate(const model::Model& model, std::span<const corpus::Sample> samples,
                          const corpus::TemplateDb& templates, const corpus::Vocabulary& vocab,
                          const ComposeLimits& limits) {
  Generation out;
  for (const auto& s : samples) {
    ComposedReport r = compose_report(model, s.image, templates, vocab, limits);
    r.image_id = s.image_id;
    out.sentences += static_cast<long>(r.sentences.size());
    out.retrieved += r.retrieved();
    out.reports.push_back(std::move(r));
  }
  return out;
}

nlohmann::ordered_json to_json(const ComposedReport& r, bool with_attention) {
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  auto sentences = nlohmann::ordered_json::array();
  for (const auto& s : r.sentences) {
    nlohmann::ordered_json o;
    o["text"] = s.text;
    o["provenance"] = s.retrieved() ? "template" : "generated";
    o["decision_index"] = s.decision_index;
    o["token_ids"] = s.token_ids;
    sentences.push_back(std::move(o));
  }
  j["sentences"] = std::move(sentences);
  j["z_trace"] = r.z_trace;
  j["abnormality_scores"] = r.abnormality_scores;
  if (with_attention) j["attention"] = r.attention;
  return j;
}

ComposedReport report_from_json(const nlohmann::json& j) {
  try {
    ComposedReport r;
    r.image_id = j.at("image_id").get<std::string>();
    for (const auto& o : j.at("sentences")) {
      ComposedSentence s;
      s.text = o.at("text").get<std::string>();
      s.decision_index = o.value("decision_index", 0);
      if (o.contains("token_ids")) s.token_ids = o.at("token_ids").get<std::vector<int>>();
      r.sentences.push_back(std::move(s));
    }
    if (j.contains("z_trace")) r.z_trace = j.at("z_trace").get<std::vector<double>>();
    if (j.contains("abnormality_scores")) r.abnormality_scores = j.at("abnormality_scores").get<std::vector<double>>();
    if (j.contains("attention")) r.attention = j.at("attention").get<std::vector<std::vector<double>>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("generated record: ") + e.what());
  }
}

std::string to_jsonl(const Generation& generation, bool with_attention) {
  std::string out;
  for (const auto& r : generation.reports) {
    out += to_json(r, with_attention).dump();
    out += '\n';
  }
  return out;
}

std::vector<ComposedReport> read_generated(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<ComposedReport> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    out.push_back(report_from_json(j));
  }
  return out;
}

metrics::Candidate candidate(const ComposedReport& r) { return {r.image_id, r.text(), r.abnormality_scores}; }

}  // namespace relpara::inference
