#include "decoder.hpp"

#include <cmath>

namespace relpara::model {

void DecoderConfig::validate() const {
  require(hidden >= 1, ErrorKind::InvalidArgument, "decoder: hidden size must be >= 1");
  require(vocab_size > 4, ErrorKind::InvalidArgument, "decoder: vocabulary has no content tokens");
  require(templates >= 0, ErrorKind::InvalidArgument, "decoder: negative template count");
  require(feature_channels >= 1, ErrorKind::InvalidArgument, "decoder: feature channels must be >= 1");
}

Decoder::Decoder(DecoderConfig config) : config_(config) {
  config_.validate();
  const int D = config_.hidden;
  const int V = config_.vocab_size;
  const int C = config_.feature_channels;
  const int N = config_.templates;
  embed_table = ad::Parameter("decoder.embedder.embedding", D, V);
  embed_fwd_w = ad::Parameter("decoder.embedder.forward.weight", 4 * D, 2 * D);
  embed_fwd_b = ad::Parameter("decoder.embedder.forward.bias", 4 * D, 1);
  embed_bwd_w = ad::Parameter("decoder.embedder.backward.weight", 4 * D, 2 * D);
  embed_bwd_b = ad::Parameter("decoder.embedder.backward.bias", 4 * D, 1);
  embed_proj_w = ad::Parameter("decoder.embedder.projection.weight", D, 2 * D);
  embed_proj_b = ad::Parameter("decoder.embedder.projection.bias", D, 1);
  topic_w = ad::Parameter("decoder.topic.lstm.weight", 4 * D, 3 * D);
  topic_b = ad::Parameter("decoder.topic.lstm.bias", 4 * D, 1);
  stop_w = ad::Parameter("decoder.topic.stop.weight", 1, D);
  stop_b = ad::Parameter("decoder.topic.stop.bias", 1, 1);
  att_hidden = ad::Parameter("decoder.topic.attention.hidden", D, D);
  att_visual = ad::Parameter("decoder.topic.attention.visual", D, C);
  att_score = ad::Parameter("decoder.topic.attention.score", D, 1);
  topic_qh = ad::Parameter("decoder.topic.vector.hidden", D, D);
  topic_qc = ad::Parameter("decoder.topic.vector.context", D, C);
  gen_w = ad::Parameter("decoder.generator.lstm.weight", 4 * D, 2 * D + C);
  gen_b = ad::Parameter("decoder.generator.lstm.bias", 4 * D, 1);
  decision_w = ad::Parameter("decoder.generator.decision.weight", N + 1, D);
  decision_b = ad::Parameter("decoder.generator.decision.bias", N + 1, 1);
  word_table = ad::Parameter("decoder.word.embedding", D, V);
  word_w = ad::Parameter("decoder.word.lstm.weight", 4 * D, 2 * D);
  word_b = ad::Parameter("decoder.word.lstm.bias", 4 * D, 1);
  word_out_w = ad::Parameter("decoder.word.output.weight", V, D);
  word_out_b = ad::Parameter("decoder.word.output.bias", V, 1);
}

void Decoder::initialize(Rng& rng) {
  auto fill = [&rng](ad::Parameter& p, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-bound, bound);
  };
  auto lstm_bias = [this](ad::Parameter& b) {
    b.value.setZero();
    b.value.middleRows(config_.hidden, config_.hidden).setOnes();  // forget gate
  };
  fill(embed_table, 1.0);
  fill(embed_fwd_w, embed_fwd_w.value.cols());
  lstm_bias(embed_fwd_b);
  fill(embed_bwd_w, embed_bwd_w.value.cols());
  lstm_bias(embed_bwd_b);
  fill(embed_proj_w, embed_proj_w.value.cols());
  embed_proj_b.value.setZero();
  fill(topic_w, topic_w.value.cols());
  lstm_bias(topic_b);
  fill(stop_w, stop_w.value.cols());
  stop_b.value.setZero();
  fill(att_hidden, att_hidden.value.cols());
  fill(att_visual, att_visual.value.cols());
  fill(att_score, att_score.value.rows());
  fill(topic_qh, topic_qh.value.cols());
  fill(topic_qc, topic_qc.value.cols());
  fill(gen_w, gen_w.value.cols());
  lstm_bias(gen_b);
  fill(decision_w, decision_w.value.cols());
  decision_b.value.setZero();
  fill(word_table, 1.0);
  fill(word_w, word_w.value.cols());
  lstm_bias(word_b);
  fill(word_out_w, word_out_w.value.cols());
  word_out_b.value.setZero();
}

void Decoder::collect(std::vector<const ad::Parameter*>& out) const {
  for (const ad::Parameter* p :
       {&embed_table, &embed_fwd_w, &embed_fwd_b, &embed_bwd_w, &embed_bwd_b, &embed_proj_w, &embed_proj_b,
        &topic_w, &topic_b, &stop_w, &stop_b, &att_hidden, &att_visual, &att_score, &topic_qh, &topic_qc,
        &gen_w, &gen_b, &decision_w, &decision_b, &word_table, &word_w, &word_b, &word_out_w, &word_out_b}) {
    out.push_back(p);
  }
}

BoundDecoder bind(ad::Graph& g, const Decoder& d) {
  BoundDecoder b;
  b.config = &d.config();
  b.embed_table = g.param(d.embed_table);
  b.embed_fwd_w = g.param(d.embed_fwd_w);
  b.embed_fwd_b = g.param(d.embed_fwd_b);
  b.embed_bwd_w = g.param(d.embed_bwd_w);
  b.embed_bwd_b = g.param(d.embed_bwd_b);
  b.embed_proj_w = g.param(d.embed_proj_w);
  b.embed_proj_b = g.param(d.embed_proj_b);
  b.topic_w = g.param(d.topic_w);
  b.topic_b = g.param(d.topic_b);
  b.stop_w = g.param(d.stop_w);
  b.stop_b = g.param(d.stop_b);
  b.att_hidden = g.param(d.att_hidden);
  b.att_visual = g.param(d.att_visual);
  b.att_score = g.param(d.att_score);
  b.topic_qh = g.param(d.topic_qh);
  b.topic_qc = g.param(d.topic_qc);
  b.gen_w = g.param(d.gen_w);
  b.gen_b = g.param(d.gen_b);
  b.decision_w = g.param(d.decision_w);
  b.decision_b = g.param(d.decision_b);
  b.word_table = g.param(d.word_table);
  b.word_w = g.param(d.word_w);
  b.word_b = g.param(d.word_b);
  b.word_out_w = g.param(d.word_out_w);
  b.word_out_b = g.param(d.word_out_b);
  return b;
}

ad::Var zero_vector(ad::Graph& g, int size) { return g.constant(Eigen::MatrixXd::Zero(size, 1)); }

ad::LstmState zero_state(ad::Graph& g, int hidden) {
  ad::Var z = zero_vector(g, hidden);
  return {z, z};
}

namespace {
void check_token(const DecoderConfig& c, int id) {
  require(id >= 0 && id < c.vocab_size, ErrorKind::InvalidArgument,
          "token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(c.vocab_size));
}

void check_rows(const ad::Graph& g, ad::Var v, Eigen::Index rows, const char* what) {
  require(g.value(v).rows() == rows && g.value(v).cols() == 1, ErrorKind::Dimension,
          std::string(what) + ": expected a vector of size " + std::to_string(rows) + ", got " +
              std::to_string(g.value(v).rows()) + "x" + std::to_string(g.value(v).cols()));
}
}  // namespace

ad::Var embed_sentence(ad::Graph& g, const BoundDecoder& d, std::span<const int> tokens) {
  const int D = d.config->hidden;
  if (tokens.empty()) return zero_vector(g, D);
  for (int id : tokens) check_token(*d.config, id);
  ad::LstmState fwd = zero_state(g, D);
  for (int id : tokens) fwd = ad::lstm_step(g, d.embed_fwd_w, d.embed_fwd_b, g.column(d.embed_table, id), fwd);
  ad::LstmState bwd = zero_state(g, D);
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
    bwd = ad::lstm_step(g, d.embed_bwd_w, d.embed_bwd_b, g.column(d.embed_table, *it), bwd);
  }
  return g.add(g.matmul(d.embed_proj_w, g.concat_rows({fwd.h, bwd.h})), d.embed_proj_b);
}

Attention attend(ad::Graph& g, const BoundDecoder& d, ad::Var h1, ad::Var grid) {
  check_rows(g, h1, d.config->hidden, "attend h1");
  require(g.value(grid).rows() == d.config->feature_channels, ErrorKind::Dimension,
          "attend: feature grid has " + std::to_string(g.value(grid).rows()) + " channels, expected " +
              std::to_string(d.config->feature_channels));
  ad::Var projected = g.add_col(g.matmul(d.att_visual, grid), g.matmul(d.att_hidden, h1));
  ad::Var scores = g.matmul(g.transpose(d.att_score), g.tanh(projected));
  Attention a;
  a.weights = g.softmax_row(scores);
  a.context = g.matmul(grid, g.transpose(a.weights));
  return a;
}

TopicStep topic_step(ad::Graph& g, const BoundDecoder& d, ad::Var e_prev, ad::Var h2_prev,
                     const ad::LstmState& state, ad::Var grid) {
  const int D = d.config->hidden;
  check_rows(g, e_prev, D, "topic_step E");
  check_rows(g, h2_prev, D, "topic_step h2");
  TopicStep s;
  s.state = ad::lstm_step(g, d.topic_w, d.topic_b, g.concat_rows({h2_prev, e_prev}), state);
  s.out.stop_logit = g.add(g.matmul(d.stop_w, s.state.h), d.stop_b);
  s.out.stop = g.sigmoid(s.out.stop_logit);
  s.out.attention = attend(g, d, s.state.h, grid);
  s.out.topic = g.add(g.matmul(d.topic_qh, s.state.h), g.matmul(d.topic_qc, s.out.attention.context));
  return s;
}

DecisionStep decide(ad::Graph& g, const BoundDecoder& d, ad::Var h1, ad::Var context, const ad::LstmState& state) {
  check_rows(g, h1, d.config->hidden, "decide h1");
  check_rows(g, context, d.config->feature_channels, "decide context");
  DecisionStep s;
  s.state = ad::lstm_step(g, d.gen_w, d.gen_b, g.concat_rows({h1, context}), state);
  s.logits = g.add(g.matmul(d.decision_w, s.state.h), d.decision_b);
  return s;
}

ad::LstmState word_prime(ad::Graph& g, const BoundDecoder& d, ad::Var topic) {
  check_rows(g, topic, d.config->hidden, "word_prime topic");
  return ad::lstm_step(g, d.word_w, d.word_b, topic, zero_state(g, d.config->hidden));
}

WordStep word_step(ad::Graph& g, const BoundDecoder& d, int prev_token, const ad::LstmState& state) {
  check_token(*d.config, prev_token);
  WordStep s;
  s.state = ad::lstm_step(g, d.word_w, d.word_b, g.column(d.word_table, prev_token), state);
  s.logits = g.add(g.matmul(d.word_out_w, s.state.h), d.word_out_b);
  return s;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

int argmax(const Eigen::VectorXd& values) {
  require(values.size() > 0, ErrorKind::InvalidArgument, "argmax of an empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace relpara::model
