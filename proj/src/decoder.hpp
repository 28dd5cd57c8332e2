#pragma once

#include <span>
#include <vector>

#include "autodiff.hpp"
#include "util.hpp"

namespace relpara::model {

struct DecoderConfig {
  int hidden = 512;           // D: every recurrent state, embedding and topic vector
  int vocab_size = 0;         // |V| including reserved tokens
  int templates = 0;          // N; the decision space has N + 1 outcomes
  int feature_channels = 0;   // C of the feature grid
  void validate() const;
};

// Hierarchical decoder parameters. The sentence embedder and the word decoder
// keep separate embedding tables so the template branch never touches
// word-decoder weights.
class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(DecoderConfig config);

  const DecoderConfig& config() const { return config_; }
  void initialize(Rng& rng);
  void collect(std::vector<const ad::Parameter*>& out) const;

  // sentence embedder (bi-LSTM + projection)
  ad::Parameter embed_table, embed_fwd_w, embed_fwd_b, embed_bwd_w, embed_bwd_b, embed_proj_w, embed_proj_b;
  // topic encoder, stop control, attention, topic vector
  ad::Parameter topic_w, topic_b, stop_w, stop_b, att_hidden, att_visual, att_score, topic_qh, topic_qc;
  // adaptive generator
  ad::Parameter gen_w, gen_b, decision_w, decision_b;
  // word decoder
  ad::Parameter word_table, word_w, word_b, word_out_w, word_out_b;

 private:
  DecoderConfig config_;
};

// Parameters placed on one graph; bind once per sample.
struct BoundDecoder {
  const DecoderConfig* config = nullptr;
  ad::Var embed_table, embed_fwd_w, embed_fwd_b, embed_bwd_w, embed_bwd_b, embed_proj_w, embed_proj_b;
  ad::Var topic_w, topic_b, stop_w, stop_b, att_hidden, att_visual, att_score, topic_qh, topic_qc;
  ad::Var gen_w, gen_b, decision_w, decision_b;
  ad::Var word_table, word_w, word_b, word_out_w, word_out_b;
};

BoundDecoder bind(ad::Graph& g, const Decoder& decoder);

ad::LstmState zero_state(ad::Graph& g, int hidden);
ad::Var zero_vector(ad::Graph& g, int size);

// E for a sentence; the empty sentence maps to the zero vector.
ad::Var embed_sentence(ad::Graph& g, const BoundDecoder& d, std::span<const int> tokens);

struct Attention {
  ad::Var context;  // C x 1
  ad::Var weights;  // 1 x L
};

// e_l = w^T tanh(W_h h1 + W_v v_l), alpha = softmax(e), c = sum_l alpha_l v_l.
Attention attend(ad::Graph& g, const BoundDecoder& d, ad::Var h1, ad::Var grid);

struct TopicOutput {
  ad::Var stop_logit;
  ad::Var stop;  // z
  Attention attention;
  ad::Var topic;  // q
};

struct TopicStep {
  ad::LstmState state;
  TopicOutput out;
};

TopicStep topic_step(ad::Graph& g, const BoundDecoder& d, ad::Var e_prev, ad::Var h2_prev,
                     const ad::LstmState& state, ad::Var grid);

struct DecisionStep {
  ad::LstmState state;
  ad::Var logits;  // (N + 1) x 1; softmax gives d
};

DecisionStep decide(ad::Graph& g, const BoundDecoder& d, ad::Var h1, ad::Var context, const ad::LstmState& state);

// Step 0 of a sentence: the topic vector is the input, nothing is predicted.
ad::LstmState word_prime(ad::Graph& g, const BoundDecoder& d, ad::Var topic);

struct WordStep {
  ad::LstmState state;
  ad::Var logits;  // |V| x 1; softmax gives p_w
};

// Feeds prev_token (START on the first call after priming).
WordStep word_step(ad::Graph& g, const BoundDecoder& d, int prev_token, const ad::LstmState& state);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
// Lowest index wins ties.
int argmax(const Eigen::VectorXd& values);

}  // namespace relpara::model
