#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "inference.hpp"
#include "model.hpp"
#include "relation_graph.hpp"

namespace relpara::training {

struct LossWeights {
  double cls = 1.0;
  double stop = 1.0;
  double tem = 1.0;
  double word = 1.0;
};

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 16;
  int epochs = 30;
  double decay = 0.8;
  int decay_every = 3;
  int hidden = 512;
  std::vector<int> channels = {8, 16, 32};
  bool conv_bias = true;
  std::uint64_t seed = 1;          // parameter initialization
  std::uint64_t shuffle_seed = 2;  // batch order
  double clip_norm = 5.0;          // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool relation_constraint = true;
  std::vector<std::string> freeze;  // parameter groups held fixed
  LossWeights weights;
  bool validate_each_epoch = true;
  inference::ComposeLimits limits;  // for validation generation

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
// Keys absent from j keep the values in base; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

model::ModelConfig model_config_for(const corpus::Dataset& dataset, const TrainConfig& config);

struct LossOptions {
  LossWeights weights;
  bool relation_constraint = true;
};

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;         // bce + constraint (constraint only when enabled)
  double cls_bce = 0.0;
  double constraint = 0.0;  // always reported, even when not applied
  double stop = 0.0;
  double tem = 0.0;
  double word = 0.0;
  long word_tokens = 0;     // predicted tokens over write sentences, END included
  std::vector<int> mask_tem;   // 1 for template sentences
  std::vector<int> mask_word;  // 1 for write sentences
  std::vector<double> sentence_stop;
  std::vector<double> sentence_tem;
  std::vector<double> sentence_word;  // summed CE, zero for template sentences

  double recombined(const LossWeights& w) const { return w.cls * cls + w.stop * stop + w.tem * tem + w.word * word; }
};

struct Forward {
  ad::Var total;
  LossBreakdown breakdown;
};

// Teacher-forced multitask objective for one sample on graph g.
Forward multitask_loss(ad::Graph& g, const model::Model& model, const Eigen::MatrixXd& image,
                       const corpus::Sample& sample, const relation::RelationMatrix& relation,
                       const LossOptions& options);

LossBreakdown evaluate_loss(const model::Model& model, const corpus::Sample& sample,
                            const relation::RelationMatrix& relation, const LossOptions& options);

// Forward + backward; gradients accumulate into the model's parameters scaled by `scale`.
LossBreakdown accumulate_gradients(const model::Model& model, const Eigen::MatrixXd& image,
                                   const corpus::Sample& sample, const relation::RelationMatrix& relation,
                                   const LossOptions& options, double scale = 1.0);

// Per-sentence stop probability and decision distribution with gold previous
// sentences fed back.
struct SentenceTrace {
  double stop = 0.0;
  Eigen::VectorXd decision;
};
std::vector<SentenceTrace> teacher_forced_trace(const model::Model& model, const corpus::Sample& sample);

// Teacher-forced argmax of the decision head against gold template indices.
struct DecisionStats {
  long sentences = 0;
  long correct = 0;
  double accuracy() const { return sentences == 0 ? 0.0 : static_cast<double>(correct) / sentences; }
};
DecisionStats decision_accuracy(const model::Model& model, std::span<const corpus::Sample> samples);

class Adam {
 public:
  Adam(const model::Model& model, const TrainConfig& config);
  // Applies one update with learning rate lr to every non-frozen parameter.
  void step(model::Model& model, double lr);
  long steps() const { return t_; }

 private:
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
  std::vector<bool> frozen_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// Global L2 norm over the gradients of non-frozen parameters.
double gradient_norm(const model::Model& model, const std::vector<std::string>& freeze);
void clip_gradients(model::Model& model, const std::vector<std::string>& freeze, double max_norm);

// lr for a 0-based epoch: multiplied by decay after every decay_every epochs.
double learning_rate_at(const TrainConfig& config, int epoch);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  LossBreakdown mean;  // per-sample means of each component
  nlohmann::ordered_json validation;
  double seconds = 0.0;
};

nlohmann::ordered_json to_json(const EpochRecord& record);

using EpochCallback = std::function<void(const EpochRecord&)>;

std::vector<EpochRecord> train(model::Model& model, const corpus::Dataset& dataset,
                               const relation::RelationMatrix& relation, const TrainConfig& config,
                               const EpochCallback& on_epoch = {});

}  // namespace relpara::training
