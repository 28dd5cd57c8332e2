#include "training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "metrics.hpp"
#include "util.hpp"

namespace relpara::training {

void TrainConfig::validate() const {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument,
          "train: learning_rate must be finite and >= 0");
  require(batch_size >= 1, ErrorKind::InvalidArgument, "train: batch_size must be >= 1");
  require(epochs >= 0, ErrorKind::InvalidArgument, "train: epochs must be >= 0");
  require(decay > 0.0 && decay <= 1.0, ErrorKind::InvalidArgument, "train: decay must lie in (0, 1]");
  require(decay_every >= 1, ErrorKind::InvalidArgument, "train: decay_every must be >= 1");
  require(hidden >= 1, ErrorKind::InvalidArgument, "train: hidden must be >= 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0, ErrorKind::InvalidArgument,
          "train: invalid Adam moments");
  for (const auto& g : freeze) {
    require(g == "backbone" || g == "embedder" || g == "topic" || g == "generator" || g == "word",
            ErrorKind::InvalidArgument,
            "train: unknown freeze group '" + g + "' (backbone, embedder, topic, generator, word)");
  }
  limits.validate();
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["decay"] = c.decay;
  j["decay_every"] = c.decay_every;
  j["hidden"] = c.hidden;
  j["channels"] = c.channels;
  j["conv_bias"] = c.conv_bias;
  j["seed"] = c.seed;
  j["shuffle_seed"] = c.shuffle_seed;
  j["clip_norm"] = c.clip_norm;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["relation_constraint"] = c.relation_constraint;
  j["freeze"] = c.freeze;
  j["weight_cls"] = c.weights.cls;
  j["weight_stop"] = c.weights.stop;
  j["weight_tem"] = c.weights.tem;
  j["weight_word"] = c.weights.word;
  j["validate_each_epoch"] = c.validate_each_epoch;
  j["max_sentences"] = c.limits.max_sentences;
  j["max_words"] = c.limits.max_words;
  j["stop_threshold"] = c.limits.stop_threshold;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  require(j.is_object(), ErrorKind::InvalidArgument, "train config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "decay") c.decay = v.get<double>();
      else if (key == "decay_every") c.decay_every = v.get<int>();
      else if (key == "hidden") c.hidden = v.get<int>();
      else if (key == "channels") c.channels = v.get<std::vector<int>>();
      else if (key == "conv_bias") c.conv_bias = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "shuffle_seed") c.shuffle_seed = v.get<std::uint64_t>();
      else if (key == "clip_norm") c.clip_norm = v.get<double>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "relation_constraint") c.relation_constraint = v.get<bool>();
      else if (key == "freeze") c.freeze = v.get<std::vector<std::string>>();
      else if (key == "weight_cls") c.weights.cls = v.get<double>();
      else if (key == "weight_stop") c.weights.stop = v.get<double>();
      else if (key == "weight_tem") c.weights.tem = v.get<double>();
      else if (key == "weight_word") c.weights.word = v.get<double>();
      else if (key == "validate_each_epoch") c.validate_each_epoch = v.get<bool>();
      else if (key == "max_sentences") c.limits.max_sentences = v.get<int>();
      else if (key == "max_words") c.limits.max_words = v.get<int>();
      else if (key == "stop_threshold") c.limits.stop_threshold = v.get<double>();
      else fail(ErrorKind::InvalidArgument, "train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

model::ModelConfig model_config_for(const corpus::Dataset& dataset, const TrainConfig& config) {
  require(!dataset.train.empty(), ErrorKind::InvalidArgument, "train: the training split is empty");
  const corpus::Image& image = dataset.train.front().image;
  model::ModelConfig m;
  m.backbone.input_height = image.height;
  m.backbone.input_width = image.width;
  m.backbone.input_channels = image.channels;
  m.backbone.channels = config.channels;
  m.backbone.conv_bias = config.conv_bias;
  m.hidden = config.hidden;
  m.vocab_size = static_cast<int>(dataset.vocab.size());
  m.abnormalities = static_cast<int>(dataset.abnormalities.size());
  m.templates = static_cast<int>(dataset.templates.size());
  m.seed = config.seed;
  return m;
}

Forward multitask_loss(ad::Graph& g, const model::Model& model, const Eigen::MatrixXd& image,
                       const corpus::Sample& sample, const relation::RelationMatrix& relation,
                       const LossOptions& options) {
  const auto& report = sample.report;
  require(!report.empty(), ErrorKind::InvalidArgument, "multitask_loss: sample " + sample.image_id + " has no sentences");
  const int D = model.config().hidden;
  const int m = static_cast<int>(report.size());
  Forward out;
  LossBreakdown& b = out.breakdown;

  ad::Var grid = model.backbone.encode(g, g.constant(image));
  ad::Var logits = model.backbone.classify_logits(g, grid);
  auto [bce, constraint] = model::classification_loss(g, logits, sample.labels, relation);
  ad::Var cls = options.relation_constraint ? g.add(bce, constraint) : bce;
  b.cls_bce = g.scalar(bce);
  b.constraint = g.scalar(constraint);
  b.cls = g.scalar(cls);

  const model::BoundDecoder d = model::bind(g, model.decoder);
  ad::LstmState topic = model::zero_state(g, D);
  ad::LstmState generator = model::zero_state(g, D);
  ad::Var e_prev = model::zero_vector(g, D);
  std::vector<ad::Var> stop_terms;
  std::vector<ad::Var> tem_terms;
  std::vector<ad::Var> word_terms;
  for (int i = 0; i < m; ++i) {
    const corpus::Sentence& s = report[static_cast<std::size_t>(i)];
    require(s.template_index >= 0 && s.template_index <= model.config().templates, ErrorKind::Dimension,
            "multitask_loss: template index " + std::to_string(s.template_index) + " outside the decision space");
    model::TopicStep t = model::topic_step(g, d, e_prev, generator.h, topic, grid);
    model::DecisionStep dec = model::decide(g, d, t.state.h, t.out.attention.context, generator);
    topic = t.state;
    generator = dec.state;

    ad::Var stop = g.bce_with_logit(t.out.stop_logit, i == m - 1 ? 1.0 : 0.0);
    ad::Var tem = g.cross_entropy(dec.logits, s.template_index);
    stop_terms.push_back(stop);
    tem_terms.push_back(tem);
    b.sentence_stop.push_back(g.scalar(stop));
    b.sentence_tem.push_back(g.scalar(tem));
    const bool write = s.template_index == 0;
    b.mask_tem.push_back(write ? 0 : 1);
    b.mask_word.push_back(write ? 1 : 0);

    double sentence_word = 0.0;
    if (write) {
      ad::LstmState w = model::word_prime(g, d, t.out.topic);
      int prev = corpus::Vocabulary::kStart;
      for (std::size_t k = 0; k <= s.token_ids.size(); ++k) {
        const int target = k < s.token_ids.size() ? s.token_ids[k] : corpus::Vocabulary::kEnd;
        model::WordStep step = model::word_step(g, d, prev, w);
        w = step.state;
        ad::Var ce = g.cross_entropy(step.logits, target);
        word_terms.push_back(ce);
        sentence_word += g.scalar(ce);
        ++b.word_tokens;
        prev = target;
      }
    }
    b.sentence_word.push_back(sentence_word);
    if (i + 1 < m) e_prev = model::embed_sentence(g, d, s.token_ids);
  }

  auto mean_of = [&g](const std::vector<ad::Var>& terms, double denom) {
    ad::Var acc = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) acc = g.add(acc, terms[k]);
    return g.scale(acc, 1.0 / denom);
  };
  ad::Var stop = mean_of(stop_terms, m);
  ad::Var tem = mean_of(tem_terms, m);
  b.stop = g.scalar(stop);
  b.tem = g.scalar(tem);
  const LossWeights& w = options.weights;
  ad::Var total = g.add(g.add(g.scale(cls, w.cls), g.scale(stop, w.stop)), g.scale(tem, w.tem));
  if (!word_terms.empty()) {
    ad::Var word = mean_of(word_terms, static_cast<double>(b.word_tokens));
    b.word = g.scalar(word);
    total = g.add(total, g.scale(word, w.word));
  }
  b.total = g.scalar(total);
  out.total = total;
  return out;
}

LossBreakdown evaluate_loss(const model::Model& model, const corpus::Sample& sample,
                            const relation::RelationMatrix& relation, const LossOptions& options) {
  ad::Graph g;
  return multitask_loss(g, model, model::image_matrix(sample.image, model.config().backbone), sample, relation, options)
      .breakdown;
}

LossBreakdown accumulate_gradients(const model::Model& model, const Eigen::MatrixXd& image,
                                   const corpus::Sample& sample, const relation::RelationMatrix& relation,
                                   const LossOptions& options, double scale) {
  ad::Graph g;
  Forward f = multitask_loss(g, model, image, sample, relation, options);
  if (!std::isfinite(f.breakdown.total)) return f.breakdown;
  g.backward(scale == 1.0 ? f.total : g.scale(f.total, scale));
  return f.breakdown;
}

std::vector<SentenceTrace> teacher_forced_trace(const model::Model& model, const corpus::Sample& sample) {
  const int D = model.config().hidden;
  ad::Graph g;
  ad::Var grid = model.backbone.encode(g, g.constant(model::image_matrix(sample.image, model.config().backbone)));
  const model::BoundDecoder d = model::bind(g, model.decoder);
  ad::LstmState topic = model::zero_state(g, D);
  ad::LstmState generator = model::zero_state(g, D);
  ad::Var e_prev = model::zero_vector(g, D);
  std::vector<SentenceTrace> out;
  for (std::size_t i = 0; i < sample.report.size(); ++i) {
    const corpus::Sentence& s = sample.report[i];
    model::TopicStep t = model::topic_step(g, d, e_prev, generator.h, topic, grid);
    model::DecisionStep dec = model::decide(g, d, t.state.h, t.out.attention.context, generator);
    topic = t.state;
    generator = dec.state;
    out.push_back({g.scalar(t.out.stop), model::softmax(g.value(dec.logits).col(0))});
    if (i + 1 < sample.report.size()) e_prev = model::embed_sentence(g, d, s.token_ids);
  }
  return out;
}

DecisionStats decision_accuracy(const model::Model& model, std::span<const corpus::Sample> samples) {
  DecisionStats stats;
  for (const auto& sample : samples) {
    const auto trace = teacher_forced_trace(model, sample);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      ++stats.sentences;
      if (model::argmax(trace[i].decision) == sample.report[i].template_index) ++stats.correct;
    }
  }
  return stats;
}

namespace {
std::vector<bool> frozen_mask(const model::Model& model, const std::vector<std::string>& freeze) {
  std::vector<bool> out;
  for (const ad::Parameter* p : model.parameters()) {
    const std::string_view group = model::to_string(model::group_of(p->name));
    bool f = false;
    for (const auto& name : freeze) f = f || name == group;
    out.push_back(f);
  }
  return out;
}
}  // namespace

Adam::Adam(const model::Model& model, const TrainConfig& config)
    : frozen_(frozen_mask(model, config.freeze)), beta1_(config.beta1), beta2_(config.beta2), eps_(config.epsilon) {
  for (const ad::Parameter* p : model.parameters()) {
    m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(model::Model& model, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (frozen_[k]) continue;
    ad::Parameter& p = *params[k];
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
  }
}

double gradient_norm(const model::Model& model, const std::vector<std::string>& freeze) {
  const auto mask = frozen_mask(model, freeze);
  const auto params = model.parameters();
  double sq = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!mask[k]) sq += params[k]->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

void clip_gradients(model::Model& model, const std::vector<std::string>& freeze, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = gradient_norm(model, freeze);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (ad::Parameter* p : model.parameters()) p->grad *= s;
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int e = 1; e <= epoch; ++e) {
    if (e % config.decay_every == 0) lr *= config.decay;
  }
  return lr;
}

nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["L"] = r.mean.total;
  j["L_cls"] = r.mean.cls;
  j["L_stop"] = r.mean.stop;
  j["L_tem"] = r.mean.tem;
  j["L_word"] = r.mean.word;
  j["L_constraint"] = r.mean.constraint;
  j["val"] = r.validation;
  j["seconds"] = r.seconds;
  return j;
}

namespace {

void add_into(LossBreakdown& acc, const LossBreakdown& b) {
  acc.total += b.total;
  acc.cls += b.cls;
  acc.cls_bce += b.cls_bce;
  acc.constraint += b.constraint;
  acc.stop += b.stop;
  acc.tem += b.tem;
  acc.word += b.word;
  acc.word_tokens += b.word_tokens;
}

void divide(LossBreakdown& acc, double n) {
  if (n <= 0) return;
  acc.total /= n;
  acc.cls /= n;
  acc.cls_bce /= n;
  acc.constraint /= n;
  acc.stop /= n;
  acc.tem /= n;
  acc.word /= n;
}

nlohmann::ordered_json validate_epoch(const model::Model& model, const corpus::Dataset& dataset,
                                      const relation::RelationMatrix& relation, const TrainConfig& config,
                                      const LossOptions& options) {
  nlohmann::ordered_json j;
  const auto& val = dataset.val;
  if (val.empty()) return j;
  LossBreakdown acc;
  for (const auto& s : val) add_into(acc, evaluate_loss(model, s, relation, options));
  divide(acc, static_cast<double>(val.size()));
  j["L"] = acc.total;
  j["L_cls"] = acc.cls;
  j["L_stop"] = acc.stop;
  j["L_tem"] = acc.tem;
  j["L_word"] = acc.word;
  j["decision_accuracy"] = decision_accuracy(model, val).accuracy();

  const inference::Generation gen = inference::batch_generate(model, val, dataset.templates, dataset.vocab, config.limits);
  std::vector<metrics::Candidate> cands;
  for (const auto& r : gen.reports) cands.push_back(inference::candidate(r));
  metrics::EvalOptions eo;
  eo.mode = dataset.options.mode;
  const metrics::EvalResult e = metrics::evaluate(cands, val, eo);
  j["cider"] = e.cider;
  j["rouge_l"] = e.rouge_l;
  j["bleu_1"] = e.bleu[0];
  j["bleu_4"] = e.bleu[3];
  j["auc"] = e.auc ? nlohmann::ordered_json(e.auc->macro) : nlohmann::ordered_json(nullptr);
  j["retrieval_ratio"] = gen.retrieval_ratio();
  return j;
}

}  // namespace

std::vector<EpochRecord> train(model::Model& model, const corpus::Dataset& dataset,
                               const relation::RelationMatrix& relation, const TrainConfig& config,
                               const EpochCallback& on_epoch) {
  config.validate();
  require(!dataset.train.empty(), ErrorKind::InvalidArgument, "train: the training split is empty");
  require(relation.size() == dataset.abnormalities.size(), ErrorKind::Dimension,
          "train: relation matrix is " + std::to_string(relation.size()) + "x" + std::to_string(relation.size()) +
              " but the dataset has " + std::to_string(dataset.abnormalities.size()) + " abnormalities");
  const auto& mc = model.config();
  require(mc.vocab_size == static_cast<int>(dataset.vocab.size()) &&
              mc.abnormalities == static_cast<int>(dataset.abnormalities.size()) &&
              mc.templates == static_cast<int>(dataset.templates.size()),
          ErrorKind::Dimension, "train: model dimensions do not match the dataset");

  LossOptions options{config.weights, config.relation_constraint};
  std::vector<Eigen::MatrixXd> images;
  images.reserve(dataset.train.size());
  for (const auto& s : dataset.train) images.push_back(model::image_matrix(s.image, mc.backbone));

  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(config.shuffle_seed);
  Adam adam(model, config);
  std::vector<EpochRecord> records;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const double lr = learning_rate_at(config, epoch);
    LossBreakdown acc;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      model.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const corpus::Sample& s = dataset.train[order[k]];
        const LossBreakdown b = accumulate_gradients(model, images[order[k]], s, relation, options, scale);
        if (!std::isfinite(b.total)) {
          fail(ErrorKind::Diverged, "training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                        ", sample " + s.image_id + " (lr " + format_double(lr) + ")");
        }
        add_into(acc, b);
      }
      const double norm = gradient_norm(model, config.freeze);
      if (!std::isfinite(norm)) {
        fail(ErrorKind::Diverged, "training diverged: non-finite gradient norm at epoch " + std::to_string(epoch + 1));
      }
      clip_gradients(model, config.freeze, config.clip_norm);
      adam.step(model, lr);
    }
    divide(acc, static_cast<double>(order.size()));

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.mean = acc;
    if (config.validate_each_epoch) rec.validation = validate_epoch(model, dataset, relation, config, options);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(rec);
    records.push_back(std::move(rec));
  }
  model.zero_grad();
  return records;
}

}  // namespace relpara::training
