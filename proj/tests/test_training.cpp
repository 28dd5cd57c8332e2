#include <doctest.h>

#include <cmath>
#include <limits>

#include "decoder_oracle.hpp"
#include "gradcheck.hpp"
#include "synthetic.hpp"
#include "toy.hpp"
#include "training.hpp"

using namespace relpara;
using training::LossOptions;

namespace {

Eigen::MatrixXd toy_grid(const model::Model& m, const corpus::Sample& s) {
  return m.backbone.encode_image(s.image).values;
}

training::Forward forward(ad::Graph& g, const model::Model& m, const corpus::Sample& s,
                          const relation::RelationMatrix& rel, const LossOptions& o = {}) {
  return training::multitask_loss(g, m, model::image_matrix(s.image, m.config().backbone), s, rel, o);
}

std::vector<Eigen::MatrixXd> snapshot(const model::Model& m) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto* p : m.parameters()) out.push_back(p->value);
  return out;
}

synthetic::SyntheticConfig tiny_synth() {
  synthetic::SyntheticConfig c;
  c.train_samples = 24;
  c.val_samples = 8;
  c.test_samples = 8;
  c.image_size = 16;
  return c;
}

training::TrainConfig tiny_train() {
  training::TrainConfig c;
  c.hidden = 8;
  c.channels = {4, 8};
  c.epochs = 1;
  c.batch_size = 8;
  c.learning_rate = 1e-3;
  c.validate_each_epoch = false;
  return c;
}

}  // namespace

TEST_CASE("loss examples: single sentence with z = 0.5, uniform decision over 4 outcomes") {
  model::Model m(toy::config(1));
  m.decoder.stop_w.value.setZero();
  m.decoder.stop_b.value.setZero();
  m.decoder.decision_w.value.setZero();
  m.decoder.decision_b.value.setZero();
  corpus::Sample s = toy::mixed_sample(1);
  s.report = {toy::write_sentence({4, 5})};
  const auto rel = relation::RelationMatrix::zeros(4);
  const auto b = training::evaluate_loss(m, s, rel, {});
  CHECK(b.stop == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  CHECK(b.tem == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(b.word_tokens == 3);

  s.report.clear();
  CHECK_THROWS_AS(training::evaluate_loss(m, s, rel, {}), Error);
}

TEST_CASE("multitask loss matches the straight-line oracle") {
  const auto rel = toy::relation();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model::Model m(toy::config(seed));
    toy::jitter(m, seed * 7);
    const corpus::Sample s = toy::mixed_sample(seed);
    for (bool use : {true, false}) {
      LossOptions o;
      o.relation_constraint = use;
      const auto b = training::evaluate_loss(m, s, rel, o);
      const auto ref = oracle::sample_loss(m, toy_grid(m, s), s, rel, use);
      CHECK(std::abs(b.cls_bce - ref.cls_bce) <= 1e-10);
      CHECK(std::abs(b.cls - (ref.cls_bce + ref.constraint)) <= 1e-10);
      CHECK(std::abs(b.stop - ref.stop) <= 1e-10);
      CHECK(std::abs(b.tem - ref.tem) <= 1e-10);
      CHECK(std::abs(b.word - ref.word) <= 1e-10);
      CHECK(b.word_tokens == ref.tokens);
      CHECK(std::abs(b.total - (ref.cls_bce + ref.constraint + ref.stop + ref.tem + ref.word)) <= 1e-10);

      const auto trace = training::teacher_forced_trace(m, s);
      REQUIRE(trace.size() == ref.z.size());
      for (std::size_t i = 0; i < trace.size(); ++i) {
        CHECK(std::abs(trace[i].stop - ref.z[i]) <= 1e-10);
        for (std::size_t k = 0; k < ref.decisions[i].size(); ++k) {
          CHECK(std::abs(trace[i].decision[static_cast<Eigen::Index>(k)] - ref.decisions[i][k]) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("masks, stop targets and additivity") {
  model::Model m(toy::config(2));
  toy::jitter(m, 3);
  const corpus::Sample s = toy::mixed_sample(2);
  const auto b = training::evaluate_loss(m, s, toy::relation(), {});
  CHECK(b.mask_tem == std::vector<int>{1, 0, 1, 0});
  CHECK(b.mask_word == std::vector<int>{0, 1, 0, 1});
  CHECK(b.sentence_word[0] == 0.0);
  CHECK(b.sentence_word[2] == 0.0);
  CHECK(b.sentence_word[1] > 0.0);
  CHECK(b.word_tokens == 4 + 3);

  // Stop terms: BCE against [0, 0, 0, 1].
  const auto trace = training::teacher_forced_trace(m, s);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double target = i + 1 == trace.size() ? 1.0 : 0.0;
    const double expected = -(target * std::log(trace[i].stop) + (1 - target) * std::log(1 - trace[i].stop));
    CHECK(b.sentence_stop[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(std::abs(b.total - b.recombined({})) <= 1e-10);
  training::LossWeights w{0.5, 2.0, 0.25, 3.0};
  LossOptions o;
  o.weights = w;
  const auto bw = training::evaluate_loss(m, s, toy::relation(), o);
  CHECK(std::abs(bw.total - bw.recombined(w)) <= 1e-10);
}

TEST_CASE("template-only sample leaves the word decoder with exactly zero gradient") {
  model::Model m(toy::config(4));
  toy::jitter(m, 5);
  corpus::Sample s = toy::mixed_sample(4);
  s.report = {toy::template_sentence(1, {4, 5}), toy::template_sentence(3, {6})};
  m.zero_grad();
  training::accumulate_gradients(m, model::image_matrix(s.image, m.config().backbone), s, toy::relation(), {});
  for (const auto* p : m.parameters()) {
    if (model::group_of(p->name) == model::Group::Word) {
      CHECK(p->grad.isZero(0));
    } else if (p->name != "decoder.topic.vector.hidden" && p->name != "decoder.topic.vector.context") {
      // The topic vector only feeds the word decoder; everything else
      // upstream of the stop and decision heads receives signal.
      INFO(p->name);
      CHECK_FALSE(p->grad.isZero(0));
    }
  }
}

TEST_CASE("full objective gradient matches finite differences") {
  model::Model m(toy::config(9));
  toy::jitter(m, 10);
  const corpus::Sample s = toy::mixed_sample(9);
  const auto rel = toy::relation();
  const auto params = m.parameters();
  const std::vector<const ad::Parameter*> cparams(params.begin(), params.end());
  auto rep = testing::check_gradients(cparams, [&](ad::Graph& g) { return forward(g, m, s, rel).total; });
  INFO(rep.worst, " abs ", rep.max_abs);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("learning-rate schedule") {
  training::TrainConfig c;
  CHECK(training::learning_rate_at(c, 0) == 5e-4);
  CHECK(training::learning_rate_at(c, 2) == 5e-4);
  CHECK(training::learning_rate_at(c, 3) == training::learning_rate_at(c, 2) * 0.8);
  CHECK(training::learning_rate_at(c, 5) == training::learning_rate_at(c, 3));
  CHECK(training::learning_rate_at(c, 6) == training::learning_rate_at(c, 5) * 0.8);
}

TEST_CASE("train config JSON round-trip and validation") {
  training::TrainConfig c;
  c.learning_rate = 1e-3;
  c.freeze = {"backbone"};
  c.channels = {4, 8, 16};
  const auto j = training::to_json(c);
  const auto back = training::train_config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(training::to_json(back) == j);
  CHECK_THROWS_AS(training::train_config_from_json(nlohmann::json{{"learnin_rate", 1.0}}), Error);
  CHECK_THROWS_AS(training::train_config_from_json(nlohmann::json{{"decay", 1.5}}), Error);
  CHECK_THROWS_AS(training::train_config_from_json(nlohmann::json{{"batch_size", 0}}), Error);
  CHECK_THROWS_AS(training::train_config_from_json(nlohmann::json{{"freeze", {"nonsense"}}}), Error);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const auto ds = synthetic::generate_synthetic(tiny_synth());
  const auto rel = relation::build_relation_matrix([&] {
    std::vector<std::vector<int>> l;
    for (const auto& s : ds.train) l.push_back(s.labels);
    return l;
  }());
  auto cfg = tiny_train();
  cfg.learning_rate = 0.0;
  model::Model m(training::model_config_for(ds, cfg));
  const auto before = snapshot(m);
  training::train(m, ds, rel, cfg);
  CHECK(snapshot(m) == before);
}

TEST_CASE("one small step descends on a toy batch in 10 of 10 seeds") {
  const auto rel = toy::relation();
  int descended = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    model::Model m(toy::config(seed));
    std::vector<corpus::Sample> batch = {toy::mixed_sample(seed), toy::mixed_sample(seed + 50)};
    auto loss = [&] {
      double t = 0;
      for (const auto& s : batch) t += training::evaluate_loss(m, s, rel, {}).total;
      return t;
    };
    const double before = loss();
    m.zero_grad();
    for (const auto& s : batch) {
      training::accumulate_gradients(m, model::image_matrix(s.image, m.config().backbone), s, rel, {}, 0.5);
    }
    training::TrainConfig cfg;
    training::Adam adam(m, cfg);
    adam.step(m, 1e-4);
    descended += loss() < before;
  }
  CHECK(descended == 10);
}

TEST_CASE("seeded training is deterministic and frozen groups stay fixed") {
  const auto ds = synthetic::generate_synthetic(tiny_synth());
  std::vector<std::vector<int>> labels;
  for (const auto& s : ds.train) labels.push_back(s.labels);
  const auto rel = relation::build_relation_matrix(labels);
  auto cfg = tiny_train();
  model::Model a(training::model_config_for(ds, cfg));
  model::Model b(training::model_config_for(ds, cfg));
  const auto ra = training::train(a, ds, rel, cfg);
  const auto rb = training::train(b, ds, rel, cfg);
  CHECK(ra[0].mean.total == rb[0].mean.total);
  CHECK(snapshot(a) == snapshot(b));

  cfg.freeze = {"backbone", "word"};
  model::Model f(training::model_config_for(ds, cfg));
  const auto before = snapshot(f);
  training::train(f, ds, rel, cfg);
  const auto after = snapshot(f);
  const auto params = f.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto group = model::group_of(params[k]->name);
    if (group == model::Group::Backbone || group == model::Group::Word) {
      CHECK(after[k] == before[k]);
    } else {
      CHECK_FALSE(after[k] == before[k]);
    }
  }
}

TEST_CASE("epoch records carry the logged keys and the decayed rate") {
  const auto ds = synthetic::generate_synthetic(tiny_synth());
  auto cfg = tiny_train();
  cfg.epochs = 4;
  cfg.validate_each_epoch = true;
  cfg.limits.max_sentences = 3;
  cfg.limits.max_words = 4;
  model::Model m(training::model_config_for(ds, cfg));
  std::vector<nlohmann::ordered_json> seen;
  training::train(m, ds, relation::RelationMatrix::zeros(ds.abnormalities.size()), cfg,
                  [&](const training::EpochRecord& r) { seen.push_back(training::to_json(r)); });
  REQUIRE(seen.size() == 4);
  for (const char* key : {"epoch", "lr", "L", "L_cls", "L_stop", "L_tem", "L_word", "val"}) CHECK(seen[0].contains(key));
  CHECK(seen[3]["lr"].get<double>() == seen[2]["lr"].get<double>() * 0.8);
  CHECK(seen[2]["lr"].get<double>() == seen[0]["lr"].get<double>());
  for (const char* key : {"auc", "decision_accuracy", "bleu_1", "retrieval_ratio"}) CHECK(seen[0]["val"].contains(key));
}

TEST_CASE("non-finite loss raises the divergence error") {
  const auto ds = synthetic::generate_synthetic(tiny_synth());
  auto cfg = tiny_train();
  model::Model m(training::model_config_for(ds, cfg));
  m.decoder.stop_b.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    training::train(m, ds, relation::RelationMatrix::zeros(ds.abnormalities.size()), cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverged);
  }
}
