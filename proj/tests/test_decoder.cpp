#include <doctest.h>

#include <cmath>

#include "decoder.hpp"
#include "decoder_oracle.hpp"
#include "model.hpp"
#include "toy.hpp"

using namespace relpara;
using model::BoundDecoder;

namespace {

constexpr double kOracleTol = 1e-10;

Eigen::MatrixXd random_grid(Rng& rng, int channels = 4, int cells = 4) {
  Eigen::MatrixXd g(channels, cells);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1);
  return g;
}

void check_close(const Eigen::MatrixXd& a, const oracle::Vec& b, double tol = kOracleTol) {
  REQUIRE(static_cast<std::size_t>(a.size()) == b.size());
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(a.data()[i] - b[i]) <= tol);
}

struct Fixture {
  model::Model m{toy::config(3)};
  Fixture() { toy::jitter(m, 4); }
};

}  // namespace

TEST_CASE("embed_sentence: empty, determinism and unrolled oracle") {
  Fixture f;
  ad::Graph g;
  const BoundDecoder d = model::bind(g, f.m.decoder);
  const std::vector<int> none;
  CHECK(g.value(model::embed_sentence(g, d, none)).isZero(0));
  const std::vector<int> one = {5};
  const std::vector<int> three = {4, 9, 11};
  const Eigen::MatrixXd e1 = g.value(model::embed_sentence(g, d, three));
  const Eigen::MatrixXd e2 = g.value(model::embed_sentence(g, d, three));
  CHECK(e1 == e2);
  check_close(e1, oracle::embed(f.m.decoder, three));
  check_close(g.value(model::embed_sentence(g, d, one)), oracle::embed(f.m.decoder, one));
  const std::vector<int> bad = {4, 99};
  CHECK_THROWS_AS(model::embed_sentence(g, d, bad), Error);
}

TEST_CASE("topic_step matches the straight-line oracle on random instances") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model::Model m(toy::config(seed));
    toy::jitter(m, seed + 100);
    Rng rng(seed);
    const Eigen::MatrixXd grid = random_grid(rng);
    oracle::Vec e(8), h2(8), h(8), c(8);
    for (auto* v : {&e, &h2, &h, &c}) {
      for (auto& x : *v) x = rng.uniform(-1, 1);
    }
    ad::Graph g;
    const BoundDecoder d = model::bind(g, m.decoder);
    auto vec = [&](const oracle::Vec& v) { return g.constant(Eigen::Map<const Eigen::MatrixXd>(v.data(), 8, 1)); };
    const auto step = model::topic_step(g, d, vec(e), vec(h2), {vec(h), vec(c)}, g.constant(grid));
    const auto o = oracle::topic(m.decoder, e, h2, {h, c}, grid);
    check_close(g.value(step.state.h), o.state.h);
    check_close(g.value(step.state.c), o.state.c);
    CHECK(std::abs(g.scalar(step.out.stop) - o.z) <= kOracleTol);
    check_close(g.value(step.out.attention.weights), o.att.alpha);
    check_close(g.value(step.out.attention.context), o.att.context);
    check_close(g.value(step.out.topic), o.q);

    const auto dec = model::decide(g, d, step.state.h, step.out.attention.context, {vec(h), vec(c)});
    const auto od = oracle::decide(m.decoder, o.state.h, o.att.context, {h, c});
    check_close(g.value(dec.logits), od.logits);
    check_close(g.value(dec.state.h), od.state.h);
  }
}

TEST_CASE("zero stop weights give z = 0.5") {
  Fixture f;
  f.m.decoder.stop_w.value.setZero();
  f.m.decoder.stop_b.value.setZero();
  ad::Graph g;
  const BoundDecoder d = model::bind(g, f.m.decoder);
  Rng rng(1);
  const auto step = model::topic_step(g, d, model::zero_vector(g, 8), model::zero_vector(g, 8),
                                      model::zero_state(g, 8), g.constant(random_grid(rng)));
  CHECK(g.scalar(step.out.stop) == 0.5);
}

TEST_CASE("attention: identical cells, uniform scores, saturation and convexity") {
  Fixture f;
  Rng rng(8);
  ad::Graph g;
  const BoundDecoder d = model::bind(g, f.m.decoder);
  ad::Var h1 = g.constant(random_grid(rng, 8, 1));

  Eigen::MatrixXd same(4, 4);
  for (int l = 0; l < 4; ++l) same.col(l) << 0.3, -0.2, 0.9, 0.1;
  const auto a = model::attend(g, d, h1, g.constant(same));
  CHECK((g.value(a.context) - same.col(0)).cwiseAbs().maxCoeff() < 1e-15);

  // Zero score vector: all e_l equal, so alpha is uniform and c is the mean.
  f.m.decoder.att_score.value.setZero();
  ad::Graph g2;
  const BoundDecoder d2 = model::bind(g2, f.m.decoder);
  const Eigen::MatrixXd grid = random_grid(rng);
  const auto u = model::attend(g2, d2, g2.constant(random_grid(rng, 8, 1)), g2.constant(grid));
  CHECK((g2.value(u.weights).array() - 0.25).abs().maxCoeff() < 1e-15);
  CHECK((g2.value(u.context) - grid.rowwise().mean()).cwiseAbs().maxCoeff() < 1e-15);

  // Saturation: make e_2 about 50 above the rest by aligning the score with
  // a large visual response of cell 2 only.
  Fixture s;
  s.m.decoder.att_hidden.value.setZero();
  s.m.decoder.att_visual.value.setZero();
  s.m.decoder.att_visual.value(0, 0) = 100.0;
  s.m.decoder.att_score.value.setZero();
  s.m.decoder.att_score.value(0, 0) = 50.0;
  Eigen::MatrixXd peaked = random_grid(rng);
  peaked.row(0).setZero();
  peaked(0, 2) = 1.0;
  ad::Graph g3;
  const BoundDecoder d3 = model::bind(g3, s.m.decoder);
  const auto p = model::attend(g3, d3, model::zero_vector(g3, 8), g3.constant(peaked));
  CHECK((g3.value(p.context) - peaked.col(2)).norm() < 1e-10);

  // Convexity on random inputs.
  for (int t = 0; t < 20; ++t) {
    ad::Graph gr;
    const BoundDecoder dr = model::bind(gr, f.m.decoder);
    const Eigen::MatrixXd v = random_grid(rng);
    const auto r = model::attend(gr, dr, gr.constant(random_grid(rng, 8, 1)), gr.constant(v));
    const Eigen::MatrixXd& w = gr.value(r.weights);
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(gr.value(r.context).cwiseAbs().maxCoeff() <= v.cwiseAbs().maxCoeff() + 1e-15);
  }
}

TEST_CASE("decision distribution: uniform, shift invariance and argmax ties") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd d = model::softmax(zero);
  for (int i = 0; i < 3; ++i) CHECK(d[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  Eigen::VectorXd logits(4);
  logits << 0.2, -1.0, 3.0, 0.5;
  const Eigen::VectorXd a = model::softmax(logits);
  const Eigen::VectorXd b = model::softmax((logits.array() + 7.5).matrix());
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(model::argmax(logits) == model::argmax((logits.array() + 7.5).matrix()));
  Eigen::VectorXd tie(3);
  tie << 1.0, 1.0, 0.0;
  CHECK(model::argmax(tie) == 0);
}

TEST_CASE("word decoder: degenerate output layer, rollout oracle and token checks") {
  Fixture f;
  Rng rng(21);
  oracle::Vec q(8);
  for (auto& x : q) x = rng.uniform(-1, 1);
  const std::vector<int> tokens = {6, 3, 9};

  ad::Graph g;
  const BoundDecoder d = model::bind(g, f.m.decoder);
  ad::Var qv = g.constant(Eigen::Map<const Eigen::MatrixXd>(q.data(), 8, 1));
  ad::LstmState s = model::word_prime(g, d, qv);
  const auto expected = oracle::word_rollout(f.m.decoder, q, tokens);
  int prev = corpus::Vocabulary::kStart;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const auto w = model::word_step(g, d, prev, s);
    s = w.state;
    const Eigen::VectorXd p = model::softmax(g.value(w.logits).col(0));
    check_close(p, expected[k]);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
    if (k < tokens.size()) prev = tokens[k];
  }
  CHECK_THROWS_AS(model::word_step(g, d, 12, s), Error);
  CHECK_THROWS_AS(model::word_step(g, d, -1, s), Error);

  f.m.decoder.word_out_w.value.setZero();
  ad::Graph g2;
  const BoundDecoder d2 = model::bind(g2, f.m.decoder);
  const auto w2 = model::word_step(g2, d2, 5, model::word_prime(g2, d2, model::zero_vector(g2, 8)));
  const Eigen::VectorXd expect = model::softmax(f.m.decoder.word_out_b.value.col(0));
  CHECK((model::softmax(g2.value(w2.logits).col(0)) - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("dimension mismatches are rejected") {
  Fixture f;
  ad::Graph g;
  const BoundDecoder d = model::bind(g, f.m.decoder);
  Rng rng(2);
  CHECK_THROWS_AS(model::topic_step(g, d, model::zero_vector(g, 7), model::zero_vector(g, 8), model::zero_state(g, 8),
                                    g.constant(random_grid(rng))),
                  Error);
  CHECK_THROWS_AS(model::attend(g, d, model::zero_vector(g, 8), g.constant(random_grid(rng, 3, 4))), Error);
}

TEST_CASE("parameter groups follow the name prefixes") {
  model::Model m(toy::config(1));
  int counts[5] = {0, 0, 0, 0, 0};
  for (const auto* p : m.parameters()) counts[static_cast<int>(model::group_of(p->name))]++;
  CHECK(counts[static_cast<int>(model::Group::Backbone)] == 6);
  CHECK(counts[static_cast<int>(model::Group::Embedder)] == 7);
  CHECK(counts[static_cast<int>(model::Group::Topic)] == 9);
  CHECK(counts[static_cast<int>(model::Group::Generator)] == 4);
  CHECK(counts[static_cast<int>(model::Group::Word)] == 5);
}
