#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tacslab/data.hpp"
#include "tacslab/evaluation.hpp"
#include "tacslab/gradcheck.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/selector.hpp"

using namespace tacslab;

namespace {

SelectorNet identity_selector(std::size_t dim) {
  Rng rng(1);
  SelectorNet net(dim, dim, dim, rng);
  auto params = net.params();
  for (ad::Parameter* p : params) p->value.fill(0.0);
  // w1 = w2 = identity, biases zero: embed(x) = tanh(x)
  for (std::size_t i = 0; i < dim; ++i) {
    net.encoder().w1.value.at(i, i) = 1.0;
    net.encoder().w2.value.at(i, i) = 1.0;
  }
  return net;
}

SelectorNet zero_selector(std::size_t dim, std::size_t hidden, std::size_t d) {
  Rng rng(1);
  SelectorNet net(dim, hidden, d, rng);
  for (ad::Parameter* p : net.params()) p->value.fill(0.0);
  return net;
}

CandidatePool pool_from_features(const std::vector<FeatureVector>& feats,
                                 std::int64_t group_base = 100) {
  std::vector<LabeledSample> items(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    items[i].features = feats[i];
    items[i].label = 0;
    items[i].group = group_base + static_cast<std::int64_t>(i);
  }
  return make_pool(std::move(items));
}

}  // namespace

TEST_CASE("embed annihilates with zero weights") {
  SelectorNet net = zero_selector(4, 5, 3);
  const auto z = net.embed({1.0, -2.0, 3.0, 0.5});
  for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("embed with identity weights is a tanh copy") {
  SelectorNet net = identity_selector(3);
  const FeatureVector x = {0.3, -1.2, 2.0};
  const auto z = net.embed(x);
  for (int i = 0; i < 3; ++i)
    CHECK_THAT(z[i], Catch::Matchers::WithinAbs(std::tanh(x[i]), 1e-15));
}

TEST_CASE("embed rejects wrong input dimension") {
  SelectorNet net = identity_selector(3);
  CHECK_THROWS_AS(net.embed({1.0, 2.0}), ShapeError);
}

TEST_CASE("embed gradcheck over encoder parameters") {
  Rng rng(5);
  SelectorNet net(4, 6, 3, rng);
  Tensor x(4, 1), c(3, 1);
  for (auto& v : x.raw()) v = rng.normal();
  for (auto& v : c.raw()) v = rng.normal();
  auto loss = [&](bool track) {
    ad::Tape t;
    auto bound = net.encoder().bind(t);
    ad::Var z = net.embed(t, bound, t.constant(x));
    ad::Var l = t.dot(z, t.constant(c));
    if (track) t.backward(l);
    return l.scalar();
  };
  const auto rep = ad::grad_check(loss, net.params(), 1e-5, 1e-4);
  CHECK(rep.passed);
}

TEST_CASE("score is the inner product") {
  CHECK(SelectorNet::score({1.0, 0.0}, {1.0, 0.0}) == 1.0);
  CHECK(SelectorNet::score({1.0, 0.0}, {0.0, 1.0}) == 0.0);
  CHECK(SelectorNet::score({1.0, 2.0}, {3.0, -1.0}) == 1.0);
  CHECK_THROWS_AS(SelectorNet::score({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("score_pool singleton and uniform cases") {
  SelectorNet id = identity_selector(2);
  CandidatePool single = pool_from_features({{0.5, 0.5}});
  const UtilityScores u = id.score_pool({1.0, 0.0}, single, 1);
  REQUIRE(u.probabilities.size() == 1);
  CHECK(u.probabilities[0] == 1.0);

  SelectorNet zero = zero_selector(2, 3, 2);
  CandidatePool four =
      pool_from_features({{1, 0}, {0, 1}, {1, 1}, {2, 2}});
  const UtilityScores uz = zero.score_pool({1.0, 0.0}, four, 1);
  for (double p : uz.probabilities)
    CHECK_THAT(p, Catch::Matchers::WithinAbs(0.25, 1e-15));
}

TEST_CASE("score_pool matches direct softmax of hand-computed dots") {
  SelectorNet id = identity_selector(2);
  const FeatureVector q = {0.8, -0.4};
  const std::vector<FeatureVector> cands = {{0.2, 0.9}, {-0.5, 0.1}, {1.5, 0.7}};
  CandidatePool pool = pool_from_features(cands);
  const UtilityScores u = id.score_pool(q, pool, 1);
  // independent oracle: tanh embeddings and softmax computed directly
  std::vector<double> expect(3);
  const auto zq = std::vector<double>{std::tanh(q[0]), std::tanh(q[1])};
  for (int i = 0; i < 3; ++i)
    expect[i] = zq[0] * std::tanh(cands[i][0]) + zq[1] * std::tanh(cands[i][1]);
  double zmax = std::max({expect[0], expect[1], expect[2]});
  double zsum = 0.0;
  for (auto& e : expect) {
    e = std::exp(e - zmax);
    zsum += e;
  }
  for (int i = 0; i < 3; ++i)
    CHECK_THAT(u.probabilities[i],
               Catch::Matchers::WithinAbs(expect[i] / zsum, 1e-12));
}

TEST_CASE("leakage exclusion masks to zero probability and never selects") {
  SelectorNet id = identity_selector(2);
  std::vector<LabeledSample> items(3);
  items[0].features = {5.0, 5.0};  // would dominate, but shares the group
  items[0].group = 7;
  items[1].features = {0.1, 0.1};
  items[1].group = 8;
  items[2].features = {0.2, 0.2};
  items[2].group = 9;
  CandidatePool pool = make_pool(std::move(items));
  const UtilityScores u = id.score_pool({1.0, 1.0}, pool, 7);
  CHECK(std::isinf(u.scores[0]));
  CHECK(u.probabilities[0] == 0.0);
  CHECK(select_argmax(u) == 2);

  // all candidates masked
  std::vector<LabeledSample> same(2);
  same[0].features = {1.0, 0.0};
  same[0].group = 3;
  same[1].features = {0.0, 1.0};
  same[1].group = 3;
  CandidatePool masked = make_pool(std::move(same));
  CHECK_THROWS_AS(id.score_pool({1.0, 1.0}, masked, 3), EmptyPoolError);
}

TEST_CASE("select_argmax tie break and shift invariance") {
  UtilityScores u;
  u.probabilities = {0.2, 0.5, 0.3};
  CHECK(select_argmax(u) == 1);
  u.probabilities = {0.5, 0.5};
  CHECK(select_argmax(u) == 0);

  Rng rng(11);
  SelectorNet net(3, 4, 3, rng);
  CandidatePool pool = pool_from_features({{1, 0, 0}, {0, 1, 0}, {0.4, 0.4, 0.4}});
  const UtilityScores a = net.score_pool({0.3, 0.2, 0.1}, pool, 1);
  // shifting all scores by a constant cannot change the argmax
  UtilityScores shifted = a;
  for (auto& s : shifted.scores) s += 123.0;
  std::vector<double> p(shifted.scores.size());
  kernels::softmax(shifted.scores.data(), p.size(), p.data());
  shifted.probabilities = p;
  CHECK(select_argmax(a) == select_argmax(shifted));
}

TEST_CASE("score_pool is permutation equivariant") {
  Rng rng(21);
  SelectorNet net(4, 6, 4, rng);
  std::vector<FeatureVector> feats;
  for (int i = 0; i < 6; ++i) {
    FeatureVector f(4);
    for (auto& v : f) v = rng.normal();
    feats.push_back(f);
  }
  const FeatureVector q = {0.1, -0.3, 0.8, 0.2};
  CandidatePool pool = pool_from_features(feats);
  const UtilityScores u = net.score_pool(q, pool, 1);

  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<FeatureVector> permuted(feats.size());
  for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = feats[perm[i]];
  CandidatePool ppool = pool_from_features(permuted);
  const UtilityScores pu = net.score_pool(q, ppool, 1);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK(pu.scores[i] == u.scores[perm[i]]);
    CHECK(pu.probabilities[i] == u.probabilities[perm[i]]);
  }
  CHECK(perm[select_argmax(pu)] == select_argmax(u));
}

TEST_CASE("frozen encoder scoring is bit-identical across calls") {
  Rng rng(33);
  SelectorNet net(5, 8, 4, rng);
  std::vector<FeatureVector> feats;
  for (int i = 0; i < 8; ++i) {
    FeatureVector f(5);
    for (auto& v : f) v = rng.normal();
    feats.push_back(f);
  }
  CandidatePool pool = pool_from_features(feats);
  const FeatureVector q = {0.4, 0.1, -0.2, 0.9, -1.1};
  const UtilityScores a = net.score_pool(q, pool, 1);
  const UtilityScores b = net.score_pool(q, pool, 1);
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i] == b.scores[i]);
    CHECK(a.probabilities[i] == b.probabilities[i]);
  }
  // cached-embedding evaluation path agrees bit for bit
  const PoolEmbeddings pe = embed_pool(net, pool);
  const UtilityScores c = score_pool_cached(net, pe, pool, q, 1);
  for (std::size_t i = 0; i < a.scores.size(); ++i)
    CHECK(a.scores[i] == c.scores[i]);
}
