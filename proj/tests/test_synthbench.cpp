#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "tacslab/baselines.hpp"
#include "tacslab/kernels.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/synthbench.hpp"

using namespace tacslab;

namespace {

double raw_similarity(const FeatureVector& a, const FeatureVector& b) {
  return kernels::dot(a.data(), b.data(), a.size());
}

std::size_t code_of(const LabeledSample& s, const BenchmarkSpec& spec,
                    std::size_t key_dims = 16) {
  // code block sits between the key block and the payload
  return kernels::argmax(s.features.data() + key_dims, spec.classes);
}

}  // namespace

TEST_CASE("keymatch construction invariants") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.train_size = 256;
  spec.eval_size = 128;
  spec.seed = 17;
  const BenchmarkData data = gen_keymatch(spec);

  REQUIRE(data.pool.size() == spec.pool_size);
  REQUIRE(data.train.size() == spec.train_size);
  REQUIRE(data.eval.size() == spec.eval_size);

  SECTION("labels decode through the oracle carrier") {
    for (std::size_t i = 0; i < data.eval.size(); ++i) {
      const LabeledSample& q = data.eval[i];
      const LabeledSample& carrier = data.pool[data.oracle.eval_target[i]];
      CHECK(carrier.key == q.key);
      const std::size_t c_q = code_of(q, spec);
      const std::size_t c_k = code_of(carrier, spec);
      CHECK((static_cast<std::int64_t>((c_q + c_k) % spec.classes)) == q.label);
    }
  }

  SECTION("train and eval keys are disjoint") {
    std::set<std::int64_t> train_keys, eval_keys;
    for (const auto& q : data.train) train_keys.insert(q.key);
    for (const auto& q : data.eval) eval_keys.insert(q.key);
    for (std::int64_t k : eval_keys) CHECK(train_keys.count(k) == 0);
  }

  SECTION("no evaluation query group appears in the pool") {
    std::set<std::int64_t> pool_groups;
    for (std::size_t i = 0; i < data.pool.size(); ++i)
      pool_groups.insert(data.pool[i].group);
    for (const auto& q : data.eval) CHECK(pool_groups.count(q.group) == 0);
  }

  SECTION("label posterior given the query alone is uniform") {
    // enumerate the hidden carrier code: each value is equally likely a
    // priori and maps the same visible query code to a distinct label
    for (std::size_t c_q = 0; c_q < spec.classes; ++c_q) {
      std::vector<int> hits(spec.classes, 0);
      for (std::size_t c_k = 0; c_k < spec.classes; ++c_k)
        ++hits[(c_q + c_k) % spec.classes];
      for (int h : hits) CHECK(h == 1);
    }
  }

  SECTION("labels are balanced") {
    std::vector<int> counts(spec.classes, 0);
    for (const auto& q : data.eval) ++counts[static_cast<std::size_t>(q.label)];
    for (int c : counts)
      CHECK(std::abs(c - 32) < 32);  // loose binomial sanity for 128 draws
  }
}

TEST_CASE("keymatch distractor dominates raw similarity at strength 1.0") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.train_size = 512;
  spec.eval_size = 256;
  spec.seed = 23;
  spec.distractor_strength = 1.0;
  const BenchmarkData data = gen_keymatch(spec);

  std::size_t trap_wins = 0, total = 0;
  auto tally = [&](const std::vector<LabeledSample>& queries) {
    for (const auto& q : queries) {
      const std::size_t k = static_cast<std::size_t>(q.key);
      const double trap_sim =
          raw_similarity(q.features, data.pool[data.info.trap_of_key[k]].features);
      const double carrier_sim = raw_similarity(
          q.features, data.pool[data.info.carrier_of_key[k]].features);
      if (trap_sim > carrier_sim) ++trap_wins;
      ++total;
    }
  };
  tally(data.train);
  tally(data.eval);
  const double rate = static_cast<double>(trap_wins) / static_cast<double>(total);
  INFO("trap similarity win rate " << rate);
  CHECK(rate >= 0.95);
}

TEST_CASE("frozen similarity retrieval falls for the crafted distractor") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.train_size = 128;
  spec.eval_size = 256;
  spec.seed = 42;
  const BenchmarkData data = gen_keymatch(spec);

  Rng init = rng_substream(42, "init");
  SelectorNet frozen(spec.input_dim, 64, 64, init);
  const PoolEmbeddings pe = embed_pool(frozen, data.pool);

  std::size_t trap_picks = 0, carrier_picks = 0;
  for (const auto& q : data.eval) {
    const std::size_t pick = retrieve_frozen_similarity(frozen, pe, data.pool,
                                                        q.features, q.group);
    const std::size_t k = static_cast<std::size_t>(q.key);
    if (pick == data.info.trap_of_key[k]) ++trap_picks;
    if (pick == data.info.carrier_of_key[k]) ++carrier_picks;
  }
  const double trap_rate =
      static_cast<double>(trap_picks) / static_cast<double>(data.eval.size());
  INFO("frozen-similarity trap rate " << trap_rate << ", carrier picks "
                                      << carrier_picks);
  CHECK(trap_rate >= 0.9);
}

TEST_CASE("crossclass construction invariants") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("crossclass");
  spec.train_size = 256;
  spec.eval_size = 256;
  spec.seed = 17;
  const BenchmarkData data = gen_crossclass(spec);

  SECTION("oracle candidates always belong to the other class") {
    for (std::size_t i = 0; i < data.eval.size(); ++i)
      CHECK(data.pool[data.oracle.eval_target[i]].label != data.eval[i].label);
    for (std::size_t i = 0; i < data.train.size(); ++i)
      CHECK(data.pool[data.oracle.train_target[i]].label !=
            data.train[i].label);
  }

  SECTION("chance level is one half") {
    std::size_t ones = 0;
    for (const auto& q : data.eval) ones += static_cast<std::size_t>(q.label);
    const double frac = static_cast<double>(ones) / data.eval.size();
    CHECK(std::abs(frac - 0.5) < 3.0 * std::sqrt(0.25 / data.eval.size()));
  }

  SECTION("no evaluation query group appears in the pool") {
    std::set<std::int64_t> pool_groups;
    for (std::size_t i = 0; i < data.pool.size(); ++i)
      pool_groups.insert(data.pool[i].group);
    for (const auto& q : data.eval) CHECK(pool_groups.count(q.group) == 0);
  }
}

TEST_CASE("crossclass frozen similarity picks a same-class near-duplicate") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("crossclass");
  spec.train_size = 128;
  spec.eval_size = 256;
  spec.seed = 23;
  const BenchmarkData data = gen_crossclass(spec);

  Rng init = rng_substream(23, "init");
  SelectorNet frozen(spec.input_dim, 64, 64, init);
  const PoolEmbeddings pe = embed_pool(frozen, data.pool);

  std::size_t same_class = 0;
  for (const auto& q : data.eval) {
    const std::size_t pick = retrieve_frozen_similarity(frozen, pe, data.pool,
                                                        q.features, q.group);
    if (data.pool[pick].label == q.label) ++same_class;
  }
  const double rate =
      static_cast<double>(same_class) / static_cast<double>(data.eval.size());
  INFO("frozen-similarity same-class rate " << rate);
  CHECK(rate >= 0.9);
}

TEST_CASE("generation is a pure function of spec and seed") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.train_size = 64;
  spec.eval_size = 32;
  spec.seed = 99;
  const BenchmarkData a = gen_keymatch(spec);
  const BenchmarkData b = gen_keymatch(spec);
  CHECK(a.pool.pool_version == b.pool.pool_version);
  CHECK(hash_samples(a.train) == hash_samples(b.train));
  CHECK(hash_samples(a.eval) == hash_samples(b.eval));
  CHECK(a.oracle.eval_target == b.oracle.eval_target);

  spec.seed = 100;
  const BenchmarkData c = gen_keymatch(spec);
  CHECK(a.pool.pool_version != c.pool.pool_version);
}

TEST_CASE("benchmark spec validation") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.keys = 300;
  spec.pool_size = 64;
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = BenchmarkSpec::defaults("keymatch");
  spec.pool_size = spec.keys * 2;  // no room for helpers
  CHECK_THROWS_AS(gen_keymatch(spec), ConfigError);

  CHECK_THROWS_AS(BenchmarkSpec::defaults("nosuch"), ConfigError);

  spec = BenchmarkSpec::defaults("crossclass");
  spec.classes = 3;
  CHECK_THROWS_AS(gen_crossclass(spec), ConfigError);
}

TEST_CASE("build_pool samples and removes the configured fraction") {
  Rng rng(5);
  std::vector<LabeledSample> train(1000);
  for (std::size_t i = 0; i < train.size(); ++i) {
    train[i].features = {rng.normal(), rng.normal()};
    train[i].label = static_cast<std::int64_t>(rng.below(4));
    train[i].group = static_cast<std::int64_t>(i);
  }
  auto [pool, remaining] = build_pool(train, 0.2, 7);
  CHECK(pool.size() == 200);
  CHECK(remaining.size() == 800);
  CHECK(pool.fraction == 0.2);

  // partition: pool and remainder together are exactly the input
  std::multiset<std::int64_t> seen;
  for (std::size_t i = 0; i < pool.size(); ++i) seen.insert(pool[i].group);
  for (const auto& s : remaining) seen.insert(s.group);
  CHECK(seen.size() == train.size());
  for (const auto& s : train) CHECK(seen.count(s.group) == 1);

  // determinism: same seed gives a hash-equal pool
  auto [pool2, remaining2] = build_pool(train, 0.2, 7);
  CHECK(pool2.pool_version == pool.pool_version);

  CHECK_THROWS_AS(build_pool(train, 0.0, 7), ConfigError);
  CHECK_THROWS_AS(build_pool(train, 1.0, 7), ConfigError);
  std::vector<LabeledSample> tiny(train.begin(), train.begin() + 3);
  CHECK_THROWS_AS(build_pool(tiny, 0.001, 7), ConfigError);
}

TEST_CASE("eval metrics definitions") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.train_size = 64;
  spec.eval_size = 32;
  spec.seed = 3;
  const BenchmarkData data = gen_keymatch(spec);

  SECTION("all-oracle selections give agreement 1") {
    std::vector<EvalOutcome> outcomes(data.eval.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      outcomes[i].query_id = i;
      outcomes[i].predicted = data.eval[i].label;
      outcomes[i].has_selection = true;
      outcomes[i].selected = data.oracle.eval_target[i];
    }
    const MetricsRecord m =
        eval_metrics(outcomes, data.eval, data.pool, data.oracle.eval_target);
    CHECK(m.accuracy == 1.0);
    CHECK(m.oracle_agreement == 1.0);
  }

  SECTION("uniform probabilities over four candidates give entropy ln 4") {
    std::vector<EvalOutcome> outcomes(data.eval.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      outcomes[i].predicted = 0;
      outcomes[i].has_entropy = true;
      outcomes[i].entropy = std::log(4.0);
    }
    const MetricsRecord m =
        eval_metrics(outcomes, data.eval, data.pool, data.oracle.eval_target);
    CHECK_THAT(m.mean_entropy,
               Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
  }

  SECTION("missing outcomes are rejected") {
    std::vector<EvalOutcome> outcomes(data.eval.size() - 1);
    CHECK_THROWS_AS(
        eval_metrics(outcomes, data.eval, data.pool, data.oracle.eval_target),
        InvalidArgumentError);
  }
}

TEST_CASE("random selection cross-class rate on a balanced crossclass pool") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("crossclass");
  spec.train_size = 64;
  spec.eval_size = 2048;
  spec.seed = 31;
  const BenchmarkData data = gen_crossclass(spec);
  // pool halves are class-balanced by construction, so a uniform pick lands
  // on the other class about (C-1)/C = 1/2 of the time
  std::size_t cross = 0;
  for (std::size_t i = 0; i < data.eval.size(); ++i) {
    Rng rng = rng_substream(31, "policy", i);
    const std::size_t pick = retrieve_random(data.pool, rng, data.eval[i].group);
    if (data.pool[pick].label != data.eval[i].label) ++cross;
  }
  const double rate = static_cast<double>(cross) / data.eval.size();
  const double sigma = std::sqrt(0.25 / data.eval.size());
  CHECK(std::abs(rate - 0.5) <= 3.0 * sigma);
}

TEST_CASE("dataset snapshots round-trip through the binary layout") {
  BenchmarkSpec spec = BenchmarkSpec::defaults("keymatch");
  spec.train_size = 64;
  spec.eval_size = 32;
  spec.seed = 11;
  const BenchmarkData data = gen_keymatch(spec);

  std::stringstream buf;
  write_samples_binary(buf, data.pool.candidates,
                       static_cast<std::int64_t>(spec.input_dim),
                       static_cast<std::int64_t>(spec.classes));
  const SampleFile file = read_samples_binary(buf);
  CHECK(file.feature_dim == static_cast<std::int64_t>(spec.input_dim));
  CHECK(file.class_count == static_cast<std::int64_t>(spec.classes));
  REQUIRE(file.samples.size() == data.pool.size());
  CHECK(hash_samples(file.samples) == data.pool.pool_version);  // bit-exact
}
