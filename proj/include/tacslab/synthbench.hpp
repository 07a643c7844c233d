#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tacslab/common.hpp"
#include "tacslab/data.hpp"
#include "tacslab/evaluation.hpp"
#include "tacslab/records.hpp"
#include "tacslab/rng.hpp"

namespace tacslab {

// Desk-scale benchmark settings. Everything downstream is a pure function of
// (spec, seed).
struct BenchmarkSpec {
  std::string name = "keymatch";
  std::size_t classes = 2;
  std::size_t input_dim = 80;
  std::size_t keys = 64;  // latent keys (keymatch) or clusters (crossclass)
  std::size_t pool_size = 256;
  std::size_t train_size = 1024;
  std::size_t eval_size = 512;
  double distractor_strength = 2.0;
  std::uint64_t seed = 17;

  static BenchmarkSpec defaults(const std::string& benchmark) {
    BenchmarkSpec s;
    s.name = benchmark;
    if (benchmark == "crossclass") {
      s.classes = 2;
      s.keys = 16;
      s.pool_size = 64;
      s.input_dim = 72;
    } else if (benchmark != "keymatch") {
      throw ConfigError("unknown benchmark '" + benchmark + "'");
    }
    return s;
  }

  void validate() const {
    if (name != "keymatch" && name != "crossclass")
      throw ConfigError("unknown benchmark '" + name + "'");
    if (classes < 2 || input_dim == 0 || keys < 2 || pool_size == 0 ||
        train_size == 0 || eval_size == 0)
      throw ConfigError("benchmark spec: sizes must be positive");
    if (keys > pool_size)
      throw ConfigError("benchmark spec: keys (" + std::to_string(keys) +
                        ") exceed pool size (" + std::to_string(pool_size) +
                        ")");
    if (keys % 2 != 0)
      throw ConfigError("benchmark spec: keys must be even (half are held "
                        "out for evaluation)");
  }
};

// Construction-known most-helpful candidate per query.
struct Oracle {
  std::vector<std::size_t> train_target;
  std::vector<std::size_t> eval_target;
};

// Generator bookkeeping exposed for construction-level assertions.
struct ConstructionInfo {
  std::vector<std::size_t> carrier_of_key;                   // keymatch
  std::vector<std::size_t> trap_of_key;                      // keymatch
  std::vector<std::array<std::size_t, 2>> proto_of_cluster;  // crossclass
  std::vector<std::array<std::size_t, 2>> trap_of_cluster;   // crossclass
};

struct BenchmarkData {
  BenchmarkSpec spec;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> eval;
  CandidatePool pool;
  Oracle oracle;
  ConstructionInfo info;
};

// ---------------------------------------------------------------------------
// keymatch
//
// Feature layout: [ key block | code block (C) | payload ].
//
// A query carries a dense per-key signature, a visible random code c_q and a
// per-key payload (plus jitter). Its label is (c_q + c_k) mod C where c_k is
// stored only in the key's unique carrier candidate, so the label is chance
// given the query alone. Evaluation queries use keys never seen in training
// queries, which keeps a query-only classifier at chance on the held-out
// split while the selector's signature-matching rule transfers across keys.
//
// Pool per key: one carrier (clean code c_k), several helpers (blurred but
// still decodable code; strictly less confident, hence lower reward than the
// carrier), and one distractor that shares the query payload (dominating raw
// similarity) while carrying a wrong key signature. A fixed fraction of
// distractors carries the right code value, which gives similarity-based
// retrieval partial credit.
// ---------------------------------------------------------------------------

struct KeymatchKnobs {
  std::size_t key_dims = 16;
  double key_scale = 1.0;
  double payload_jitter = 2.0;
  double code_scale = 6.0;            // code blocks speak louder than noise
  double helper_code_blur = 0.5;      // blend toward uniform on helper codes
  double trap_right_code_rate = 0.5;  // fraction of keys whose trap helps
  // global multiplier keeping random tanh encoders in their linear regime,
  // so raw-similarity structure survives a frozen random embedding
  double feature_scale = 0.4;
};

namespace detail {

inline std::vector<double> onehot(std::size_t n, std::size_t i, double v = 1.0) {
  std::vector<double> out(n, 0.0);
  out[i] = v;
  return out;
}

inline void append(FeatureVector& dst, const std::vector<double>& block) {
  dst.insert(dst.end(), block.begin(), block.end());
}

}  // namespace detail

inline BenchmarkData gen_keymatch(const BenchmarkSpec& spec,
                                  const KeymatchKnobs& knobs = {}) {
  spec.validate();
  const std::size_t C = spec.classes;
  const std::size_t K = spec.keys;
  if (spec.pool_size % K != 0 || spec.pool_size / K < 2)
    throw ConfigError("keymatch: pool size must be a multiple of keys and at "
                      "least 2x keys (one carrier and one distractor each), "
                      "got pool " +
                      std::to_string(spec.pool_size) + " for " +
                      std::to_string(K) + " keys");
  const std::size_t helpers_per_key = spec.pool_size / K - 2;
  if (spec.input_dim <= knobs.key_dims + C)
    throw ConfigError("keymatch: input_dim too small for key and code blocks");
  const std::size_t payload_dims = spec.input_dim - knobs.key_dims - C;

  Rng rng = rng_substream(spec.seed, "dataset");

  // Per-key latents: signature, payload, carrier code.
  std::vector<std::vector<double>> signature(K), payload(K);
  std::vector<std::size_t> code(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (;;) {  // signatures must be pairwise distinct
      signature[k].assign(knobs.key_dims, 0.0);
      for (auto& x : signature[k])
        x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * knobs.key_scale /
            std::sqrt(static_cast<double>(knobs.key_dims));
      bool clash = false;
      for (std::size_t j = 0; j < k && !clash; ++j)
        clash = signature[j] == signature[k];
      if (!clash) break;
    }
    payload[k].resize(payload_dims);
    for (auto& x : payload[k]) x = rng.normal();
    code[k] = static_cast<std::size_t>(rng.below(C));
  }

  // Exact fraction of helpful distractors, balanced across the training
  // half (keys [0, K/2)) and the evaluation half ([K/2, K)).
  std::vector<bool> trap_helps(K, false);
  const std::size_t half = K / 2;
  const std::size_t helpful_per_half = static_cast<std::size_t>(
      knobs.trap_right_code_rate * static_cast<double>(half) + 0.5);
  for (std::size_t h = 0; h < 2; ++h) {
    std::vector<std::size_t> order(half);
    for (std::size_t i = 0; i < half; ++i) order[i] = h * half + i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < helpful_per_half && i < order.size(); ++i)
      trap_helps[order[i]] = true;
  }

  // Pool: carrier + helpers + distractor per key, then a global shuffle so
  // indices carry no structure.
  std::vector<LabeledSample> pool_items;
  std::vector<std::size_t> carrier_slot(K), trap_slot(K);  // pre-shuffle
  std::int64_t next_group = 1'000'000'000;
  for (std::size_t k = 0; k < K; ++k) {
    {
      LabeledSample carrier;
      detail::append(carrier.features, signature[k]);
      detail::append(carrier.features,
                     detail::onehot(C, code[k], knobs.code_scale));
      for (std::size_t d = 0; d < payload_dims; ++d)
        carrier.features.push_back(rng.normal());
      carrier.label = static_cast<std::int64_t>(code[k]);
      carrier.group = next_group++;
      carrier.key = static_cast<std::int64_t>(k);
      carrier_slot[k] = pool_items.size();
      pool_items.push_back(std::move(carrier));
    }
    for (std::size_t h = 0; h < helpers_per_key; ++h) {
      LabeledSample helper;
      detail::append(helper.features, signature[k]);
      std::vector<double> blurred(C, knobs.code_scale * knobs.helper_code_blur /
                                         static_cast<double>(C));
      blurred[code[k]] += knobs.code_scale * (1.0 - knobs.helper_code_blur);
      detail::append(helper.features, blurred);
      for (std::size_t d = 0; d < payload_dims; ++d)
        helper.features.push_back(rng.normal());
      helper.label = static_cast<std::int64_t>(code[k]);
      helper.group = next_group++;
      helper.key = static_cast<std::int64_t>(k);
      pool_items.push_back(std::move(helper));
    }
    {
      // Distractor: same payload as the key's queries, wrong signature.
      LabeledSample trap;
      detail::append(trap.features, signature[(k + 1) % K]);
      std::size_t trap_code;
      if (trap_helps[k]) {
        trap_code = code[k];
      } else {
        trap_code = static_cast<std::size_t>(rng.below(C - 1));
        if (trap_code >= code[k]) ++trap_code;
      }
      // blurred like a helper: a helpful distractor is still strictly less
      // rewarding than the key's carrier
      std::vector<double> trap_blend(C, knobs.code_scale * knobs.helper_code_blur /
                                        static_cast<double>(C));
      trap_blend[trap_code] += knobs.code_scale * (1.0 - knobs.helper_code_blur);
      detail::append(trap.features, trap_blend);
      for (std::size_t d = 0; d < payload_dims; ++d)
        trap.features.push_back(spec.distractor_strength * payload[k][d]);
      trap.label = static_cast<std::int64_t>(trap_code);
      trap.group = next_group++;
      trap.key = static_cast<std::int64_t>(k);
      trap_slot[k] = pool_items.size();
      pool_items.push_back(std::move(trap));
    }
  }
  std::vector<std::size_t> order(pool_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<LabeledSample> shuffled(pool_items.size());
  std::vector<std::size_t> carrier_index(K), trap_index(K);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    shuffled[pos] = std::move(pool_items[order[pos]]);
    for (std::size_t k = 0; k < K; ++k) {
      if (order[pos] == carrier_slot[k]) carrier_index[k] = pos;
      if (order[pos] == trap_slot[k]) trap_index[k] = pos;
    }
  }

  // Queries. Training draws keys from the first half, evaluation from the
  // held-out second half.
  auto make_queries = [&](std::size_t count, std::size_t key_lo,
                          std::size_t key_hi, std::int64_t group_base,
                          std::vector<std::size_t>& targets) {
    std::vector<LabeledSample> queries;
    queries.reserve(count);
    targets.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t k =
          key_lo + static_cast<std::size_t>(rng.below(key_hi - key_lo));
      const std::size_t c_q = static_cast<std::size_t>(rng.below(C));
      LabeledSample q;
      detail::append(q.features, signature[k]);
      detail::append(q.features, detail::onehot(C, c_q, knobs.code_scale));
      for (std::size_t d = 0; d < payload_dims; ++d)
        q.features.push_back(payload[k][d] +
                             knobs.payload_jitter * rng.normal());
      q.label = static_cast<std::int64_t>((c_q + code[k]) % C);
      q.group = group_base + static_cast<std::int64_t>(i);
      q.key = static_cast<std::int64_t>(k);
      queries.push_back(std::move(q));
      targets.push_back(carrier_index[k]);
    }
    return queries;
  };

  BenchmarkData data;
  data.spec = spec;
  data.train = make_queries(spec.train_size, 0, half, 0, data.oracle.train_target);
  data.eval = make_queries(spec.eval_size, half, K, 500'000'000,
                           data.oracle.eval_target);
  for (auto* split : {&data.train, &data.eval, &shuffled})
    for (auto& s : *split)
      for (auto& x : s.features) x *= knobs.feature_scale;
  data.pool = make_pool(std::move(shuffled));
  data.info.carrier_of_key = carrier_index;
  data.info.trap_of_key = trap_index;
  return data;
}

// ---------------------------------------------------------------------------
// crossclass
//
// Feature layout: [ cluster block | reference one-hot (V) | class flag | body ].
//
// Queries carry the reference value of their *opposite*-class prototype, so
// the label is decidable only by contrasting the query against that
// prototype: on a reference match the label is the complement of the
// prototype's flagged class. Same-class traps share the query body (winning
// raw similarity) but carry no reference and no flag. The most helpful
// candidate therefore always belongs to the other class.
// ---------------------------------------------------------------------------

struct CrossclassKnobs {
  std::size_t cluster_dims = 8;
  std::size_t reference_values = 10;
  double reference_scale = 2.0;
  double flag_scale = 1.0;
  double body_jitter = 0.5;
  double feature_scale = 0.5;
};

inline BenchmarkData gen_crossclass(const BenchmarkSpec& spec,
                                    const CrossclassKnobs& knobs = {}) {
  spec.validate();
  if (spec.classes != 2)
    throw ConfigError("crossclass: exactly 2 classes required");
  const std::size_t J = spec.keys;  // clusters
  if (spec.pool_size != 4 * J)
    throw ConfigError("crossclass: pool size must be 4x clusters (two "
                      "prototypes and two traps each), got " +
                      std::to_string(spec.pool_size) + " for " +
                      std::to_string(J) + " clusters");
  const std::size_t fixed = knobs.cluster_dims + knobs.reference_values + 1;
  if (spec.input_dim <= fixed)
    throw ConfigError("crossclass: input_dim too small for layout");
  const std::size_t body_dims = spec.input_dim - fixed;

  Rng rng = rng_substream(spec.seed, "dataset");

  std::vector<std::vector<double>> cluster_sig(J);
  std::vector<std::array<std::size_t, 2>> ref(J);
  std::vector<std::array<std::vector<double>, 2>> body(J);
  for (std::size_t j = 0; j < J; ++j) {
    cluster_sig[j].resize(knobs.cluster_dims);
    for (auto& x : cluster_sig[j])
      x = (rng.uniform() < 0.5 ? -1.0 : 1.0) /
          std::sqrt(static_cast<double>(knobs.cluster_dims));
    ref[j][0] = static_cast<std::size_t>(rng.below(knobs.reference_values));
    ref[j][1] = static_cast<std::size_t>(rng.below(knobs.reference_values - 1));
    if (ref[j][1] >= ref[j][0]) ++ref[j][1];
    for (int y = 0; y < 2; ++y) {
      body[j][y].resize(body_dims);
      for (auto& x : body[j][y]) x = rng.normal();
    }
  }

  std::vector<LabeledSample> pool_items;
  std::vector<std::array<std::size_t, 2>> proto_slot(J), trap_slot(J);
  std::int64_t next_group = 1'000'000'000;
  for (std::size_t j = 0; j < J; ++j) {
    for (int y = 0; y < 2; ++y) {
      LabeledSample proto;
      detail::append(proto.features, cluster_sig[j]);
      detail::append(proto.features,
                     detail::onehot(knobs.reference_values, ref[j][y],
                                    knobs.reference_scale));
      proto.features.push_back((y == 1 ? 1.0 : -1.0) * knobs.flag_scale);
      for (std::size_t d = 0; d < body_dims; ++d)
        proto.features.push_back(rng.normal());
      proto.label = y;
      proto.group = next_group++;
      proto.key = static_cast<std::int64_t>(j);
      proto_slot[j][y] = pool_items.size();
      pool_items.push_back(std::move(proto));
    }
    for (int y = 0; y < 2; ++y) {
      LabeledSample trap;
      detail::append(trap.features, cluster_sig[j]);
      detail::append(trap.features,
                     std::vector<double>(knobs.reference_values, 0.0));
      trap.features.push_back(0.0);
      for (std::size_t d = 0; d < body_dims; ++d)
        trap.features.push_back(spec.distractor_strength * body[j][y][d]);
      trap.label = y;
      trap.group = next_group++;
      trap.key = static_cast<std::int64_t>(j);
      trap_slot[j][y] = pool_items.size();
      pool_items.push_back(std::move(trap));
    }
  }
  std::vector<std::size_t> order(pool_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<LabeledSample> shuffled(pool_items.size());
  std::vector<std::array<std::size_t, 2>> proto_index(J), trap_index(J);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    shuffled[pos] = std::move(pool_items[order[pos]]);
    for (std::size_t j = 0; j < J; ++j)
      for (int y = 0; y < 2; ++y) {
        if (order[pos] == proto_slot[j][y]) proto_index[j][y] = pos;
        if (order[pos] == trap_slot[j][y]) trap_index[j][y] = pos;
      }
  }

  const std::size_t half = J / 2;
  auto make_queries = [&](std::size_t count, std::size_t lo, std::size_t hi,
                          std::int64_t group_base,
                          std::vector<std::size_t>& targets) {
    std::vector<LabeledSample> queries;
    queries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = lo + static_cast<std::size_t>(rng.below(hi - lo));
      const int y = static_cast<int>(rng.below(2));
      LabeledSample q;
      detail::append(q.features, cluster_sig[j]);
      detail::append(q.features,
                     detail::onehot(knobs.reference_values, ref[j][1 - y],
                                    knobs.reference_scale));
      q.features.push_back(0.0);
      for (std::size_t d = 0; d < body_dims; ++d)
        q.features.push_back(body[j][y][d] + knobs.body_jitter * rng.normal());
      q.label = y;
      q.group = group_base + static_cast<std::int64_t>(i);
      q.key = static_cast<std::int64_t>(j);
      queries.push_back(std::move(q));
      targets.push_back(proto_index[j][1 - y]);
    }
    return queries;
  };

  BenchmarkData data;
  data.spec = spec;
  data.train =
      make_queries(spec.train_size, 0, half, 0, data.oracle.train_target);
  data.eval = make_queries(spec.eval_size, half, J, 500'000'000,
                           data.oracle.eval_target);
  for (auto* split : {&data.train, &data.eval, &shuffled})
    for (auto& s : *split)
      for (auto& x : s.features) x *= knobs.feature_scale;
  data.pool = make_pool(std::move(shuffled));
  data.info.proto_of_cluster = proto_index;
  data.info.trap_of_cluster = trap_index;
  return data;
}

inline BenchmarkData generate_benchmark(const BenchmarkSpec& spec) {
  if (spec.name == "keymatch") return gen_keymatch(spec);
  if (spec.name == "crossclass") return gen_crossclass(spec);
  throw ConfigError("unknown benchmark '" + spec.name + "'");
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

inline MetricsRecord eval_metrics(const std::vector<EvalOutcome>& outcomes,
                                  const std::vector<LabeledSample>& eval_set,
                                  const CandidatePool& pool,
                                  const std::vector<std::size_t>& oracle_target) {
  if (outcomes.size() != eval_set.size())
    throw InvalidArgumentError("eval_metrics: " +
                               std::to_string(outcomes.size()) +
                               " outcomes for " +
                               std::to_string(eval_set.size()) + " queries");
  MetricsRecord m;
  std::size_t correct = 0, selected = 0, agree = 0, cross = 0;
  double entropy_sum = 0.0;
  std::size_t entropy_count = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const EvalOutcome& out = outcomes[i];
    if (out.predicted == eval_set[i].label) ++correct;
    if (out.has_selection) {
      ++selected;
      if (i < oracle_target.size() && out.selected == oracle_target[i]) ++agree;
      if (pool[out.selected].label != eval_set[i].label) ++cross;
    }
    if (out.has_entropy) {
      entropy_sum += out.entropy;
      ++entropy_count;
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(outcomes.size());
  m.has_selection = selected > 0;
  if (selected > 0) {
    m.oracle_agreement = static_cast<double>(agree) / static_cast<double>(selected);
    m.cross_class_rate = static_cast<double>(cross) / static_cast<double>(selected);
  }
  if (entropy_count > 0)
    m.mean_entropy = entropy_sum / static_cast<double>(entropy_count);
  return m;
}

}  // namespace tacslab
