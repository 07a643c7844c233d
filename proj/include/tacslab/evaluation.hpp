#pragma once

#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tacslab/data.hpp"
#include "tacslab/kernels.hpp"
#include "tacslab/selector.hpp"
#include "tacslab/tasknet.hpp"

namespace tacslab {

// Worker cap for read-only evaluation; TACSLAB_THREADS overrides.
inline std::size_t eval_thread_count() {
  if (const char* env = std::getenv("TACSLAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

// How one query's context was formed during evaluation.
struct ContextChoice {
  enum class Kind { kNone, kCandidate, kVector };
  Kind kind = Kind::kNone;
  std::size_t index = 0;          // kCandidate
  FeatureVector vector;           // kVector
  double entropy = 0.0;           // selection entropy, when meaningful
  bool has_entropy = false;
};

struct EvalOutcome {
  std::size_t query_id = 0;
  std::int64_t predicted = 0;
  bool has_selection = false;
  std::size_t selected = 0;
  double entropy = 0.0;
  bool has_entropy = false;
};

// Must be pure and safe to call concurrently for distinct queries.
using ContextProvider =
    std::function<ContextChoice(const LabeledSample&, std::size_t)>;

// Runs the classifier over the evaluation set with per-query contexts from
// the provider. Results are gathered by query index, so any thread split
// yields identical output.
inline std::vector<EvalOutcome> evaluate_split(
    const TaskNet& tasknet, const std::vector<LabeledSample>& eval_set,
    const ContextProvider& provider, std::size_t threads = 1) {
  std::vector<EvalOutcome> outcomes(eval_set.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const LabeledSample& q = eval_set[i];
      const ContextChoice choice = provider(q, i);
      std::vector<double> logits;
      EvalOutcome& out = outcomes[i];
      out.query_id = i;
      switch (choice.kind) {
        case ContextChoice::Kind::kNone:
          logits = tasknet.forward_noctx(q.features);
          break;
        case ContextChoice::Kind::kCandidate:
          out.has_selection = true;
          out.selected = choice.index;
          logits = tasknet.forward_pair(q.features, choice.vector);
          break;
        case ContextChoice::Kind::kVector:
          logits = tasknet.forward_pair(q.features, choice.vector);
          break;
      }
      out.predicted =
          static_cast<std::int64_t>(kernels::argmax(logits.data(), logits.size()));
      out.entropy = choice.entropy;
      out.has_entropy = choice.has_entropy;
    }
  };

  const std::size_t n = eval_set.size();
  if (threads <= 1 || n < 2 * threads) {
    worker(0, n);
    return outcomes;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    if (begin >= n) break;
    pool.emplace_back(worker, begin, std::min(n, begin + chunk));
  }
  for (auto& th : pool) th.join();
  return outcomes;
}

// Precomputed candidate embeddings for a frozen encoder; lets evaluation
// score a pool without re-embedding candidates per query.
struct PoolEmbeddings {
  std::vector<std::vector<double>> z;
  std::uint64_t pool_version = 0;
};

inline PoolEmbeddings embed_pool(const SelectorNet& selector,
                                 const CandidatePool& pool) {
  PoolEmbeddings pe;
  pe.pool_version = pool.pool_version;
  pe.z.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    pe.z.push_back(selector.embed(pool[i].features));
  return pe;
}

inline UtilityScores score_pool_cached(const SelectorNet& selector,
                                       const PoolEmbeddings& pe,
                                       const CandidatePool& pool,
                                       const FeatureVector& x_q,
                                       std::int64_t query_group) {
  if (pool.size() == 0) throw EmptyPoolError("score_pool: empty pool");
  const std::vector<bool> masked = leakage_mask(pool, query_group);
  if (count_unmasked(masked) == 0)
    throw EmptyPoolError("score_pool: all candidates masked for group " +
                         std::to_string(query_group));
  const std::vector<double> z_q = selector.embed(x_q);
  UtilityScores u;
  u.pool_version = pe.pool_version;
  u.scores.resize(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    u.scores[i] = masked[i] ? -std::numeric_limits<double>::infinity()
                            : SelectorNet::score(z_q, pe.z[i]);
  u.probabilities.resize(pool.size());
  kernels::softmax(u.scores.data(), u.scores.size(), u.probabilities.data());
  return u;
}

// Context provider for the learned selector: argmax selection, no noise.
inline ContextProvider argmax_selection_provider(const SelectorNet& selector,
                                                 const PoolEmbeddings& pe,
                                                 const CandidatePool& pool) {
  return [&selector, &pe, &pool](const LabeledSample& q,
                                 std::size_t) -> ContextChoice {
    const UtilityScores u =
        score_pool_cached(selector, pe, pool, q.features, q.group);
    ContextChoice c;
    c.kind = ContextChoice::Kind::kCandidate;
    c.index = select_argmax(u);
    c.vector = pool[c.index].features;
    c.entropy = kernels::entropy(u.probabilities.data(), u.probabilities.size());
    c.has_entropy = true;
    return c;
  };
}

}  // namespace tacslab
