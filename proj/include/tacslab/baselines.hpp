#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "tacslab/evaluation.hpp"
#include "tacslab/records.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/selector.hpp"
#include "tacslab/synthbench.hpp"
#include "tacslab/tasknet.hpp"
#include "tacslab/train_loop.hpp"

namespace tacslab {

enum class BaselineKind {
  kNoContext,
  kRandom,
  kFrozenSimilarity,
  kFeatureAveraged,
  kBlank,
  kDuplicate,
  kNoisy,
};

inline const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::kNoContext: return "no_context";
    case BaselineKind::kRandom: return "random";
    case BaselineKind::kFrozenSimilarity: return "frozen_sim";
    case BaselineKind::kFeatureAveraged: return "feat_avg";
    case BaselineKind::kBlank: return "blank";
    case BaselineKind::kDuplicate: return "duplicate";
    default: return "noisy";
  }
}

// Uniform pick over unmasked candidates.
inline std::size_t retrieve_random(const CandidatePool& pool, Rng& rng,
                                   std::int64_t query_group) {
  const std::vector<bool> masked = leakage_mask(pool, query_group);
  const std::size_t n = count_unmasked(masked);
  if (n == 0) throw EmptyPoolError("retrieve_random: all candidates masked");
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (masked[i]) continue;
    if (pick == 0) return i;
    --pick;
  }
  throw EmptyPoolError("retrieve_random: unreachable");
}

// Nearest candidate by inner product in a frozen embedding space. The
// embeddings are a snapshot taken before training and never updated, so
// selections are constant across epochs. Ties break to the lowest index.
inline std::size_t retrieve_frozen_similarity(const SelectorNet& frozen,
                                              const PoolEmbeddings& pe,
                                              const CandidatePool& pool,
                                              const FeatureVector& x_q,
                                              std::int64_t query_group) {
  const std::vector<bool> masked = leakage_mask(pool, query_group);
  if (count_unmasked(masked) == 0)
    throw EmptyPoolError("retrieve_frozen_similarity: all candidates masked");
  const std::vector<double> z_q = frozen.embed(x_q);
  bool any = false;
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (masked[i]) continue;
    const double s = SelectorNet::score(z_q, pe.z[i]);
    if (!any || s > best_score) {
      best = i;
      best_score = s;
      any = true;
    }
  }
  return best;
}

// Soft aggregation of the top-k scored candidates: their softmax weights,
// renormalized over the k survivors, applied to the raw candidate features.
inline FeatureVector build_feature_averaged_context(
    const SelectorNet& encoder, const PoolEmbeddings& pe,
    const CandidatePool& pool, const FeatureVector& x_q,
    std::int64_t query_group, std::size_t k) {
  const UtilityScores u =
      score_pool_cached(encoder, pe, pool, x_q, query_group);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&u](std::size_t a, std::size_t b) {
                     return u.probabilities[a] > u.probabilities[b];
                   });
  std::size_t available = 0;
  for (double p : u.probabilities)
    if (p > 0.0) ++available;
  if (k < 1 || k > available)
    throw InvalidArgumentError("feature_averaged: k = " + std::to_string(k) +
                               " outside [1, " + std::to_string(available) +
                               "]");
  double norm = 0.0;
  for (std::size_t r = 0; r < k; ++r) norm += u.probabilities[order[r]];
  FeatureVector ctx(x_q.size(), 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = order[r];
    const double w = u.probabilities[i] / norm;
    for (std::size_t d = 0; d < ctx.size(); ++d)
      ctx[d] += w * pool[i].features[d];
  }
  return ctx;
}

// Context-image controls: an all-zero vector, an exact copy of the query, or
// the query plus Gaussian noise (sigma 0.1).
inline FeatureVector make_control_context(BaselineKind kind,
                                          const FeatureVector& x_q, Rng& rng) {
  switch (kind) {
    case BaselineKind::kBlank:
      return FeatureVector(x_q.size(), 0.0);
    case BaselineKind::kDuplicate:
      return x_q;
    case BaselineKind::kNoisy: {
      FeatureVector ctx = x_q;
      for (auto& x : ctx) x += 0.1 * rng.normal();
      return ctx;
    }
    default:
      throw InvalidArgumentError("make_control_context: kind must be blank, "
                                 "duplicate or noisy");
  }
}

namespace detail {

// Stream key for per-(epoch, query) draws.
inline std::uint64_t epoch_item(std::uint64_t epoch, std::uint64_t query_id) {
  return (epoch << 32) ^ query_id;
}

}  // namespace detail

struct BaselineOptions {
  BaselineKind kind = BaselineKind::kNoContext;
  std::size_t feature_averaged_k = 5;
};

// Trains the task network with the baseline's fixed context policy. The
// selector is not trained; frozen-similarity and feature-averaged retrieval
// use the provided initialization snapshot.
inline std::vector<EpochRecord> train_baseline(
    TaskNet& tasknet, const SelectorNet& frozen_selector,
    const BenchmarkData& data, const HybridConfig& config,
    const BaselineOptions& options, const EpochCallback& on_epoch = nullptr) {
  config.validate();
  const std::size_t threads = eval_thread_count();
  const BaselineKind kind = options.kind;
  Rng shuffle_rng = rng_substream(config.seed, "shuffle");
  SgdMomentum optimizer(config.learning_rate, config.momentum);
  const PoolEmbeddings frozen_pe = embed_pool(frozen_selector, data.pool);

  // Training-time context for one query.
  auto train_context = [&](const LabeledSample& q, std::size_t query_id,
                           int epoch) -> ContextChoice {
    ContextChoice c;
    switch (kind) {
      case BaselineKind::kNoContext:
        c.kind = ContextChoice::Kind::kNone;
        break;
      case BaselineKind::kRandom: {
        Rng rng = rng_substream(
            config.seed, "policy",
            detail::epoch_item(static_cast<std::uint64_t>(epoch), query_id));
        c.kind = ContextChoice::Kind::kCandidate;
        c.index = retrieve_random(data.pool, rng, q.group);
        c.vector = data.pool[c.index].features;
        break;
      }
      case BaselineKind::kFrozenSimilarity:
        c.kind = ContextChoice::Kind::kCandidate;
        c.index = retrieve_frozen_similarity(frozen_selector, frozen_pe,
                                             data.pool, q.features, q.group);
        c.vector = data.pool[c.index].features;
        break;
      case BaselineKind::kFeatureAveraged:
        c.kind = ContextChoice::Kind::kVector;
        c.vector = build_feature_averaged_context(
            frozen_selector, frozen_pe, data.pool, q.features, q.group,
            options.feature_averaged_k);
        break;
      default: {
        Rng rng = rng_substream(
            config.seed, "policy",
            detail::epoch_item(static_cast<std::uint64_t>(epoch), query_id));
        c.kind = ContextChoice::Kind::kVector;
        c.vector = make_control_context(kind, q.features, rng);
        break;
      }
    }
    return c;
  };

  // Evaluation-time context; epoch-independent so reruns and parallel
  // evaluation agree.
  ContextProvider eval_provider = [&](const LabeledSample& q,
                                      std::size_t query_id) -> ContextChoice {
    ContextChoice c;
    switch (kind) {
      case BaselineKind::kNoContext:
        c.kind = ContextChoice::Kind::kNone;
        break;
      case BaselineKind::kRandom: {
        Rng rng = rng_substream(config.seed, "policy", query_id);
        const std::vector<bool> masked = leakage_mask(data.pool, q.group);
        const std::size_t n = count_unmasked(masked);
        c.kind = ContextChoice::Kind::kCandidate;
        c.index = retrieve_random(data.pool, rng, q.group);
        c.vector = data.pool[c.index].features;
        c.entropy = std::log(static_cast<double>(n));
        c.has_entropy = true;
        break;
      }
      case BaselineKind::kFrozenSimilarity: {
        const UtilityScores u = score_pool_cached(frozen_selector, frozen_pe,
                                                  data.pool, q.features,
                                                  q.group);
        c.kind = ContextChoice::Kind::kCandidate;
        c.index = retrieve_frozen_similarity(frozen_selector, frozen_pe,
                                             data.pool, q.features, q.group);
        c.vector = data.pool[c.index].features;
        c.entropy =
            kernels::entropy(u.probabilities.data(), u.probabilities.size());
        c.has_entropy = true;
        break;
      }
      case BaselineKind::kFeatureAveraged:
        c.kind = ContextChoice::Kind::kVector;
        c.vector = build_feature_averaged_context(
            frozen_selector, frozen_pe, data.pool, q.features, q.group,
            options.feature_averaged_k);
        break;
      default: {
        Rng rng = rng_substream(config.seed, "policy", query_id);
        c.kind = ContextChoice::Kind::kVector;
        c.vector = make_control_context(kind, q.features, rng);
        break;
      }
    }
    return c;
  };

  auto evaluate_now = [&](int epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto outcomes =
        evaluate_split(tasknet, data.eval, eval_provider, threads);
    rec.metrics =
        eval_metrics(outcomes, data.eval, data.pool, data.oracle.eval_target);
    return rec;
  };

  std::vector<EpochRecord> records;
  records.push_back(evaluate_now(0));
  if (on_epoch) on_epoch(records.back());

  std::vector<std::size_t> indices(data.train.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  auto params = tasknet.params();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t begin = 0; begin < indices.size(); begin += bs) {
      const std::size_t end = std::min(indices.size(), begin + bs);
      ad::Tape tape;
      auto bound = tasknet.bind(tape);
      std::vector<ad::Var> losses;
      losses.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const LabeledSample& q = data.train[indices[i]];
        const std::size_t label = static_cast<std::size_t>(q.label);
        ad::Var x_q = tape.constant(Tensor::vector(q.features));
        const ContextChoice ctx = train_context(q, indices[i], epoch);
        if (ctx.kind == ContextChoice::Kind::kNone) {
          losses.push_back(
              tape.cross_entropy(tasknet.forward_noctx(tape, bound, x_q), label));
        } else {
          losses.push_back(tasknet.task_loss(
              tape, bound, x_q, tape.constant(Tensor::vector(ctx.vector)),
              label));
        }
      }
      ad::Var mean_loss = tape.scale(tape.sum(losses),
                                     1.0 / static_cast<double>(losses.size()));
      const double loss_value = mean_loss.scalar();
      if (!std::isfinite(loss_value))
        throw NumericError("train_baseline: non-finite loss in batch " +
                           std::to_string(steps));
      tape.backward(mean_loss);
      optimizer.step(params);
      loss_sum += loss_value;
      ++steps;
    }
    EpochRecord rec = evaluate_now(epoch);
    if (steps > 0) {
      rec.grad_loss = loss_sum / static_cast<double>(steps);
      rec.total_loss = rec.grad_loss;
    }
    records.push_back(rec);
    if (on_epoch) on_epoch(records.back());
  }
  return records;
}

}  // namespace tacslab
