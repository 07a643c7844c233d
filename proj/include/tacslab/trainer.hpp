#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/data.hpp"
#include "tacslab/optimizer.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/selector.hpp"
#include "tacslab/tasknet.hpp"

namespace tacslab {

enum class AdvantageMode { kStandardized, kRaw };
enum class AblationMode { kFull, kSoftOnly, kPolicyOnly };

inline const char* to_string(AdvantageMode m) {
  return m == AdvantageMode::kStandardized ? "standardized" : "raw";
}
inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kFull: return "full";
    case AblationMode::kSoftOnly: return "soft_only";
    default: return "policy_only";
  }
}

struct HybridConfig {
  double temperature = 0.1;
  double hybrid_weight = 0.5;
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 17;
  AdvantageMode advantage_mode = AdvantageMode::kStandardized;
  AblationMode ablation = AblationMode::kFull;

  void validate() const {
    if (!(temperature > 0.0))
      throw ConfigError("trainer: temperature must be > 0, got " +
                        std::to_string(temperature));
    if (hybrid_weight < 0.0)
      throw ConfigError("trainer: hybrid_weight must be >= 0, got " +
                        std::to_string(hybrid_weight));
    if (epochs < 0) throw ConfigError("trainer: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
    if (advantage_mode == AdvantageMode::kStandardized && batch_size < 2)
      throw ConfigError(
          "trainer: standardized advantages need batch_size >= 2 "
          "(use advantage_mode = raw for single-item batches)");
    if (!(learning_rate > 0.0))
      throw ConfigError("trainer: learning_rate must be > 0");
  }
};

// Per-query record of one training step.
struct SelectionOutcome {
  std::size_t query_id = 0;
  std::vector<double> scores;         // masked entries are -inf
  std::vector<double> probabilities;  // noiseless softmax of scores
  std::size_t gumbel_index = 0;       // differentiable-path selection
  std::size_t action = 0;             // policy-path sampled action
  double reward = 0.0;
  double advantage = 0.0;
};

struct StepRecord {
  std::vector<SelectionOutcome> outcomes;
  double grad_loss = 0.0;
  double policy_loss = 0.0;
  double total_loss = 0.0;
};

// Gumbel(0,1) noise: -log(-log u) with u clamped away from {0, 1}.
inline double gumbel_from_uniform(double u) {
  constexpr double kEps = 1e-12;
  u = std::clamp(u, kEps, 1.0 - kEps);
  return -std::log(-std::log(u));
}

inline double gumbel_noise(Rng& rng) { return gumbel_from_uniform(rng.uniform()); }

// Straight-through Gumbel-Softmax selection. Forward value is exactly the
// one-hot of argmax(scores + noise); backward is the gradient of the tempered
// soft sample softmax((scores + noise) / tau). Masked (-inf) entries stay
// masked after noise and are never selected.
inline std::pair<ad::Var, std::size_t> gumbel_softmax_select(
    ad::Tape& tape, ad::Var score_logits, double temperature, Rng& rng) {
  const Tensor& s = score_logits.value();
  Tensor noise(s.rows(), 1);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = gumbel_noise(rng);
  ad::Var perturbed = tape.add(score_logits, tape.constant(noise));
  // argmax over (s+g)/tau equals argmax over s+g for any tau > 0
  const Tensor& pv = perturbed.value();
  bool any = false;
  std::size_t index = 0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (!std::isinf(pv[i]) && (!any || pv[i] > pv[index])) {
      index = i;
      any = true;
    }
  if (!any) throw EmptyPoolError("gumbel_softmax_select: all entries masked");
  ad::Var soft = tape.softmax(tape.scale(perturbed, 1.0 / temperature));
  return {tape.straight_through_onehot(soft, index), index};
}

// Shared per-tape pool graph: candidate embeddings stacked into a matrix so
// one matvec scores a whole pool, plus the raw feature matrix (transposed)
// used to assemble the selected context from a one-hot.
struct PoolGraph {
  ad::Var embeddings;      // N x D
  ad::Var raw_transposed;  // D_in x N, constant
};

inline Tensor pool_features_transposed(const CandidatePool& pool,
                                       std::size_t input_dim) {
  Tensor t(input_dim, pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].features.size() != input_dim)
      throw ShapeError("pool candidate " + std::to_string(i) + " has dim " +
                       std::to_string(pool[i].features.size()) +
                       ", expected " + std::to_string(input_dim));
    for (std::size_t d = 0; d < input_dim; ++d)
      t.at(d, i) = pool[i].features[d];
  }
  return t;
}

inline PoolGraph build_pool_graph(ad::Tape& tape, const SelectorNet& selector,
                                  const TwoLayerMlp::Bound& bound,
                                  const CandidatePool& pool,
                                  const Tensor& raw_transposed) {
  if (pool.size() == 0) throw EmptyPoolError("build_pool_graph: empty pool");
  std::vector<ad::Var> rows;
  rows.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    rows.push_back(selector.embed(
        tape, bound, tape.constant(Tensor::vector(pool[i].features))));
  return {tape.stack_rows(rows), tape.constant(raw_transposed)};
}

// Masked utility scores of one query against the shared pool graph.
inline ad::Var masked_pool_scores(ad::Tape& tape, const SelectorNet& selector,
                                  const TwoLayerMlp::Bound& bound,
                                  const PoolGraph& pg,
                                  const FeatureVector& x_q,
                                  const std::vector<bool>& masked) {
  ad::Var z_q =
      selector.embed(tape, bound, tape.constant(Tensor::vector(x_q)));
  ad::Var scores = tape.matvec(pg.embeddings, z_q);
  if (count_unmasked(masked) == 0)
    throw EmptyPoolError("masked_pool_scores: all candidates masked");
  return tape.mask_to_neg_inf(scores, masked);
}

// Differentiable-path loss for a single query: straight-through selection
// over the pool, context assembled as raw_features^T * onehot (forward:
// exactly the sampled candidate; backward: soft weights over all candidates),
// then the task loss on the pair.
inline ad::Var grad_path_loss(ad::Tape& tape, SelectorNet& selector,
                              TaskNet& tasknet, const LabeledSample& query,
                              const CandidatePool& pool, double temperature,
                              Rng& gumbel_rng) {
  auto sel_bound = selector.encoder().bind(tape);
  auto task_bound = tasknet.bind(tape);
  const Tensor raw_t = pool_features_transposed(pool, tasknet.input_dim());
  PoolGraph pg = build_pool_graph(tape, selector, sel_bound, pool, raw_t);
  ad::Var scores = masked_pool_scores(tape, selector, sel_bound, pg,
                                      query.features,
                                      leakage_mask(pool, query.group));
  auto [onehot, index] =
      gumbel_softmax_select(tape, scores, temperature, gumbel_rng);
  (void)index;
  ad::Var x_sel = tape.matvec(pg.raw_transposed, onehot);
  return tasknet.task_loss(tape, task_bound,
                           tape.constant(Tensor::vector(query.features)),
                           x_sel, static_cast<std::size_t>(query.label));
}

// Reward of pairing the query with one candidate: the drop in task loss
// relative to the no-context forward. Evaluated untracked on the current
// (pre-update) parameters.
inline double compute_reward(const TaskNet& tasknet, const FeatureVector& x_q,
                             const FeatureVector& x_candidate,
                             std::size_t label) {
  const double base =
      tasknet.task_loss_value(tasknet.forward_noctx(x_q), label);
  const double with_ctx =
      tasknet.task_loss_value(tasknet.forward_pair(x_q, x_candidate), label);
  return base - with_ctx;
}

// Batch-standardized advantages: (r - mean) / (std + 1e-8), all zeros when
// the batch reward variance vanishes. Raw mode returns rewards unchanged.
inline std::vector<double> standardize_advantages(
    const std::vector<double>& rewards,
    AdvantageMode mode = AdvantageMode::kStandardized) {
  if (mode == AdvantageMode::kRaw) return rewards;
  if (rewards.size() < 2)
    throw ConfigError(
        "standardize_advantages: need at least 2 rewards in standardized "
        "mode; use raw mode for smaller batches");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double std_dev = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (std_dev < 1e-12) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i)
    out[i] = (rewards[i] - mean) / (std_dev + 1e-8);
  return out;
}

// Policy objective -(1/B) sum_b log pi(a_b | o_b) * A_b, built from the
// masked score logits (pi is their softmax). Advantages enter as constants,
// so gradients reach only the selector through pi.
inline ad::Var policy_loss(ad::Tape& tape,
                           const std::vector<ad::Var>& score_logits,
                           const std::vector<std::size_t>& actions,
                           const std::vector<double>& advantages) {
  if (score_logits.empty() || actions.size() != score_logits.size() ||
      advantages.size() != score_logits.size())
    throw InvalidArgumentError("policy_loss: batch size mismatch");
  const double inv_b = 1.0 / static_cast<double>(score_logits.size());
  std::vector<ad::Var> terms;
  terms.reserve(score_logits.size());
  for (std::size_t b = 0; b < score_logits.size(); ++b) {
    const Tensor& s = score_logits[b].value();
    if (actions[b] >= s.size() || std::isinf(s[actions[b]]))
      throw InvalidArgumentError("policy_loss: action " +
                                 std::to_string(actions[b]) +
                                 " is masked or out of range");
    ad::Var log_pi = tape.pick(tape.log_softmax(score_logits[b]), actions[b]);
    terms.push_back(tape.scale(log_pi, -inv_b * advantages[b]));
  }
  return tape.sum(terms);
}

namespace detail {

// Inverse-CDF sample from a probability vector.
inline std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_valid = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_valid = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_valid;  // u landed in the rounding tail
}

}  // namespace detail

// One optimization step over a batch. Runs the differentiable sampling path
// and the reward-based policy path (per the ablation mode), backpropagates
// the combined loss once, and applies the momentum update.
inline StepRecord train_step(SelectorNet& selector, TaskNet& tasknet,
                             const std::vector<LabeledSample>& train_set,
                             const std::vector<std::size_t>& batch_indices,
                             const CandidatePool& pool,
                             const Tensor& pool_raw_t,
                             const HybridConfig& config, Rng& gumbel_rng,
                             Rng& policy_rng, SgdMomentum& optimizer,
                             std::size_t batch_id) {
  if (batch_indices.empty())
    throw InvalidArgumentError("train_step: empty batch");
  const std::size_t batch = batch_indices.size();
  const double inv_b = 1.0 / static_cast<double>(batch);
  const bool run_grad_path = config.ablation != AblationMode::kPolicyOnly;
  const bool run_policy_path = config.ablation != AblationMode::kSoftOnly;

  ad::Tape tape;
  auto sel_bound = selector.encoder().bind(tape);
  auto task_bound = tasknet.bind(tape);
  PoolGraph pg = build_pool_graph(tape, selector, sel_bound, pool, pool_raw_t);

  StepRecord record;
  record.outcomes.resize(batch);
  std::vector<ad::Var> task_losses;
  std::vector<ad::Var> policy_logits;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  task_losses.reserve(batch);

  for (std::size_t b = 0; b < batch; ++b) {
    const LabeledSample& q = train_set[batch_indices[b]];
    const std::size_t label = static_cast<std::size_t>(q.label);
    const std::vector<bool> masked = leakage_mask(pool, q.group);
    ad::Var scores = masked_pool_scores(tape, selector, sel_bound, pg,
                                        q.features, masked);

    SelectionOutcome& out = record.outcomes[b];
    out.query_id = batch_indices[b];
    out.scores = scores.value().raw();
    out.probabilities.resize(pool.size());
    kernels::softmax(out.scores.data(), out.scores.size(),
                     out.probabilities.data());

    ad::Var x_q = tape.constant(Tensor::vector(q.features));
    if (run_grad_path) {
      auto [onehot, gumbel_index] =
          gumbel_softmax_select(tape, scores, config.temperature, gumbel_rng);
      out.gumbel_index = gumbel_index;
      ad::Var x_sel = tape.matvec(pg.raw_transposed, onehot);
      task_losses.push_back(
          tasknet.task_loss(tape, task_bound, x_q, x_sel, label));
    } else {
      // Policy-only ablation: no straight-through path; the task network
      // still trains on the argmax-selected pair.
      const std::size_t hard = kernels::argmax(out.probabilities);
      out.gumbel_index = hard;
      ad::Var x_sel = tape.constant(Tensor::vector(pool[hard].features));
      task_losses.push_back(
          tasknet.task_loss(tape, task_bound, x_q, x_sel, label));
    }

    if (run_policy_path) {
      const std::size_t action =
          detail::sample_index(out.probabilities, policy_rng);
      out.action = action;
      out.reward = compute_reward(tasknet, q.features, pool[action].features,
                                  label);
      policy_logits.push_back(scores);
      actions.push_back(action);
      rewards.push_back(out.reward);
    } else {
      out.action = out.gumbel_index;
    }
  }

  ad::Var grad_loss = tape.scale(tape.sum(task_losses), inv_b);
  ad::Var total = grad_loss;
  if (run_policy_path) {
    // A trailing batch of one item cannot be standardized; fall back to raw.
    std::vector<double> advantages =
        (config.advantage_mode == AdvantageMode::kStandardized &&
         rewards.size() < 2)
            ? rewards
            : standardize_advantages(rewards, config.advantage_mode);
    for (std::size_t b = 0; b < batch; ++b)
      record.outcomes[b].advantage = advantages[b];
    ad::Var lp = policy_loss(tape, policy_logits, actions, advantages);
    record.policy_loss = lp.scalar();
    total = tape.add(total, tape.scale(lp, config.hybrid_weight));
  }
  record.grad_loss = grad_loss.scalar();
  record.total_loss = total.scalar();
  if (!std::isfinite(record.total_loss))
    throw NumericError("train_step: non-finite loss in batch " +
                       std::to_string(batch_id));

  tape.backward(total);
  auto params = selector.params();
  for (ad::Parameter* p : tasknet.params()) params.push_back(p);
  optimizer.step(params);
  return record;
}

}  // namespace tacslab
