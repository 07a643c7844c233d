#pragma once

#include <functional>
#include <vector>

#include "tacslab/evaluation.hpp"
#include "tacslab/records.hpp"
#include "tacslab/synthbench.hpp"
#include "tacslab/trainer.hpp"

namespace tacslab {

using EpochCallback = std::function<void(const EpochRecord&)>;

inline EpochRecord evaluate_epoch(int epoch, const SelectorNet& selector,
                                  const TaskNet& tasknet,
                                  const BenchmarkData& data,
                                  std::size_t threads) {
  EpochRecord rec;
  rec.epoch = epoch;
  const PoolEmbeddings pe = embed_pool(selector, data.pool);
  const auto outcomes = evaluate_split(
      tasknet, data.eval, argmax_selection_provider(selector, pe, data.pool),
      threads);
  rec.metrics =
      eval_metrics(outcomes, data.eval, data.pool, data.oracle.eval_target);
  return rec;
}

// Full hybrid training run: seeded shuffling, one train_step per batch, and
// an argmax-selection evaluation after every epoch (plus the initial one).
// The callback fires after each epoch record is complete, so partial results
// reach disk even if a later epoch aborts.
inline std::vector<EpochRecord> train(SelectorNet& selector, TaskNet& tasknet,
                                      const BenchmarkData& data,
                                      const HybridConfig& config,
                                      const EpochCallback& on_epoch = nullptr) {
  config.validate();
  const std::size_t threads = eval_thread_count();
  Rng gumbel_rng = rng_substream(config.seed, "gumbel");
  Rng policy_rng = rng_substream(config.seed, "policy");
  Rng shuffle_rng = rng_substream(config.seed, "shuffle");
  SgdMomentum optimizer(config.learning_rate, config.momentum);
  const Tensor pool_raw_t =
      pool_features_transposed(data.pool, tasknet.input_dim());

  std::vector<EpochRecord> records;
  records.reserve(static_cast<std::size_t>(config.epochs) + 1);
  records.push_back(evaluate_epoch(0, selector, tasknet, data, threads));
  if (on_epoch) on_epoch(records.back());

  std::vector<std::size_t> indices(data.train.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  std::size_t batch_id = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(indices);
    double grad_sum = 0.0, policy_sum = 0.0, total_sum = 0.0;
    std::size_t steps = 0;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t begin = 0; begin < indices.size(); begin += bs) {
      const std::size_t end = std::min(indices.size(), begin + bs);
      std::vector<std::size_t> batch(indices.begin() + begin,
                                     indices.begin() + end);
      StepRecord step = train_step(selector, tasknet, data.train, batch,
                                   data.pool, pool_raw_t, config, gumbel_rng,
                                   policy_rng, optimizer, batch_id++);
      grad_sum += step.grad_loss;
      policy_sum += step.policy_loss;
      total_sum += step.total_loss;
      ++steps;
    }
    EpochRecord rec = evaluate_epoch(epoch, selector, tasknet, data, threads);
    if (steps > 0) {
      rec.grad_loss = grad_sum / static_cast<double>(steps);
      rec.policy_loss = policy_sum / static_cast<double>(steps);
      rec.total_loss = total_sum / static_cast<double>(steps);
    }
    records.push_back(rec);
    if (on_epoch) on_epoch(records.back());
  }
  return records;
}

}  // namespace tacslab
