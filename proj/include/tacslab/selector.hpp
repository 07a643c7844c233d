#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/data.hpp"
#include "tacslab/kernels.hpp"
#include "tacslab/mlp.hpp"
#include "tacslab/rng.hpp"

namespace tacslab {

// Utility scores of one query against a pool snapshot. Masked candidates
// carry a score of -inf and probability exactly 0.
struct UtilityScores {
  std::vector<double> scores;
  std::vector<double> probabilities;
  std::uint64_t pool_version = 0;
};

// Learned retriever. One encoder embeds both the query and every candidate;
// a candidate's utility is the inner product of the two embeddings.
class SelectorNet {
 public:
  SelectorNet() = default;
  // output_scale shrinks the score head at initialization: utility scores
  // start near zero, so early selection is exploration-driven rather than
  // dictated by random embedding geometry. Argmax similarity rankings are
  // scale-invariant, so a frozen snapshot retriever is unaffected.
  SelectorNet(std::size_t input_dim, std::size_t hidden, std::size_t embed_dim,
              Rng& rng, double output_scale = 0.1)
      : encoder_("selector", input_dim, hidden, embed_dim, rng) {
    for (auto& w : encoder_.w2.value.raw()) w *= output_scale;
  }

  std::size_t input_dim() const { return encoder_.in_dim; }
  std::size_t embed_dim() const { return encoder_.out_dim; }

  std::vector<ad::Parameter*> params() { return encoder_.params(); }
  TwoLayerMlp& encoder() { return encoder_; }
  const TwoLayerMlp& encoder() const { return encoder_; }

  std::vector<double> embed(const FeatureVector& x) const {
    check_dim(x.size());
    return encoder_.forward(x);
  }

  static double score(const std::vector<double>& z_q,
                      const std::vector<double>& z_c) {
    if (z_q.size() != z_c.size())
      throw ShapeError("score: embedding dims " + std::to_string(z_q.size()) +
                       " vs " + std::to_string(z_c.size()));
    return kernels::dot(z_q.data(), z_c.data(), z_q.size());
  }

  // Scores every candidate, masks the query's group, and converts to
  // selection probabilities. Untracked (evaluation) path.
  UtilityScores score_pool(const FeatureVector& x_q, const CandidatePool& pool,
                           std::int64_t query_group) const {
    if (pool.size() == 0) throw EmptyPoolError("score_pool: empty pool");
    const std::vector<bool> masked = leakage_mask(pool, query_group);
    if (count_unmasked(masked) == 0)
      throw EmptyPoolError("score_pool: all candidates masked for group " +
                           std::to_string(query_group));
    const std::vector<double> z_q = embed(x_q);
    UtilityScores u;
    u.pool_version = pool.pool_version;
    u.scores.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
      u.scores[i] = masked[i] ? -std::numeric_limits<double>::infinity()
                              : score(z_q, embed(pool[i].features));
    u.probabilities.resize(pool.size());
    kernels::softmax(u.scores.data(), u.scores.size(), u.probabilities.data());
    return u;
  }

  ad::Var embed(ad::Tape& tape, const TwoLayerMlp::Bound& bound,
                ad::Var x) const {
    return encoder_.forward(tape, bound, x);
  }

 private:
  void check_dim(std::size_t got) const {
    if (got != encoder_.in_dim)
      throw ShapeError("selector embed: input dim " + std::to_string(got) +
                       ", expected " + std::to_string(encoder_.in_dim));
  }

  TwoLayerMlp encoder_;
};

// Smallest index with maximal probability.
inline std::size_t select_argmax(const UtilityScores& u) {
  if (u.probabilities.empty())
    throw InvalidArgumentError("select_argmax: empty scores");
  return kernels::argmax(u.probabilities);
}

}  // namespace tacslab
