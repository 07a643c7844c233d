#pragma once

#include <string>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/data.hpp"
#include "tacslab/kernels.hpp"
#include "tacslab/mlp.hpp"
#include "tacslab/rng.hpp"

namespace tacslab {

// Pairwise classifier over [query ; context]. "No context" is realized by a
// learned null-context vector substituted for the context half, so the
// no-context forward is literally a pair forward with that vector.
class TaskNet {
 public:
  TaskNet() = default;
  TaskNet(std::size_t input_dim, std::size_t hidden, std::size_t classes,
          Rng& rng)
      : classifier_("tasknet", 2 * input_dim, hidden, classes, rng),
        null_context_("tasknet.null_context", Tensor(input_dim, 1)),
        input_dim_(input_dim),
        classes_(classes) {}

  std::size_t input_dim() const { return input_dim_; }
  std::size_t classes() const { return classes_; }

  std::vector<ad::Parameter*> params() {
    auto p = classifier_.params();
    p.push_back(&null_context_);
    return p;
  }
  ad::Parameter& null_context() { return null_context_; }
  const ad::Parameter& null_context() const { return null_context_; }

  // ---- untracked forwards (evaluation, rewards) ----

  std::vector<double> forward_pair(const FeatureVector& x_q,
                                   const FeatureVector& x_ctx) const {
    check_dim(x_q.size(), "query");
    check_dim(x_ctx.size(), "context");
    std::vector<double> joint(2 * input_dim_);
    for (std::size_t i = 0; i < input_dim_; ++i) joint[i] = x_q[i];
    for (std::size_t i = 0; i < input_dim_; ++i)
      joint[input_dim_ + i] = x_ctx[i];
    return classifier_.forward(joint);
  }

  std::vector<double> forward_noctx(const FeatureVector& x_q) const {
    return forward_pair(x_q, null_context_.value.raw());
  }

  double task_loss_value(const std::vector<double>& logits,
                         std::size_t label) const {
    if (label >= classes_)
      throw InvalidArgumentError("task_loss: label " + std::to_string(label) +
                                 " out of range for " +
                                 std::to_string(classes_) + " classes");
    return kernels::cross_entropy(logits.data(), logits.size(), label);
  }

  // ---- tracked forwards ----

  struct Bound {
    TwoLayerMlp::Bound classifier;
    ad::Var null_context;
  };
  Bound bind(ad::Tape& tape) {
    return {classifier_.bind(tape), tape.leaf(null_context_)};
  }

  ad::Var forward_pair(ad::Tape& tape, const Bound& b, ad::Var x_q,
                       ad::Var x_ctx) const {
    if (x_q.value().size() != input_dim_ || x_ctx.value().size() != input_dim_)
      throw ShapeError("forward_pair: inputs " + x_q.value().shape_str() +
                       ", " + x_ctx.value().shape_str() + ", expected dim " +
                       std::to_string(input_dim_));
    return classifier_.forward(tape, b.classifier, tape.concat(x_q, x_ctx));
  }

  ad::Var forward_noctx(ad::Tape& tape, const Bound& b, ad::Var x_q) const {
    return forward_pair(tape, b, x_q, b.null_context);
  }

  ad::Var task_loss(ad::Tape& tape, const Bound& b, ad::Var x_q, ad::Var x_ctx,
                    std::size_t label) const {
    if (label >= classes_)
      throw InvalidArgumentError("task_loss: label " + std::to_string(label) +
                                 " out of range for " +
                                 std::to_string(classes_) + " classes");
    return tape.cross_entropy(forward_pair(tape, b, x_q, x_ctx), label);
  }

 private:
  void check_dim(std::size_t got, const char* which) const {
    if (got != input_dim_)
      throw ShapeError(std::string("forward_pair: ") + which + " dim " +
                       std::to_string(got) + ", expected " +
                       std::to_string(input_dim_));
  }

  TwoLayerMlp classifier_;
  ad::Parameter null_context_;
  std::size_t input_dim_ = 0;
  std::size_t classes_ = 0;
};

}  // namespace tacslab
