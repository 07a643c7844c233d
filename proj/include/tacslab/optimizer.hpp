#pragma once

#include <unordered_map>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/tensor.hpp"

namespace tacslab {

// Plain gradient descent with momentum: v <- mu v + g, p <- p - lr v.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum) {}

  void step(const std::vector<ad::Parameter*>& params) {
    for (ad::Parameter* p : params) {
      Tensor& v = velocity_.try_emplace(p, Tensor::zeros_like(p->value))
                      .first->second;
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        v[i] = momentum_ * v[i] + p->grad[i];
        p->value[i] -= lr_ * v[i];
      }
      p->zero_grad();
    }
  }

 private:
  double lr_;
  double momentum_;
  std::unordered_map<ad::Parameter*, Tensor> velocity_;
};

}  // namespace tacslab
