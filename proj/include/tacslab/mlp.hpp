#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/kernels.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/tensor.hpp"

namespace tacslab {

// Two-layer perceptron: out = W2 tanh(W1 x + b1) + b2. Weights start uniform
// in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases at zero.
struct TwoLayerMlp {
  ad::Parameter w1, b1, w2, b2;
  std::size_t in_dim = 0, hidden = 0, out_dim = 0;

  TwoLayerMlp() = default;
  TwoLayerMlp(const std::string& prefix, std::size_t in, std::size_t hid,
              std::size_t out, Rng& rng)
      : w1(prefix + ".w1", Tensor(hid, in)),
        b1(prefix + ".b1", Tensor(hid, 1)),
        w2(prefix + ".w2", Tensor(out, hid)),
        b2(prefix + ".b2", Tensor(out, 1)),
        in_dim(in),
        hidden(hid),
        out_dim(out) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& x : w1.value.raw()) x = rng.uniform(-s1, s1);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hid));
    for (auto& x : w2.value.raw()) x = rng.uniform(-s2, s2);
  }

  std::vector<ad::Parameter*> params() { return {&w1, &b1, &w2, &b2}; }

  // Leaf bindings for one tape; create once per tape and reuse across calls
  // so shared weights appear as shared nodes.
  struct Bound {
    ad::Var w1, b1, w2, b2;
  };
  Bound bind(ad::Tape& tape) {
    return {tape.leaf(w1), tape.leaf(b1), tape.leaf(w2), tape.leaf(b2)};
  }

  ad::Var forward(ad::Tape& tape, const Bound& p, ad::Var x) const {
    ad::Var h = tape.tanh(tape.add(tape.matvec(p.w1, x), p.b1));
    return tape.add(tape.matvec(p.w2, h), p.b2);
  }

  // Untracked forward; bit-identical to the tape path.
  std::vector<double> forward(const std::vector<double>& x) const {
    std::vector<double> h(hidden), out(out_dim);
    kernels::affine(w1.value.data(), b1.value.data(), x.data(), hidden, in_dim,
                    h.data());
    kernels::tanh_inplace(h.data(), hidden);
    kernels::affine(w2.value.data(), b2.value.data(), h.data(), out_dim,
                    hidden, out.data());
    return out;
  }
};

}  // namespace tacslab
