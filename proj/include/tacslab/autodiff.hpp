#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tacslab/common.hpp"
#include "tacslab/kernels.hpp"
#include "tacslab/tensor.hpp"

namespace tacslab::ad {

class Tape;

// Lightweight handle into a tape. Cheap to copy; valid for the tape's life.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  double scalar() const { return value()[0]; }
};

// Named trainable tensor. Lives outside any tape; a tape binds it as a leaf
// per step and scatters gradients back here during backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape. Nodes are created in topological order by construction,
// so the backward pass is a single deterministic sweep over decreasing ids,
// visiting each node exactly once and summing gradients of shared
// subexpressions.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated only when requires_grad
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backward;
  };

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  Var constant(Tensor value) {
    return push(std::move(value), false, nullptr);
  }

  Var leaf(Parameter& param) {
    Parameter* p = &param;
    return push(param.value, true, [p](Tape& t, const Node& self) {
      (void)t;
      p->grad.add_in_place(self.grad);
    });
  }

  // Escape hatch for tests and extensions: a node with caller-provided value
  // and backward. The closure must only touch parents with smaller ids.
  Var custom(Tensor value, bool requires_grad,
             std::function<void(Tape&, const Node&)> backward) {
    return push(std::move(value), requires_grad, std::move(backward));
  }

  // ---- elementwise / linear ----

  Var add(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv))
      throw ShapeError("add: shape mismatch " + av.shape_str() + " vs " +
                       bv.shape_str());
    Tensor out = av;
    out.add_in_place(bv);
    auto [ida, idb] = std::pair{a.id, b.id};
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [ida, idb](Tape& t, const Node& self) {
                  t.accumulate(ida, self.grad);
                  t.accumulate(idb, self.grad);
                });
  }

  Var scale(Var a, double c) {
    Tensor out = val(a);
    for (auto& x : out.raw()) x *= c;
    const std::size_t ida = a.id;
    return push(std::move(out), needs_grad(a),
                [ida, c](Tape& t, const Node& self) {
                  if (!t.node(ida).requires_grad) return;
                  Tensor g = self.grad;
                  for (auto& x : g.raw()) x *= c;
                  t.node(ida).grad.add_in_place(g);
                });
  }

  // W (m x n) times x (n x 1).
  Var matvec(Var w, Var x) {
    const Tensor& wv = val(w);
    const Tensor& xv = val(x);
    if (!xv.is_vector() || wv.cols() != xv.rows())
      throw ShapeError("matvec: shape mismatch " + wv.shape_str() + " vs " +
                       xv.shape_str());
    Tensor out(wv.rows(), 1);
    for (std::size_t r = 0; r < wv.rows(); ++r)
      out[r] = kernels::dot(wv.data() + r * wv.cols(), xv.data(), wv.cols());
    const std::size_t idw = w.id, idx = x.id;
    return push(std::move(out), needs_grad(w) || needs_grad(x),
                [idw, idx](Tape& t, const Node& self) {
                  const Tensor& wv = t.node(idw).value;
                  const Tensor& xv = t.node(idx).value;
                  const Tensor& g = self.grad;
                  if (t.node(idw).requires_grad) {
                    Tensor& gw = t.node(idw).grad;
                    for (std::size_t r = 0; r < wv.rows(); ++r)
                      for (std::size_t c = 0; c < wv.cols(); ++c)
                        gw.at(r, c) += g[r] * xv[c];
                  }
                  if (t.node(idx).requires_grad) {
                    Tensor& gx = t.node(idx).grad;
                    for (std::size_t r = 0; r < wv.rows(); ++r)
                      for (std::size_t c = 0; c < wv.cols(); ++c)
                        gx[c] += wv.at(r, c) * g[r];
                  }
                });
  }

  Var tanh(Var a) {
    Tensor out = val(a);
    kernels::tanh_inplace(out.data(), out.size());
    const std::size_t ida = a.id;
    return push(std::move(out), needs_grad(a),
                [ida](Tape& t, const Node& self) {
                  if (!t.node(ida).requires_grad) return;
                  Tensor& ga = t.node(ida).grad;
                  for (std::size_t i = 0; i < self.value.size(); ++i) {
                    const double y = self.value[i];
                    ga[i] += (1.0 - y * y) * self.grad[i];
                  }
                });
  }

  Var dot(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.is_vector() || !bv.is_vector() || av.rows() != bv.rows())
      throw ShapeError("dot: shape mismatch " + av.shape_str() + " vs " +
                       bv.shape_str());
    Tensor out = Tensor::scalar(kernels::dot(av.data(), bv.data(), av.size()));
    const std::size_t ida = a.id, idb = b.id;
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [ida, idb](Tape& t, const Node& self) {
                  const double g = self.grad[0];
                  const Tensor& av = t.node(ida).value;
                  const Tensor& bv = t.node(idb).value;
                  if (t.node(ida).requires_grad) {
                    Tensor& ga = t.node(ida).grad;
                    for (std::size_t i = 0; i < av.size(); ++i)
                      ga[i] += g * bv[i];
                  }
                  if (t.node(idb).requires_grad) {
                    Tensor& gb = t.node(idb).grad;
                    for (std::size_t i = 0; i < bv.size(); ++i)
                      gb[i] += g * av[i];
                  }
                });
  }

  // ---- reductions over logits ----

  // Stable softmax with the full Jacobian in backward. Masked entries
  // (-inf logits) get probability exactly 0 and zero incoming gradient.
  Var softmax(Var s) {
    const Tensor& sv = val(s);
    check_logits(sv, "softmax");
    Tensor out(sv.rows(), 1);
    kernels::softmax(sv.data(), sv.size(), out.data());
    const std::size_t ids = s.id;
    return push(std::move(out), needs_grad(s),
                [ids](Tape& t, const Node& self) {
                  if (!t.node(ids).requires_grad) return;
                  const Tensor& p = self.value;
                  const Tensor& g = self.grad;
                  double gp = 0.0;
                  for (std::size_t i = 0; i < p.size(); ++i) gp += g[i] * p[i];
                  Tensor& gs = t.node(ids).grad;
                  for (std::size_t i = 0; i < p.size(); ++i)
                    gs[i] += p[i] * (g[i] - gp);
                });
  }

  Var log_softmax(Var s) {
    const Tensor& sv = val(s);
    check_logits(sv, "log_softmax");
    const double lse = kernels::log_sum_exp(sv.data(), sv.size());
    Tensor out(sv.rows(), 1);
    for (std::size_t i = 0; i < sv.size(); ++i) out[i] = sv[i] - lse;
    const std::size_t ids = s.id;
    return push(std::move(out), needs_grad(s),
                [ids](Tape& t, const Node& self) {
                  if (!t.node(ids).requires_grad) return;
                  const Tensor& g = self.grad;
                  double gsum = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) gsum += g[i];
                  Tensor& gs = t.node(ids).grad;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double p =
                        std::isinf(self.value[i]) ? 0.0 : std::exp(self.value[i]);
                    gs[i] += g[i] - p * gsum;
                  }
                });
  }

  // -log softmax(logits)[label]; gradient is softmax(logits) - onehot(label).
  Var cross_entropy(Var logits, std::size_t label) {
    const Tensor& lv = val(logits);
    check_logits(lv, "cross_entropy");
    if (label >= lv.size())
      throw InvalidArgumentError("cross_entropy: label " +
                                 std::to_string(label) + " out of range for " +
                                 std::to_string(lv.size()) + " logits");
    Tensor out =
        Tensor::scalar(kernels::cross_entropy(lv.data(), lv.size(), label));
    const std::size_t idl = logits.id;
    return push(std::move(out), needs_grad(logits),
                [idl, label](Tape& t, const Node& self) {
                  if (!t.node(idl).requires_grad) return;
                  const Tensor& lv = t.node(idl).value;
                  std::vector<double> p(lv.size());
                  kernels::softmax(lv.data(), lv.size(), p.data());
                  const double g = self.grad[0];
                  Tensor& gl = t.node(idl).grad;
                  for (std::size_t i = 0; i < lv.size(); ++i)
                    gl[i] += g * (p[i] - (i == label ? 1.0 : 0.0));
                });
  }

  // ---- structural ----

  Var concat(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.is_vector() || !bv.is_vector())
      throw ShapeError("concat: expected vectors, got " + av.shape_str() +
                       " and " + bv.shape_str());
    Tensor out(av.size() + bv.size(), 1);
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i];
    for (std::size_t i = 0; i < bv.size(); ++i) out[av.size() + i] = bv[i];
    const std::size_t ida = a.id, idb = b.id, na = av.size();
    return push(std::move(out), needs_grad(a) || needs_grad(b),
                [ida, idb, na](Tape& t, const Node& self) {
                  if (t.node(ida).requires_grad) {
                    Tensor& ga = t.node(ida).grad;
                    for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
                  }
                  if (t.node(idb).requires_grad) {
                    Tensor& gb = t.node(idb).grad;
                    for (std::size_t i = 0; i < gb.size(); ++i)
                      gb[i] += self.grad[na + i];
                  }
                });
  }

  Var pick(Var v, std::size_t index) {
    const Tensor& vv = val(v);
    if (index >= vv.size())
      throw InvalidArgumentError("pick: index " + std::to_string(index) +
                                 " out of range for " +
                                 std::to_string(vv.size()) + " entries");
    Tensor out = Tensor::scalar(vv[index]);
    const std::size_t idv = v.id;
    return push(std::move(out), needs_grad(v),
                [idv, index](Tape& t, const Node& self) {
                  if (!t.node(idv).requires_grad) return;
                  t.node(idv).grad[index] += self.grad[0];
                });
  }

  // Sets masked entries to -inf; gradient flows only through unmasked ones.
  Var mask_to_neg_inf(Var v, const std::vector<bool>& masked) {
    const Tensor& vv = val(v);
    if (masked.size() != vv.size())
      throw ShapeError("mask_to_neg_inf: mask size " +
                       std::to_string(masked.size()) + " vs vector " +
                       vv.shape_str());
    Tensor out = vv;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (masked[i]) out[i] = -std::numeric_limits<double>::infinity();
    const std::size_t idv = v.id;
    auto mask = masked;
    return push(std::move(out), needs_grad(v),
                [idv, mask](Tape& t, const Node& self) {
                  if (!t.node(idv).requires_grad) return;
                  Tensor& gv = t.node(idv).grad;
                  for (std::size_t i = 0; i < gv.size(); ++i)
                    if (!mask[i]) gv[i] += self.grad[i];
                });
  }

  // Straight-through selection: forward is exactly onehot(index), backward
  // passes the incoming gradient to the soft sample unchanged.
  Var straight_through_onehot(Var soft, std::size_t index) {
    const Tensor& sv = val(soft);
    if (index >= sv.size())
      throw InvalidArgumentError("straight_through_onehot: index " +
                                 std::to_string(index) + " out of range");
    Tensor out(sv.rows(), 1);
    out[index] = 1.0;
    const std::size_t ids = soft.id;
    return push(std::move(out), needs_grad(soft),
                [ids](Tape& t, const Node& self) {
                  if (!t.node(ids).requires_grad) return;
                  t.node(ids).grad.add_in_place(self.grad);
                });
  }

  Var stack_scalars(const std::vector<Var>& xs) {
    if (xs.empty())
      throw InvalidArgumentError("stack_scalars: empty input");
    Tensor out(xs.size(), 1);
    bool any_grad = false;
    std::vector<std::size_t> ids(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Tensor& v = val(xs[i]);
      if (!v.is_scalar())
        throw ShapeError("stack_scalars: entry " + std::to_string(i) +
                         " has shape " + v.shape_str());
      out[i] = v[0];
      ids[i] = xs[i].id;
      any_grad = any_grad || needs_grad(xs[i]);
    }
    return push(std::move(out), any_grad,
                [ids](Tape& t, const Node& self) {
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    if (t.node(ids[i]).requires_grad)
                      t.node(ids[i]).grad[0] += self.grad[i];
                });
  }

  // Rows of equal-length vectors stacked into a matrix (n x dim).
  Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty())
      throw InvalidArgumentError("stack_rows: empty input");
    const std::size_t dim = val(rows[0]).size();
    Tensor out(rows.size(), dim);
    bool any_grad = false;
    std::vector<std::size_t> ids(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor& v = val(rows[r]);
      if (!v.is_vector() || v.size() != dim)
        throw ShapeError("stack_rows: row " + std::to_string(r) +
                         " has shape " + v.shape_str());
      for (std::size_t c = 0; c < dim; ++c) out.at(r, c) = v[c];
      ids[r] = rows[r].id;
      any_grad = any_grad || needs_grad(rows[r]);
    }
    return push(std::move(out), any_grad,
                [ids, dim](Tape& t, const Node& self) {
                  for (std::size_t r = 0; r < ids.size(); ++r) {
                    if (!t.node(ids[r]).requires_grad) continue;
                    Tensor& gr = t.node(ids[r]).grad;
                    for (std::size_t c = 0; c < dim; ++c)
                      gr[c] += self.grad.at(r, c);
                  }
                });
  }

  Var sum(const std::vector<Var>& xs) {
    if (xs.empty())
      throw InvalidArgumentError("sum: empty input");
    double total = 0.0;
    bool any_grad = false;
    std::vector<std::size_t> ids(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Tensor& v = val(xs[i]);
      if (!v.is_scalar())
        throw ShapeError("sum: entry " + std::to_string(i) + " has shape " +
                         v.shape_str());
      total += v[0];
      ids[i] = xs[i].id;
      any_grad = any_grad || needs_grad(xs[i]);
    }
    return push(Tensor::scalar(total), any_grad,
                [ids](Tape& t, const Node& self) {
                  for (std::size_t id : ids)
                    if (t.node(id).requires_grad)
                      t.node(id).grad[0] += self.grad[0];
                });
  }

  // ---- backward ----

  // Seeds d(root)/d(root) = 1 and sweeps all nodes in reverse creation
  // order. May be called once per tape.
  void backward(Var root) {
    if (root.tape != this)
      throw InvalidArgumentError("backward: var belongs to another tape");
    const Tensor& rv = nodes_[root.id].value;
    if (!rv.is_scalar())
      throw InvalidArgumentError("backward: root must be scalar, got " +
                                 rv.shape_str());
    if (ran_backward_)
      throw InvalidArgumentError("backward: tape already backpropagated");
    ran_backward_ = true;
    if (!nodes_[root.id].requires_grad) return;
    for (auto& n : nodes_)
      if (n.requires_grad && n.grad.size() == 0)
        n.grad = Tensor::zeros_like(n.value);
    nodes_[root.id].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, n);
    }
  }

 private:
  friend struct Var;

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }

  void accumulate(std::size_t id, const Tensor& g) {
    if (nodes_[id].requires_grad) nodes_[id].grad.add_in_place(g);
  }

  static void check_logits(const Tensor& v, const char* op) {
    if (!v.is_vector() || v.size() == 0)
      throw InvalidArgumentError(std::string(op) +
                                 ": expected non-empty vector, got " +
                                 v.shape_str());
    bool any_finite = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (std::isnan(v[i]))
        throw NumericError(std::string(op) + ": NaN input at entry " +
                           std::to_string(i));
      if (!std::isinf(v[i])) any_finite = true;
    }
    if (!any_finite)
      throw EmptyPoolError(std::string(op) + ": all entries masked");
  }

  Var push(Tensor value, bool requires_grad,
           std::function<void(Tape&, const Node&)> backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    if (requires_grad) n.grad = Tensor::zeros_like(n.value);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  bool ran_backward_ = false;
};

inline const Tensor& Var::value() const { return tape->node(id).value; }
inline const Tensor& Var::grad() const { return tape->node(id).grad; }

}  // namespace tacslab::ad
