#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "tacslab/autodiff.hpp"
#include "tacslab/gradcheck.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/verify.hpp"

using namespace tacslab;
using ad::Tape;
using ad::Parameter;

namespace {

Tensor vec(std::initializer_list<double> xs) {
  return Tensor::vector(std::vector<double>(xs));
}

}  // namespace

TEST_CASE("matvec forward and annihilation") {
  Tape t;
  Tensor w(2, 2);
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  ad::Var out = t.matvec(t.constant(w), t.constant(vec({3.0, -1.0})));
  CHECK(out.value()[0] == 3.0);
  CHECK(out.value()[1] == -1.0);

  // zero matrix: output is zero and no gradient reaches x
  Tape t2;
  Parameter x("x", vec({1.0, 2.0, 3.0}));
  ad::Var y = t2.matvec(t2.constant(Tensor(2, 3)), t2.leaf(x));
  CHECK(y.value()[0] == 0.0);
  ad::Var loss = t2.dot(y, t2.constant(vec({1.0, 1.0})));
  t2.backward(loss);
  for (double g : x.grad.raw()) CHECK(g == 0.0);
}

TEST_CASE("matvec shape error names both shapes") {
  Tape t;
  ad::Var w = t.constant(Tensor(2, 3));
  ad::Var x = t.constant(vec({1.0, 2.0}));
  CHECK_THROWS_MATCHES(t.matvec(w, x), ShapeError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("2x3") &&
                           Catch::Matchers::ContainsSubstring("2x1")));
}

TEST_CASE("matvec gradient matches central differences") {
  Rng rng(99);
  for (int inst = 0; inst < 20; ++inst) {
    Parameter w("w", Tensor(4, 3));
    Parameter x("x", Tensor(3, 1));
    for (auto& v : w.value.raw()) v = rng.normal();
    for (auto& v : x.value.raw()) v = rng.normal();
    Tensor c(4, 1);
    for (auto& v : c.raw()) v = rng.normal();
    auto loss = [&](bool track) {
      Tape t;
      ad::Var l = t.dot(t.matvec(t.leaf(w), t.leaf(x)), t.constant(c));
      if (track) t.backward(l);
      return l.scalar();
    };
    const auto rep = ad::grad_check(loss, {&w, &x}, 1e-5, 1e-6);
    CHECK(rep.passed);
  }
}

TEST_CASE("softmax values") {
  Tape t;
  ad::Var p = t.softmax(t.constant(vec({0.0, 0.0, 0.0})));
  for (int i = 0; i < 3; ++i) CHECK_THAT(p.value()[i], Catch::Matchers::WithinAbs(1.0 / 3, 1e-15));

  ad::Var q = t.softmax(t.constant(vec({0.0, std::log(2.0)})));
  CHECK_THAT(q.value()[0], Catch::Matchers::WithinAbs(1.0 / 3, 1e-15));
  CHECK_THAT(q.value()[1], Catch::Matchers::WithinAbs(2.0 / 3, 1e-15));
}

TEST_CASE("softmax shift invariance is exact under max subtraction") {
  Tape t;
  ad::Var a = t.softmax(t.constant(vec({1000.0, 1001.0, 1002.0})));
  ad::Var b = t.softmax(t.constant(vec({0.0, 1.0, 2.0})));
  for (int i = 0; i < 3; ++i) CHECK(a.value()[i] == b.value()[i]);
}

TEST_CASE("softmax is a probability vector on random inputs") {
  Rng rng(7);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 1 + rng.below(8);
    Tensor s(n, 1);
    for (auto& v : s.raw()) v = 5.0 * rng.normal();
    Tape t;
    ad::Var p = t.softmax(t.constant(s));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p.value()[i] >= 0.0);
      sum += p.value()[i];
    }
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    // adding a constant shifts nothing
    Tensor s2 = s;
    const double c = 3.0 * rng.normal();
    for (auto& v : s2.raw()) v += c;
    ad::Var p2 = t.softmax(t.constant(s2));
    for (std::size_t i = 0; i < n; ++i)
      CHECK_THAT(p2.value()[i], Catch::Matchers::WithinAbs(p.value()[i], 1e-12));
  }
}

TEST_CASE("softmax input validation") {
  Tape t;
  CHECK_THROWS_AS(t.softmax(t.constant(Tensor(0, 1))), InvalidArgumentError);
  CHECK_THROWS_AS(
      t.softmax(t.constant(vec({1.0, std::numeric_limits<double>::quiet_NaN()}))),
      NumericError);
}

TEST_CASE("cross entropy values") {
  Tape t;
  ad::Var uniform = t.cross_entropy(t.constant(vec({0.0, 0.0})), 0);
  CHECK_THAT(uniform.scalar(), Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));

  ad::Var saturated = t.cross_entropy(t.constant(vec({30.0, -30.0})), 0);
  CHECK(saturated.scalar() >= 0.0);
  CHECK(saturated.scalar() < 1e-12);
  CHECK(std::isfinite(saturated.scalar()));

  CHECK_THROWS_AS(t.cross_entropy(t.constant(vec({0.0, 0.0})), 2),
                  InvalidArgumentError);
}

TEST_CASE("cross entropy is nonnegative and matches finite differences") {
  Rng rng(13);
  for (int inst = 0; inst < 20; ++inst) {
    Parameter s("s", Tensor(5, 1));
    for (auto& v : s.value.raw()) v = 2.0 * rng.normal();
    const std::size_t label = static_cast<std::size_t>(rng.below(5));
    auto loss = [&](bool track) {
      Tape t;
      ad::Var l = t.cross_entropy(t.leaf(s), label);
      if (track) t.backward(l);
      return l.scalar();
    };
    CHECK(loss(false) >= 0.0);
    const auto rep = ad::grad_check(loss, {&s}, 1e-5, 1e-6);
    CHECK(rep.passed);
  }
}

TEST_CASE("cross entropy gradient is softmax minus onehot") {
  Parameter s("s", vec({0.4, -1.2, 2.0}));
  Tape t;
  ad::Var l = t.cross_entropy(t.leaf(s), 1);
  t.backward(l);
  std::vector<double> p(3);
  kernels::softmax(s.value.data(), 3, p.data());
  for (int i = 0; i < 3; ++i)
    CHECK_THAT(s.grad[i],
               Catch::Matchers::WithinAbs(p[i] - (i == 1 ? 1.0 : 0.0), 1e-15));
}

TEST_CASE("gradcheck quadratic and constant") {
  Parameter x("x", vec({1.5, -0.5, 2.0}));
  auto quad = [&](bool track) {
    Tape t;
    ad::Var v = t.leaf(x);
    ad::Var l = t.scale(t.dot(v, v), 0.5);
    if (track) t.backward(l);
    return l.scalar();
  };
  const auto rep = ad::grad_check(quad, {&x}, 1e-5, 1e-9);
  CHECK(rep.passed);
  // analytic gradient of 0.5 ||x||^2 is x itself
  quad(true);

  Parameter y("y", vec({3.0}));
  auto constant = [&](bool track) {
    Tape t;
    ad::Var l = t.constant(Tensor::scalar(4.0));
    ad::Var ly = t.leaf(y);
    (void)ly;
    if (track) t.backward(t.add(l, t.scale(t.leaf(y), 0.0)));
    return 4.0;
  };
  const auto rep2 = ad::grad_check(constant, {&y}, 1e-5, 1e-12);
  CHECK(rep2.passed);
  CHECK(rep2.max_rel_error == 0.0);
}

TEST_CASE("gradcheck rejects non-finite base loss") {
  Parameter x("x", vec({1.0}));
  auto bad = [&](bool track) {
    (void)track;
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(ad::grad_check(bad, {&x}), NumericError);
}

TEST_CASE("shared subexpressions accumulate like a duplicated graph") {
  Rng rng(31);
  for (int inst = 0; inst < 10; ++inst) {
    Parameter w("w", Tensor(3, 3));
    Parameter x("x", Tensor(3, 1));
    for (auto& v : w.value.raw()) v = rng.normal();
    for (auto& v : x.value.raw()) v = rng.normal();

    // shared: y used twice
    Parameter w_dup("w2", w.value);
    Parameter x_dup("x2", x.value);
    {
      Tape t;
      ad::Var y = t.tanh(t.matvec(t.leaf(w), t.leaf(x)));
      t.backward(t.dot(y, y));
    }
    {
      Tape t;
      auto wl = t.leaf(w_dup);
      auto xl = t.leaf(x_dup);
      ad::Var y1 = t.tanh(t.matvec(wl, xl));
      ad::Var y2 = t.tanh(t.matvec(wl, xl));  // duplicated branch
      t.backward(t.dot(y1, y2));
    }
    for (std::size_t i = 0; i < w.grad.size(); ++i)
      CHECK_THAT(w.grad[i], Catch::Matchers::WithinAbs(w_dup.grad[i], 1e-12));
    for (std::size_t i = 0; i < x.grad.size(); ++i)
      CHECK_THAT(x.grad[i], Catch::Matchers::WithinAbs(x_dup.grad[i], 1e-12));
  }
}

TEST_CASE("constants never accumulate gradient") {
  Tape t;
  ad::Var c = t.constant(vec({1.0, 2.0}));
  Parameter x("x", vec({0.5, 0.5}));
  ad::Var l = t.dot(c, t.leaf(x));
  t.backward(l);
  CHECK(t.node(c.id).grad.size() == 0);
  CHECK(t.node(c.id).requires_grad == false);
}

TEST_CASE("backward runs once per tape") {
  Tape t;
  Parameter x("x", vec({1.0}));
  ad::Var l = t.dot(t.leaf(x), t.leaf(x));
  t.backward(l);
  CHECK_THROWS_AS(t.backward(l), InvalidArgumentError);
}

TEST_CASE("mask to neg inf blocks value and gradient") {
  Parameter s("s", vec({1.0, 2.0, 3.0}));
  Tape t;
  ad::Var masked = t.mask_to_neg_inf(t.leaf(s), {false, true, false});
  CHECK(std::isinf(masked.value()[1]));
  ad::Var p = t.softmax(masked);
  CHECK(p.value()[1] == 0.0);
  t.backward(t.pick(p, 2));
  CHECK(s.grad[1] == 0.0);
  CHECK(s.grad[2] != 0.0);
}

TEST_CASE("straight through onehot forward and backward") {
  Parameter s("s", vec({0.1, 0.9, 0.0}));
  Tape t;
  ad::Var soft = t.softmax(t.leaf(s));
  ad::Var hard = t.straight_through_onehot(soft, 1);
  CHECK(hard.value()[0] == 0.0);
  CHECK(hard.value()[1] == 1.0);
  CHECK(hard.value()[2] == 0.0);
  // backward of dot(hard, c) must equal backward of dot(soft, c)
  Parameter s2("s2", s.value);
  Tensor c = vec({0.3, -0.7, 1.1});
  t.backward(t.dot(hard, t.constant(c)));
  Tape t2;
  t2.backward(t2.dot(t2.softmax(t2.leaf(s2)), t2.constant(c)));
  for (int i = 0; i < 3; ++i)
    CHECK_THAT(s.grad[i], Catch::Matchers::WithinAbs(s2.grad[i], 1e-15));
}

TEST_CASE("full op gradient sweep passes at 1e-4") {
  const auto result = verify::check_op_gradients(17);
  INFO(result.details);
  CHECK(result.passed);
}

TEST_CASE("corrupted softmax backward is caught by gradcheck") {
  // negative control: a softmax clone whose backward drops the Jacobian
  // cross-terms must be flagged, with the failing parameter named
  Parameter s("softmax.broken", vec({0.5, -0.3, 0.8}));
  Tensor c = vec({1.0, 2.0, -1.0});
  auto loss = [&](bool track) {
    Tape t;
    ad::Var sv = t.leaf(s);
    Tensor p(3, 1);
    kernels::softmax(sv.value().data(), 3, p.data());
    const std::size_t sid = sv.id;
    ad::Var broken = t.custom(
        p, true, [sid](Tape& tape, const Tape::Node& self) {
          // wrong: diagonal-only approximation of the softmax Jacobian
          Tensor& gs = tape.node(sid).grad;
          for (std::size_t i = 0; i < self.value.size(); ++i)
            gs[i] += self.value[i] * self.grad[i];
        });
    ad::Var l = t.dot(broken, t.constant(c));
    if (track) t.backward(l);
    return l.scalar();
  };
  const auto rep = ad::grad_check(loss, {&s}, 1e-5, 1e-4);
  CHECK_FALSE(rep.passed);
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].parameter == "softmax.broken");
  CHECK(rep.entries[0].max_rel_error > 1e-4);
}
