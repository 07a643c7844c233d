#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tacslab/gradcheck.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/tasknet.hpp"

using namespace tacslab;

namespace {

TaskNet zero_tasknet(std::size_t dim, std::size_t classes) {
  Rng rng(1);
  TaskNet net(dim, 6, classes, rng);
  for (ad::Parameter* p : net.params()) p->value.fill(0.0);
  return net;
}

}  // namespace

TEST_CASE("zero weights give uniform logits") {
  TaskNet net = zero_tasknet(3, 4);
  const auto logits = net.forward_pair({1, 2, 3}, {4, 5, 6});
  for (double l : logits) CHECK(l == 0.0);
  CHECK_THAT(net.task_loss_value(logits, 2),
             Catch::Matchers::WithinAbs(std::log(4.0), 1e-15));
}

TEST_CASE("pair fusion is asymmetric except on the diagonal") {
  Rng rng(3);
  TaskNet net(3, 8, 3, rng);
  const FeatureVector a = {0.5, -0.2, 1.0};
  const FeatureVector b = {-1.0, 0.3, 0.4};
  const auto ab = net.forward_pair(a, b);
  const auto ba = net.forward_pair(b, a);
  bool any_diff = false;
  for (std::size_t i = 0; i < ab.size(); ++i)
    if (ab[i] != ba[i]) any_diff = true;
  CHECK(any_diff);
  const auto aa1 = net.forward_pair(a, a);
  const auto aa2 = net.forward_pair(a, a);
  for (std::size_t i = 0; i < aa1.size(); ++i) CHECK(aa1[i] == aa2[i]);
}

TEST_CASE("forward_pair validates dimensions and labels") {
  Rng rng(4);
  TaskNet net(3, 4, 2, rng);
  CHECK_THROWS_AS(net.forward_pair({1, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(net.task_loss_value({0.0, 0.0}, 2), InvalidArgumentError);
}

TEST_CASE("no-context forward equals pair forward with the null vector") {
  Rng rng(5);
  TaskNet net(4, 6, 3, rng);
  for (auto& v : net.null_context().value.raw()) v = rng.normal();
  const FeatureVector q = {0.1, 0.2, -0.4, 1.3};
  const auto a = net.forward_noctx(q);
  const auto b = net.forward_pair(q, net.null_context().value.raw());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bitwise

  // the graph path agrees with the raw path bit for bit
  ad::Tape t;
  auto bound = net.bind(t);
  ad::Var logits = net.forward_noctx(t, bound, t.constant(Tensor::vector(q)));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(logits.value()[i] == a[i]);
}

TEST_CASE("zeroed context half makes context irrelevant") {
  TaskNet net = zero_tasknet(2, 3);
  Rng rng(6);
  // random weights on the query half only
  for (std::size_t r = 0; r < net.params()[0]->value.rows(); ++r)
    for (std::size_t c = 0; c < 2; ++c)
      net.params()[0]->value.at(r, c) = rng.normal();
  for (auto& v : net.params()[2]->value.raw()) v = rng.normal();
  const FeatureVector q = {1.0, -1.0};
  const auto base = net.forward_noctx(q);
  const auto with_ctx = net.forward_pair(q, {13.0, -7.0});
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == with_ctx[i]);
}

TEST_CASE("changing the null vector changes the no-context output") {
  Rng rng(7);
  TaskNet net(3, 6, 2, rng);
  const FeatureVector q = {0.5, 0.5, 0.5};
  const auto before = net.forward_noctx(q);
  net.null_context().value[0] = 2.5;
  const auto after = net.forward_noctx(q);
  bool changed = false;
  for (std::size_t i = 0; i < before.size(); ++i)
    if (before[i] != after[i]) changed = true;
  CHECK(changed);
}

TEST_CASE("task loss values") {
  TaskNet zero = zero_tasknet(2, 4);
  CHECK_THAT(zero.task_loss_value(zero.forward_pair({1, 1}, {0, 0}), 1),
             Catch::Matchers::WithinAbs(std::log(4.0), 1e-15));

  // saturated correct logit
  const std::vector<double> confident = {25.0, -25.0, -25.0};
  Rng rng(8);
  TaskNet net(2, 4, 3, rng);
  CHECK(net.task_loss_value(confident, 0) < 1e-6);
  CHECK(net.task_loss_value(confident, 0) >= 0.0);
}

TEST_CASE("graph task loss equals cross entropy of the pair forward") {
  Rng rng(9);
  TaskNet net(3, 5, 4, rng);
  const FeatureVector q = {0.3, -0.6, 0.9};
  const FeatureVector c = {1.1, 0.0, -0.5};
  const auto logits = net.forward_pair(q, c);
  const double direct = kernels::cross_entropy(logits.data(), logits.size(), 2);

  ad::Tape t;
  auto bound = net.bind(t);
  ad::Var loss = net.task_loss(t, bound, t.constant(Tensor::vector(q)),
                               t.constant(Tensor::vector(c)), 2);
  CHECK(loss.scalar() == direct);  // identical kernels, identical bits
  CHECK(loss.scalar() >= 0.0);
}

TEST_CASE("gradcheck over all task parameters on a random pair") {
  Rng rng(10);
  TaskNet net(3, 6, 3, rng);
  for (auto& v : net.null_context().value.raw()) v = 0.2 * rng.normal();
  Tensor q(3, 1), c(3, 1);
  for (auto& v : q.raw()) v = rng.normal();
  for (auto& v : c.raw()) v = rng.normal();
  auto loss = [&](bool track) {
    ad::Tape t;
    auto bound = net.bind(t);
    // pair loss plus a no-context term so the null vector participates
    ad::Var l1 = net.task_loss(t, bound, t.constant(q), t.constant(c), 1);
    ad::Var l2 = t.cross_entropy(net.forward_noctx(t, bound, t.constant(q)), 0);
    ad::Var l = t.add(l1, l2);
    if (track) t.backward(l);
    return l.scalar();
  };
  const auto rep = ad::grad_check(loss, net.params(), 1e-5, 1e-4);
  INFO(rep.max_rel_error);
  CHECK(rep.passed);
}

TEST_CASE("gradients reach both input halves and the null vector") {
  Rng rng(11);
  TaskNet net(2, 5, 2, rng);
  for (auto& v : net.null_context().value.raw()) v = rng.normal();
  const Tensor q = Tensor::vector({0.4, -0.7});
  const Tensor c = Tensor::vector({0.9, 0.1});

  // with a real context, gradient flows into both halves of w1
  {
    for (ad::Parameter* p : net.params()) p->zero_grad();
    ad::Tape t;
    auto bound = net.bind(t);
    t.backward(net.task_loss(t, bound, t.constant(q), t.constant(c), 0));
    const Tensor& gw1 = net.params()[0]->grad;
    double query_half = 0.0, ctx_half = 0.0;
    for (std::size_t r = 0; r < gw1.rows(); ++r) {
      query_half += std::abs(gw1.at(r, 0)) + std::abs(gw1.at(r, 1));
      ctx_half += std::abs(gw1.at(r, 2)) + std::abs(gw1.at(r, 3));
    }
    CHECK(query_half > 0.0);
    CHECK(ctx_half > 0.0);
    for (double g : net.null_context().grad.raw()) CHECK(g == 0.0);
  }

  // without a context, the context-half gradient is exactly the null-vector
  // pathway
  {
    for (ad::Parameter* p : net.params()) p->zero_grad();
    ad::Tape t;
    auto bound = net.bind(t);
    t.backward(t.cross_entropy(net.forward_noctx(t, bound, t.constant(q)), 0));
    double null_grad = 0.0;
    for (double g : net.null_context().grad.raw()) null_grad += std::abs(g);
    CHECK(null_grad > 0.0);
  }
}
