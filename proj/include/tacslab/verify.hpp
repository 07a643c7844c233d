#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/data.hpp"
#include "tacslab/gradcheck.hpp"
#include "tacslab/rng.hpp"
#include "tacslab/selector.hpp"
#include "tacslab/tasknet.hpp"
#include "tacslab/trainer.hpp"

// Statistical verification suite behind the `verify` subcommand: gradient
// checks for every graph operation and the composed selector+task loss, the
// straight-through contract, the Gumbel hard-sample law, policy-gradient
// unbiasedness, gradient detachment, and advantage standardization.
namespace tacslab::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string details;
  double seconds = 0.0;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng,
                            double scale = 1.0) {
  Tensor t(rows, cols);
  for (auto& x : t.raw()) x = scale * rng.normal();
  return t;
}

// Tiny selector+task fixture shared by several checks.
struct Fixture {
  SelectorNet selector;
  TaskNet tasknet;
  CandidatePool pool;
  LabeledSample query;

  static Fixture make(Rng& rng, std::size_t candidates = 3) {
    Fixture f;
    const std::size_t dim = 5, classes = 3;
    f.selector = SelectorNet(dim, 6, 4, rng);
    f.tasknet = TaskNet(dim, 6, classes, rng);
    // run the null context away from zero so its gradient paths are live
    for (auto& x : f.tasknet.null_context().value.raw()) x = 0.3 * rng.normal();
    std::vector<LabeledSample> items(candidates);
    for (std::size_t i = 0; i < candidates; ++i) {
      items[i].features.resize(dim);
      for (auto& x : items[i].features) x = rng.normal();
      items[i].label = static_cast<std::int64_t>(rng.below(classes));
      items[i].group = 1000 + static_cast<std::int64_t>(i);
    }
    f.pool = make_pool(std::move(items));
    f.query.features.resize(dim);
    for (auto& x : f.query.features) x = rng.normal();
    f.query.label = static_cast<std::int64_t>(rng.below(classes));
    f.query.group = 1;
    return f;
  }

  std::vector<ad::Parameter*> all_params() {
    auto p = selector.params();
    for (ad::Parameter* t : tasknet.params()) p.push_back(t);
    return p;
  }
};

template <typename F>
CheckResult timed(const std::string& name, F&& body) {
  CheckResult r;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  body(r);
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return r;
}

}  // namespace detail

// Gradient checks for each operation, >= `instances` random cases per op.
inline CheckResult check_op_gradients(std::uint64_t seed, int instances = 20,
                                      double tolerance = 1e-4) {
  return detail::timed("op-gradients", [&](CheckResult& r) {
    Rng rng = rng_substream(seed, "init");
    double worst = 0.0;
    std::string worst_op = "none";
    auto record = [&](const std::string& op, const ad::GradCheckReport& rep) {
      if (rep.max_rel_error > worst) {
        worst = rep.max_rel_error;
        worst_op = op;
      }
    };

    for (int inst = 0; inst < instances; ++inst) {
      // matvec
      {
        ad::Parameter w("w", detail::random_tensor(4, 3, rng));
        ad::Parameter x("x", detail::random_tensor(3, 1, rng));
        const Tensor c = detail::random_tensor(4, 1, rng);
        auto loss = [&](bool track) {
          ad::Tape t;
          ad::Var out = t.matvec(t.leaf(w), t.leaf(x));
          ad::Var l = t.dot(out, t.constant(c));
          if (track) t.backward(l);
          return l.scalar();
        };
        record("matvec", ad::grad_check(loss, {&w, &x}, 1e-5, tolerance));
      }
      // tanh + add + scale chain
      {
        ad::Parameter x("x", detail::random_tensor(5, 1, rng));
        ad::Parameter b("b", detail::random_tensor(5, 1, rng));
        const Tensor c = detail::random_tensor(5, 1, rng);
        auto loss = [&](bool track) {
          ad::Tape t;
          ad::Var out = t.tanh(t.scale(t.add(t.leaf(x), t.leaf(b)), 0.7));
          ad::Var l = t.dot(out, t.constant(c));
          if (track) t.backward(l);
          return l.scalar();
        };
        record("tanh-add-scale", ad::grad_check(loss, {&x, &b}, 1e-5, tolerance));
      }
      // softmax (full Jacobian) and log_softmax
      {
        ad::Parameter s("s", detail::random_tensor(6, 1, rng, 2.0));
        const Tensor c = detail::random_tensor(6, 1, rng);
        auto loss = [&](bool track) {
          ad::Tape t;
          ad::Var l = t.dot(t.softmax(t.leaf(s)), t.constant(c));
          if (track) t.backward(l);
          return l.scalar();
        };
        record("softmax", ad::grad_check(loss, {&s}, 1e-5, tolerance));
        auto loss2 = [&](bool track) {
          ad::Tape t;
          ad::Var l = t.dot(t.log_softmax(t.leaf(s)), t.constant(c));
          if (track) t.backward(l);
          return l.scalar();
        };
        record("log_softmax", ad::grad_check(loss2, {&s}, 1e-5, tolerance));
      }
      // cross_entropy on random logits
      {
        ad::Parameter s("s", detail::random_tensor(5, 1, rng, 3.0));
        const std::size_t label = static_cast<std::size_t>(rng.below(5));
        auto loss = [&](bool track) {
          ad::Tape t;
          ad::Var l = t.cross_entropy(t.leaf(s), label);
          if (track) t.backward(l);
          return l.scalar();
        };
        record("cross_entropy", ad::grad_check(loss, {&s}, 1e-5, tolerance));
      }
      // dot of two parameters
      {
        ad::Parameter a("a", detail::random_tensor(4, 1, rng));
        ad::Parameter b("b", detail::random_tensor(4, 1, rng));
        auto loss = [&](bool track) {
          ad::Tape t;
          ad::Var l = t.dot(t.leaf(a), t.leaf(b));
          if (track) t.backward(l);
          return l.scalar();
        };
        record("dot", ad::grad_check(loss, {&a, &b}, 1e-5, tolerance));
      }
      // concat + pick + mask + stack composite over shared inputs
      {
        ad::Parameter a("a", detail::random_tensor(3, 1, rng));
        ad::Parameter b("b", detail::random_tensor(2, 1, rng));
        const std::vector<bool> masked = {false, true, false, false, true};
        auto loss = [&](bool track) {
          ad::Tape t;
          ad::Var joint = t.concat(t.leaf(a), t.leaf(b));
          ad::Var masked_scores = t.mask_to_neg_inf(joint, masked);
          ad::Var p = t.softmax(masked_scores);
          ad::Var l = t.sum({t.pick(p, 0), t.pick(p, 2), t.pick(joint, 4)});
          if (track) t.backward(l);
          return l.scalar();
        };
        record("concat-mask-pick", ad::grad_check(loss, {&a, &b}, 1e-5, tolerance));
      }
    }

    // Composed selector + task loss at fixed noise and fixed policy action:
    // embeddings, masked scores, tempered soft selection, context assembly,
    // pair classification and the policy term, end to end. The hard
    // straight-through forward is piecewise constant in the selection, so
    // the differentiable surrogate is what a finite-difference check can
    // meaningfully probe; the straight-through contract has its own check.
    Rng fixture_rng = rng_substream(seed, "dataset");
    for (int inst = 0; inst < instances; ++inst) {
      auto fix = detail::Fixture::make(fixture_rng);
      Tensor noise(fix.pool.size(), 1);
      for (auto& x : noise.raw()) x = gumbel_noise(fixture_rng);
      const std::size_t action = fixture_rng.below(fix.pool.size());
      const double advantage = 0.7;
      auto loss = [&](bool track) {
        ad::Tape t;
        auto sel_bound = fix.selector.encoder().bind(t);
        auto task_bound = fix.tasknet.bind(t);
        const Tensor raw_t =
            pool_features_transposed(fix.pool, fix.tasknet.input_dim());
        PoolGraph pg =
            build_pool_graph(t, fix.selector, sel_bound, fix.pool, raw_t);
        ad::Var scores = masked_pool_scores(
            t, fix.selector, sel_bound, pg, fix.query.features,
            leakage_mask(fix.pool, fix.query.group));
        ad::Var soft =
            t.softmax(t.scale(t.add(scores, t.constant(noise)), 1.0 / 0.1));
        ad::Var x_sel = t.matvec(pg.raw_transposed, soft);
        ad::Var task = fix.tasknet.task_loss(
            t, task_bound, t.constant(Tensor::vector(fix.query.features)),
            x_sel, static_cast<std::size_t>(fix.query.label));
        ad::Var lp = policy_loss(t, {scores}, {action}, {advantage});
        ad::Var l = t.add(task, t.scale(lp, 0.5));
        if (track) t.backward(l);
        return l.scalar();
      };
      record("selector-task-composite",
             ad::grad_check(loss, fix.all_params(), 1e-5, tolerance));
    }

    r.passed = worst <= tolerance;
    r.details = "max rel err " + detail::fmt(worst) + " (" + worst_op +
                "), tolerance " + detail::fmt(tolerance);
  });
}

// Straight-through contract: with fixed Gumbel noise and decisive score
// gaps, parameter gradients through the hard selection equal central
// differences of the soft-surrogate loss.
inline CheckResult check_straight_through(std::uint64_t seed,
                                          double tolerance = 1e-4) {
  return detail::timed("straight-through", [&](CheckResult& r) {
    Rng rng = rng_substream(seed, "dataset");
    double worst = 0.0;
    for (int inst = 0; inst < 5; ++inst) {
      auto fix = detail::Fixture::make(rng);
      // fixed noise with a decisive winner so the soft sample saturates and
      // the hard/soft forwards agree to machine precision
      Tensor noise(fix.pool.size(), 1);
      for (auto& x : noise.raw()) x = rng.normal();
      noise[rng.below(fix.pool.size())] += 8.0;
      const double tau = 0.1;
      const std::size_t label = static_cast<std::size_t>(fix.query.label);

      auto build = [&](ad::Tape& t, bool hard) {
        auto sel_bound = fix.selector.encoder().bind(t);
        auto task_bound = fix.tasknet.bind(t);
        const Tensor raw_t =
            pool_features_transposed(fix.pool, fix.tasknet.input_dim());
        PoolGraph pg =
            build_pool_graph(t, fix.selector, sel_bound, fix.pool, raw_t);
        ad::Var scores = masked_pool_scores(
            t, fix.selector, sel_bound, pg, fix.query.features,
            leakage_mask(fix.pool, fix.query.group));
        ad::Var perturbed = t.add(scores, t.constant(noise));
        ad::Var soft = t.softmax(t.scale(perturbed, 1.0 / tau));
        ad::Var weights = soft;
        if (hard) {
          const std::size_t index =
              kernels::argmax(perturbed.value().data(), perturbed.value().size());
          weights = t.straight_through_onehot(soft, index);
        }
        ad::Var x_sel = t.matvec(pg.raw_transposed, weights);
        return fix.tasknet.task_loss(
            t, task_bound, t.constant(Tensor::vector(fix.query.features)),
            x_sel, label);
      };

      auto loss = [&](bool track) {
        ad::Tape t;
        ad::Var l = build(t, track);  // tracked pass uses the hard path
        if (track) t.backward(l);
        return l.scalar();
      };
      // grad_check: analytic gradients from the straight-through (hard)
      // forward, finite differences from the soft surrogate.
      const auto rep = ad::grad_check(loss, fix.all_params(), 1e-5, tolerance);
      worst = std::max(worst, rep.max_rel_error);
    }
    r.passed = worst <= tolerance;
    r.details = "max rel err " + detail::fmt(worst) + " vs soft surrogate";
  });
}

// Hard-sample law: selection frequencies follow softmax(scores) for any
// temperature (Gumbel-max property).
inline CheckResult check_hard_sample_law(std::uint64_t seed,
                                         std::size_t draws = 200000) {
  return detail::timed("hard-sample-law", [&](CheckResult& r) {
    const std::vector<double> weights = {1.0, 2.0, 3.0, 4.0};
    Tensor scores(4, 1);
    for (std::size_t i = 0; i < 4; ++i) scores[i] = std::log(weights[i]);
    const std::vector<double> expect = {0.1, 0.2, 0.3, 0.4};
    Rng rng = rng_substream(seed, "gumbel");
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t d = 0; d < draws; ++d) {
      ad::Tape t;
      auto [onehot, index] =
          gumbel_softmax_select(t, t.constant(scores), 0.1, rng);
      (void)onehot;
      ++counts[index];
    }
    double tv = 0.0;
    bool arms_ok = true;
    std::ostringstream freqs;
    for (std::size_t i = 0; i < 4; ++i) {
      const double f =
          static_cast<double>(counts[i]) / static_cast<double>(draws);
      const double sigma =
          std::sqrt(expect[i] * (1.0 - expect[i]) / static_cast<double>(draws));
      if (std::abs(f - expect[i]) > 3.0 * sigma) arms_ok = false;
      tv += 0.5 * std::abs(f - expect[i]);
      freqs << (i ? " " : "") << detail::fmt(f);
    }
    r.passed = arms_ok && tv < 0.01;
    r.details = "freqs [" + freqs.str() + "] vs [0.1 0.2 0.3 0.4], TV " +
                detail::fmt(tv);
  });
}

// Policy-gradient unbiasedness on a fixed 3-armed bandit with raw
// advantages: the mean of single-sample estimates must match the analytic
// gradient of expected reward within 3 standard errors per coordinate.
inline CheckResult check_policy_gradient_unbiased(std::uint64_t seed,
                                                  std::size_t samples = 100000) {
  return detail::timed("policy-gradient-bias", [&](CheckResult& r) {
    const std::vector<double> reward = {0.0, 0.5, 1.0};
    ad::Parameter theta("theta", Tensor(3, 1));  // uniform policy
    std::vector<double> pi = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    double expected_reward = 0.0;
    for (int i = 0; i < 3; ++i) expected_reward += pi[i] * reward[i];
    // d E[r] / d theta_i = pi_i (r_i - E[r]); the policy loss estimates its
    // negative.
    std::vector<double> analytic(3);
    for (int i = 0; i < 3; ++i)
      analytic[i] = -pi[i] * (reward[i] - expected_reward);

    Rng rng = rng_substream(seed, "policy");
    std::vector<double> sum(3, 0.0), sumsq(3, 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t a = tacslab::detail::sample_index(pi, rng);
      theta.zero_grad();
      ad::Tape t;
      ad::Var logits = t.leaf(theta);
      ad::Var lp = policy_loss(t, {logits}, {a}, {reward[a]});
      t.backward(lp);
      for (int i = 0; i < 3; ++i) {
        sum[i] += theta.grad[i];
        sumsq[i] += theta.grad[i] * theta.grad[i];
      }
    }
    bool ok = true;
    double worst_z = 0.0;
    const double n = static_cast<double>(samples);
    for (int i = 0; i < 3; ++i) {
      const double mean = sum[i] / n;
      const double var = sumsq[i] / n - mean * mean;
      const double se = std::sqrt(var / n);
      const double z = std::abs(mean - analytic[i]) / (se > 0 ? se : 1e-300);
      worst_z = std::max(worst_z, z);
      if (z > 3.0) ok = false;
    }
    r.passed = ok;
    r.details = "worst |z| " + detail::fmt(worst_z) + " over 3 coordinates";
  });

}

// Backpropagating the policy term alone must leave every task-network
// parameter (null context included) with exactly zero gradient.
inline CheckResult check_detachment(std::uint64_t seed) {
  return detail::timed("detachment", [&](CheckResult& r) {
    Rng rng = rng_substream(seed, "dataset");
    auto fix = detail::Fixture::make(rng, 4);
    for (ad::Parameter* p : fix.all_params()) p->zero_grad();

    ad::Tape t;
    auto sel_bound = fix.selector.encoder().bind(t);
    const Tensor raw_t =
        pool_features_transposed(fix.pool, fix.tasknet.input_dim());
    PoolGraph pg = build_pool_graph(t, fix.selector, sel_bound, fix.pool, raw_t);
    std::vector<ad::Var> logits;
    std::vector<std::size_t> actions;
    std::vector<double> advantages;
    Rng policy_rng = rng_substream(seed, "policy");
    for (int b = 0; b < 4; ++b) {
      LabeledSample q = fix.query;
      for (auto& x : q.features) x += 0.1 * policy_rng.normal();
      ad::Var s = masked_pool_scores(t, fix.selector, sel_bound, pg, q.features,
                                     leakage_mask(fix.pool, q.group));
      std::vector<double> probs(fix.pool.size());
      kernels::softmax(s.value().data(), probs.size(), probs.data());
      const std::size_t a = tacslab::detail::sample_index(probs, policy_rng);
      logits.push_back(s);
      actions.push_back(a);
      advantages.push_back(compute_reward(fix.tasknet, q.features,
                                          fix.pool[a].features,
                                          static_cast<std::size_t>(q.label)));
    }
    ad::Var lp =
        t.scale(policy_loss(t, logits, actions,
                            standardize_advantages(advantages)),
                0.5);
    t.backward(lp);

    double task_abs = 0.0, selector_abs = 0.0;
    for (ad::Parameter* p : fix.tasknet.params())
      for (double g : p->grad.raw()) task_abs += std::abs(g);
    for (ad::Parameter* p : fix.selector.params())
      for (double g : p->grad.raw()) selector_abs += std::abs(g);
    r.passed = task_abs == 0.0 && selector_abs > 0.0;
    r.details = "task-param |grad| sum " + detail::fmt(task_abs) +
                " (exact zero required), selector |grad| sum " +
                detail::fmt(selector_abs);
  });
}

// Advantage standardization: mean 0 within 1e-9 and std 1 within 1e-6 for
// any batch with reward variance, all zeros otherwise.
inline CheckResult check_standardization(std::uint64_t seed) {
  return detail::timed("advantage-standardization", [&](CheckResult& r) {
    Rng rng = rng_substream(seed, "policy");
    double worst_mean = 0.0, worst_std = 0.0;
    bool ok = true;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng.below(63);
      std::vector<double> rewards(n);
      for (auto& x : rewards) x = 3.0 * rng.normal();
      const auto a = standardize_advantages(rewards);
      double mean = 0.0;
      for (double v : a) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : a) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      const double sd = std::sqrt(var);
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_std = std::max(worst_std, std::abs(sd - 1.0));
      if (std::abs(mean) > 1e-9 || std::abs(sd - 1.0) > 1e-6) ok = false;
    }
    const auto zero = standardize_advantages({1.0, 1.0, 1.0});
    for (double v : zero)
      if (v != 0.0) ok = false;
    r.passed = ok;
    r.details = "worst |mean| " + detail::fmt(worst_mean) + ", worst |std-1| " +
                detail::fmt(worst_std) + ", zero-variance batch handled";
  });
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(check_op_gradients(seed));
  results.push_back(check_straight_through(seed));
  results.push_back(check_hard_sample_law(seed));
  results.push_back(check_policy_gradient_unbiased(seed));
  results.push_back(check_detachment(seed));
  results.push_back(check_standardization(seed));
  return results;
}

}  // namespace tacslab::verify
