#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tacslab/autodiff.hpp"
#include "tacslab/common.hpp"

namespace tacslab::ad {

struct GradCheckEntry {
  std::string parameter;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares analytic gradients against central finite differences.
//
// `loss(true)` must run a full tracked evaluation: zero nothing itself, build
// a tape over the given parameters, backpropagate, and return the loss value
// (gradients land in Parameter::grad). `loss(false)` must evaluate the same
// loss without touching gradients. Both are called at perturbed parameter
// values, so the callable has to read parameter values afresh on every call.
//
// The error metric is |analytic - numeric| / max(1, |analytic| + |numeric|),
// i.e. relative for large gradients and absolute near zero.
inline GradCheckReport grad_check(const std::function<double(bool)>& loss,
                                  const std::vector<Parameter*>& params,
                                  double step = 1e-5, double tolerance = 1e-4) {
  for (Parameter* p : params) p->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base))
    throw NumericError("grad_check: loss is not finite at the base point");

  GradCheckReport report;
  report.tolerance = tolerance;
  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.parameter = p->name;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = loss(false);
      p->value[i] = saved - step;
      const double down = loss(false);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom =
          std::max(1.0, std::abs(analytic) + std::abs(numeric));
      entry.max_rel_error =
          std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace tacslab::ad
