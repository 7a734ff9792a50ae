#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cadmr/graph.hpp"
#include "cadmr/rng.hpp"

namespace cadmr {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Eigen::Index worst_row = 0, worst_col = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int probes = 0;

  bool passed(double tolerance) const { return max_rel_err < tolerance; }
};

// Central-difference check of analytic gradients.
//
// `loss` must be a deterministic forward pass (dropout disabled): it is
// evaluated twice up front and a mismatch is rejected. `loss_with_grad`
// must compute the same value and leave gradients accumulated on the
// parameters. Probe coordinates are sampled per parameter from `rng`.
template <class S>
GradCheckReport grad_check(const std::vector<Parameter<S>*>& params,
                           const std::function<S()>& loss,
                           const std::function<S()>& loss_with_grad,
                           int probes_per_param, RngStream& rng, double h = 1e-5) {
  const S l0 = loss();
  const S l1 = loss();
  if (l0 != l1) {
    throw std::invalid_argument(
        "grad_check: closure is nondeterministic (was dropout left enabled?)");
  }

  for (Parameter<S>* p : params) p->zero_grad();
  (void)loss_with_grad();

  GradCheckReport report;
  for (Parameter<S>* p : params) {
    const Eigen::Index n = p->value.size();
    if (n == 0) continue;
    const int probes = std::min<Eigen::Index>(probes_per_param, n);
    for (int k = 0; k < probes; ++k) {
      const Eigen::Index flat = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      const Eigen::Index i = flat / p->value.cols();
      const Eigen::Index j = flat % p->value.cols();
      const S saved = p->value(i, j);
      p->value(i, j) = saved + static_cast<S>(h);
      const double f_plus = static_cast<double>(loss());
      p->value(i, j) = saved - static_cast<S>(h);
      const double f_minus = static_cast<double>(loss());
      p->value(i, j) = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double analytic = static_cast<double>(p->grad(i, j));
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.probes;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p->name;
        report.worst_row = i;
        report.worst_col = j;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace cadmr
