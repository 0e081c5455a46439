#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "marvel/params.hpp"

namespace marvel {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  Eigen::Index worst_i = 0, worst_j = 0;
  int64_t coords_checked = 0;
};

// Central-difference check of analytic gradients over every trainable
// parameter coordinate. `loss(store, with_grad)` must return the scalar loss
// and, when with_grad, leave gradients in the store. Relative error per
// coordinate: |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
template <typename S>
GradCheckResult finite_diff_check(
    ParamStore<S>& ps,
    const std::function<double(ParamStore<S>&, bool with_grad)>& loss,
    double eps = 1e-5) {
  if (!(eps > 0)) throw ContractError("finite_diff_check: eps must be > 0");
  ps.zero_grads();
  loss(ps, true);

  GradCheckResult res;
  for (auto& e : ps.entries()) {
    if (!ps.trainable(e)) continue;
    if (e.grad.size() == 0) e.grad = MatX<S>::Zero(e.value.rows(), e.value.cols());
    for (Eigen::Index i = 0; i < e.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
        S saved = e.value(i, j);
        e.value(i, j) = saved + static_cast<S>(eps);
        double fp = loss(ps, false);
        e.value(i, j) = saved - static_cast<S>(eps);
        double fm = loss(ps, false);
        e.value(i, j) = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw NumericError("finite_diff_check: non-finite loss at perturbed point");
        double numeric = (fp - fm) / (2.0 * eps);
        double analytic = static_cast<double>(e.grad(i, j));
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-12});
        double rel = std::fabs(analytic - numeric) / denom;
        ++res.coords_checked;
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          res.worst_param = e.name;
          res.worst_i = i;
          res.worst_j = j;
        }
      }
    }
  }
  return res;
}

}  // namespace marvel
