// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "erwin/tensor.hpp"

namespace erwin {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  i64 checked = 0;
};

// Central-difference check of analytic gradients. `loss` re-evaluates the
// scalar objective from current buffer contents; `buffer` is perturbed in
// place. Relative error uses max(|fd|, |analytic|) as denominator; entries
// where both are below `dead_zone` are counted as exact matches.
inline GradCheckResult check_gradient_buffer(const std::function<double()>& loss, double* buffer, i64 count,
                                             const double* analytic, double epsilon = 1e-5,
                                             double dead_zone = 1e-10) {
  GradCheckResult res;
  for (i64 i = 0; i < count; ++i) {
    const double saved = buffer[i];
    buffer[i] = saved + epsilon;
    const double up = loss();
    buffer[i] = saved - epsilon;
    const double down = loss();
    buffer[i] = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double an = analytic[i];
    const double abs_err = std::abs(fd - an);
    res.max_abs_err = std::max(res.max_abs_err, abs_err);
    const double denom = std::max(std::abs(fd), std::abs(an));
    if (denom > dead_zone) res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
    ++res.checked;
  }
  return res;
}

// Same check on a sampled subset of coordinates (for large parameter sets).
inline GradCheckResult check_gradient_sampled(const std::function<double()>& loss, double* buffer, i64 count,
                                              const double* analytic, const std::vector<i64>& coords,
                                              double epsilon = 1e-5, double dead_zone = 1e-10) {
  GradCheckResult res;
  for (i64 i : coords) {
    if (i < 0 || i >= count) throw RangeError("gradient check coordinate out of range");
    const double saved = buffer[i];
    buffer[i] = saved + epsilon;
    const double up = loss();
    buffer[i] = saved - epsilon;
    const double down = loss();
    buffer[i] = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double an = analytic[i];
    const double abs_err = std::abs(fd - an);
    res.max_abs_err = std::max(res.max_abs_err, abs_err);
    const double denom = std::max(std::abs(fd), std::abs(an));
    if (denom > dead_zone) res.max_rel_err = std::max(res.max_rel_err, abs_err / denom);
    ++res.checked;
  }
  return res;
}

}  // namespace erwin
