// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "erwin/common.hpp"

namespace erwin {

struct BatteryEntry {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool pass = false;
};

// Central-difference checks of every differentiable operation on small
// random shapes (64-bit, relative tolerance 1e-6).
std::vector<BatteryEntry> run_gradcheck_battery(u64 seed = 7);

// End-to-end check of the full network on a small cloud: `sampled` parameter
// coordinates are perturbed (relative tolerance 1e-4).
BatteryEntry run_model_gradcheck(i64 n_points = 64, i64 sampled = 20, u64 seed = 7);

}  // namespace erwin
