// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "erwin/model.hpp"

namespace erwin {

// Medians over `repeats` timed runs, warmups excluded. In abstract-cost mode
// the *_ms fields hold operation counts instead of milliseconds and build is
// not accounted.
struct BenchRecord {
  i64 n = 0;
  i64 repeats = 0;
  u64 seed = 0;
  double build_ms = 0;
  double forward_ms = 0;
  double backward_ms = 0;
};

struct PowerLawFit {
  double coeff = 0;  // C in Runtime = C * n^beta
  double beta = 0;
  double r2 = 0;
  bool valid = false;
  std::string message;
};

// Log-log least squares over samples (n, runtime) with n >= min_n. Requires
// at least three qualifying points; otherwise the fit is skipped.
PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& samples, double min_n = 1024.0);

struct BenchOptions {
  std::vector<i64> sizes;
  i64 batch = 16;  // independent point clouds per measurement
  i64 repeats = 5;
  i64 warmup = 3;
  u64 seed = 0;
  bool abstract_cost = false;
  bool measure_backward = false;
  int threads = 1;
  ErwinConfig model;
  // Test hook: replaces measurement entirely; forward_ms = injected(n).
  std::function<double(i64)> injected_runtime;
};

// Small benchmark network: two stages, pooling 2, window 16, one MPNN step.
ErwinConfig default_bench_config(int dim);

struct ScalingResult {
  std::vector<BenchRecord> records;
  PowerLawFit fit;
};

// Forward runtime of a batch of `batch` clouds per size, plus the power-law
// fit over the forward column.
ScalingResult bench_scaling(const BenchOptions& opts);

struct TreeBenchRecord {
  i64 n = 0;
  i64 repeats = 0;
  int threads = 1;
  double build_ms = 0;    // batch tree construction, median
  double forward_ms = 0;  // model forward on the same batch, median
  double ratio = 0;       // build / (build + forward)
};

std::vector<TreeBenchRecord> bench_treebuild(const BenchOptions& opts);

void write_scaling_csv(std::ostream& out, const ScalingResult& result, bool abstract_cost);
void write_treebuild_csv(std::ostream& out, const std::vector<TreeBenchRecord>& records);

}  // namespace erwin
