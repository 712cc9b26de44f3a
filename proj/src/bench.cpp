// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include "erwin/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

namespace erwin {

PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& samples, double min_n) {
  PowerLawFit fit;
  std::vector<std::pair<double, double>> logs;
  for (const auto& [n, y] : samples)
    if (n >= min_n && y > 0) logs.emplace_back(std::log(n), std::log(y));
  if (logs.size() < 3) {
    fit.message = "fit skipped: need >= 3 samples with n >= " + std::to_string(static_cast<i64>(min_n)) + ", have " +
                  std::to_string(logs.size());
    return fit;
  }
  double sx = 0, sy = 0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
  }
  const double mx = sx / static_cast<double>(logs.size());
  const double my = sy / static_cast<double>(logs.size());
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : logs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0) {
    fit.message = "fit skipped: all sizes identical";
    return fit;
  }
  fit.beta = sxy / sxx;
  const double intercept = my - fit.beta * mx;
  fit.coeff = std::exp(intercept);
  double ss_res = 0, ss_tot = 0;
  for (const auto& [x, y] : logs) {
    const double pred = intercept + fit.beta * x;
    ss_res += (y - pred) * (y - pred);
    ss_tot += (y - my) * (y - my);
  }
  fit.r2 = (ss_tot > 1e-300) ? 1.0 - ss_res / ss_tot : (ss_res < 1e-300 ? 1.0 : 0.0);
  fit.valid = true;
  return fit;
}

ErwinConfig default_bench_config(int dim) {
  ErwinConfig cfg;
  cfg.dim = dim;
  cfg.in_features = 0;
  cfg.out_channels = 1;
  cfg.channels = {8, 16};
  cfg.enc_depths = {1, 1};
  cfg.enc_heads = {2, 2};
  cfg.dec_depths = {1};
  cfg.dec_heads = {2};
  cfg.ball_sizes = {16, 16};
  cfg.strides = {2, 1};
  cfg.rotate = true;
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = 1;
  cfg.mpnn.k_neighbors = 8;
  return cfg;
}

namespace {

using clock_type = std::chrono::steady_clock;

double ms_since(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return (v.size() % 2) ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

PointCloud bench_batch(i64 n, i64 batch, int dim, u64 seed) {
  std::vector<PointCloud> clouds;
  clouds.reserve(static_cast<size_t>(batch));
  for (i64 b = 0; b < batch; ++b)
    clouds.push_back(generate({CloudKind::UniformBox, n, dim, seed + static_cast<u64>(b)}));
  return concat_clouds(clouds);
}

void validate_bench(const BenchOptions& opts) {
  if (opts.sizes.empty()) throw ConfigError("no benchmark sizes given");
  for (size_t i = 1; i < opts.sizes.size(); ++i)
    if (opts.sizes[i] <= opts.sizes[i - 1]) throw ConfigError("benchmark sizes must be strictly ascending");
  if (opts.repeats < 5) throw ConfigError("repeats must be >= 5 (medians are reported)");
  if (opts.batch < 1) throw ConfigError("batch must be >= 1");
  if (opts.threads < 1) throw ConfigError("threads must be >= 1");
}

}  // namespace

ScalingResult bench_scaling(const BenchOptions& opts) {
  validate_bench(opts);
  ScalingResult result;
  ErwinConfig cfg = opts.model;
  cfg.validate();

  for (i64 n : opts.sizes) {
    BenchRecord rec;
    rec.n = n;
    rec.repeats = opts.repeats;
    rec.seed = opts.seed;
    if (opts.injected_runtime) {
      rec.forward_ms = opts.injected_runtime(n);
      result.records.push_back(rec);
      continue;
    }
    const PointCloud batch = bench_batch(n, opts.batch, cfg.dim, opts.seed * 1000003ULL + static_cast<u64>(n));
    ParamStore<float> params = init_params<float>(cfg);

    std::vector<double> builds, forwards, backwards;
    const i64 warmup = opts.abstract_cost ? 0 : opts.warmup;
    for (i64 r = 0; r < warmup + opts.repeats; ++r) {
      double build_ms = 0;
      ForwardOptions<float> fwd;
      fwd.tree_build_ms = &build_ms;
      if (opts.abstract_cost) {
        cost::reset();
        cost::ScopedEnable on;
        (void)erwin_forward(cfg, params, batch, fwd);
        if (r >= warmup) {
          forwards.push_back(static_cast<double>(cost::total()));
          builds.push_back(0.0);
          if (opts.measure_backward) {
            cost::reset();
            Tape<float> tape;
            ForwardOptions<float> fb;
            fb.tape = &tape;
            Tensor<float> out = erwin_forward(cfg, params, batch, fb);
            const u64 fwd_cost = cost::total();
            tape.backward(mean_all(out));
            backwards.push_back(static_cast<double>(cost::total() - fwd_cost));
          }
        }
      } else {
        const auto t0 = clock_type::now();
        (void)erwin_forward(cfg, params, batch, fwd);
        const double total = ms_since(t0);
        if (r >= warmup) {
          builds.push_back(build_ms);
          forwards.push_back(total - build_ms);
          if (opts.measure_backward) {
            Tape<float> tape;
            ForwardOptions<float> fb;
            fb.tape = &tape;
            Tensor<float> out = erwin_forward(cfg, params, batch, fb);
            Tensor<float> loss = mean_all(out);
            const auto b0 = clock_type::now();
            tape.backward(loss);
            backwards.push_back(ms_since(b0));
          }
        }
      }
    }
    rec.build_ms = median(builds);
    rec.forward_ms = median(forwards);
    rec.backward_ms = median(backwards);
    result.records.push_back(rec);
  }

  std::vector<std::pair<double, double>> samples;
  for (const auto& r : result.records)
    samples.emplace_back(static_cast<double>(r.n), r.forward_ms);
  result.fit = fit_power_law(samples);
  return result;
}

std::vector<TreeBenchRecord> bench_treebuild(const BenchOptions& opts) {
  validate_bench(opts);
  ErwinConfig cfg = opts.model;
  cfg.validate();
  std::vector<TreeBenchRecord> out;

  for (i64 n : opts.sizes) {
    const u64 size_seed = opts.seed * 1000003ULL + static_cast<u64>(n);
    std::vector<PointCloud> clouds;
    for (i64 b = 0; b < opts.batch; ++b)
      clouds.push_back(generate({CloudKind::UniformBox, n, cfg.dim, size_seed + static_cast<u64>(b)}));
    const PointCloud batch = concat_clouds(clouds);
    ParamStore<float> params = init_params<float>(cfg);

    std::vector<double> builds, forwards;
    for (i64 r = 0; r < opts.warmup + opts.repeats; ++r) {
      const auto t0 = clock_type::now();
      if (opts.threads <= 1) {
        for (const auto& c : clouds) (void)build_tree(c);
      } else {
        std::vector<std::thread> workers;
        std::atomic<size_t> next{0};
        for (int w = 0; w < opts.threads; ++w)
          workers.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < clouds.size(); i = next.fetch_add(1)) (void)build_tree(clouds[i]);
          });
        for (auto& w : workers) w.join();
      }
      const double build = ms_since(t0);

      double fwd_build = 0;
      ForwardOptions<float> fwd;
      fwd.tree_build_ms = &fwd_build;
      const auto t1 = clock_type::now();
      (void)erwin_forward(cfg, params, batch, fwd);
      const double forward = ms_since(t1) - fwd_build;
      if (r >= opts.warmup) {
        builds.push_back(build);
        forwards.push_back(forward);
      }
    }
    TreeBenchRecord rec;
    rec.n = n;
    rec.repeats = opts.repeats;
    rec.threads = opts.threads;
    rec.build_ms = median(builds);
    rec.forward_ms = median(forwards);
    rec.ratio = rec.build_ms / (rec.build_ms + rec.forward_ms);
    out.push_back(rec);
  }
  return out;
}

void write_scaling_csv(std::ostream& out, const ScalingResult& result, bool abstract_cost) {
  char buf[128];
  out << "# unit: " << (abstract_cost ? "ops" : "ms") << "\n";
  out << "n,repeats,seed,build,forward,backward\n";
  for (const auto& r : result.records) {
    if (abstract_cost) {
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%llu,%.0f,%.0f,%.0f", static_cast<long long>(r.n),
                    static_cast<long long>(r.repeats), static_cast<unsigned long long>(r.seed), r.build_ms,
                    r.forward_ms, r.backward_ms);
    } else {
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%llu,%.6f,%.6f,%.6f", static_cast<long long>(r.n),
                    static_cast<long long>(r.repeats), static_cast<unsigned long long>(r.seed), r.build_ms,
                    r.forward_ms, r.backward_ms);
    }
    out << buf << "\n";
  }
  if (result.fit.valid) {
    std::snprintf(buf, sizeof(buf), "# fit: coeff=%.9g beta=%.9f r2=%.9f", result.fit.coeff, result.fit.beta,
                  result.fit.r2);
    out << buf << "\n";
  } else {
    out << "# " << result.fit.message << "\n";
  }
}

void write_treebuild_csv(std::ostream& out, const std::vector<TreeBenchRecord>& records) {
  char buf[128];
  out << "# unit: ms\n";
  out << "n,repeats,threads,build,forward,ratio\n";
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%d,%.6f,%.6f,%.6f", static_cast<long long>(r.n),
                  static_cast<long long>(r.repeats), r.threads, r.build_ms, r.forward_ms, r.ratio);
    out << buf << "\n";
  }
}

}  // namespace erwin
