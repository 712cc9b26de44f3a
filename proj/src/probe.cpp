// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include "erwin/probe.hpp"

#include <cmath>

namespace erwin {

namespace {

Tensor<double> features_tensor(const ErwinConfig& cfg, const PointCloud& cloud) {
  if (cfg.in_features < 1) throw ConfigError("receptive-field probe needs in-features >= 1");
  if (!cloud.features || cloud.features->cols != cfg.in_features)
    throw ConfigError("probe cloud must carry [n x in-features] features");
  return to_tensor<double>(*cloud.features);
}

}  // namespace

std::vector<std::uint8_t> probe_receptive_field(const ErwinConfig& cfg, ParamStore<double>& params,
                                                const PointCloud& cloud, i64 target_index, double threshold) {
  const i64 n = cloud.size();
  if (target_index < 0 || target_index >= n) throw RangeError("probe target index out of range");
  Tensor<double> feats = features_tensor(cfg, cloud);

  Tape<double> tape;
  Tensor<double> leaf_feats = tape.leaf(feats);
  ForwardOptions<double> opts;
  opts.tape = &tape;
  opts.features_override = &leaf_feats;
  Tensor<double> out = erwin_forward(cfg, params, cloud, opts);
  Tensor<double> loss = sum_all(col_slice(take_rows(out, {target_index}), 0, 1));
  tape.backward(loss);

  const std::vector<double>& grad = tape.grad(leaf_feats);
  const i64 f = cfg.in_features;
  std::vector<std::uint8_t> mask(static_cast<size_t>(n), 0);
  for (i64 i = 0; i < n; ++i) {
    double mx = 0;
    for (i64 c = 0; c < f; ++c) mx = std::max(mx, std::abs(grad[static_cast<size_t>(i * f + c)]));
    mask[static_cast<size_t>(i)] = mx > threshold ? 1 : 0;
  }
  return mask;
}

std::vector<std::uint8_t> probe_receptive_field_fd(const ErwinConfig& cfg, ParamStore<double>& params,
                                                   const PointCloud& cloud, i64 target_index, double epsilon,
                                                   double threshold) {
  const i64 n = cloud.size();
  if (target_index < 0 || target_index >= n) throw RangeError("probe target index out of range");
  Tensor<double> feats = features_tensor(cfg, cloud);
  const i64 f = cfg.in_features;

  auto eval = [&]() {
    ForwardOptions<double> opts;
    opts.features_override = &feats;
    Tensor<double> out = erwin_forward(cfg, params, cloud, opts);
    return static_cast<double>((*out.data)[target_index * cfg.out_channels]);
  };
  const double base = eval();

  std::vector<std::uint8_t> mask(static_cast<size_t>(n), 0);
  for (i64 i = 0; i < n; ++i) {
    bool hit = false;
    for (i64 c = 0; c < f && !hit; ++c) {
      double& cell = (*feats.data)[static_cast<size_t>(i * f + c)];
      const double saved = cell;
      cell = saved + epsilon;
      hit = std::abs(eval() - base) > threshold;
      cell = saved;
    }
    mask[static_cast<size_t>(i)] = hit ? 1 : 0;
  }
  return mask;
}

ErwinConfig single_ball_probe_config(int dim, i64 in_features, i64 ball_size) {
  ErwinConfig cfg;
  cfg.dim = dim;
  cfg.in_features = in_features;
  cfg.out_channels = 1;
  cfg.channels = {8};
  cfg.enc_depths = {1};
  cfg.enc_heads = {2};
  cfg.dec_depths = {};
  cfg.dec_heads = {};
  cfg.ball_sizes = {ball_size};
  cfg.strides = {1};
  cfg.rotate = false;
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = 0;
  cfg.mpnn.k_neighbors = 0;
  return cfg;
}

ErwinConfig mpnn_probe_config(int dim, i64 in_features, int steps, int k_neighbors) {
  ErwinConfig cfg;
  cfg.dim = dim;
  cfg.in_features = in_features;
  cfg.out_channels = 1;
  cfg.channels = {8};
  cfg.enc_depths = {0};
  cfg.enc_heads = {1};
  cfg.dec_depths = {};
  cfg.dec_heads = {};
  cfg.ball_sizes = {1};
  cfg.strides = {1};
  cfg.rotate = false;
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = steps;
  cfg.mpnn.k_neighbors = k_neighbors;
  return cfg;
}

std::vector<std::uint8_t> bfs_hops(const std::vector<i64>& neighbors, i64 n, i64 k, i64 start, i64 hops) {
  std::vector<std::uint8_t> reached(static_cast<size_t>(n), 0);
  reached[static_cast<size_t>(start)] = 1;
  std::vector<i64> frontier = {start};
  for (i64 h = 0; h < hops; ++h) {
    std::vector<i64> next;
    for (i64 node : frontier)
      for (i64 e = 0; e < k; ++e) {
        const i64 nb = neighbors[static_cast<size_t>(node * k + e)];
        if (!reached[static_cast<size_t>(nb)]) {
          reached[static_cast<size_t>(nb)] = 1;
          next.push_back(nb);
        }
      }
    frontier = std::move(next);
  }
  return reached;
}

}  // namespace erwin
