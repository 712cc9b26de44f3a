// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "erwin/model.hpp"

namespace erwin {

// Gradient-based receptive field: mask[i] is true iff some component of
// d out[target, 0] / d features[i, :] exceeds `threshold` in magnitude.
// The cloud must carry input features (cfg.in_features > 0).
std::vector<std::uint8_t> probe_receptive_field(const ErwinConfig& cfg, ParamStore<double>& params,
                                                const PointCloud& cloud, i64 target_index,
                                                double threshold = 1e-12);

// Forward-perturbation variant: bump each input feature by `epsilon` and
// test |out[target, 0] - baseline| against `threshold`. Quadratic cost;
// intended for small instances.
std::vector<std::uint8_t> probe_receptive_field_fd(const ErwinConfig& cfg, ParamStore<double>& params,
                                                   const PointCloud& cloud, i64 target_index, double epsilon = 1e-2,
                                                   double threshold = 1e-8);

// Probe configurations: a single non-rotated ball-attention layer, and an
// MPNN-only network (no attention blocks).
ErwinConfig single_ball_probe_config(int dim, i64 in_features, i64 ball_size);
ErwinConfig mpnn_probe_config(int dim, i64 in_features, int steps, int k_neighbors);

// BFS ball of radius `hops` over the directed k-NN influence graph
// (neighbors of a node influence its next-layer state).
std::vector<std::uint8_t> bfs_hops(const std::vector<i64>& neighbors, i64 n, i64 k, i64 start, i64 hops);

}  // namespace erwin
