// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include "erwin/train.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace erwin {

TrainTask parse_train_task(const std::string& name) {
  if (name == "density-regression") return TrainTask::DensityRegression;
  if (name == "com-offset") return TrainTask::ComOffset;
  if (name == "linear") return TrainTask::Linear;
  throw ConfigError("unknown training task: " + name);
}

std::string train_task_name(TrainTask task) {
  switch (task) {
    case TrainTask::DensityRegression: return "density-regression";
    case TrainTask::ComOffset: return "com-offset";
    case TrainTask::Linear: return "linear";
  }
  throw ConfigError("invalid task enum value");
}

Matrix density_targets(const PointCloud& cloud) {
  const i64 n = cloud.size();
  const int d = static_cast<int>(cloud.dim());
  const double h = 0.1;
  Matrix out(n, 1);
  for (i64 i = 0; i < n; ++i) {
    double acc = 0;
    for (i64 j = 0; j < n; ++j) {
      double r2 = 0;
      for (int c = 0; c < d; ++c) {
        const double dd = cloud.positions.at(i, c) - cloud.positions.at(j, c);
        r2 += dd * dd;
      }
      acc += std::exp(-r2 / (2.0 * h * h));
    }
    out.at(i, 0) = acc / static_cast<double>(n);
  }
  return out;
}

Matrix com_offset_targets(const PointCloud& cloud) {
  const i64 n = cloud.size();
  const int d = static_cast<int>(cloud.dim());
  std::vector<double> com(static_cast<size_t>(d), 0.0);
  for (i64 i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) com[static_cast<size_t>(c)] += cloud.positions.at(i, c);
  for (int c = 0; c < d; ++c) com[static_cast<size_t>(c)] /= static_cast<double>(n);
  Matrix out(n, d);
  for (i64 i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) out.at(i, c) = com[static_cast<size_t>(c)] - cloud.positions.at(i, c);
  return out;
}

void linear_task_data(i64 n, u64 seed, Matrix& features, Matrix& targets) {
  const i64 f = 4, o = 2;
  Rng rng(seed ^ 0x11aa22bb33ULL);
  Matrix a_true(f, o);
  std::vector<double> b_true(static_cast<size_t>(o));
  for (double& v : a_true.data) v = rng.normal();
  for (double& v : b_true) v = rng.normal();
  features = Matrix(n, f);
  for (double& v : features.data) v = rng.normal();
  targets = Matrix(n, o);
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < o; ++j) {
      double acc = b_true[static_cast<size_t>(j)];
      for (i64 k = 0; k < f; ++k) acc += features.at(i, k) * a_true.at(k, j);
      targets.at(i, j) = acc + 0.1 * rng.normal();
    }
}

namespace {

ErwinConfig density_config() {
  ErwinConfig cfg;
  cfg.dim = 3;
  cfg.in_features = 0;
  cfg.out_channels = 1;
  cfg.channels = {8, 16};
  cfg.enc_depths = {1, 1};
  cfg.enc_heads = {2, 2};
  cfg.dec_depths = {1};
  cfg.dec_heads = {2};
  cfg.ball_sizes = {8, 8};
  cfg.strides = {2, 1};
  cfg.rotate = true;
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = 1;
  cfg.mpnn.k_neighbors = 8;
  return cfg;
}

ErwinConfig com_offset_config() {
  ErwinConfig cfg = density_config();
  cfg.out_channels = 3;
  return cfg;
}

// Linear capacity: no attention blocks, no message passing, stride 1; the
// network reduces to input linear -> hidden linear -> readout.
ErwinConfig linear_config() {
  ErwinConfig cfg;
  cfg.dim = 3;
  cfg.in_features = 4;
  cfg.out_channels = 2;
  cfg.channels = {8};
  cfg.enc_depths = {0};
  cfg.enc_heads = {1};
  cfg.dec_depths = {};
  cfg.dec_heads = {};
  cfg.ball_sizes = {1};
  cfg.strides = {1};
  cfg.rotate = false;
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = 0;
  cfg.mpnn.k_neighbors = 0;
  return cfg;
}

}  // namespace

TrainResult train_synthetic(const TrainOptions& opts) {
  if (opts.steps < 0) throw ConfigError("steps must be >= 0");
  if (opts.n < 2) throw ConfigError("training cloud must have n >= 2");

  TrainResult result;
  PointCloud cloud;
  Matrix targets_m;
  double lr = opts.lr;
  switch (opts.task) {
    case TrainTask::DensityRegression: {
      result.model = density_config();
      cloud = generate({CloudKind::GaussianBlobs, opts.n, 3, opts.seed});
      targets_m = density_targets(cloud);
      if (lr <= 0) lr = 3e-3;
      break;
    }
    case TrainTask::ComOffset: {
      result.model = com_offset_config();
      cloud = generate({CloudKind::UniformBox, opts.n, 3, opts.seed});
      targets_m = com_offset_targets(cloud);
      if (lr <= 0) lr = 3e-3;
      break;
    }
    case TrainTask::Linear: {
      result.model = linear_config();
      cloud = generate({CloudKind::UniformBox, opts.n, 3, opts.seed});
      Matrix feats;
      linear_task_data(opts.n, opts.seed, feats, targets_m);
      cloud.features = feats;
      if (lr <= 0) lr = 2e-2;
      break;
    }
  }
  result.model.seed = opts.seed;

  ParamStore<double> params = init_params<double>(result.model);
  Adam<double> adam(lr);
  const Tensor<double> targets = to_tensor<double>(targets_m);

  for (i64 step = 0; step <= opts.steps; ++step) {
    Tape<double> tape;
    BoundParams<double> bound(params, &tape);
    ForwardOptions<double> fwd;
    fwd.tape = &tape;
    fwd.bound_params = &bound;
    Tensor<double> pred = erwin_forward(result.model, params, cloud, fwd);
    Tensor<double> loss = mse_loss(pred, targets);
    const double loss_value = (*loss.data)[0];
    if (!std::isfinite(loss_value)) {
      result.diverged = true;
      result.diagnostic = "non-finite loss at step " + std::to_string(step);
      break;
    }
    result.losses.push_back(loss_value);
    if (step == opts.steps) break;  // final loss recorded, no update

    tape.backward(loss);
    std::unordered_map<std::string, std::vector<double>> grads;
    for (const auto& [name, handle] : bound.bound()) grads[name] = tape.grad(handle);
    adam.step(params, grads);
  }

  result.initial_loss = result.losses.empty() ? 0.0 : result.losses.front();
  result.final_loss = result.losses.empty() ? 0.0 : result.losses.back();
  if (opts.params_out) *opts.params_out = std::move(params);
  return result;
}

void write_loss_csv(std::ostream& out, const TrainResult& result) {
  char buf[64];
  out << "step,loss\n";
  for (size_t i = 0; i < result.losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12g", i, result.losses[i]);
    out << buf << "\n";
  }
}

}  // namespace erwin
