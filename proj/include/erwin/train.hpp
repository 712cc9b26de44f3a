// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "erwin/model.hpp"

namespace erwin {

enum class TrainTask { DensityRegression, ComOffset, Linear };

TrainTask parse_train_task(const std::string& name);
std::string train_task_name(TrainTask task);

// Adam with bias correction; state keyed by parameter name.
template <typename S>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore<S>& params, const std::unordered_map<std::string, std::vector<S>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (const auto& [name, g] : grads) {
      Tensor<S>& p = params.get(name);
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(g.size(), S(0));
        v.assign(g.size(), S(0));
      }
      for (size_t i = 0; i < g.size(); ++i) {
        m[i] = static_cast<S>(b1_ * m[i] + (1.0 - b1_) * g[i]);
        v[i] = static_cast<S>(b2_ * v[i] + (1.0 - b2_) * static_cast<double>(g[i]) * static_cast<double>(g[i]));
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        (*p.data)[i] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  i64 t_ = 0;
  std::unordered_map<std::string, std::vector<S>> m_, v_;
};

struct TrainOptions {
  TrainTask task = TrainTask::DensityRegression;
  i64 steps = 1000;
  u64 seed = 0;
  i64 n = 256;  // training cloud size
  double lr = 0.0;  // 0 = per-task default
  ParamStore<double>* params_out = nullptr;  // receives the trained weights
};

struct TrainResult {
  std::vector<double> losses;  // losses[0] is the pre-update loss
  double initial_loss = 0;
  double final_loss = 0;
  bool diverged = false;
  std::string diagnostic;
  ErwinConfig model;
};

// Deterministic fixed-cloud regression: per-step full-batch MSE under Adam.
TrainResult train_synthetic(const TrainOptions& opts);

// Task targets (brute force, deterministic).
Matrix density_targets(const PointCloud& cloud);     // Gaussian kernel density
Matrix com_offset_targets(const PointCloud& cloud);  // center of mass minus position

// The fixed data used by the linear task: features [n x 4], targets
// [n x 2] = features * A + b + 0.1 * noise.
void linear_task_data(i64 n, u64 seed, Matrix& features, Matrix& targets);

void write_loss_csv(std::ostream& out, const TrainResult& result);

}  // namespace erwin
