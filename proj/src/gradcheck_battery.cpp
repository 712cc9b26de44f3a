// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include "erwin/gradcheck_battery.hpp"

#include <cmath>
#include <functional>

#include "erwin/attention.hpp"
#include "erwin/gradcheck.hpp"
#include "erwin/model.hpp"
#include "erwin/ops.hpp"

namespace erwin {

namespace {

using T = Tensor<double>;

T random_tensor(std::vector<i64> shape, Rng& rng, double scale = 1.0) {
  T t = T::zeros(std::move(shape));
  for (i64 i = 0; i < t.numel(); ++i) (*t.data)[i] = scale * rng.normal();
  return t;
}

// Checks d(sum(build(inputs) . W)) / d(inputs[i]) for every input against
// central differences. The build callback sees leaves when a tape is given
// and the raw constants otherwise; both share the same buffers, so the FD
// loop can perturb them in place.
BatteryEntry check_op(const std::string& name, std::vector<T> inputs,
                      const std::function<T(Tape<double>*, std::vector<T>&)>& build, Rng& rng,
                      double tolerance = 1e-6) {
  BatteryEntry entry;
  entry.name = name;
  entry.tolerance = tolerance;

  Tape<double> tape;
  std::vector<T> leaves;
  leaves.reserve(inputs.size());
  for (auto& in : inputs) leaves.push_back(tape.leaf(in));
  T out = build(&tape, leaves);
  T weights = random_tensor(out.shape, rng);
  T loss = sum_all(hadamard(out, weights));
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.push_back(tape.grad(leaf));

  auto eval = [&]() {
    T o = build(nullptr, inputs);
    double acc = 0;
    for (i64 i = 0; i < o.numel(); ++i) acc += (*o.data)[i] * (*weights.data)[i];
    return acc;
  };
  for (size_t i = 0; i < inputs.size(); ++i) {
    const GradCheckResult res =
        check_gradient_buffer(eval, inputs[i].ptr(), inputs[i].numel(), analytic[i].data());
    entry.max_rel_err = std::max(entry.max_rel_err, res.max_rel_err);
  }
  entry.pass = entry.max_rel_err <= tolerance;
  return entry;
}

}  // namespace

std::vector<BatteryEntry> run_gradcheck_battery(u64 seed) {
  Rng rng(seed);
  std::vector<BatteryEntry> entries;

  entries.push_back(check_op(
      "matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return matmul(in[0], in[1]); }, rng));

  entries.push_back(check_op(
      "bmm", {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 3}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return bmm(in[0], in[1]); }, rng));

  entries.push_back(check_op(
      "bmm_transposed", {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return bmm(in[0], in[1], true); }, rng));

  entries.push_back(check_op(
      "add_scale_sub", {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return sub(scale(add(in[0], in[1]), 1.7), in[1]); }, rng));

  entries.push_back(check_op(
      "hadamard", {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return hadamard(in[0], in[1]); }, rng));

  entries.push_back(check_op(
      "mul_scalar_tensor", {random_tensor({3, 4}, rng), random_tensor({1, 1}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return mul_scalar_tensor(in[0], in[1]); }, rng));

  entries.push_back(check_op(
      "add_bias", {random_tensor({5, 3}, rng), random_tensor({3}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return add_bias(in[0], in[1]); }, rng));

  entries.push_back(check_op(
      "silu", {random_tensor({4, 4}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return silu(in[0]); }, rng));

  entries.push_back(check_op(
      "concat_then_split", {random_tensor({4, 2}, rng), random_tensor({4, 3}, rng), random_tensor({4, 1}, rng)},
      [](Tape<double>*, std::vector<T>& in) {
        T cat = concat_lastdim<double>({in[0], in[1], in[2]});
        return reshape_split(reshape_merge(cat, 2), 2);
      },
      rng));

  entries.push_back(check_op(
      "concat_rows", {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return concat_rows<double>({in[0], in[1]}); }, rng));

  entries.push_back(check_op(
      "take_rows_duplicates", {random_tensor({5, 3}, rng)},
      [](Tape<double>*, std::vector<T>& in) {
        return take_rows(in[0], {0, 2, 2, 4, 5, 1});  // 5 is the zero-row sentinel
      },
      rng));

  entries.push_back(check_op(
      "col_slice", {random_tensor({4, 6}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return col_slice(in[0], 1, 4); }, rng));

  entries.push_back(check_op(
      "row_scale", {random_tensor({4, 3}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return row_scale(in[0], {1.0, 0.0, 2.0, -1.5}); }, rng));

  entries.push_back(check_op(
      "sum_mid", {random_tensor({3, 4, 2}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return sum_mid(in[0]); }, rng));

  entries.push_back(check_op(
      "softmax", {random_tensor({4, 7}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return softmax_lastdim(in[0]); }, rng));

  {
    T mask = T::zeros({3, 4});
    const double ninf = -std::numeric_limits<double>::infinity();
    (*mask.data)[2] = ninf;                                    // one masked entry
    for (i64 j = 0; j < 4; ++j) (*mask.data)[2 * 4 + j] = ninf;  // fully masked row
    entries.push_back(check_op(
        "softmax_masked", {random_tensor({3, 4}, rng)},
        [mask](Tape<double>*, std::vector<T>& in) { return softmax_lastdim(in[0], &mask); }, rng));
  }

  entries.push_back(check_op(
      "layer_norm", {random_tensor({5, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return layer_norm(in[0], in[1], in[2]); }, rng));

  entries.push_back(check_op(
      "swiglu", {random_tensor({3, 4}, rng), random_tensor({4, 8}, rng), random_tensor({4, 8}, rng),
                 random_tensor({8, 4}, rng)},
      [](Tape<double>*, std::vector<T>& in) { return swiglu(in[0], in[1], in[2], in[3]); }, rng));

  {
    // Ball attention with one padding slot; sigma is an input so the distance
    // bias path is checked too.
    const i64 slots = 8, c = 4;
    Matrix positions(slots, 2);
    for (i64 s = 0; s < slots; ++s) {
      positions.at(s, 0) = rng.uniform();
      positions.at(s, 1) = rng.uniform();
    }
    std::vector<std::uint8_t> valid(slots, 1);
    valid[7] = 0;
    BallAttentionConfig cfg;
    cfg.ball_size = 4;
    cfg.heads = 2;
    cfg.c_model = c;
    cfg.c_inner = c;
    auto build = [positions, valid, cfg](Tape<double>*, std::vector<T>& in) {
      AttentionWeights<double> w{in[1], in[2], in[3], in[4], in[5], in[6]};
      return ball_mhsa(in[0], positions, valid, w, cfg);
    };
    entries.push_back(check_op("ball_mhsa",
                               {random_tensor({slots, c}, rng), random_tensor({c, c}, rng),
                                random_tensor({c, c}, rng), random_tensor({c, c}, rng), random_tensor({c, c}, rng),
                                random_tensor({2, c}, rng), random_tensor({2, 1}, rng)},
                               build, rng));

    auto build_rot = [positions, valid, cfg](Tape<double>*, std::vector<T>& in) {
      const std::vector<i64> sigma = {3, 1, 6, 0, 5, 2, 7, 4};
      AttentionWeights<double> w{in[1], in[2], in[3], in[4], in[5], in[6]};
      return cross_ball_mhsa(in[0], sigma, positions, valid, w, cfg);
    };
    entries.push_back(check_op("cross_ball_mhsa",
                               {random_tensor({slots, c}, rng), random_tensor({c, c}, rng),
                                random_tensor({c, c}, rng), random_tensor({c, c}, rng), random_tensor({c, c}, rng),
                                random_tensor({2, c}, rng), random_tensor({2, 1}, rng)},
                               build_rot, rng));

    auto build_rpe = [positions, valid](Tape<double>*, std::vector<T>& in) {
      const Matrix centers = ball_centers_of_mass(positions, valid, 4);
      return rpe_inject(in[0], positions, centers, valid, in[1], 4);
    };
    entries.push_back(check_op("rpe_inject", {random_tensor({slots, c}, rng), random_tensor({2, c}, rng)},
                               build_rpe, rng));
  }

  return entries;
}

BatteryEntry run_model_gradcheck(i64 n_points, i64 sampled, u64 seed) {
  BatteryEntry entry;
  entry.name = "model_end_to_end";
  entry.tolerance = 1e-4;

  ErwinConfig cfg;
  cfg.dim = 3;
  cfg.in_features = 2;
  cfg.out_channels = 1;
  cfg.channels = {8, 16};
  cfg.enc_depths = {2, 1};
  cfg.enc_heads = {2, 2};
  cfg.dec_depths = {1};
  cfg.dec_heads = {2};
  cfg.ball_sizes = {4, 4};
  cfg.strides = {2, 1};
  cfg.rotate = true;
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = 1;
  cfg.mpnn.k_neighbors = 4;
  cfg.seed = seed;

  PointCloud cloud = generate({CloudKind::UniformBox, n_points, 3, seed});
  Rng rng(seed ^ 0xfeedULL);
  Matrix feats(n_points, cfg.in_features);
  for (double& v : feats.data) v = rng.normal();
  cloud.features = feats;
  Matrix targets_m(n_points, 1);
  for (double& v : targets_m.data) v = rng.normal();
  const Tensor<double> targets = to_tensor<double>(targets_m);

  ParamStore<double> params = init_params<double>(cfg);

  // Analytic gradients for all parameters.
  Tape<double> tape;
  BoundParams<double> bound(params, &tape);
  ForwardOptions<double> fwd;
  fwd.tape = &tape;
  fwd.bound_params = &bound;
  Tensor<double> pred = erwin_forward(cfg, params, cloud, fwd);
  Tensor<double> loss = mse_loss(pred, targets);
  tape.backward(loss);

  auto eval = [&]() {
    Tensor<double> p = erwin_forward(cfg, params, cloud);
    Tensor<double> l = mse_loss(p, targets);
    return (*l.data)[0];
  };

  // Sample coordinates across the touched parameters.
  std::vector<std::pair<std::string, i64>> coords;
  std::vector<std::string> touched;
  for (const auto& [name, handle] : bound.bound()) {
    (void)handle;
    touched.push_back(name);
  }
  std::sort(touched.begin(), touched.end());
  for (i64 s = 0; s < sampled; ++s) {
    const std::string& name = touched[static_cast<size_t>(rng.uniform_int(0, static_cast<i64>(touched.size()) - 1))];
    const i64 idx = rng.uniform_int(0, params.get(name).numel() - 1);
    coords.emplace_back(name, idx);
  }

  for (const auto& [name, idx] : coords) {
    const std::vector<double>& analytic = tape.grad(bound.bound().at(name));
    Tensor<double>& p = params.get(name);
    const GradCheckResult res =
        check_gradient_sampled(eval, p.ptr(), p.numel(), analytic.data(), {idx}, 1e-5);
    entry.max_rel_err = std::max(entry.max_rel_err, res.max_rel_err);
  }
  entry.pass = entry.max_rel_err <= entry.tolerance;
  return entry;
}

}  // namespace erwin
