// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "erwin/balltree.hpp"
#include "erwin/ops.hpp"

namespace erwin {

struct BallAttentionConfig {
  i64 ball_size = 16;  // power of two
  int heads = 1;
  i64 c_model = 16;  // C
  i64 c_inner = 16;  // C', divisible by heads

  void validate() const {
    if (ball_size < 1 || (ball_size & (ball_size - 1)) != 0)
      throw ConfigError("ball size must be a power of two, got " + std::to_string(ball_size));
    if (heads < 1 || c_inner % heads != 0)
      throw ConfigError("inner dim " + std::to_string(c_inner) + " not divisible by " + std::to_string(heads) +
                        " heads");
  }
};

// Per-head projections packed as [C x C'] (head h owns columns
// [h*C'/H, (h+1)*C'/H)); w_out maps C' back to C. sigma is [H x 1].
template <typename S>
struct AttentionWeights {
  Tensor<S> w_query, w_key, w_value;
  Tensor<S> w_out;
  Tensor<S> w_pos;  // [d x C], RPE projection
  Tensor<S> sigma;  // [H x 1]
};

// Center of mass of the valid member positions of each contiguous ball of
// `ball_size` slots. Balls with no valid member fall back to the plain mean
// so downstream arithmetic stays finite (their slots are masked anyway).
inline Matrix ball_centers_of_mass(const Matrix& positions, const std::vector<std::uint8_t>& valid, i64 ball_size) {
  const i64 slots = positions.rows;
  const int d = static_cast<int>(positions.cols);
  if (slots % ball_size != 0)
    throw ShapeError("slot count " + std::to_string(slots) + " not divisible by ball size " +
                     std::to_string(ball_size));
  const i64 balls = slots / ball_size;
  Matrix centers(balls, d);
  for (i64 b = 0; b < balls; ++b) {
    i64 cnt = 0;
    for (i64 s = b * ball_size; s < (b + 1) * ball_size; ++s) {
      if (!valid[static_cast<size_t>(s)]) continue;
      ++cnt;
      for (int c = 0; c < d; ++c) centers.at(b, c) += positions.at(s, c);
    }
    if (cnt == 0) {
      for (i64 s = b * ball_size; s < (b + 1) * ball_size; ++s)
        for (int c = 0; c < d; ++c) centers.at(b, c) += positions.at(s, c);
      cnt = ball_size;
    }
    for (int c = 0; c < d; ++c) centers.at(b, c) /= static_cast<double>(cnt);
  }
  return centers;
}

// x + (P - c) W_pos with zero injection on invalid slots.
template <typename S>
Tensor<S> rpe_inject(const Tensor<S>& x_slots, const Matrix& positions, const Matrix& centers,
                     const std::vector<std::uint8_t>& valid, const Tensor<S>& w_pos, i64 ball_size) {
  const i64 slots = x_slots.dim(0);
  const int d = static_cast<int>(positions.cols);
  if (positions.rows != slots || static_cast<i64>(valid.size()) != slots)
    throw ShapeError("rpe_inject: positions/valid rows disagree with " + shape_str(x_slots.shape));
  Tensor<S> rel = Tensor<S>::zeros({slots, d});
  for (i64 s = 0; s < slots; ++s) {
    const i64 b = s / ball_size;
    for (int c = 0; c < d; ++c) (*rel.data)[s * d + c] = static_cast<S>(positions.at(s, c) - centers.at(b, c));
  }
  Tensor<S> inj = matmul(rel, w_pos);
  std::vector<S> keep(static_cast<size_t>(slots));
  for (i64 s = 0; s < slots; ++s) keep[static_cast<size_t>(s)] = valid[static_cast<size_t>(s)] ? S(1) : S(0);
  return add(x_slots, row_scale(inj, keep));
}

// Negative pairwise distances between member positions, one [bs x bs] block
// per ball, zero diagonal, zeros at invalid rows/cols (masking is additive).
template <typename S>
Tensor<S> neg_pair_distances(const Matrix& positions, const std::vector<std::uint8_t>& valid, i64 ball_size) {
  const i64 slots = positions.rows;
  const int d = static_cast<int>(positions.cols);
  const i64 balls = slots / ball_size;
  Tensor<S> out = Tensor<S>::zeros({balls, ball_size, ball_size});
  for (i64 b = 0; b < balls; ++b) {
    for (i64 i = 0; i < ball_size; ++i) {
      const i64 si = b * ball_size + i;
      if (!valid[static_cast<size_t>(si)]) continue;
      for (i64 j = i + 1; j < ball_size; ++j) {
        const i64 sj = b * ball_size + j;
        if (!valid[static_cast<size_t>(sj)]) continue;
        double acc = 0;
        for (int c = 0; c < d; ++c) {
          const double dd = positions.at(si, c) - positions.at(sj, c);
          acc += dd * dd;
        }
        const S v = static_cast<S>(-std::sqrt(acc));
        (*out.data)[(b * ball_size + i) * ball_size + j] = v;
        (*out.data)[(b * ball_size + j) * ball_size + i] = v;
      }
    }
  }
  return out;
}

// Additive mask: -inf on rows and columns of invalid slots. Returns an empty
// tensor when every slot is valid.
template <typename S>
Tensor<S> attention_mask(const std::vector<std::uint8_t>& valid, i64 ball_size) {
  const i64 slots = static_cast<i64>(valid.size());
  bool all_valid = true;
  for (std::uint8_t v : valid) all_valid &= (v != 0);
  if (all_valid) return Tensor<S>();
  const i64 balls = slots / ball_size;
  const S neg_inf = -std::numeric_limits<S>::infinity();
  Tensor<S> mask = Tensor<S>::zeros({balls, ball_size, ball_size});
  for (i64 b = 0; b < balls; ++b)
    for (i64 i = 0; i < ball_size; ++i)
      for (i64 j = 0; j < ball_size; ++j) {
        const bool dead = !valid[static_cast<size_t>(b * ball_size + i)] ||
                          !valid[static_cast<size_t>(b * ball_size + j)];
        if (dead) (*mask.data)[(b * ball_size + i) * ball_size + j] = neg_inf;
      }
  return mask;
}

// Distance-based attention bias -sigma_h^2 * dist between member centers,
// merged with the -inf validity mask.
template <typename S>
Tensor<S> distance_bias(const Matrix& positions, const std::vector<std::uint8_t>& valid, i64 ball_size,
                        const Tensor<S>& sigma_h) {
  Tensor<S> neg_d = neg_pair_distances<S>(positions, valid, ball_size);
  Tensor<S> scaled = mul_scalar_tensor(neg_d, hadamard(sigma_h, sigma_h));
  Tensor<S> mask = attention_mask<S>(valid, ball_size);
  if (mask.data) return add(scaled, mask);
  return scaled;
}

// Multi-head self-attention computed independently inside each contiguous
// ball of `cfg.ball_size` slots. Scores use the per-head 1/sqrt(C'/H) scale;
// the distance bias is added after scaling, unscaled. Rows of invalid slots
// are fully masked and come out as zeros.
template <typename S>
Tensor<S> ball_mhsa(const Tensor<S>& x_slots, const Matrix& positions, const std::vector<std::uint8_t>& valid,
                    const AttentionWeights<S>& w, const BallAttentionConfig& cfg) {
  cfg.validate();
  const i64 slots = x_slots.dim(0);
  if (slots % cfg.ball_size != 0)
    throw ShapeError("slot count " + std::to_string(slots) + " not divisible by ball size " +
                     std::to_string(cfg.ball_size));
  if (x_slots.dim(1) != cfg.c_model)
    throw ShapeError("ball_mhsa: feature width " + shape_str(x_slots.shape) + " != configured " +
                     std::to_string(cfg.c_model));
  const i64 balls = slots / cfg.ball_size;
  const i64 hd = cfg.c_inner / cfg.heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor<S> neg_d = neg_pair_distances<S>(positions, valid, cfg.ball_size);
  Tensor<S> mask = attention_mask<S>(valid, cfg.ball_size);

  std::vector<Tensor<S>> head_outputs;
  head_outputs.reserve(static_cast<size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    Tensor<S> wq = col_slice(w.w_query, h * hd, (h + 1) * hd);
    Tensor<S> wk = col_slice(w.w_key, h * hd, (h + 1) * hd);
    Tensor<S> wv = col_slice(w.w_value, h * hd, (h + 1) * hd);
    Tensor<S> q = reshape(matmul(x_slots, wq), {balls, cfg.ball_size, hd});
    Tensor<S> k = reshape(matmul(x_slots, wk), {balls, cfg.ball_size, hd});
    Tensor<S> v = reshape(matmul(x_slots, wv), {balls, cfg.ball_size, hd});
    Tensor<S> scores = scale(bmm(q, k, /*trans_b=*/true), scale_factor);
    Tensor<S> sigma_h = take_rows(w.sigma, {h});
    scores = add(scores, mul_scalar_tensor(neg_d, hadamard(sigma_h, sigma_h)));
    if (mask.data) scores = add(scores, mask);
    Tensor<S> attn = softmax_lastdim(scores);
    head_outputs.push_back(reshape(bmm(attn, v), {slots, hd}));
  }
  Tensor<S> merged = cfg.heads == 1 ? head_outputs[0] : concat_lastdim(head_outputs);
  return matmul(merged, w.w_out);
}

// Slot permutation induced by a tree built on rotated coordinates:
// sigma[s] = slot in the main tree holding the point the rotated tree puts at
// slot s; padding slots map to themselves (both trees keep padding as the
// slot suffix).
inline std::vector<i64> rotation_slot_map(const BallTree& main_tree, const BallTree& rot_tree) {
  if (main_tree.slots() != rot_tree.slots() || main_tree.sentinel() != rot_tree.sentinel())
    throw ShapeError("rotation_slot_map: trees were not built over the same point set");
  std::vector<i64> sigma(static_cast<size_t>(rot_tree.slots()));
  for (i64 s = 0; s < rot_tree.slots(); ++s) {
    const i64 orig = rot_tree.perm()[s];
    sigma[static_cast<size_t>(s)] = (orig < rot_tree.sentinel()) ? main_tree.inv_perm()[orig] : s;
  }
  return sigma;
}

inline std::vector<i64> invert_permutation(const std::vector<i64>& sigma) {
  std::vector<i64> inv(sigma.size(), -1);
  for (size_t s = 0; s < sigma.size(); ++s) inv[static_cast<size_t>(sigma[s])] = static_cast<i64>(s);
  for (i64 v : inv)
    if (v < 0) throw ArgError("invert_permutation: input is not a permutation");
  return inv;
}

// Ball attention under the rotated configuration: permute rows by sigma,
// attend on the permuted layout, permute back. With sigma = identity this is
// exactly ball_mhsa.
template <typename S>
Tensor<S> cross_ball_mhsa(const Tensor<S>& x_slots, const std::vector<i64>& sigma, const Matrix& positions,
                          const std::vector<std::uint8_t>& valid, const AttentionWeights<S>& w,
                          const BallAttentionConfig& cfg) {
  const i64 slots = x_slots.dim(0);
  if (static_cast<i64>(sigma.size()) != slots)
    throw ShapeError("cross_ball_mhsa: permutation size " + std::to_string(sigma.size()) + " != slots " +
                     std::to_string(slots));
  Matrix pos_p(slots, positions.cols);
  std::vector<std::uint8_t> valid_p(static_cast<size_t>(slots));
  for (i64 s = 0; s < slots; ++s) {
    const i64 src = sigma[static_cast<size_t>(s)];
    for (i64 c = 0; c < positions.cols; ++c) pos_p.at(s, c) = positions.at(src, c);
    valid_p[static_cast<size_t>(s)] = valid[static_cast<size_t>(src)];
  }
  Tensor<S> x_p = take_rows(x_slots, sigma);
  Tensor<S> y_p = ball_mhsa(x_p, pos_p, valid_p, w, cfg);
  return take_rows(y_p, invert_permutation(sigma));
}

}  // namespace erwin
