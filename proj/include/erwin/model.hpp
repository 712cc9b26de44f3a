// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include "erwin/attention.hpp"
#include "erwin/balltree.hpp"
#include "erwin/geometry.hpp"
#include "erwin/ops.hpp"
#include "erwin/params.hpp"

namespace erwin {

struct MpnnConfig {
  int hidden = 16;  // H <= 32
  int steps = 1;
  int k_neighbors = 8;
};

// Stage s runs enc_depths[s] blocks at channels[s], then pools by strides[s]
// (a power of two; 1 = no pooling; the last entry must be 1). The decoder
// mirrors the encoder with dec_depths/dec_heads of size S-1.
struct ErwinConfig {
  int dim = 3;
  i64 in_features = 0;  // width of per-point input features (0 = positions only)
  i64 out_channels = 1;
  std::vector<i64> channels = {16, 32};
  std::vector<int> enc_depths = {2, 2};
  std::vector<int> enc_heads = {2, 4};
  std::vector<int> dec_depths = {2};
  std::vector<int> dec_heads = {2};
  std::vector<i64> ball_sizes = {16, 16};
  std::vector<i64> strides = {2, 1};
  bool rotate = true;
  MpnnConfig mpnn;
  u64 seed = 0;

  int stages() const { return static_cast<int>(channels.size()); }
  void validate() const;
};

// Key/value text file, one `name: values` pair per line, '#' comments.
ErwinConfig load_config(const std::string& path);
ErwinConfig parse_config(std::istream& in);
void write_config(const ErwinConfig& cfg, std::ostream& out);

// Closed-form learnable element count for a configuration; matches
// init_params(cfg).total_elems() exactly.
u64 param_count(const ErwinConfig& cfg);

template <typename S>
struct LevelState {
  int level = 0;      // tree levels pooled away so far
  Tensor<S> x;        // [slots x C]
  Matrix positions;   // [slots x d]
  std::vector<std::uint8_t> valid;
};

namespace model_detail {

inline i64 log2_exact(i64 v) {
  i64 l = 0;
  while ((i64(1) << l) < v) ++l;
  if ((i64(1) << l) != v) throw ConfigError(std::to_string(v) + " is not a power of two");
  return l;
}

template <typename S>
Tensor<S> mlp2(BoundParams<S>& P, const std::string& prefix, const Tensor<S>& x) {
  Tensor<S> hidden = silu(add_bias(matmul(x, P(prefix + ".w1")), P(prefix + ".b1")));
  return add_bias(matmul(hidden, P(prefix + ".w2")), P(prefix + ".b2"));
}

}  // namespace model_detail

// Positions and validity of the balls formed by grouping `g` consecutive
// slots: mean of valid member positions (all members when none is valid).
inline std::pair<Matrix, std::vector<std::uint8_t>> coarse_positions(const Matrix& positions,
                                                                     const std::vector<std::uint8_t>& valid, i64 g) {
  const i64 slots = positions.rows;
  const int d = static_cast<int>(positions.cols);
  if (slots % g != 0) throw ShapeError("coarse_positions: slots not divisible by group size");
  const i64 parents = slots / g;
  Matrix out(parents, d);
  std::vector<std::uint8_t> parent_valid(static_cast<size_t>(parents), 0);
  for (i64 p = 0; p < parents; ++p) {
    i64 cnt = 0;
    for (i64 s = p * g; s < (p + 1) * g; ++s) {
      if (!valid[static_cast<size_t>(s)]) continue;
      ++cnt;
      for (int c = 0; c < d; ++c) out.at(p, c) += positions.at(s, c);
    }
    if (cnt > 0) {
      parent_valid[static_cast<size_t>(p)] = 1;
    } else {
      for (i64 s = p * g; s < (p + 1) * g; ++s)
        for (int c = 0; c < d; ++c) out.at(p, c) += positions.at(s, c);
      cnt = g;
    }
    for (int c = 0; c < d; ++c) out.at(p, c) /= static_cast<double>(cnt);
  }
  return {std::move(out), std::move(parent_valid)};
}

// Message-passing embedding: per step, messages MLP_e(h_i, h_j, p_i - p_j)
// are summed over each node's neighborhood and folded back with
// MLP_h(h_i, m_i). Nodes without neighbors keep the update with a zero
// aggregate. Only relative positions enter, so the embedding is
// translation invariant.
template <typename S>
Tensor<S> mpnn_embed(BoundParams<S>& P, const Tensor<S>& features, const Matrix& positions,
                     const std::vector<i64>& neighbors, i64 k, const MpnnConfig& mp, i64 c_out) {
  const i64 n = positions.rows;
  const int d = static_cast<int>(positions.cols);
  const i64 hidden = mp.hidden;
  if (k > 0 && static_cast<i64>(neighbors.size()) != n * k)
    throw ShapeError("mpnn_embed: neighbor list size " + std::to_string(neighbors.size()) + " != n*k");
  if (P.store().get("embed.out.w").dim(1) != c_out)
    throw ShapeError("mpnn_embed: output projection width != requested " + std::to_string(c_out));

  Tensor<S> h;
  if (features.data && features.numel() > 0) {
    if (features.dim(0) != n) throw ShapeError("mpnn_embed: feature rows != point count");
    h = add_bias(matmul(features, P("embed.in.w")), P("embed.in.b"));
  } else {
    h = add_bias(Tensor<S>::zeros({n, hidden}), P("embed.in.b"));
  }

  Tensor<S> rel;
  std::vector<i64> rep;
  if (k > 0 && mp.steps > 0) {
    rep.resize(static_cast<size_t>(n * k));
    rel = Tensor<S>::zeros({n * k, d});
    for (i64 i = 0; i < n; ++i)
      for (i64 e = 0; e < k; ++e) {
        const i64 row = i * k + e;
        rep[static_cast<size_t>(row)] = i;
        const i64 j = neighbors[static_cast<size_t>(row)];
        for (int c = 0; c < d; ++c)
          (*rel.data)[row * d + c] = static_cast<S>(positions.at(i, c) - positions.at(j, c));
      }
  }

  for (int t = 0; t < mp.steps; ++t) {
    const std::string step = "embed.step" + std::to_string(t);
    Tensor<S> agg;
    if (k > 0) {
      Tensor<S> hi = take_rows(h, rep);
      Tensor<S> hj = take_rows(h, neighbors);
      Tensor<S> msg = model_detail::mlp2(P, step + ".msg", concat_lastdim<S>({hi, hj, rel}));
      agg = sum_mid(reshape(msg, {n, k, hidden}));
    } else {
      agg = Tensor<S>::zeros({n, hidden});
    }
    h = model_detail::mlp2(P, step + ".upd", concat_lastdim(h, agg));
  }
  return add_bias(matmul(h, P("embed.out.w")), P("embed.out.b"));
}

// Pool `g` consecutive slots into their parent ball: child features (invalid
// rows zeroed) concatenated with child offsets from the parent center, then
// projected to the wider parent width.
template <typename S>
LevelState<S> coarsen(BoundParams<S>& P, const std::string& name, const LevelState<S>& st, i64 g) {
  const i64 slots = st.x.dim(0);
  if (g < 2) throw ArgError("coarsen: group size must be >= 2");
  const i64 levels = model_detail::log2_exact(g);
  if (slots % g != 0 || slots / g < 1)
    throw RangeError("coarsen: cannot pool " + std::to_string(slots) + " slots by " + std::to_string(g));
  const int d = static_cast<int>(st.positions.cols);
  auto [parent_pos, parent_valid] = coarse_positions(st.positions, st.valid, g);

  Tensor<S> rel = Tensor<S>::zeros({slots, d});
  for (i64 s = 0; s < slots; ++s)
    for (int c = 0; c < d; ++c)
      (*rel.data)[s * d + c] = static_cast<S>(st.positions.at(s, c) - parent_pos.at(s / g, c));

  std::vector<S> keep(static_cast<size_t>(slots));
  for (i64 s = 0; s < slots; ++s) keep[static_cast<size_t>(s)] = st.valid[static_cast<size_t>(s)] ? S(1) : S(0);

  Tensor<S> merged = reshape_merge(concat_lastdim(row_scale(st.x, keep), rel), g);
  LevelState<S> out;
  out.level = st.level + static_cast<int>(levels);
  out.x = matmul(merged, P(name + ".wc"));
  out.positions = std::move(parent_pos);
  out.valid = std::move(parent_valid);
  return out;
}

// Inverse of coarsen: split each parent feature into g child chunks,
// concatenate each with the child's offset from the parent center, project
// back to the child width, and add the encoder skip.
template <typename S>
LevelState<S> refine(BoundParams<S>& P, const std::string& name, const LevelState<S>& st, const LevelState<S>& skip,
                     i64 g) {
  const i64 parents = st.x.dim(0);
  if (g < 2) throw ArgError("refine: group size must be >= 2");
  if (parents * g != skip.x.dim(0))
    throw ConfigError("refine: skip level has " + std::to_string(skip.x.dim(0)) + " slots, expected " +
                      std::to_string(parents * g));
  if (st.x.dim(1) % g != 0)
    throw ShapeError("refine: parent width " + std::to_string(st.x.dim(1)) + " not divisible by " +
                     std::to_string(g));
  const i64 child_slots = parents * g;
  const int d = static_cast<int>(skip.positions.cols);

  Tensor<S> rel = Tensor<S>::zeros({child_slots, d});
  for (i64 s = 0; s < child_slots; ++s)
    for (int c = 0; c < d; ++c)
      (*rel.data)[s * d + c] = static_cast<S>(skip.positions.at(s, c) - st.positions.at(s / g, c));

  Tensor<S> children = matmul(concat_lastdim(reshape_split(st.x, g), rel), P(name + ".wr"));
  LevelState<S> out;
  out.level = skip.level;
  out.x = add(children, skip.x);
  out.positions = skip.positions;
  out.valid = skip.valid;
  return out;
}

// Pre-norm transformer block: x += BallMHSA(RPE(LN(x))); x += SwiGLU(LN(x)).
// With rot_map set, the attention branch runs on the permuted layout induced
// by the rotated tree and is permuted back afterwards.
template <typename S>
Tensor<S> erwin_block(BoundParams<S>& P, const std::string& prefix, const LevelState<S>& st,
                      const BallAttentionConfig& cfg, const std::vector<i64>* rot_map) {
  if (cfg.ball_size > st.x.dim(0))
    throw ConfigError("ball size " + std::to_string(cfg.ball_size) + " exceeds " + std::to_string(st.x.dim(0)) +
                      " slots");
  AttentionWeights<S> w{P(prefix + ".wq"), P(prefix + ".wk"), P(prefix + ".wv"),
                        P(prefix + ".wo"), P(prefix + ".wpos"), P(prefix + ".sigma")};
  Tensor<S> a = layer_norm(st.x, P(prefix + ".ln1.g"), P(prefix + ".ln1.b"));
  Tensor<S> y;
  if (!rot_map) {
    const Matrix centers = ball_centers_of_mass(st.positions, st.valid, cfg.ball_size);
    a = rpe_inject(a, st.positions, centers, st.valid, w.w_pos, cfg.ball_size);
    y = ball_mhsa(a, st.positions, st.valid, w, cfg);
  } else {
    const std::vector<i64>& sigma = *rot_map;
    const i64 slots = st.x.dim(0);
    Matrix pos_p(slots, st.positions.cols);
    std::vector<std::uint8_t> valid_p(static_cast<size_t>(slots));
    for (i64 s = 0; s < slots; ++s) {
      const i64 src = sigma[static_cast<size_t>(s)];
      for (i64 c = 0; c < st.positions.cols; ++c) pos_p.at(s, c) = st.positions.at(src, c);
      valid_p[static_cast<size_t>(s)] = st.valid[static_cast<size_t>(src)];
    }
    Tensor<S> a_p = take_rows(a, sigma);
    const Matrix centers = ball_centers_of_mass(pos_p, valid_p, cfg.ball_size);
    a_p = rpe_inject(a_p, pos_p, centers, valid_p, w.w_pos, cfg.ball_size);
    Tensor<S> y_p = ball_mhsa(a_p, pos_p, valid_p, w, cfg);
    y = take_rows(y_p, invert_permutation(sigma));
  }
  Tensor<S> x1 = add(st.x, y);
  Tensor<S> b = layer_norm(x1, P(prefix + ".ln2.g"), P(prefix + ".ln2.b"));
  return add(x1, swiglu(b, P(prefix + ".ffn.w1"), P(prefix + ".ffn.w2"), P(prefix + ".ffn.w3")));
}

template <typename S>
struct ForwardOptions {
  Tape<S>* tape = nullptr;
  // Replaces cloud.features (row count must match); may be tape-recorded so
  // gradients with respect to inputs can be probed.
  const Tensor<S>* features_override = nullptr;
  // Test hook: values injected at padding slots of the embedded leaf level
  // (single-segment clouds only); rows = leaf slots, cols = channels[0].
  const Matrix* virtual_leaf_features = nullptr;
  // Accumulates milliseconds spent constructing trees (main + rotated).
  double* tree_build_ms = nullptr;
  // When given, parameters are bound through this view (its tape must match
  // `tape`); callers use it to reach recorded handles for gradient reads.
  BoundParams<S>* bound_params = nullptr;
};

template <typename S>
ParamStore<S> init_params(const ErwinConfig& cfg) {
  cfg.validate();
  ParamStore<S> store;
  Rng rng(cfg.seed ^ 0x5eed5eedULL);
  auto lin = [&](const std::string& name, i64 fan_in, i64 fan_out) {
    store.add(name, init_linear<S>(fan_in, fan_out, rng));
  };
  auto vec = [&](const std::string& name, i64 len, S value) { store.add(name, Tensor<S>::full({len}, value)); };

  const i64 hidden = cfg.mpnn.hidden;
  const int d = cfg.dim;
  if (cfg.in_features > 0) lin("embed.in.w", cfg.in_features, hidden);
  vec("embed.in.b", hidden, S(0));
  for (int t = 0; t < cfg.mpnn.steps; ++t) {
    const std::string step = "embed.step" + std::to_string(t);
    lin(step + ".msg.w1", 2 * hidden + d, hidden);
    vec(step + ".msg.b1", hidden, S(0));
    lin(step + ".msg.w2", hidden, hidden);
    vec(step + ".msg.b2", hidden, S(0));
    lin(step + ".upd.w1", 2 * hidden, hidden);
    vec(step + ".upd.b1", hidden, S(0));
    lin(step + ".upd.w2", hidden, hidden);
    vec(step + ".upd.b2", hidden, S(0));
  }
  lin("embed.out.w", hidden, cfg.channels[0]);
  vec("embed.out.b", cfg.channels[0], S(0));

  auto block = [&](const std::string& prefix, i64 c, int heads) {
    vec(prefix + ".ln1.g", c, S(1));
    vec(prefix + ".ln1.b", c, S(0));
    lin(prefix + ".wq", c, c);
    lin(prefix + ".wk", c, c);
    lin(prefix + ".wv", c, c);
    lin(prefix + ".wo", c, c);
    lin(prefix + ".wpos", d, c);
    store.add(prefix + ".sigma", Tensor<S>::full({heads, 1}, S(1)));
    vec(prefix + ".ln2.g", c, S(1));
    vec(prefix + ".ln2.b", c, S(0));
    lin(prefix + ".ffn.w1", c, 2 * c);
    lin(prefix + ".ffn.w2", c, 2 * c);
    lin(prefix + ".ffn.w3", 2 * c, c);
  };

  const int S_count = cfg.stages();
  for (int s = 0; s < S_count; ++s)
    for (int b = 0; b < cfg.enc_depths[static_cast<size_t>(s)]; ++b)
      block("enc" + std::to_string(s) + ".block" + std::to_string(b), cfg.channels[static_cast<size_t>(s)],
            cfg.enc_heads[static_cast<size_t>(s)]);
  for (int s = 0; s + 1 < S_count; ++s) {
    const i64 g = cfg.strides[static_cast<size_t>(s)];
    if (g > 1) {
      lin("pool" + std::to_string(s) + ".wc", g * (cfg.channels[static_cast<size_t>(s)] + d),
          cfg.channels[static_cast<size_t>(s) + 1]);
      lin("unpool" + std::to_string(s) + ".wr", cfg.channels[static_cast<size_t>(s) + 1] / g + d,
          cfg.channels[static_cast<size_t>(s)]);
    }
  }
  for (int s = 0; s + 1 < S_count; ++s)
    for (int b = 0; b < cfg.dec_depths[static_cast<size_t>(s)]; ++b)
      block("dec" + std::to_string(s) + ".block" + std::to_string(b), cfg.channels[static_cast<size_t>(s)],
            cfg.dec_heads[static_cast<size_t>(s)]);
  lin("readout.w", cfg.channels[0], cfg.out_channels);
  vec("readout.b", cfg.out_channels, S(0));
  return store;
}

// Full forward pass: embed, gather to tree slots, encoder stages with
// pooling, mirrored decoder with skips, linear readout scattered back to the
// original point order. Multi-segment batches are processed per segment and
// concatenated.
template <typename S>
Tensor<S> erwin_forward(const ErwinConfig& cfg, ParamStore<S>& params, const PointCloud& cloud,
                        ForwardOptions<S> opts = {}) {
  cfg.validate();
  cloud.validate();
  if (cloud.dim() != cfg.dim)
    throw ConfigError("cloud dimension " + std::to_string(cloud.dim()) + " != configured " + std::to_string(cfg.dim));
  const i64 feat_cols = opts.features_override ? opts.features_override->dim(1)
                        : (cloud.features ? cloud.features->cols : 0);
  if (feat_cols != cfg.in_features)
    throw ConfigError("input feature width " + std::to_string(feat_cols) + " != configured " +
                      std::to_string(cfg.in_features));
  if (opts.features_override && opts.features_override->dim(0) != cloud.size())
    throw ShapeError("features_override rows != point count");
  if (opts.virtual_leaf_features && cloud.num_segments() != 1)
    throw ArgError("virtual feature injection supports single-segment clouds only");

  BoundParams<S> local_bind(params, opts.tape);
  BoundParams<S>& P = opts.bound_params ? *opts.bound_params : local_bind;
  if (opts.bound_params && opts.bound_params->tape() != opts.tape)
    throw ArgError("bound_params tape differs from forward tape");
  using clock = std::chrono::steady_clock;
  auto timed = [&](auto&& fn) {
    const auto t0 = clock::now();
    auto result = fn();
    if (opts.tree_build_ms)
      *opts.tree_build_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    return result;
  };

  const int S_count = cfg.stages();
  std::vector<Tensor<S>> segment_outputs;
  for (i64 seg = 0; seg < cloud.num_segments(); ++seg) {
    const i64 lo = cloud.batch_offsets[static_cast<size_t>(seg)];
    const i64 hi = cloud.batch_offsets[static_cast<size_t>(seg) + 1];
    const i64 n = hi - lo;

    PointCloud piece;
    piece.positions = Matrix(n, cfg.dim);
    for (i64 i = 0; i < n; ++i)
      for (int c = 0; c < cfg.dim; ++c) piece.positions.at(i, c) = cloud.positions.at(lo + i, c);
    piece.batch_offsets = {0, n};

    const BallTree tree = timed([&] { return build_tree(piece); });

    Tensor<S> feats;
    if (cfg.in_features > 0) {
      if (opts.features_override) {
        std::vector<i64> idx(static_cast<size_t>(n));
        for (i64 i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = lo + i;
        feats = take_rows(*opts.features_override, idx);
      } else {
        feats = Tensor<S>::zeros({n, feat_cols});
        for (i64 i = 0; i < n; ++i)
          for (i64 c = 0; c < feat_cols; ++c) (*feats.data)[i * feat_cols + c] =
              static_cast<S>(cloud.features->at(lo + i, c));
      }
    }

    std::vector<i64> neighbors;
    i64 k_eff = 0;
    if (cfg.mpnn.steps > 0) {
      k_eff = std::min<i64>(cfg.mpnn.k_neighbors, n - 1);
      if (k_eff > 0) neighbors = knn_all(tree, piece, k_eff);
    }
    Tensor<S> h = mpnn_embed(P, feats, piece.positions, neighbors, k_eff, cfg.mpnn, cfg.channels[0]);

    LevelState<S> state;
    state.level = 0;
    state.x = take_rows(h, tree.perm());
    state.positions = tree.leaf_positions();
    state.valid = tree.valid_mask();
    if (opts.virtual_leaf_features) {
      const Matrix& vf = *opts.virtual_leaf_features;
      if (vf.rows != tree.slots() || vf.cols != cfg.channels[0])
        throw ShapeError("virtual feature matrix must be [slots x channels[0]]");
      Tensor<S> fill = Tensor<S>::zeros({tree.slots(), cfg.channels[0]});
      for (i64 s = 0; s < tree.slots(); ++s) {
        if (state.valid[static_cast<size_t>(s)]) continue;
        for (i64 c = 0; c < cfg.channels[0]; ++c) (*fill.data)[s * cfg.channels[0] + c] = static_cast<S>(vf.at(s, c));
      }
      state.x = add(state.x, fill);
    }

    // One rotated-layout permutation per pooled level, built on demand.
    std::map<int, std::vector<i64>> rot_maps;
    const RotationSpec rot_spec = RotationSpec::default_for(cfg.dim);
    auto rot_map_for = [&](const LevelState<S>& st) -> const std::vector<i64>& {
      auto it = rot_maps.find(st.level);
      if (it != rot_maps.end()) return it->second;
      std::vector<i64> sigma;
      if (st.level == 0) {
        const BallTree rot_tree = timed([&] { return build_rotated(piece, rot_spec); });
        sigma = rotation_slot_map(tree, rot_tree);
      } else {
        const Matrix r = rot_spec.matrix(cfg.dim);
        Matrix rotated(st.positions.rows, cfg.dim);
        for (i64 i = 0; i < st.positions.rows; ++i)
          for (int a = 0; a < cfg.dim; ++a) {
            double acc = 0;
            for (int b = 0; b < cfg.dim; ++b) acc += r.at(a, b) * st.positions.at(i, b);
            rotated.at(i, a) = acc;
          }
        const BallTree rot_tree = timed([&] { return build_on_rows(rotated, &st.valid); });
        sigma = rot_tree.perm();  // slot count is a power of two: no padding, a bijection
      }
      return rot_maps.emplace(st.level, std::move(sigma)).first->second;
    };

    auto run_blocks = [&](LevelState<S>& st, const std::string& side, int stage, int depth, int heads) {
      BallAttentionConfig att;
      att.ball_size = cfg.ball_sizes[static_cast<size_t>(stage)];
      att.heads = heads;
      att.c_model = st.x.dim(1);
      att.c_inner = st.x.dim(1);
      for (int b = 0; b < depth; ++b) {
        const bool use_rot = cfg.rotate && (b % 2 == 1);
        const std::vector<i64>* sigma = use_rot ? &rot_map_for(st) : nullptr;
        st.x = erwin_block(P, side + std::to_string(stage) + ".block" + std::to_string(b), st, att, sigma);
      }
    };

    std::vector<LevelState<S>> skips(static_cast<size_t>(S_count > 0 ? S_count - 1 : 0));
    for (int s = 0; s < S_count; ++s) {
      run_blocks(state, "enc", s, cfg.enc_depths[static_cast<size_t>(s)], cfg.enc_heads[static_cast<size_t>(s)]);
      if (s + 1 < S_count) {
        skips[static_cast<size_t>(s)] = state;
        const i64 g = cfg.strides[static_cast<size_t>(s)];
        if (g > 1) state = coarsen(P, "pool" + std::to_string(s), state, g);
      }
    }
    for (int s = S_count - 2; s >= 0; --s) {
      const i64 g = cfg.strides[static_cast<size_t>(s)];
      if (g > 1) {
        state = refine(P, "unpool" + std::to_string(s), state, skips[static_cast<size_t>(s)], g);
      } else {
        state.x = add(state.x, skips[static_cast<size_t>(s)].x);
        state.level = skips[static_cast<size_t>(s)].level;
        state.positions = skips[static_cast<size_t>(s)].positions;
        state.valid = skips[static_cast<size_t>(s)].valid;
      }
      run_blocks(state, "dec", s, cfg.dec_depths[static_cast<size_t>(s)], cfg.dec_heads[static_cast<size_t>(s)]);
    }

    Tensor<S> y_slots = add_bias(matmul(state.x, P("readout.w")), P("readout.b"));
    segment_outputs.push_back(take_rows(y_slots, tree.inv_perm()));
  }
  return segment_outputs.size() == 1 ? segment_outputs[0] : concat_rows(segment_outputs);
}

}  // namespace erwin
