// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one criterion per function, each printing a single
// pass/fail line. Run with no arguments for all criteria or with a list of
// criterion numbers, e.g. `acceptance 1 4 9`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "erwin/attention.hpp"
#include "erwin/bench.hpp"
#include "erwin/gradcheck_battery.hpp"
#include "erwin/model.hpp"
#include "erwin/probe.hpp"
#include "erwin/train.hpp"
#include "oracles.hpp"

using namespace erwin;
using T = Tensor<double>;

namespace {

PointCloud random_cloud(i64 n, int d, u64 seed) {
  const CloudKind kinds[] = {CloudKind::UniformBox, CloudKind::GaussianBlobs, CloudKind::ChainPolymer,
                             CloudKind::Annulus};
  return generate({kinds[seed % 4], n, d, seed});
}

PointCloud with_features(PointCloud cloud, i64 width, u64 seed) {
  Rng rng(seed);
  Matrix feats(cloud.size(), width);
  for (double& v : feats.data) v = rng.normal();
  cloud.features = feats;
  return cloud;
}

// ---------------------------------------------------------------------------
// 1. Ball attention equals dense attention under a block-diagonal ball mask.
bool criterion_oracle_equivalence(std::string& detail) {
  Rng rng(101);
  const i64 trials = 200;
  double worst = 0;
  for (i64 trial = 0; trial < trials; ++trial) {
    const i64 ball_choices[] = {8, 16, 32};
    const int head_choices[] = {1, 2, 4};
    const i64 bs = ball_choices[rng.uniform_int(0, 2)];
    const int heads = head_choices[rng.uniform_int(0, 2)];
    const int d = rng.uniform() < 0.5 ? 2 : 3;
    const i64 n = rng.uniform_int(bs, 256);
    const i64 c = 8;

    const PointCloud cloud = random_cloud(n, d, 1000 + static_cast<u64>(trial));
    const BallTree tree = build_tree(cloud);

    Matrix values(n, c);
    for (double& v : values.data) v = rng.normal();
    const T x_slots = to_tensor<double>(gather_leaves(tree, values));

    Rng wrng(5000 + static_cast<u64>(trial));
    AttentionWeights<double> w;
    w.w_query = init_linear<double>(c, c, wrng);
    w.w_key = init_linear<double>(c, c, wrng);
    w.w_value = init_linear<double>(c, c, wrng);
    w.w_out = init_linear<double>(c, c, wrng);
    w.w_pos = init_linear<double>(d, c, wrng);
    w.sigma = T::zeros({heads, 1});
    std::vector<double> sigma(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      sigma[static_cast<size_t>(h)] = wrng.uniform();
      (*w.sigma.data)[h] = sigma[static_cast<size_t>(h)];
    }

    BallAttentionConfig cfg{bs, heads, c, c};
    const T out = ball_mhsa(x_slots, tree.leaf_positions(), tree.valid_mask(), w, cfg);

    std::vector<char> allow(static_cast<size_t>(n * n), 0);
    for (i64 i = 0; i < n; ++i)
      for (i64 j = 0; j < n; ++j)
        allow[static_cast<size_t>(i * n + j)] = (tree.inv_perm()[i] / bs) == (tree.inv_perm()[j] / bs);
    const Matrix expect =
        oracle::dense_masked_mhsa(values, cloud.positions, allow, to_matrix(w.w_query), to_matrix(w.w_key),
                                  to_matrix(w.w_value), to_matrix(w.w_out), sigma, heads);
    for (i64 i = 0; i < n; ++i) {
      const i64 slot = tree.inv_perm()[i];
      for (i64 j = 0; j < c; ++j)
        worst = std::max(worst, std::abs((*out.data)[slot * c + j] - expect.at(i, j)));
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%lld instances, max abs diff %.3e (tol 1e-10)", static_cast<long long>(trials),
                worst);
  detail = buf;
  return worst <= 1e-10;
}

// ---------------------------------------------------------------------------
// 2. Perfect-tree, contiguity, coverage, center and radius invariants.
bool criterion_tree_invariants(std::string& detail) {
  Rng rng(202);
  i64 clouds = 0;
  for (i64 trial = 0; trial < 1000; ++trial) {
    const i64 n = rng.uniform_int(1, 2048);
    const int d = rng.uniform() < 0.5 ? 2 : 3;
    const PointCloud cloud = random_cloud(n, d, 2000 + static_cast<u64>(trial));
    const BallTree tree = build_tree(cloud);
    ++clouds;

    i64 m = 0;
    while ((i64(1) << m) < n) ++m;
    if (tree.depth() != m || tree.slots() != (i64(1) << m) || tree.num_real() != n) {
      detail = "perfectness violated at n=" + std::to_string(n);
      return false;
    }
    std::vector<char> seen(static_cast<size_t>(n), 0);
    for (i64 s = 0; s < tree.slots(); ++s) {
      const bool real = tree.valid_mask()[static_cast<size_t>(s)] != 0;
      if (real != (s < n)) {
        detail = "real slots are not the prefix at n=" + std::to_string(n);
        return false;
      }
      if (real) {
        const i64 orig = tree.perm()[s];
        if (orig < 0 || orig >= n || seen[static_cast<size_t>(orig)] || tree.inv_perm()[orig] != s) {
          detail = "permutation is not a bijection at n=" + std::to_string(n);
          return false;
        }
        seen[static_cast<size_t>(orig)] = 1;
      }
    }
    for (int lvl = 0; lvl <= tree.depth(); ++lvl) {
      const LevelSlice slice = tree.level_view(lvl);
      for (i64 b = 0; b < slice.ball_count; ++b) {
        const auto [lo, hi] = slice.slot_range(b);
        if (hi - lo != slice.leaves_per_ball) {
          detail = "contiguity violated";
          return false;
        }
        i64 cnt = 0;
        double mean[3] = {0, 0, 0};
        for (i64 s = lo; s < hi; ++s) {
          if (!tree.valid_mask()[static_cast<size_t>(s)]) continue;
          ++cnt;
          for (int c = 0; c < d; ++c) mean[c] += tree.leaf_positions().at(s, c);
        }
        if (cnt != (*slice.real_counts)[b]) {
          detail = "real counts wrong";
          return false;
        }
        if (cnt == 0) continue;
        for (int c = 0; c < d; ++c) {
          mean[c] /= static_cast<double>(cnt);
          if (std::abs(slice.centers->at(b, c) - mean[c]) > 1e-9) {
            detail = "center-of-mass mismatch at level " + std::to_string(lvl);
            return false;
          }
        }
        double max_dist = 0;
        for (i64 s = lo; s < hi; ++s) {
          if (!tree.valid_mask()[static_cast<size_t>(s)]) continue;
          double acc = 0;
          for (int c = 0; c < d; ++c) {
            const double dd = tree.leaf_positions().at(s, c) - slice.centers->at(b, c);
            acc += dd * dd;
          }
          const double dist = std::sqrt(acc);
          max_dist = std::max(max_dist, dist);
          if (dist > (*slice.radii)[b] + 1e-9) {
            detail = "coverage violated at level " + std::to_string(lvl);
            return false;
          }
        }
        if (std::abs(max_dist - (*slice.radii)[b]) > 1e-9) {
          detail = "radius is not the furthest-point distance";
          return false;
        }
      }
    }
  }
  detail = std::to_string(clouds) + " random clouds, all invariants hold";
  return true;
}

// ---------------------------------------------------------------------------
// 3. Eight points produce the nested contiguous interval structure.
bool criterion_eight_point_structure(std::string& detail) {
  for (u64 seed = 0; seed < 10; ++seed) {
    const PointCloud cloud = random_cloud(8, seed % 2 ? 2 : 3, 300 + seed);
    const BallTree tree = build_tree(cloud);
    if (tree.depth() != 3) {
      detail = "depth != 3";
      return false;
    }
    for (int lvl = 0; lvl <= 3; ++lvl) {
      const LevelSlice slice = tree.level_view(lvl);
      if (slice.ball_count != (i64(1) << (3 - lvl))) {
        detail = "ball count wrong at level " + std::to_string(lvl);
        return false;
      }
      for (i64 b = 0; b < slice.ball_count; ++b) {
        const auto [lo, hi] = slice.slot_range(b);
        if (lo != b * slice.leaves_per_ball || hi != (b + 1) * slice.leaves_per_ball) {
          detail = "slot ranges not nested contiguous intervals";
          return false;
        }
      }
    }
  }
  detail = "levels partition [0,8) into 1/2/4/8 contiguous intervals";
  return true;
}

// ---------------------------------------------------------------------------
// 4. Forward runtime scaling fits a power law with beta near 1.
bool criterion_scaling(std::string& detail) {
  BenchOptions opts;
  opts.sizes = {1024, 2048, 4096, 8192, 16384, 32768, 65536};
  opts.batch = 16;
  opts.repeats = 5;
  opts.seed = 404;
  opts.model = default_bench_config(3);

  opts.abstract_cost = true;
  const ScalingResult abstract = bench_scaling(opts);
  opts.abstract_cost = false;
  const ScalingResult wall = bench_scaling(opts);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "abstract beta=%.6f r2=%.6f (need [0.90,1.25], >=0.98); wall beta=%.3f r2=%.4f (need [0.85,1.35], "
                ">=0.95); reference 1.054/0.999",
                abstract.fit.beta, abstract.fit.r2, wall.fit.beta, wall.fit.r2);
  detail = buf;
  if (!abstract.fit.valid || !wall.fit.valid) return false;
  const bool abstract_ok = abstract.fit.beta >= 0.90 && abstract.fit.beta <= 1.25 && abstract.fit.r2 >= 0.98;
  const bool wall_ok = wall.fit.beta >= 0.85 && wall.fit.beta <= 1.35 && wall.fit.r2 >= 0.95;
  return abstract_ok && wall_ok;
}

// ---------------------------------------------------------------------------
// 5. Tree construction stays under 10% of build + forward.
bool criterion_tree_share(std::string& detail) {
  BenchOptions opts;
  opts.sizes = {8192, 16384, 32768};
  opts.batch = 16;
  opts.repeats = 5;
  opts.warmup = 1;
  opts.seed = 505;
  opts.model = default_bench_config(3);
  const auto records = bench_treebuild(opts);
  std::ostringstream msg;
  bool ok = true;
  for (const auto& r : records) {
    msg << "n=" << r.n << " ratio=" << r.ratio << "  ";
    ok &= r.ratio < 0.10;
  }
  msg << "(bound 0.10)";
  detail = msg.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 6. Receptive fields: own ball / k-hop bound / global coverage at n = 800.
bool criterion_receptive_field(std::string& detail) {
  const i64 n = 800;
  std::ostringstream msg;

  // (a) One ball-attention layer without rotation: exactly the target's ball.
  {
    PointCloud cloud = with_features(random_cloud(n, 3, 600), 2, 601);
    const ErwinConfig cfg = single_ball_probe_config(3, 2, 16);
    ParamStore<double> params = init_params<double>(cfg);
    const BallTree tree = build_tree(cloud);
    const i64 target = 123;
    const auto mask = probe_receptive_field(cfg, params, cloud, target);
    const i64 ball = tree.inv_perm()[target] / 16;
    for (i64 i = 0; i < n; ++i) {
      const bool same_ball = tree.inv_perm()[i] / 16 == ball;
      if (static_cast<bool>(mask[static_cast<size_t>(i)]) != same_ball) {
        detail = "(a) single-layer field differs from the target's ball";
        return false;
      }
    }
    i64 hits = 0;
    for (auto v : mask) hits += v;
    msg << "(a) field = own ball (" << hits << " nodes)  ";
  }

  // (b) Six-layer 16-NN message passing stays inside the 6-hop BFS set.
  {
    PointCloud cloud = with_features(random_cloud(n, 3, 602), 2, 603);
    const ErwinConfig cfg = mpnn_probe_config(3, 2, 6, 16);
    ParamStore<double> params = init_params<double>(cfg);
    const BallTree tree = build_tree(cloud);
    const std::vector<i64> neighbors = knn_all(tree, cloud, 16);
    const i64 target = 400;
    const auto mask = probe_receptive_field(cfg, params, cloud, target);
    const auto hops = bfs_hops(neighbors, n, 16, target, 6);
    i64 field = 0, hull = 0;
    for (i64 i = 0; i < n; ++i) {
      field += mask[static_cast<size_t>(i)];
      hull += hops[static_cast<size_t>(i)];
      if (mask[static_cast<size_t>(i)] && !hops[static_cast<size_t>(i)]) {
        detail = "(b) message-passing field escaped the 6-hop neighborhood";
        return false;
      }
    }
    msg << "(b) 6-layer 16-NN field " << field << " inside " << hull << "-node 6-hop hull  ";
  }

  // (c) Pooling down to the root makes the field global.
  {
    PointCloud cloud = with_features(random_cloud(n, 3, 604), 2, 605);
    ErwinConfig cfg;
    cfg.dim = 3;
    cfg.in_features = 2;
    cfg.out_channels = 1;
    cfg.channels = {8, 16, 32, 64};
    cfg.enc_depths = {1, 1, 1, 1};
    cfg.enc_heads = {2, 2, 2, 2};
    cfg.dec_depths = {1, 1, 1};
    cfg.dec_heads = {2, 2, 2};
    cfg.ball_sizes = {16, 16, 16, 16};
    cfg.strides = {4, 4, 4, 1};
    cfg.rotate = true;
    cfg.mpnn.hidden = 8;
    cfg.mpnn.steps = 1;
    cfg.mpnn.k_neighbors = 8;
    ParamStore<double> params = init_params<double>(cfg);
    const auto mask = probe_receptive_field(cfg, params, cloud, 57);
    i64 covered = 0;
    for (auto v : mask) covered += v;
    msg << "(c) full network covers " << covered << "/" << n << " nodes";
    if (covered != n) {
      detail = msg.str() + " -- not global";
      return false;
    }
  }
  detail = msg.str();
  return true;
}

// ---------------------------------------------------------------------------
// 7. Finite-difference gradient suite, ops at 1e-6 and the model at 1e-4.
bool criterion_gradients(std::string& detail) {
  double worst_op = 0;
  bool ok = true;
  for (const auto& entry : run_gradcheck_battery(77)) {
    worst_op = std::max(worst_op, entry.max_rel_err);
    ok &= entry.pass;
  }
  const BatteryEntry model_entry = run_model_gradcheck(64, 20, 78);
  ok &= model_entry.pass;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "op suite max rel err %.2e (tol 1e-6); end-to-end %.2e (tol 1e-4)", worst_op,
                model_entry.max_rel_err);
  detail = buf;
  return ok;
}

// ---------------------------------------------------------------------------
// 8. Cross-ball rotation strictly enlarges the two-block receptive field.
bool criterion_cross_ball(std::string& detail) {
  PointCloud grid;
  grid.positions = Matrix(16, 2);
  for (i64 i = 0; i < 16; ++i) {
    grid.positions.at(i, 0) = static_cast<double>(i % 4);
    grid.positions.at(i, 1) = static_cast<double>(i / 4);
  }
  grid.batch_offsets = {0, 16};
  const PointCloud cloud = with_features(grid, 2, 800);

  ErwinConfig cfg;
  cfg.dim = 2;
  cfg.in_features = 2;
  cfg.out_channels = 1;
  cfg.channels = {8};
  cfg.enc_depths = {2};
  cfg.enc_heads = {2};
  cfg.dec_depths = {};
  cfg.dec_heads = {};
  cfg.ball_sizes = {4};
  cfg.strides = {1};
  cfg.mpnn.hidden = 8;
  cfg.mpnn.steps = 0;
  cfg.mpnn.k_neighbors = 0;

  cfg.rotate = true;
  ParamStore<double> params = init_params<double>(cfg);
  bool strict_somewhere = false;
  for (const i64 target : {i64(0), i64(5), i64(10)}) {
    cfg.rotate = false;
    const auto plain = probe_receptive_field(cfg, params, cloud, target);
    cfg.rotate = true;
    const auto rotated = probe_receptive_field(cfg, params, cloud, target);
    i64 plain_count = 0, rot_count = 0;
    for (i64 i = 0; i < 16; ++i) {
      plain_count += plain[static_cast<size_t>(i)];
      rot_count += rotated[static_cast<size_t>(i)];
      if (plain[static_cast<size_t>(i)] && !rotated[static_cast<size_t>(i)]) {
        detail = "rotated field does not contain the unrotated field";
        return false;
      }
    }
    if (rot_count > plain_count) strict_somewhere = true;
  }
  if (!strict_somewhere) {
    detail = "rotation never enlarged the field";
    return false;
  }

  // Permutation round trip through the rotated tree is the identity.
  const BallTree tree = build_tree(cloud);
  const BallTree rot_tree = build_rotated(cloud, RotationSpec::default_for(2));
  const std::vector<i64> sigma = rotation_slot_map(tree, rot_tree);
  const std::vector<i64> inv = invert_permutation(sigma);
  Rng rng(801);
  T x = T::zeros({16, 3});
  for (i64 i = 0; i < x.numel(); ++i) (*x.data)[i] = rng.normal();
  const T round = take_rows(take_rows(x, sigma), inv);
  if (*round.data != *x.data) {
    detail = "permute/unpermute round trip failed";
    return false;
  }
  detail = "rotated two-block field strictly contains the unrotated field; round trip exact";
  return true;
}

// ---------------------------------------------------------------------------
// 9. Randomized padding-slot features leave real outputs bit-identical.
bool criterion_virtual_neutrality(std::string& detail) {
  for (const i64 n : {i64(21), i64(333)}) {
    ErwinConfig cfg;
    cfg.dim = 3;
    cfg.in_features = 2;
    cfg.out_channels = 1;
    cfg.channels = {8, 16};
    cfg.enc_depths = {2, 1};
    cfg.enc_heads = {2, 2};
    cfg.dec_depths = {1};
    cfg.dec_heads = {2};
    cfg.ball_sizes = {8, 8};
    cfg.strides = {2, 1};
    cfg.rotate = true;
    cfg.mpnn.hidden = 8;
    cfg.mpnn.steps = 1;
    cfg.mpnn.k_neighbors = 4;
    const PointCloud cloud = with_features(random_cloud(n, 3, 900 + static_cast<u64>(n)), 2, 901);
    ParamStore<double> params = init_params<double>(cfg);
    const BallTree tree = build_tree(cloud);

    const T base = erwin_forward(cfg, params, cloud);
    Rng rng(902);
    for (int draw = 0; draw < 3; ++draw) {
      Matrix fill(tree.slots(), cfg.channels[0]);
      for (double& v : fill.data) v = 100.0 * rng.normal();
      ForwardOptions<double> opts;
      opts.virtual_leaf_features = &fill;
      const T out = erwin_forward(cfg, params, cloud, opts);
      for (i64 i = 0; i < out.numel(); ++i)
        if ((*out.data)[i] != (*base.data)[i]) {
          detail = "real output moved under virtual-slot randomization (n=" + std::to_string(n) + ")";
          return false;
        }
    }
  }
  detail = "outputs bit-identical across randomized padding features (n=21, 333)";
  return true;
}

// ---------------------------------------------------------------------------
// 10. Tree kNN equals the linear-scan oracle on 500 random queries.
bool criterion_knn(std::string& detail) {
  Rng rng(1001);
  i64 queries = 0;
  while (queries < 500) {
    const i64 n = rng.uniform_int(8, 1024);
    const int d = rng.uniform() < 0.5 ? 2 : 3;
    const PointCloud cloud = random_cloud(n, d, 10000 + static_cast<u64>(queries));
    const BallTree tree = build_tree(cloud);
    for (int q = 0; q < 10 && queries < 500; ++q, ++queries) {
      const i64 query = rng.uniform_int(0, n - 1);
      const i64 k = rng.uniform_int(1, std::min<i64>(16, n - 1));
      if (knn(tree, cloud, query, k) != oracle::brute_knn(cloud.positions, query, k)) {
        detail = "mismatch at n=" + std::to_string(n) + " k=" + std::to_string(k);
        return false;
      }
    }
  }
  detail = "500 queries match the linear-scan oracle exactly (order included)";
  return true;
}

// ---------------------------------------------------------------------------
// 11. Training: density loss halves; linear task reaches the LS optimum.
bool criterion_training(std::string& detail) {
  TrainOptions density;
  density.task = TrainTask::DensityRegression;
  density.steps = 1000;
  density.n = 256;
  density.seed = 11;
  const TrainResult dres = train_synthetic(density);
  const double ratio = dres.initial_loss > 0 ? dres.final_loss / dres.initial_loss : 1.0;

  TrainOptions linear;
  linear.task = TrainTask::Linear;
  linear.steps = 1000;
  linear.n = 128;
  linear.seed = 12;
  const TrainResult lres = train_synthetic(linear);
  Matrix feats, targets;
  linear_task_data(linear.n, linear.seed, feats, targets);
  const double optimum = oracle::least_squares_mse(feats, targets);

  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "density ratio %.3f (need <= 0.5); linear final %.6f vs LS optimum %.6f (need <= 1.05x)", ratio,
                lres.final_loss, optimum);
  detail = buf;
  if (dres.diverged || lres.diverged) return false;
  return ratio <= 0.5 && lres.final_loss <= 1.05 * optimum;
}

struct Criterion {
  int id;
  const char* name;
  bool (*fn)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "oracle-equivalence", criterion_oracle_equivalence},
    {2, "tree-invariants", criterion_tree_invariants},
    {3, "eight-point-structure", criterion_eight_point_structure},
    {4, "scaling-power-law", criterion_scaling},
    {5, "tree-build-share", criterion_tree_share},
    {6, "receptive-field", criterion_receptive_field},
    {7, "gradient-suite", criterion_gradients},
    {8, "cross-ball-effect", criterion_cross_ball},
    {9, "virtual-node-neutrality", criterion_virtual_neutrality},
    {10, "knn-oracle", criterion_knn},
    {11, "training-sanity", criterion_training},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> requested;
  for (int i = 1; i < argc; ++i) requested.push_back(std::atoi(argv[i]));

  bool all_pass = true;
  for (const Criterion& c : kCriteria) {
    if (!requested.empty() && std::find(requested.begin(), requested.end(), c.id) == requested.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
      pass = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %-24s %s  [%.1fs]  %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs, detail.c_str());
    std::fflush(stdout);
    all_pass &= pass;
  }
  return all_pass ? 0 : 1;
}
