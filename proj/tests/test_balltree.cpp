// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "erwin/balltree.hpp"
#include "oracles.hpp"

using namespace erwin;

namespace {

PointCloud cloud_from_rows(std::vector<std::vector<double>> rows) {
  PointCloud cloud;
  const i64 n = static_cast<i64>(rows.size());
  const i64 d = static_cast<i64>(rows[0].size());
  cloud.positions = Matrix(n, d);
  for (i64 i = 0; i < n; ++i)
    for (i64 c = 0; c < d; ++c) cloud.positions.at(i, c) = rows[static_cast<size_t>(i)][static_cast<size_t>(c)];
  cloud.batch_offsets = {0, n};
  return cloud;
}

// Brute-force validation of every structural invariant on one tree.
void check_tree_invariants(const BallTree& tree, const PointCloud& cloud) {
  const i64 n = cloud.size();
  const int d = static_cast<int>(cloud.dim());
  i64 m = 0;
  while ((i64(1) << m) < n) ++m;
  REQUIRE(tree.depth() == m);
  REQUIRE(tree.slots() == (i64(1) << m));
  REQUIRE(tree.num_real() == n);

  // Real slots form the prefix; perm restricted to them is a bijection.
  std::vector<char> seen(static_cast<size_t>(n), 0);
  for (i64 s = 0; s < tree.slots(); ++s) {
    const bool real = tree.valid_mask()[static_cast<size_t>(s)] != 0;
    REQUIRE(real == (s < n));
    if (real) {
      const i64 orig = tree.perm()[s];
      REQUIRE(orig >= 0);
      REQUIRE(orig < n);
      REQUIRE_FALSE(seen[static_cast<size_t>(orig)]);
      seen[static_cast<size_t>(orig)] = 1;
      REQUIRE(tree.inv_perm()[orig] == s);
      for (int c = 0; c < d; ++c) REQUIRE(tree.leaf_positions().at(s, c) == cloud.positions.at(orig, c));
    } else {
      REQUIRE(tree.perm()[s] == n);
    }
  }

  for (int lvl = 0; lvl <= tree.depth(); ++lvl) {
    const LevelSlice slice = tree.level_view(lvl);
    REQUIRE(slice.ball_count == (i64(1) << (m - lvl)));
    REQUIRE(slice.leaves_per_ball == (i64(1) << lvl));
    for (i64 b = 0; b < slice.ball_count; ++b) {
      const auto [lo, hi] = slice.slot_range(b);
      REQUIRE(hi - lo == slice.leaves_per_ball);
      i64 cnt = 0;
      double mean[3] = {0, 0, 0};
      for (i64 s = lo; s < hi; ++s) {
        if (!tree.valid_mask()[static_cast<size_t>(s)]) continue;
        ++cnt;
        for (int c = 0; c < d; ++c) mean[c] += tree.leaf_positions().at(s, c);
      }
      REQUIRE((*slice.real_counts)[b] == cnt);
      if (cnt == 0) {
        REQUIRE((*slice.radii)[b] == 0.0);
        continue;
      }
      // Center of mass equals the plain mean of contained real points.
      for (int c = 0; c < d; ++c) {
        mean[c] /= static_cast<double>(cnt);
        REQUIRE(std::abs(slice.centers->at(b, c) - mean[c]) <= 1e-9);
      }
      // Radius equals the furthest contained real point; every point covered.
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
        REQUIRE(dist <= (*slice.radii)[b] + 1e-9);
      }
      REQUIRE(std::abs(max_dist - (*slice.radii)[b]) <= 1e-9);
    }
  }
}

std::set<std::set<i64>> level_membership(const BallTree& tree, int level) {
  const LevelSlice slice = tree.level_view(level);
  std::set<std::set<i64>> balls;
  for (i64 b = 0; b < slice.ball_count; ++b) {
    const auto [lo, hi] = slice.slot_range(b);
    std::set<i64> members;
    for (i64 s = lo; s < hi; ++s)
      if (tree.valid_mask()[static_cast<size_t>(s)]) members.insert(tree.perm()[s]);
    if (!members.empty()) balls.insert(std::move(members));
  }
  return balls;
}

}  // namespace

TEST_CASE("eight-point tree has the nested bracket structure") {
  const PointCloud cloud = generate({CloudKind::UniformBox, 8, 2, 42});
  const BallTree tree = build_tree(cloud);
  REQUIRE(tree.depth() == 3);
  const std::vector<std::vector<std::pair<i64, i64>>> expected = {
      {{0, 8}},
      {{0, 4}, {4, 8}},
      {{0, 2}, {2, 4}, {4, 6}, {6, 8}},
      {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 8}},
  };
  for (int lvl = 3; lvl >= 0; --lvl) {
    const LevelSlice slice = tree.level_view(lvl);
    REQUIRE(slice.ball_count == static_cast<i64>(expected[static_cast<size_t>(3 - lvl)].size()));
    for (i64 b = 0; b < slice.ball_count; ++b) {
      const auto [lo, hi] = slice.slot_range(b);
      CHECK(lo == expected[static_cast<size_t>(3 - lvl)][static_cast<size_t>(b)].first);
      CHECK(hi == expected[static_cast<size_t>(3 - lvl)][static_cast<size_t>(b)].second);
    }
  }
  check_tree_invariants(tree, cloud);
}

TEST_CASE("golden dump of the unit-square four-point tree") {
  const PointCloud cloud = cloud_from_rows({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
  const BallTree tree = build_tree(cloud);
  CHECK(tree.perm() == std::vector<i64>{0, 2, 1, 3});
  std::ostringstream out;
  tree.dump(out);
  const std::string golden =
      "level 2: 0.5,0.5 r=0.707106781 [0,4)\n"
      "level 1: 0,0.5 r=0.5 [0,2) | 1,0.5 r=0.5 [2,4)\n"
      "level 0: 0,0 r=0 [0,1) | 0,1 r=0 [1,2) | 1,0 r=0 [2,3) | 1,1 r=0 [3,4)\n";
  CHECK(out.str() == golden);
}

TEST_CASE("single point: depth zero, radius zero") {
  const PointCloud cloud = generate({CloudKind::UniformBox, 1, 3, 0});
  const BallTree tree = build_tree(cloud);
  CHECK(tree.depth() == 0);
  CHECK(tree.slots() == 1);
  CHECK(tree.level_view(0).ball_count == 1);
  CHECK((*tree.level_view(0).radii)[0] == 0.0);
  check_tree_invariants(tree, cloud);
}

TEST_CASE("five points pad to eight slots with a virtual suffix") {
  for (u64 seed = 0; seed < 8; ++seed) {
    const PointCloud cloud = generate({CloudKind::GaussianBlobs, 5, 3, seed});
    const BallTree tree = build_tree(cloud);
    REQUIRE(tree.depth() == 3);
    REQUIRE(tree.slots() == 8);
    i64 virt = 0;
    for (auto v : tree.valid_mask()) virt += v ? 0 : 1;
    CHECK(virt == 3);
    check_tree_invariants(tree, cloud);
  }
}

TEST_CASE("structural invariants hold across kinds, sizes and dimensions") {
  u64 seed = 100;
  for (const CloudKind kind : {CloudKind::UniformBox, CloudKind::GaussianBlobs, CloudKind::ChainPolymer}) {
    for (const int d : {2, 3}) {
      for (const i64 n : {1, 2, 3, 7, 16, 33, 100, 257}) {
        const PointCloud cloud = generate({kind, n, d, seed++});
        check_tree_invariants(build_tree(cloud), cloud);
      }
    }
  }
}

TEST_CASE("level_view bounds and whole-set root ball") {
  const PointCloud cloud = generate({CloudKind::UniformBox, 100, 3, 9});
  const BallTree tree = build_tree(cloud);
  CHECK_THROWS_AS(tree.level_view(-1), RangeError);
  CHECK_THROWS_AS(tree.level_view(tree.depth() + 1), RangeError);

  // Root radius equals the brute-force maximum distance from the root center.
  const LevelSlice root = tree.level_view(tree.depth());
  double max_dist = 0;
  for (i64 i = 0; i < cloud.size(); ++i) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) {
      const double dd = cloud.positions.at(i, c) - root.centers->at(0, c);
      acc += dd * dd;
    }
    max_dist = std::max(max_dist, std::sqrt(acc));
  }
  CHECK(std::abs(max_dist - (*root.radii)[0]) <= 1e-9);

  // Leaf level: singleton balls of radius zero.
  const LevelSlice leaves = tree.level_view(0);
  for (i64 b = 0; b < leaves.ball_count; ++b) CHECK((*leaves.radii)[b] == 0.0);

  const Ball b = tree.ball(tree.depth(), 0);
  CHECK(b.point_count == 100);
  CHECK(b.radius == (*root.radii)[0]);
}

TEST_CASE("identity rotation reproduces the unrotated permutation") {
  const PointCloud cloud = generate({CloudKind::UniformBox, 77, 3, 21});
  const BallTree plain = build_tree(cloud);
  const BallTree rotated = build_rotated(cloud, RotationSpec::identity());
  CHECK(plain.perm() == rotated.perm());
}

TEST_CASE("any split of two points yields the same singleton sets") {
  const PointCloud cloud = cloud_from_rows({{0, 0}, {1, 1}});
  const BallTree a = build_tree(cloud);
  const BallTree b = build_rotated(cloud, RotationSpec::default_for(2));
  CHECK(level_membership(a, 0) == level_membership(b, 0));
}

TEST_CASE("45-degree rotation regroups a 4x4 grid at level one") {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) rows.push_back({static_cast<double>(i), static_cast<double>(j)});
  const PointCloud cloud = cloud_from_rows(rows);
  const BallTree plain = build_tree(cloud);
  const BallTree rotated = build_rotated(cloud, RotationSpec::default_for(2));
  CHECK(level_membership(plain, 1) != level_membership(rotated, 1));
}

TEST_CASE("rotation spec validation") {
  const Matrix r = RotationSpec::default_for(3).matrix(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += r.at(k, i) * r.at(k, j);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-12);
    }
  RotationSpec bad;
  bad.angle = 0.3;
  bad.planes = {{0, 3}};
  CHECK_THROWS_AS(bad.matrix(3), ConfigError);
}

TEST_CASE("knn: collinear points and documented tie rule") {
  const PointCloud line = cloud_from_rows({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  const BallTree tree = build_tree(line);
  CHECK(knn(tree, line, 0, 2) == std::vector<i64>{1, 2});

  const PointCloud ties = cloud_from_rows({{0, 0}, {1, 0}, {-1, 0}, {2, 0}});
  const BallTree tie_tree = build_tree(ties);
  CHECK(knn(tie_tree, ties, 0, 2) == std::vector<i64>{1, 2});  // equal distances, lower index first
  CHECK(knn(tie_tree, ties, 0, 3) == std::vector<i64>{1, 2, 3});

  CHECK_THROWS_AS(knn(tree, line, 0, 4), ArgError);
  CHECK_THROWS_AS(knn(tree, line, 0, 0), ArgError);
  CHECK_THROWS_AS(knn(tree, line, 9, 1), RangeError);
}

TEST_CASE("knn matches the linear-scan oracle on random clouds") {
  for (u64 seed = 0; seed < 4; ++seed) {
    const PointCloud cloud = generate({CloudKind::GaussianBlobs, 200, 3, seed + 50});
    const BallTree tree = build_tree(cloud);
    Rng rng(seed);
    for (int trial = 0; trial < 25; ++trial) {
      const i64 q = rng.uniform_int(0, cloud.size() - 1);
      const i64 k = rng.uniform_int(1, 12);
      CHECK(knn(tree, cloud, q, k) == oracle::brute_knn(cloud.positions, q, k));
    }
  }
}

TEST_CASE("gather keeps sorted clouds in place and zeroes the padding") {
  // Already-sorted cloud: ascending x, flat y; the permutation is identity.
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 8; ++i) rows.push_back({static_cast<double>(i), 0.0});
  const PointCloud sorted_cloud = cloud_from_rows(rows);
  const BallTree tree = build_tree(sorted_cloud);
  Matrix values(8, 3);
  Rng rng(3);
  for (double& v : values.data) v = rng.normal();
  const Matrix gathered = gather_leaves(tree, values);
  CHECK(gathered.data == values.data);

  // Padding rows are exactly zero for n = 5.
  const PointCloud five = generate({CloudKind::UniformBox, 5, 2, 8});
  const BallTree five_tree = build_tree(five);
  Matrix v5(5, 4);
  for (double& v : v5.data) v = rng.normal();
  const Matrix g5 = gather_leaves(five_tree, v5);
  REQUIRE(g5.rows == 8);
  for (i64 s = 5; s < 8; ++s)
    for (i64 c = 0; c < 4; ++c) CHECK(g5.at(s, c) == 0.0);

  // scatter(gather(v)) == v exactly on random clouds.
  const Matrix back = scatter_leaves(five_tree, g5);
  CHECK(back.data == v5.data);
}

TEST_CASE("tree build rejects non-finite input") {
  PointCloud cloud = generate({CloudKind::UniformBox, 16, 3, 0});
  cloud.positions.at(3, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(build_tree(cloud), InputError);
}
