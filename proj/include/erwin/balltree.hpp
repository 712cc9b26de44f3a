// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "erwin/common.hpp"
#include "erwin/geometry.hpp"

namespace erwin {

struct Ball {
  std::array<double, 3> center{0, 0, 0};
  double radius = 0.0;
  i64 point_count = 0;  // real points only
  int dim = 0;
};

// Orthogonal map composed of Givens rotations applied in plane order.
struct RotationSpec {
  double angle = 0.0;
  std::vector<std::pair<int, int>> planes;

  // 45 degrees in plane (0,1), then (1,2) when d == 3.
  static RotationSpec default_for(int d);
  static RotationSpec identity();

  Matrix matrix(int d) const;  // throws ConfigError if planes are invalid for d
};

// Zero-copy descriptor of one tree level. Ball b owns the contiguous leaf
// slots [b * leaves_per_ball, (b+1) * leaves_per_ball).
struct LevelSlice {
  int level = 0;
  i64 leaves_per_ball = 1;
  i64 ball_count = 0;
  const Matrix* centers = nullptr;            // [ball_count x d]
  const std::vector<double>* radii = nullptr;  // [ball_count]
  const std::vector<i64>* real_counts = nullptr;

  std::pair<i64, i64> slot_range(i64 ball) const {
    return {ball * leaves_per_ball, (ball + 1) * leaves_per_ball};
  }
};

// Perfect binary hierarchy over 2^m leaf slots. Real slots hold a permutation
// of the input rows; padding slots carry the sentinel index (== input row
// count) and a copy of the containing ball's last real point as position.
// Real slots always occupy the prefix [0, num_real) of the leaf level.
class BallTree {
 public:
  int depth() const { return depth_; }
  int dim() const { return dim_; }
  i64 slots() const { return i64(1) << depth_; }
  i64 num_real() const { return num_real_; }
  i64 sentinel() const { return sentinel_; }

  const std::vector<i64>& perm() const { return perm_; }          // [slots]
  const std::vector<i64>& inv_perm() const { return inv_perm_; }  // [input rows]
  const std::vector<std::uint8_t>& valid_mask() const { return valid_; }
  const Matrix& leaf_positions() const { return leaf_positions_; }  // [slots x d], build frame

  LevelSlice level_view(int level) const;  // throws RangeError for level outside [0, depth]
  Ball ball(int level, i64 index) const;

  // One line per level, top level first; per-ball `center radius slot_range`.
  void dump(std::ostream& out) const;

 private:
  int depth_ = 0;
  int dim_ = 0;
  i64 num_real_ = 0;
  i64 sentinel_ = 0;
  std::vector<i64> perm_;
  std::vector<i64> inv_perm_;
  std::vector<std::uint8_t> valid_;
  Matrix leaf_positions_;
  std::vector<Matrix> centers_;               // per level, [2^(m-i) x d]
  std::vector<std::vector<double>> radii_;    // per level
  std::vector<std::vector<i64>> real_counts_;  // per level

  friend BallTree build_on_rows(const Matrix&, const std::vector<std::uint8_t>*);
};

BallTree build_tree(const PointCloud& cloud);

// Tree on rotated coordinates; perm indexes the ORIGINAL rows, centers and
// radii live in the rotated frame.
BallTree build_rotated(const PointCloud& cloud, const RotationSpec& rot);

// Tree over arbitrary rows (used on coarse-level centers). Rows flagged
// invalid keep their identity in perm but sort after all valid rows and do
// not contribute to spreads, centers, or radii.
BallTree build_on_rows(const Matrix& positions, const std::vector<std::uint8_t>* row_valid = nullptr);

// Indices of the k nearest real points to cloud point `query_index`, query
// excluded, ascending distance, ties broken by lower original index.
std::vector<i64> knn(const BallTree& tree, const PointCloud& cloud, i64 query_index, i64 k);

// k nearest neighbors for every point, flattened [n x k].
std::vector<i64> knn_all(const BallTree& tree, const PointCloud& cloud, i64 k);

// Row j of the result is node_values[perm[j]] for real slots, zeros for
// padding slots. scatter_leaves inverts it on the real prefix.
Matrix gather_leaves(const BallTree& tree, const Matrix& node_values);
Matrix scatter_leaves(const BallTree& tree, const Matrix& slot_values);

}  // namespace erwin
