// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include "erwin/balltree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <queue>

namespace erwin {

RotationSpec RotationSpec::default_for(int d) {
  RotationSpec spec;
  spec.angle = 0.78539816339744830961566084581988;  // pi/4
  spec.planes = {{0, 1}};
  if (d == 3) spec.planes.push_back({1, 2});
  return spec;
}

RotationSpec RotationSpec::identity() { return RotationSpec{0.0, {}}; }

Matrix RotationSpec::matrix(int d) const {
  Matrix rot(d, d);
  for (int i = 0; i < d; ++i) rot.at(i, i) = 1.0;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (const auto& [a, b] : planes) {
    if (a < 0 || b < 0 || a >= d || b >= d || a == b)
      throw ConfigError("rotation plane (" + std::to_string(a) + "," + std::to_string(b) + ") invalid for dimension " +
                        std::to_string(d));
    // rot <- G(a,b) * rot
    for (int j = 0; j < d; ++j) {
      const double ra = rot.at(a, j);
      const double rb = rot.at(b, j);
      rot.at(a, j) = c * ra - s * rb;
      rot.at(b, j) = s * ra + c * rb;
    }
  }
  // Orthogonality check: R^T R = I within 1e-12.
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += rot.at(k, i) * rot.at(k, j);
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-12) throw ConfigError("rotation map is not orthogonal");
    }
  }
  return rot;
}

namespace {

struct BuildEntry {
  double p[3] = {0, 0, 0};
  i64 orig = 0;
  std::uint8_t virt = 0;
};

int ceil_log2(i64 n) {
  int m = 0;
  while ((i64(1) << m) < n) ++m;
  return m;
}

// Recursive half-count split. Entries in [lo, hi) are partitioned along the
// axis of largest real spread; invalid/padding entries sort after all real
// entries regardless of coordinates.
void split_range(std::vector<BuildEntry>& e, i64 lo, i64 hi, int d) {
  i64 real_cnt = 0;
  for (i64 i = lo; i < hi; ++i)
    if (!e[i].virt) ++real_cnt;

  if (real_cnt > 0 && real_cnt < hi - lo) {
    // Virtual entries inherit the last real point of the smallest enclosing
    // ball; deeper recursion levels overwrite earlier assignments.
    const BuildEntry* last_real = nullptr;
    for (i64 i = lo; i < hi; ++i) {
      if (e[i].virt) continue;
      if (!last_real || e[i].p[0] > last_real->p[0] ||
          (e[i].p[0] == last_real->p[0] && (e[i].p[1] > last_real->p[1] ||
                                            (e[i].p[1] == last_real->p[1] && e[i].p[2] >= last_real->p[2]))))
        last_real = &e[i];
    }
    double fb[3] = {last_real->p[0], last_real->p[1], last_real->p[2]};
    for (i64 i = lo; i < hi; ++i)
      if (e[i].virt) {
        e[i].p[0] = fb[0];
        e[i].p[1] = fb[1];
        e[i].p[2] = fb[2];
      }
  }

  if (hi - lo <= 1) return;

  int axis = 0;
  double best_spread = -1.0;
  for (int a = 0; a < d; ++a) {
    double mn = std::numeric_limits<double>::infinity();
    double mx = -mn;
    for (i64 i = lo; i < hi; ++i) {
      if (e[i].virt) continue;
      mn = std::min(mn, e[i].p[a]);
      mx = std::max(mx, e[i].p[a]);
    }
    const double spread = (real_cnt > 0) ? mx - mn : 0.0;
    if (spread > best_spread) {
      best_spread = spread;
      axis = a;
    }
  }

  const i64 mid = lo + (hi - lo) / 2;
  auto cmp = [axis](const BuildEntry& x, const BuildEntry& y) {
    if (x.virt != y.virt) return x.virt < y.virt;
    if (x.p[axis] != y.p[axis]) return x.p[axis] < y.p[axis];
    return x.orig < y.orig;
  };
  std::nth_element(e.begin() + lo, e.begin() + mid, e.begin() + hi, cmp);
  split_range(e, lo, mid, d);
  split_range(e, mid, hi, d);
}

}  // namespace

// build_on_rows is the single construction path; build_tree and build_rotated
// delegate to it after padding / rotating.
BallTree build_on_rows(const Matrix& positions, const std::vector<std::uint8_t>* row_valid) {
  const i64 rows = positions.rows;
  const int d = static_cast<int>(positions.cols);
  if (rows < 1) throw InputError("cannot build a tree over zero rows");
  if (d < 1 || d > 3) throw InputError("tree dimension must be in [1,3]");
  for (double v : positions.data)
    if (!std::isfinite(v)) throw InputError("non-finite coordinate passed to tree build");
  if (row_valid && static_cast<i64>(row_valid->size()) != rows)
    throw ShapeError("row_valid size " + std::to_string(row_valid ? row_valid->size() : 0) + " != rows " +
                     std::to_string(rows));

  const int m = ceil_log2(rows);
  const i64 slots = i64(1) << m;

  std::vector<BuildEntry> entries(static_cast<size_t>(slots));
  for (i64 i = 0; i < rows; ++i) {
    for (int c = 0; c < d; ++c) entries[i].p[c] = positions.at(i, c);
    entries[i].orig = i;
    entries[i].virt = row_valid ? !(*row_valid)[i] : 0;
  }
  for (i64 i = rows; i < slots; ++i) {
    entries[i].orig = rows;  // sentinel
    entries[i].virt = 1;
    for (int c = 0; c < d; ++c) entries[i].p[c] = positions.at(0, c);
  }

  i64 num_real = 0;
  for (i64 i = 0; i < rows; ++i)
    if (!entries[i].virt) ++num_real;
  if (num_real < 1) throw InputError("tree build requires at least one valid row");

  split_range(entries, 0, slots, d);

  BallTree tree;
  tree.depth_ = m;
  tree.dim_ = d;
  tree.num_real_ = num_real;
  tree.sentinel_ = rows;
  tree.perm_.resize(slots);
  tree.valid_.resize(slots);
  tree.inv_perm_.assign(rows, -1);
  tree.leaf_positions_ = Matrix(slots, d);
  for (i64 s = 0; s < slots; ++s) {
    tree.perm_[s] = entries[s].orig;
    tree.valid_[s] = entries[s].virt ? 0 : 1;
    if (entries[s].orig < rows) tree.inv_perm_[entries[s].orig] = s;
    for (int c = 0; c < d; ++c) tree.leaf_positions_.at(s, c) = entries[s].p[c];
  }

  // Level statistics, bottom-up. Centers follow the count-weighted merge of
  // child centers; radii are measured against real leaf points directly.
  tree.centers_.resize(m + 1);
  tree.radii_.resize(m + 1);
  tree.real_counts_.resize(m + 1);

  tree.centers_[0] = Matrix(slots, d);
  tree.radii_[0].assign(slots, 0.0);
  tree.real_counts_[0].assign(slots, 0);
  for (i64 s = 0; s < slots; ++s) {
    tree.real_counts_[0][s] = tree.valid_[s] ? 1 : 0;
    for (int c = 0; c < d; ++c) tree.centers_[0].at(s, c) = tree.leaf_positions_.at(s, c);
  }

  for (int lvl = 1; lvl <= m; ++lvl) {
    const i64 balls = i64(1) << (m - lvl);
    tree.centers_[lvl] = Matrix(balls, d);
    tree.radii_[lvl].assign(balls, 0.0);
    tree.real_counts_[lvl].assign(balls, 0);
    const Matrix& child_c = tree.centers_[lvl - 1];
    const std::vector<i64>& child_n = tree.real_counts_[lvl - 1];
    for (i64 b = 0; b < balls; ++b) {
      const i64 c0 = 2 * b, c1 = 2 * b + 1;
      const i64 n0 = child_n[c0], n1 = child_n[c1];
      tree.real_counts_[lvl][b] = n0 + n1;
      if (n0 + n1 > 0) {
        for (int c = 0; c < d; ++c)
          tree.centers_[lvl].at(b, c) =
              (static_cast<double>(n0) * child_c.at(c0, c) + static_cast<double>(n1) * child_c.at(c1, c)) /
              static_cast<double>(n0 + n1);
        double r2max = 0.0;
        const i64 span = i64(1) << lvl;
        for (i64 s = b * span; s < (b + 1) * span; ++s) {
          if (!tree.valid_[s]) continue;
          double r2 = 0.0;
          for (int c = 0; c < d; ++c) {
            const double dd = tree.leaf_positions_.at(s, c) - tree.centers_[lvl].at(b, c);
            r2 += dd * dd;
          }
          r2max = std::max(r2max, r2);
        }
        tree.radii_[lvl][b] = std::sqrt(r2max);
      }
    }
    // Balls with no real points copy the nearest preceding real ball's center
    // (the sibling, except above deep padding regions).
    for (i64 b = 0; b < balls; ++b) {
      if (tree.real_counts_[lvl][b] == 0 && b > 0)
        for (int c = 0; c < d; ++c) tree.centers_[lvl].at(b, c) = tree.centers_[lvl].at(b - 1, c);
    }
  }
  // Leaf level: padding slots mirror their enclosing ball's fallback position
  // already; nothing further to fix up.
  return tree;
}

BallTree build_tree(const PointCloud& cloud) {
  cloud.validate();
  return build_on_rows(cloud.positions, nullptr);
}

BallTree build_rotated(const PointCloud& cloud, const RotationSpec& rot) {
  cloud.validate();
  const int d = static_cast<int>(cloud.dim());
  const Matrix r = rot.matrix(d);
  Matrix rotated(cloud.size(), d);
  for (i64 i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < d; ++a) {
      double acc = 0.0;
      for (int b = 0; b < d; ++b) acc += r.at(a, b) * cloud.positions.at(i, b);
      rotated.at(i, a) = acc;
    }
  return build_on_rows(rotated, nullptr);
}

LevelSlice BallTree::level_view(int level) const {
  if (level < 0 || level > depth_)
    throw RangeError("level " + std::to_string(level) + " outside [0," + std::to_string(depth_) + "]");
  LevelSlice slice;
  slice.level = level;
  slice.leaves_per_ball = i64(1) << level;
  slice.ball_count = i64(1) << (depth_ - level);
  slice.centers = &centers_[level];
  slice.radii = &radii_[level];
  slice.real_counts = &real_counts_[level];
  return slice;
}

Ball BallTree::ball(int level, i64 index) const {
  const LevelSlice slice = level_view(level);
  if (index < 0 || index >= slice.ball_count) throw RangeError("ball index out of range");
  Ball b;
  b.dim = dim_;
  for (int c = 0; c < dim_; ++c) b.center[c] = slice.centers->at(index, c);
  b.radius = (*slice.radii)[index];
  b.point_count = (*slice.real_counts)[index];
  return b;
}

void BallTree::dump(std::ostream& out) const {
  char buf[64];
  for (int lvl = depth_; lvl >= 0; --lvl) {
    const LevelSlice slice = level_view(lvl);
    out << "level " << lvl << ":";
    for (i64 b = 0; b < slice.ball_count; ++b) {
      out << (b ? " | " : " ");
      for (int c = 0; c < dim_; ++c) {
        std::snprintf(buf, sizeof(buf), "%.9g", slice.centers->at(b, c));
        out << (c ? "," : "") << buf;
      }
      std::snprintf(buf, sizeof(buf), "%.9g", (*slice.radii)[b]);
      const auto [lo, hi] = slice.slot_range(b);
      out << " r=" << buf << " [" << lo << "," << hi << ")";
    }
    out << "\n";
  }
}

namespace {

struct HeapItem {
  double dist;
  i64 orig;
  bool operator<(const HeapItem& o) const {  // max-heap: worse = larger (dist, orig)
    if (dist != o.dist) return dist < o.dist;
    return orig < o.orig;
  }
};

double dist_to_ball(const double* q, const Matrix& centers, const std::vector<double>& radii, i64 b, int d) {
  double acc = 0.0;
  for (int c = 0; c < d; ++c) {
    const double dd = q[c] - centers.at(b, c);
    acc += dd * dd;
  }
  return std::sqrt(acc) - radii[b];
}

void knn_descend(const BallTree& tree, const double* q, i64 skip_orig, i64 k, int level, i64 ball,
                 std::priority_queue<HeapItem>& heap) {
  const LevelSlice slice = tree.level_view(level);
  if ((*slice.real_counts)[ball] == 0) return;
  if (static_cast<i64>(heap.size()) == k) {
    const double bound = dist_to_ball(q, *slice.centers, *slice.radii, ball, tree.dim());
    if (bound > heap.top().dist) return;
  }
  if (level == 0) {
    const i64 orig = tree.perm()[ball];
    if (orig == skip_orig) return;
    double acc = 0.0;
    for (int c = 0; c < tree.dim(); ++c) {
      const double dd = q[c] - tree.leaf_positions().at(ball, c);
      acc += dd * dd;
    }
    const HeapItem item{std::sqrt(acc), orig};
    if (static_cast<i64>(heap.size()) < k) {
      heap.push(item);
    } else if (item < heap.top()) {
      heap.pop();
      heap.push(item);
    }
    return;
  }
  const LevelSlice child = tree.level_view(level - 1);
  const i64 c0 = 2 * ball, c1 = 2 * ball + 1;
  const double d0 = dist_to_ball(q, *child.centers, *child.radii, c0, tree.dim());
  const double d1 = dist_to_ball(q, *child.centers, *child.radii, c1, tree.dim());
  if (d0 <= d1) {
    knn_descend(tree, q, skip_orig, k, level - 1, c0, heap);
    knn_descend(tree, q, skip_orig, k, level - 1, c1, heap);
  } else {
    knn_descend(tree, q, skip_orig, k, level - 1, c1, heap);
    knn_descend(tree, q, skip_orig, k, level - 1, c0, heap);
  }
}

}  // namespace

std::vector<i64> knn(const BallTree& tree, const PointCloud& cloud, i64 query_index, i64 k) {
  const i64 n = tree.num_real();
  if (query_index < 0 || query_index >= n) throw RangeError("knn query index out of range");
  if (k < 1 || k >= n) throw ArgError("knn requires 1 <= k < n, got k=" + std::to_string(k));
  const double* q = cloud.positions.row(query_index);
  std::priority_queue<HeapItem> heap;
  knn_descend(tree, q, query_index, k, tree.depth(), 0, heap);
  std::vector<i64> out(static_cast<size_t>(heap.size()));
  for (i64 i = static_cast<i64>(heap.size()) - 1; i >= 0; --i) {
    out[static_cast<size_t>(i)] = heap.top().orig;
    heap.pop();
  }
  return out;
}

std::vector<i64> knn_all(const BallTree& tree, const PointCloud& cloud, i64 k) {
  const i64 n = tree.num_real();
  std::vector<i64> out;
  out.reserve(static_cast<size_t>(n * k));
  for (i64 i = 0; i < n; ++i) {
    const auto nb = knn(tree, cloud, i, k);
    out.insert(out.end(), nb.begin(), nb.end());
  }
  return out;
}

Matrix gather_leaves(const BallTree& tree, const Matrix& node_values) {
  if (node_values.rows != tree.sentinel())
    throw ShapeError("gather: value rows " + std::to_string(node_values.rows) + " != tree input rows " +
                     std::to_string(tree.sentinel()));
  Matrix out(tree.slots(), node_values.cols);
  for (i64 s = 0; s < tree.slots(); ++s) {
    const i64 src = tree.perm()[s];
    if (src >= node_values.rows) continue;  // padding slot stays zero
    for (i64 c = 0; c < node_values.cols; ++c) out.at(s, c) = node_values.at(src, c);
  }
  return out;
}

Matrix scatter_leaves(const BallTree& tree, const Matrix& slot_values) {
  if (slot_values.rows != tree.slots())
    throw ShapeError("scatter: value rows " + std::to_string(slot_values.rows) + " != slot count " +
                     std::to_string(tree.slots()));
  Matrix out(tree.sentinel(), slot_values.cols);
  for (i64 s = 0; s < tree.slots(); ++s) {
    const i64 dst = tree.perm()[s];
    if (dst >= out.rows) continue;
    for (i64 c = 0; c < slot_values.cols; ++c) out.at(dst, c) = slot_values.at(s, c);
  }
  return out;
}

}  // namespace erwin
