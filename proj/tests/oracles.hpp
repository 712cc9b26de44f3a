// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used as test oracles. Everything here
// is straight-line double arithmetic with no shared code paths into the
// library implementations it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "erwin/common.hpp"

namespace oracle {

using erwin::i64;
using erwin::Matrix;

inline double dist(const Matrix& pts, i64 a, i64 b) {
  double acc = 0;
  for (i64 c = 0; c < pts.cols; ++c) {
    const double d = pts.at(a, c) - pts.at(b, c);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Linear-scan k nearest neighbors, query excluded, (distance, index) order.
inline std::vector<i64> brute_knn(const Matrix& pts, i64 query, i64 k) {
  std::vector<std::pair<double, i64>> all;
  for (i64 i = 0; i < pts.rows; ++i) {
    if (i == query) continue;
    all.emplace_back(dist(pts, query, i), i);
  }
  std::sort(all.begin(), all.end());
  std::vector<i64> out;
  for (i64 i = 0; i < k; ++i) out.push_back(all[static_cast<size_t>(i)].second);
  return out;
}

// Dense multi-head attention over n rows with a pairwise boolean mask
// allow[i*n+j], per-head distance bias -sigma_h^2 * dist(i, j), per-head
// scaling 1/sqrt(C'/H). Weight matrices wq/wk/wv are [C x C'] (head h owns
// the column block), w_out is [C' x C].
inline Matrix dense_masked_mhsa(const Matrix& x, const Matrix& positions, const std::vector<char>& allow,
                                const Matrix& wq, const Matrix& wk, const Matrix& wv, const Matrix& wo,
                                const std::vector<double>& sigma, int heads) {
  const i64 n = x.rows, c = x.cols, ci = wq.cols;
  const i64 hd = ci / heads;
  Matrix concat(n, ci);
  for (int h = 0; h < heads; ++h) {
    Matrix q(n, hd), k(n, hd), v(n, hd);
    for (i64 i = 0; i < n; ++i)
      for (i64 j = 0; j < hd; ++j) {
        double aq = 0, ak = 0, av = 0;
        for (i64 t = 0; t < c; ++t) {
          aq += x.at(i, t) * wq.at(t, h * hd + j);
          ak += x.at(i, t) * wk.at(t, h * hd + j);
          av += x.at(i, t) * wv.at(t, h * hd + j);
        }
        q.at(i, j) = aq;
        k.at(i, j) = ak;
        v.at(i, j) = av;
      }
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (i64 i = 0; i < n; ++i) {
      std::vector<double> row(static_cast<size_t>(n), -std::numeric_limits<double>::infinity());
      double mx = -std::numeric_limits<double>::infinity();
      for (i64 j = 0; j < n; ++j) {
        if (!allow[static_cast<size_t>(i * n + j)]) continue;
        double dot = 0;
        for (i64 t = 0; t < hd; ++t) dot += q.at(i, t) * k.at(j, t);
        row[static_cast<size_t>(j)] = dot * scale - sigma[static_cast<size_t>(h)] * sigma[static_cast<size_t>(h)] *
                                                        dist(positions, i, j);
        mx = std::max(mx, row[static_cast<size_t>(j)]);
      }
      double denom = 0;
      for (i64 j = 0; j < n; ++j) {
        if (row[static_cast<size_t>(j)] == -std::numeric_limits<double>::infinity()) {
          row[static_cast<size_t>(j)] = 0;
        } else {
          row[static_cast<size_t>(j)] = std::exp(row[static_cast<size_t>(j)] - mx);
          denom += row[static_cast<size_t>(j)];
        }
      }
      for (i64 t = 0; t < hd; ++t) {
        double acc = 0;
        for (i64 j = 0; j < n; ++j) acc += row[static_cast<size_t>(j)] / denom * v.at(j, t);
        concat.at(i, h * hd + t) = acc;
      }
    }
  }
  Matrix out(n, c);
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < c; ++j) {
      double acc = 0;
      for (i64 t = 0; t < ci; ++t) acc += concat.at(i, t) * wo.at(t, j);
      out.at(i, j) = acc;
    }
  return out;
}

// Least-squares solution of min ||[X, 1] W - Y||^2 via normal equations with
// partial-pivot Gaussian elimination; returns the minimal mean squared error
// over all matrix entries.
inline double least_squares_mse(const Matrix& x, const Matrix& y) {
  const i64 n = x.rows, f = x.cols + 1, o = y.cols;
  Matrix a(f, f);  // X^T X (with bias column)
  Matrix b(f, o);  // X^T Y
  auto xv = [&](i64 i, i64 j) { return j < x.cols ? x.at(i, j) : 1.0; };
  for (i64 p = 0; p < f; ++p)
    for (i64 q = 0; q < f; ++q) {
      double acc = 0;
      for (i64 i = 0; i < n; ++i) acc += xv(i, p) * xv(i, q);
      a.at(p, q) = acc;
    }
  for (i64 p = 0; p < f; ++p)
    for (i64 q = 0; q < o; ++q) {
      double acc = 0;
      for (i64 i = 0; i < n; ++i) acc += xv(i, p) * y.at(i, q);
      b.at(p, q) = acc;
    }
  // Solve a * w = b.
  for (i64 col = 0; col < f; ++col) {
    i64 piv = col;
    for (i64 r = col + 1; r < f; ++r)
      if (std::abs(a.at(r, col)) > std::abs(a.at(piv, col))) piv = r;
    if (piv != col)
      for (i64 q = 0; q < f; ++q) std::swap(a.at(col, q), a.at(piv, q));
    if (piv != col)
      for (i64 q = 0; q < o; ++q) std::swap(b.at(col, q), b.at(piv, q));
    const double diag = a.at(col, col);
    for (i64 r = 0; r < f; ++r) {
      if (r == col) continue;
      const double factor = a.at(r, col) / diag;
      for (i64 q = col; q < f; ++q) a.at(r, q) -= factor * a.at(col, q);
      for (i64 q = 0; q < o; ++q) b.at(r, q) -= factor * b.at(col, q);
    }
  }
  Matrix w(f, o);
  for (i64 p = 0; p < f; ++p)
    for (i64 q = 0; q < o; ++q) w.at(p, q) = b.at(p, q) / a.at(p, p);
  double mse = 0;
  for (i64 i = 0; i < n; ++i)
    for (i64 q = 0; q < o; ++q) {
      double pred = 0;
      for (i64 p = 0; p < f; ++p) pred += xv(i, p) * w.at(p, q);
      const double r = pred - y.at(i, q);
      mse += r * r;
    }
  return mse / static_cast<double>(n * o);
}

}  // namespace oracle
