// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "erwin/tensor.hpp"

namespace erwin {

namespace detail {

// c[p x r] += a[p x q] * b[q x r]
template <typename S>
void matmul_acc(const S* a, const S* b, S* c, i64 p, i64 q, i64 r) {
  for (i64 i = 0; i < p; ++i) {
    S* crow = c + i * r;
    for (i64 k = 0; k < q; ++k) {
      const S aik = a[i * q + k];
      const S* brow = b + k * r;
      for (i64 j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[p x r] += a[p x q] * b[r x q]^T
template <typename S>
void matmul_nt_acc(const S* a, const S* b, S* c, i64 p, i64 q, i64 r) {
  for (i64 i = 0; i < p; ++i) {
    const S* arow = a + i * q;
    for (i64 j = 0; j < r; ++j) {
      const S* brow = b + j * q;
      S acc = 0;
      for (i64 k = 0; k < q; ++k) acc += arow[k] * brow[k];
      c[i * r + j] += acc;
    }
  }
}

// c[q x r] += a[p x q]^T * b[p x r]
template <typename S>
void matmul_tn_acc(const S* a, const S* b, S* c, i64 p, i64 q, i64 r) {
  for (i64 i = 0; i < p; ++i) {
    const S* arow = a + i * q;
    const S* brow = b + i * r;
    for (i64 k = 0; k < q; ++k) {
      const S aik = arow[k];
      S* crow = c + k * r;
      for (i64 j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const i64 p = a.dim(0), q = a.dim(1), r = b.dim(1);
  Tensor<S> out = Tensor<S>::zeros({p, r});
  detail::matmul_acc(a.ptr(), b.ptr(), out.ptr(), p, q, r);
  cost::add(static_cast<u64>(2 * p * q * r));
  if (Tape<S>* tape = merge_tapes<S>({&a, &b})) {
    auto ad = a.data, bd = b.data;
    const int pa = a.node, pb = b.node;
    out.tape = tape;
    out.node = tape->record({pa, pb}, out.shape, [=](Tape<S>& t, int self) {
      const S* g = t.grad_buf(self).data();
      if (pa >= 0) detail::matmul_nt_acc(g, bd->data(), t.grad_buf(pa).data(), p, r, q);
      if (pb >= 0) detail::matmul_tn_acc(ad->data(), g, t.grad_buf(pb).data(), p, q, r);
    });
  }
  return out;
}

// Batched matmul over leading dim. trans_b: b is [B x r x q] multiplied transposed.
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool trans_b = false) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const i64 batches = a.dim(0), p = a.dim(1), q = a.dim(2);
  const i64 r = trans_b ? b.dim(1) : b.dim(2);
  if ((trans_b ? b.dim(2) : b.dim(1)) != q)
    throw ShapeError("bmm: inner dims disagree for " + shape_str(a.shape) + " and " + shape_str(b.shape));
  Tensor<S> out = Tensor<S>::zeros({batches, p, r});
  for (i64 n = 0; n < batches; ++n) {
    const S* ap = a.ptr() + n * p * q;
    const S* bp = b.ptr() + n * q * r;
    S* op = out.ptr() + n * p * r;
    if (trans_b)
      detail::matmul_nt_acc(ap, bp, op, p, q, r);
    else
      detail::matmul_acc(ap, bp, op, p, q, r);
  }
  cost::add(static_cast<u64>(2 * batches * p * q * r));
  if (Tape<S>* tape = merge_tapes<S>({&a, &b})) {
    auto ad = a.data, bd = b.data;
    const int pa = a.node, pb = b.node;
    out.tape = tape;
    out.node = tape->record({pa, pb}, out.shape, [=](Tape<S>& t, int self) {
      const S* g = t.grad_buf(self).data();
      for (i64 n = 0; n < batches; ++n) {
        const S* gp = g + n * p * r;
        const S* ap = ad->data() + n * p * q;
        const S* bp = bd->data() + n * q * r;
        if (pa >= 0) {
          S* da = t.grad_buf(pa).data() + n * p * q;
          if (trans_b)
            detail::matmul_acc(gp, bp, da, p, r, q);  // dA = G * B
          else
            detail::matmul_nt_acc(gp, bp, da, p, r, q);  // dA = G * B^T
        }
        if (pb >= 0) {
          S* db = t.grad_buf(pb).data() + n * q * r;
          if (trans_b)
            detail::matmul_tn_acc(gp, ap, db, p, r, q);  // dB = G^T * A
          else
            detail::matmul_tn_acc(ap, gp, db, p, q, r);  // dB = A^T * G
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape)
    throw ShapeError("add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const i64 n = a.numel();
  Tensor<S> out = Tensor<S>::zeros(a.shape);
  for (i64 i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  cost::add(static_cast<u64>(n));
  if (Tape<S>* tape = merge_tapes<S>({&a, &b})) {
    const int pa = a.node, pb = b.node;
    out.tape = tape;
    out.node = tape->record({pa, pb}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      if (pa >= 0) {
        auto& da = t.grad_buf(pa);
        for (i64 i = 0; i < n; ++i) da[i] += g[i];
      }
      if (pb >= 0) {
        auto& db = t.grad_buf(pb);
        for (i64 i = 0; i < n; ++i) db[i] += g[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double factor) {
  const S f = static_cast<S>(factor);
  const i64 n = a.numel();
  Tensor<S> out = Tensor<S>::zeros(a.shape);
  for (i64 i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * f;
  cost::add(static_cast<u64>(n));
  if (a.tape) {
    const int pa = a.node;
    out.tape = a.tape;
    out.node = a.tape->record({pa}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& da = t.grad_buf(pa);
      for (i64 i = 0; i < n; ++i) da[i] += g[i] * f;
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, scale(b, -1.0));
}

template <typename S>
Tensor<S> hadamard(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape)
    throw ShapeError("hadamard: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const i64 n = a.numel();
  Tensor<S> out = Tensor<S>::zeros(a.shape);
  for (i64 i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  cost::add(static_cast<u64>(n));
  if (Tape<S>* tape = merge_tapes<S>({&a, &b})) {
    auto ad = a.data, bd = b.data;
    const int pa = a.node, pb = b.node;
    out.tape = tape;
    out.node = tape->record({pa, pb}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      if (pa >= 0) {
        auto& da = t.grad_buf(pa);
        for (i64 i = 0; i < n; ++i) da[i] += g[i] * (*bd)[i];
      }
      if (pb >= 0) {
        auto& db = t.grad_buf(pb);
        for (i64 i = 0; i < n; ++i) db[i] += g[i] * (*ad)[i];
      }
    });
  }
  return out;
}

// out = x * s where s has exactly one element (learnable scalar).
template <typename S>
Tensor<S> mul_scalar_tensor(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar_tensor: scale must have one element, got " + shape_str(s.shape));
  const i64 n = x.numel();
  const S sv = (*s.data)[0];
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (i64 i = 0; i < n; ++i) (*out.data)[i] = (*x.data)[i] * sv;
  cost::add(static_cast<u64>(n));
  if (Tape<S>* tape = merge_tapes<S>({&x, &s})) {
    auto xd = x.data;
    const int px = x.node, ps = s.node;
    out.tape = tape;
    out.node = tape->record({px, ps}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      if (px >= 0) {
        auto& dx = t.grad_buf(px);
        for (i64 i = 0; i < n; ++i) dx[i] += g[i] * sv;
      }
      if (ps >= 0) {
        S acc = 0;
        for (i64 i = 0; i < n; ++i) acc += g[i] * (*xd)[i];
        t.grad_buf(ps)[0] += acc;
      }
    });
  }
  return out;
}

// Broadcast add of a [c] bias over the last dimension.
template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& bias) {
  if (bias.ndim() != 1 || x.ndim() < 1 || x.dim(x.ndim() - 1) != bias.dim(0))
    throw ShapeError("add_bias: shapes " + shape_str(x.shape) + " and " + shape_str(bias.shape));
  const i64 c = bias.dim(0);
  const i64 rows = x.numel() / c;
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (i64 i = 0; i < rows; ++i)
    for (i64 j = 0; j < c; ++j) (*out.data)[i * c + j] = (*x.data)[i * c + j] + (*bias.data)[j];
  cost::add(static_cast<u64>(rows * c));
  if (Tape<S>* tape = merge_tapes<S>({&x, &bias})) {
    const int px = x.node, pb = bias.node;
    out.tape = tape;
    out.node = tape->record({px, pb}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      if (px >= 0) {
        auto& dx = t.grad_buf(px);
        for (i64 i = 0; i < rows * c; ++i) dx[i] += g[i];
      }
      if (pb >= 0) {
        auto& db = t.grad_buf(pb);
        for (i64 i = 0; i < rows; ++i)
          for (i64 j = 0; j < c; ++j) db[j] += g[i * c + j];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  const i64 n = x.numel();
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (i64 i = 0; i < n; ++i) {
    const S v = (*x.data)[i];
    (*out.data)[i] = v / (S(1) + std::exp(-v));
  }
  cost::add(static_cast<u64>(4 * n));
  if (x.tape) {
    auto xd = x.data;
    const int px = x.node;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < n; ++i) {
        const S v = (*xd)[i];
        const S sig = S(1) / (S(1) + std::exp(-v));
        dx[i] += g[i] * sig * (S(1) + v * (S(1) - sig));
      }
    });
  }
  return out;
}

// Concatenation along the last dimension; all parts share leading dims.
template <typename S>
Tensor<S> concat_lastdim(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ArgError("concat_lastdim: no operands");
  std::vector<i64> lead(parts[0].shape.begin(), parts[0].shape.end() - 1);
  i64 total_c = 0;
  for (const auto& p : parts) {
    std::vector<i64> pl(p.shape.begin(), p.shape.end() - 1);
    if (pl != lead) throw ShapeError("concat_lastdim: leading dims disagree: " + shape_str(p.shape));
    total_c += p.dim(p.ndim() - 1);
  }
  i64 rows = 1;
  for (i64 d : lead) rows *= d;
  std::vector<i64> out_shape = lead;
  out_shape.push_back(total_c);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  i64 off = 0;
  for (const auto& p : parts) {
    const i64 c = p.dim(p.ndim() - 1);
    for (i64 i = 0; i < rows; ++i)
      for (i64 j = 0; j < c; ++j) (*out.data)[i * total_c + off + j] = (*p.data)[i * c + j];
    off += c;
  }
  Tape<S>* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.tape) continue;
    if (tape && tape != p.tape) throw ArgError("operands recorded on different tapes");
    tape = p.tape;
  }
  if (tape) {
    std::vector<int> ids;
    std::vector<i64> widths;
    for (const auto& p : parts) {
      ids.push_back(p.node);
      widths.push_back(p.dim(p.ndim() - 1));
    }
    out.tape = tape;
    out.node = tape->record(ids, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      i64 o = 0;
      for (size_t k = 0; k < ids.size(); ++k) {
        const i64 c = widths[k];
        if (ids[k] >= 0) {
          auto& dp = t.grad_buf(ids[k]);
          for (i64 i = 0; i < rows; ++i)
            for (i64 j = 0; j < c; ++j) dp[i * c + j] += g[i * total_c + o + j];
        }
        o += c;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_lastdim(const Tensor<S>& a, const Tensor<S>& b) {
  return concat_lastdim(std::vector<Tensor<S>>{a, b});
}

// Row-wise concatenation of 2-d tensors with equal widths.
template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ArgError("concat_rows: no operands");
  const i64 c = parts[0].dim(1);
  i64 total_rows = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(1) != c) throw ShapeError("concat_rows: width mismatch at " + shape_str(p.shape));
    total_rows += p.dim(0);
  }
  Tensor<S> out = Tensor<S>::zeros({total_rows, c});
  i64 off = 0;
  for (const auto& p : parts) {
    for (i64 i = 0; i < p.dim(0) * c; ++i) (*out.data)[off * c + i] = (*p.data)[i];
    off += p.dim(0);
  }
  Tape<S>* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.tape) continue;
    if (tape && tape != p.tape) throw ArgError("operands recorded on different tapes");
    tape = p.tape;
  }
  if (tape) {
    std::vector<int> ids;
    std::vector<i64> row_counts;
    for (const auto& p : parts) {
      ids.push_back(p.node);
      row_counts.push_back(p.dim(0));
    }
    out.tape = tape;
    out.node = tape->record(ids, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      i64 o = 0;
      for (size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] >= 0) {
          auto& dp = t.grad_buf(ids[k]);
          for (i64 i = 0; i < row_counts[k] * c; ++i) dp[i] += g[o * c + i];
        }
        o += row_counts[k];
      }
    });
  }
  return out;
}

// Contiguous row-major reshape; shares storage, gradient passes through.
// Covers the `(n g) c <-> n (g c)` leaf-regrouping used by pooling.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<i64> new_shape) {
  i64 n = 1;
  for (i64 d : new_shape) n *= d;
  if (n != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(new_shape));
  Tensor<S> out;
  out.shape = std::move(new_shape);
  out.data = x.data;
  if (x.tape) {
    const int px = x.node;
    const i64 count = n;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < count; ++i) dx[i] += g[i];
    });
  }
  return out;
}

// [rows x (g*c)] -> [(rows*g) x c]
template <typename S>
Tensor<S> reshape_split(const Tensor<S>& x, i64 g) {
  if (x.ndim() != 2 || x.dim(1) % g != 0)
    throw ShapeError("reshape_split: " + shape_str(x.shape) + " not divisible into " + std::to_string(g) + " groups");
  return reshape(x, {x.dim(0) * g, x.dim(1) / g});
}

// [(rows*g) x c] -> [rows x (g*c)]
template <typename S>
Tensor<S> reshape_merge(const Tensor<S>& x, i64 g) {
  if (x.ndim() != 2 || x.dim(0) % g != 0)
    throw ShapeError("reshape_merge: " + shape_str(x.shape) + " rows not divisible by " + std::to_string(g));
  return reshape(x, {x.dim(0) / g, x.dim(1) * g});
}

// Row gather. Indices outside [0, x.rows) produce zero rows; the backward
// pass scatter-adds, so duplicate indices accumulate.
template <typename S>
Tensor<S> take_rows(const Tensor<S>& x, const std::vector<i64>& idx) {
  if (x.ndim() != 2) throw ShapeError("take_rows expects 2-d input, got " + shape_str(x.shape));
  const i64 c = x.dim(1), src_rows = x.dim(0);
  const i64 m = static_cast<i64>(idx.size());
  Tensor<S> out = Tensor<S>::zeros({m, c});
  for (i64 i = 0; i < m; ++i) {
    const i64 s = idx[static_cast<size_t>(i)];
    if (s < 0 || s >= src_rows) continue;
    for (i64 j = 0; j < c; ++j) (*out.data)[i * c + j] = (*x.data)[s * c + j];
  }
  if (x.tape) {
    const int px = x.node;
    auto indices = idx;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < m; ++i) {
        const i64 s = indices[static_cast<size_t>(i)];
        if (s < 0 || s >= src_rows) continue;
        for (i64 j = 0; j < c; ++j) dx[s * c + j] += g[i * c + j];
      }
    });
  }
  return out;
}

// Column slice [lo, hi) of a 2-d tensor.
template <typename S>
Tensor<S> col_slice(const Tensor<S>& x, i64 lo, i64 hi) {
  if (x.ndim() != 2 || lo < 0 || hi > x.dim(1) || lo >= hi)
    throw ShapeError("col_slice: range [" + std::to_string(lo) + "," + std::to_string(hi) + ") of " +
                     shape_str(x.shape));
  const i64 rows = x.dim(0), c = x.dim(1), w = hi - lo;
  Tensor<S> out = Tensor<S>::zeros({rows, w});
  for (i64 i = 0; i < rows; ++i)
    for (i64 j = 0; j < w; ++j) (*out.data)[i * w + j] = (*x.data)[i * c + lo + j];
  if (x.tape) {
    const int px = x.node;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < rows; ++i)
        for (i64 j = 0; j < w; ++j) dx[i * c + lo + j] += g[i * w + j];
    });
  }
  return out;
}

// Per-row constant scaling: out[i,:] = x[i,:] * factors[i].
template <typename S>
Tensor<S> row_scale(const Tensor<S>& x, const std::vector<S>& factors) {
  if (x.ndim() != 2 || static_cast<i64>(factors.size()) != x.dim(0))
    throw ShapeError("row_scale: " + std::to_string(factors.size()) + " factors for " + shape_str(x.shape));
  const i64 rows = x.dim(0), c = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (i64 i = 0; i < rows; ++i)
    for (i64 j = 0; j < c; ++j) (*out.data)[i * c + j] = (*x.data)[i * c + j] * factors[static_cast<size_t>(i)];
  cost::add(static_cast<u64>(rows * c));
  if (x.tape) {
    const int px = x.node;
    auto f = factors;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < rows; ++i)
        for (i64 j = 0; j < c; ++j) dx[i * c + j] += g[i * c + j] * f[static_cast<size_t>(i)];
    });
  }
  return out;
}

// Sum over the middle axis of [a x b x c].
template <typename S>
Tensor<S> sum_mid(const Tensor<S>& x) {
  if (x.ndim() != 3) throw ShapeError("sum_mid expects 3-d input, got " + shape_str(x.shape));
  const i64 a = x.dim(0), b = x.dim(1), c = x.dim(2);
  Tensor<S> out = Tensor<S>::zeros({a, c});
  for (i64 i = 0; i < a; ++i)
    for (i64 k = 0; k < b; ++k)
      for (i64 j = 0; j < c; ++j) (*out.data)[i * c + j] += (*x.data)[(i * b + k) * c + j];
  cost::add(static_cast<u64>(a * b * c));
  if (x.tape) {
    const int px = x.node;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < a; ++i)
        for (i64 k = 0; k < b; ++k)
          for (i64 j = 0; j < c; ++j) dx[(i * b + k) * c + j] += g[i * c + j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  const i64 n = x.numel();
  S acc = 0;
  for (i64 i = 0; i < n; ++i) acc += (*x.data)[i];
  cost::add(static_cast<u64>(n));
  Tensor<S> out = Tensor<S>::from_values({1}, {acc});
  if (x.tape) {
    const int px = x.node;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const S g = t.grad_buf(self)[0];
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < n; ++i) dx[i] += g;
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// Numerically stabilized softmax over the last dimension with an optional
// additive mask (same shape, entries finite or -inf). -inf entries get weight
// exactly zero. Rows masked everywhere yield zero rows; their count is
// reported through all_masked_rows when provided.
template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x, const Tensor<S>* mask = nullptr, i64* all_masked_rows = nullptr) {
  if (mask && mask->shape != x.shape)
    throw ShapeError("softmax mask shape " + shape_str(mask->shape) + " != input " + shape_str(x.shape));
  const i64 w = x.dim(x.ndim() - 1);
  const i64 rows = x.numel() / w;
  const S neg_inf = -std::numeric_limits<S>::infinity();
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  i64 dead_rows = 0;
  for (i64 i = 0; i < rows; ++i) {
    const S* xr = x.ptr() + i * w;
    const S* mr = mask ? mask->ptr() + i * w : nullptr;
    S* yr = out.ptr() + i * w;
    S mx = neg_inf;
    for (i64 j = 0; j < w; ++j) {
      const S z = mr ? xr[j] + mr[j] : xr[j];
      if (z > mx) mx = z;
    }
    if (mx == neg_inf) {
      ++dead_rows;
      continue;  // fully masked row stays zero
    }
    S denom = 0;
    for (i64 j = 0; j < w; ++j) {
      const S z = mr ? xr[j] + mr[j] : xr[j];
      const S e = (z == neg_inf) ? S(0) : std::exp(z - mx);
      yr[j] = e;
      denom += e;
    }
    const S inv = S(1) / denom;
    for (i64 j = 0; j < w; ++j) yr[j] *= inv;
  }
  if (all_masked_rows) *all_masked_rows = dead_rows;
  cost::add(static_cast<u64>(5 * rows * w));
  if (x.tape) {
    auto yd = out.data;
    const int px = x.node;
    out.tape = x.tape;
    out.node = x.tape->record({px}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& dx = t.grad_buf(px);
      for (i64 i = 0; i < rows; ++i) {
        const S* yr = yd->data() + i * w;
        const S* gr = g.data() + i * w;
        S dot = 0;
        for (i64 j = 0; j < w; ++j) dot += gr[j] * yr[j];
        for (i64 j = 0; j < w; ++j) dx[i * w + j] += yr[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

// Last-dimension layer normalization with affine output, eps = 1e-5.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias) {
  const i64 c = x.dim(x.ndim() - 1);
  if (gain.ndim() != 1 || bias.ndim() != 1 || gain.dim(0) != c || bias.dim(0) != c)
    throw ShapeError("layer_norm: affine shapes " + shape_str(gain.shape) + "/" + shape_str(bias.shape) +
                     " for input " + shape_str(x.shape));
  const i64 rows = x.numel() / c;
  const S eps = static_cast<S>(1e-5);
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(rows * c));
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  for (i64 i = 0; i < rows; ++i) {
    const S* xr = x.ptr() + i * c;
    S mean = 0;
    for (i64 j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<S>(c);
    S var = 0;
    for (i64 j = 0; j < c; ++j) {
      const S d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<S>(c);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(i)] = inv;
    for (i64 j = 0; j < c; ++j) {
      const S h = (xr[j] - mean) * inv;
      (*xhat)[static_cast<size_t>(i * c + j)] = h;
      (*out.data)[i * c + j] = h * (*gain.data)[j] + (*bias.data)[j];
    }
  }
  cost::add(static_cast<u64>(8 * rows * c));
  if (Tape<S>* tape = merge_tapes<S>({&x, &gain, &bias})) {
    const int px = x.node, pg = gain.node, pb = bias.node;
    auto gd = gain.data;
    out.tape = tape;
    out.node = tape->record({px, pg, pb}, out.shape, [=](Tape<S>& t, int self) {
      const auto& g = t.grad_buf(self);
      for (i64 i = 0; i < rows; ++i) {
        const S* gr = g.data() + i * c;
        const S* hr = xhat->data() + i * c;
        if (pb >= 0) {
          auto& db = t.grad_buf(pb);
          for (i64 j = 0; j < c; ++j) db[j] += gr[j];
        }
        if (pg >= 0) {
          auto& dg = t.grad_buf(pg);
          for (i64 j = 0; j < c; ++j) dg[j] += gr[j] * hr[j];
        }
        if (px >= 0) {
          auto& dx = t.grad_buf(px);
          S mean_dh = 0, mean_dh_h = 0;
          for (i64 j = 0; j < c; ++j) {
            const S dh = gr[j] * (*gd)[j];
            mean_dh += dh;
            mean_dh_h += dh * hr[j];
          }
          mean_dh /= static_cast<S>(c);
          mean_dh_h /= static_cast<S>(c);
          const S inv = (*inv_std)[static_cast<size_t>(i)];
          for (i64 j = 0; j < c; ++j) {
            const S dh = gr[j] * (*gd)[j];
            dx[i * c + j] += inv * (dh - mean_dh - hr[j] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

// Gated feed-forward: (silu(x W1) . (x W2)) W3.
template <typename S>
Tensor<S> swiglu(const Tensor<S>& x, const Tensor<S>& w_in1, const Tensor<S>& w_in2, const Tensor<S>& w_out) {
  return matmul(hadamard(silu(matmul(x, w_in1)), matmul(x, w_in2)), w_out);
}

template <typename S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  Tensor<S> d = sub(pred, target);
  return mean_all(hadamard(d, d));
}

}  // namespace erwin
