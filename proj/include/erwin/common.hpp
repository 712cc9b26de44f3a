// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace erwin {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Error hierarchy. ConfigError/ParseError/ArgError map to CLI exit code 2,
// everything else to 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ArgError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct RangeError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};

// Row-major dense double matrix used by the geometry and tree modules.
struct Matrix {
  i64 rows = 0;
  i64 cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(i64 r, i64 c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r * c), fill) {}

  double& at(i64 r, i64 c) { return data[static_cast<size_t>(r * cols + c)]; }
  double at(i64 r, i64 c) const { return data[static_cast<size_t>(r * cols + c)]; }
  double* row(i64 r) { return data.data() + r * cols; }
  const double* row(i64 r) const { return data.data() + r * cols; }
  bool empty() const { return rows == 0 || cols == 0; }
};

// Deterministic PRNG. splitmix64 core with hand-rolled uniform/normal draws,
// so streams are identical across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(u64 seed) : state_(seed) {}

  u64 next_u64() {
    u64 z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  i64 uniform_int(i64 lo, i64 hi) {  // inclusive range [lo, hi]
    return lo + static_cast<i64>(next_u64() % static_cast<u64>(hi - lo + 1));
  }

  // Standard normal via Box-Muller; one value per call, cached pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  u64 state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace erwin
