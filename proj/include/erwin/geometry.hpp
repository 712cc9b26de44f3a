// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "erwin/common.hpp"

namespace erwin {

// A batch of point sets packed into one container. Segment b occupies rows
// [batch_offsets[b], batch_offsets[b+1]) of `positions` (and `features`).
struct PointCloud {
  Matrix positions;                 // [n x d]
  std::optional<Matrix> features;   // [n x C] when present
  std::vector<i64> batch_offsets;   // strictly increasing, first 0, last n

  i64 size() const { return positions.rows; }
  i64 dim() const { return positions.cols; }
  i64 num_segments() const { return static_cast<i64>(batch_offsets.size()) - 1; }

  // Throws InputError if any invariant is violated.
  void validate() const;
};

enum class CloudKind { UniformBox, GaussianBlobs, ChainPolymer, Annulus };

CloudKind parse_cloud_kind(const std::string& name);
std::string cloud_kind_name(CloudKind kind);

struct SyntheticSpec {
  CloudKind kind = CloudKind::UniformBox;
  i64 n = 0;
  int d = 3;
  u64 seed = 0;
};

// Deterministic: identical specs produce bitwise-identical clouds.
PointCloud generate(const SyntheticSpec& spec);

// Packs several clouds into one batch, concatenating rows and offsets.
PointCloud concat_clouds(const std::vector<PointCloud>& clouds);

// Maximum distance between consecutive points a chain-polymer cloud may have.
inline constexpr double kChainBondLength = 0.15;

// CSV format: header row `x0,..,x{dim-1},f0,..`; one point per row; columns
// beyond `dim` become features. Path "-" reads stdin / writes stdout.
PointCloud load_csv(const std::string& path, int dim);
PointCloud load_csv(std::istream& in, int dim, const std::string& display_name);
void save_csv(const PointCloud& cloud, const std::string& path);
void save_csv(const PointCloud& cloud, std::ostream& out);

}  // namespace erwin
