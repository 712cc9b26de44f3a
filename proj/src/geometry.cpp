// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include "erwin/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace erwin {

void PointCloud::validate() const {
  const i64 n = positions.rows;
  const i64 d = positions.cols;
  if (n < 1) throw InputError("point cloud is empty");
  if (d != 2 && d != 3) throw InputError("point cloud dimension must be 2 or 3, got " + std::to_string(d));
  if (features && features->rows != n)
    throw InputError("feature row count " + std::to_string(features->rows) + " != point count " + std::to_string(n));
  if (batch_offsets.size() < 2 || batch_offsets.front() != 0 || batch_offsets.back() != n)
    throw InputError("batch offsets must start at 0 and end at n");
  for (size_t i = 1; i < batch_offsets.size(); ++i)
    if (batch_offsets[i] <= batch_offsets[i - 1]) throw InputError("batch offsets must be strictly increasing");
  for (double v : positions.data)
    if (!std::isfinite(v)) throw InputError("non-finite coordinate in point cloud");
}

CloudKind parse_cloud_kind(const std::string& name) {
  if (name == "uniform-box") return CloudKind::UniformBox;
  if (name == "gaussian-blobs") return CloudKind::GaussianBlobs;
  if (name == "chain-polymer") return CloudKind::ChainPolymer;
  if (name == "annulus") return CloudKind::Annulus;
  throw ConfigError("unknown cloud kind: " + name);
}

std::string cloud_kind_name(CloudKind kind) {
  switch (kind) {
    case CloudKind::UniformBox: return "uniform-box";
    case CloudKind::GaussianBlobs: return "gaussian-blobs";
    case CloudKind::ChainPolymer: return "chain-polymer";
    case CloudKind::Annulus: return "annulus";
  }
  throw ConfigError("invalid cloud kind enum value");
}

namespace {

void fill_uniform_box(Matrix& pos, Rng& rng) {
  for (double& v : pos.data) v = rng.uniform();
}

void fill_gaussian_blobs(Matrix& pos, Rng& rng) {
  // A handful of clustered modes, cluster count scales weakly with n.
  const i64 n = pos.rows;
  const int d = static_cast<int>(pos.cols);
  const i64 blobs = std::max<i64>(2, std::min<i64>(8, n / 16));
  Matrix centers(blobs, d);
  for (double& v : centers.data) v = rng.uniform();
  for (i64 i = 0; i < n; ++i) {
    const i64 b = rng.uniform_int(0, blobs - 1);
    for (int c = 0; c < d; ++c) pos.at(i, c) = centers.at(b, c) + 0.05 * rng.normal();
  }
}

void fill_chain_polymer(Matrix& pos, Rng& rng) {
  // Random walk with bond length strictly below kChainBondLength.
  const i64 n = pos.rows;
  const int d = static_cast<int>(pos.cols);
  for (int c = 0; c < d; ++c) pos.at(0, c) = 0.5;
  for (i64 i = 1; i < n; ++i) {
    double step[3] = {0, 0, 0};
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int c = 0; c < d; ++c) {
        step[c] = rng.normal();
        norm += step[c] * step[c];
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    const double bond = 0.9 * kChainBondLength * (0.5 + 0.5 * rng.uniform());
    for (int c = 0; c < d; ++c) pos.at(i, c) = pos.at(i - 1, c) + bond * step[c] / norm;
  }
}

void fill_annulus(Matrix& pos, Rng& rng) {
  const i64 n = pos.rows;
  const int d = static_cast<int>(pos.cols);
  for (i64 i = 0; i < n; ++i) {
    const double theta = 6.283185307179586 * rng.uniform();
    const double r = 0.7 + 0.3 * rng.uniform();
    pos.at(i, 0) = r * std::cos(theta);
    pos.at(i, 1) = r * std::sin(theta);
    if (d == 3) pos.at(i, 2) = 0.2 * (rng.uniform() - 0.5);
  }
}

}  // namespace

PointCloud generate(const SyntheticSpec& spec) {
  if (spec.n < 1) throw ConfigError("synthetic cloud size must be >= 1");
  if (spec.d != 2 && spec.d != 3) throw ConfigError("synthetic cloud dimension must be 2 or 3");
  PointCloud cloud;
  cloud.positions = Matrix(spec.n, spec.d);
  Rng rng(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<u64>(spec.kind) + 1);
  switch (spec.kind) {
    case CloudKind::UniformBox: fill_uniform_box(cloud.positions, rng); break;
    case CloudKind::GaussianBlobs: fill_gaussian_blobs(cloud.positions, rng); break;
    case CloudKind::ChainPolymer: fill_chain_polymer(cloud.positions, rng); break;
    case CloudKind::Annulus: fill_annulus(cloud.positions, rng); break;
  }
  cloud.batch_offsets = {0, spec.n};
  cloud.validate();
  return cloud;
}

PointCloud concat_clouds(const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw ArgError("concat_clouds: empty list");
  const int d = static_cast<int>(clouds[0].dim());
  i64 total = 0;
  i64 feat_cols = clouds[0].features ? clouds[0].features->cols : -1;
  for (const auto& c : clouds) {
    if (c.dim() != d) throw ShapeError("concat_clouds: mixed dimensions");
    const i64 fc = c.features ? c.features->cols : -1;
    if (fc != feat_cols) throw ShapeError("concat_clouds: mixed feature widths");
    total += c.size();
  }
  PointCloud out;
  out.positions = Matrix(total, d);
  if (feat_cols >= 0) out.features = Matrix(total, feat_cols);
  out.batch_offsets = {0};
  i64 row = 0;
  for (const auto& c : clouds) {
    for (i64 i = 0; i < c.size(); ++i, ++row) {
      for (int k = 0; k < d; ++k) out.positions.at(row, k) = c.positions.at(i, k);
      if (feat_cols >= 0)
        for (i64 k = 0; k < feat_cols; ++k) out.features->at(row, k) = c.features->at(i, k);
    }
    for (size_t s = 1; s < c.batch_offsets.size(); ++s)
      out.batch_offsets.push_back(out.batch_offsets.back() + (c.batch_offsets[s] - c.batch_offsets[s - 1]));
  }
  out.validate();
  return out;
}

namespace {

bool looks_like_header(const std::string& line) {
  for (char ch : line) {
    if ((ch >= '0' && ch <= '9') || ch == '.' || ch == '-' || ch == '+' || ch == ',' || ch == ' ' || ch == '\t' ||
        ch == 'e' || ch == 'E' || ch == '\r')
      continue;
    return true;
  }
  return false;
}

std::vector<double> parse_row(const std::string& line, i64 line_no) {
  std::vector<double> vals;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(cell, &pos);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": cannot parse field '" + cell + "'");
    }
    while (pos < cell.size() && (cell[pos] == ' ' || cell[pos] == '\r' || cell[pos] == '\t')) ++pos;
    if (pos != cell.size())
      throw ParseError("line " + std::to_string(line_no) + ": trailing junk in field '" + cell + "'");
    vals.push_back(v);
  }
  return vals;
}

}  // namespace

PointCloud load_csv(std::istream& in, int dim, const std::string& display_name) {
  if (dim != 2 && dim != 3) throw ConfigError("csv dimension must be 2 or 3");
  std::vector<std::vector<double>> rows;
  std::string line;
  i64 line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (first && looks_like_header(line)) {
      first = false;
      continue;
    }
    first = false;
    auto vals = parse_row(line, line_no);
    if (static_cast<int>(vals.size()) < dim)
      throw ParseError("line " + std::to_string(line_no) + ": expected at least " + std::to_string(dim) +
                       " fields, got " + std::to_string(vals.size()));
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ParseError("line " + std::to_string(line_no) + ": inconsistent field count");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError(display_name + ": no data rows");

  PointCloud cloud;
  const i64 n = static_cast<i64>(rows.size());
  const i64 extra = static_cast<i64>(rows.front().size()) - dim;
  cloud.positions = Matrix(n, dim);
  if (extra > 0) cloud.features = Matrix(n, extra);
  for (i64 i = 0; i < n; ++i) {
    for (int c = 0; c < dim; ++c) cloud.positions.at(i, c) = rows[i][c];
    for (i64 c = 0; c < extra; ++c) cloud.features->at(i, c) = rows[i][dim + c];
  }
  cloud.batch_offsets = {0, n};
  cloud.validate();
  return cloud;
}

PointCloud load_csv(const std::string& path, int dim) {
  if (path == "-") return load_csv(std::cin, dim, "<stdin>");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  return load_csv(in, dim, path);
}

void save_csv(const PointCloud& cloud, std::ostream& out) {
  const int d = static_cast<int>(cloud.dim());
  const i64 fc = cloud.features ? cloud.features->cols : 0;
  for (int c = 0; c < d; ++c) out << (c ? "," : "") << "x" << c;
  for (i64 c = 0; c < fc; ++c) out << ",f" << c;
  out << "\n";
  char buf[64];
  for (i64 i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", cloud.positions.at(i, c));
      out << (c ? "," : "") << buf;
    }
    for (i64 c = 0; c < fc; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", cloud.features->at(i, c));
      out << "," << buf;
    }
    out << "\n";
  }
}

void save_csv(const PointCloud& cloud, const std::string& path) {
  if (path == "-") {
    save_csv(cloud, std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot open file for writing: " + path);
  save_csv(cloud, out);
}

}  // namespace erwin
