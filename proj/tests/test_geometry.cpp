// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "erwin/geometry.hpp"

using namespace erwin;

TEST_CASE("generate: single uniform point stays in the unit box") {
  const PointCloud cloud = generate({CloudKind::UniformBox, 1, 2, 0});
  CHECK(cloud.size() == 1);
  CHECK(cloud.dim() == 2);
  CHECK(cloud.batch_offsets == std::vector<i64>{0, 1});
  CHECK(cloud.positions.at(0, 0) >= 0.0);
  CHECK(cloud.positions.at(0, 0) < 1.0);
  CHECK(cloud.positions.at(0, 1) >= 0.0);
  CHECK(cloud.positions.at(0, 1) < 1.0);
  CHECK_FALSE(cloud.features.has_value());
}

TEST_CASE("generate: identical specs give bitwise-identical clouds") {
  const PointCloud a = generate({CloudKind::GaussianBlobs, 1000, 3, 7});
  const PointCloud b = generate({CloudKind::GaussianBlobs, 1000, 3, 7});
  REQUIRE(a.positions.data.size() == b.positions.data.size());
  CHECK(a.positions.data == b.positions.data);
}

TEST_CASE("generate: chain polymer keeps bond lengths bounded") {
  const PointCloud cloud = generate({CloudKind::ChainPolymer, 64, 3, 1});
  double max_bond = 0;
  for (i64 i = 1; i < cloud.size(); ++i) {
    double acc = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = cloud.positions.at(i, c) - cloud.positions.at(i - 1, c);
      acc += d * d;
    }
    max_bond = std::max(max_bond, std::sqrt(acc));
  }
  CHECK(max_bond <= kChainBondLength);
  CHECK(max_bond > 0.0);
}

TEST_CASE("generate: every kind is deterministic and valid") {
  for (const char* name : {"uniform-box", "gaussian-blobs", "chain-polymer", "annulus"}) {
    const CloudKind kind = parse_cloud_kind(name);
    CHECK(cloud_kind_name(kind) == name);
    const PointCloud a = generate({kind, 37, 3, 11});
    const PointCloud b = generate({kind, 37, 3, 11});
    CHECK(a.positions.data == b.positions.data);
  }
}

TEST_CASE("generate: invalid spec is a configuration error") {
  CHECK_THROWS_AS(generate({CloudKind::UniformBox, 0, 3, 0}), ConfigError);
  CHECK_THROWS_AS(generate({CloudKind::UniformBox, 4, 5, 0}), ConfigError);
  CHECK_THROWS_AS(parse_cloud_kind("torus"), ConfigError);
}

TEST_CASE("load_csv: positional columns only") {
  std::istringstream in("0,0\n1,0\n0,1\n");
  const PointCloud cloud = load_csv(in, 2, "<test>");
  CHECK(cloud.size() == 3);
  CHECK_FALSE(cloud.features.has_value());
  CHECK(cloud.positions.at(1, 0) == 1.0);
  CHECK(cloud.positions.at(2, 1) == 1.0);
}

TEST_CASE("load_csv: extra columns become features, row order preserved") {
  std::istringstream in("x0,x1,x2,f0,f1\n1,2,3,4,5\n6,7,8,9,10\n");
  const PointCloud cloud = load_csv(in, 3, "<test>");
  CHECK(cloud.size() == 2);
  REQUIRE(cloud.features.has_value());
  CHECK(cloud.features->cols == 2);
  CHECK(cloud.features->at(0, 0) == 4.0);
  CHECK(cloud.features->at(1, 1) == 10.0);
  CHECK(cloud.positions.at(1, 2) == 8.0);
}

TEST_CASE("load_csv: malformed rows carry line numbers") {
  std::istringstream bad("0,0,0\n1,oops,1\n");
  try {
    (void)load_csv(bad, 3, "<test>");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::istringstream empty("");
  CHECK_THROWS_AS((void)load_csv(empty, 3, "<test>"), ParseError);

  std::istringstream narrow("1,2\n");
  CHECK_THROWS_AS((void)load_csv(narrow, 3, "<test>"), ParseError);
}

TEST_CASE("save/load round trip is exact") {
  PointCloud cloud = generate({CloudKind::Annulus, 25, 3, 3});
  Matrix feats(25, 2);
  Rng rng(5);
  for (double& v : feats.data) v = rng.normal();
  cloud.features = feats;

  std::ostringstream out;
  save_csv(cloud, out);
  std::istringstream in(out.str());
  const PointCloud back = load_csv(in, 3, "<roundtrip>");
  CHECK(back.positions.data == cloud.positions.data);
  REQUIRE(back.features.has_value());
  CHECK(back.features->data == cloud.features->data);
}

TEST_CASE("PointCloud validation rejects broken invariants") {
  PointCloud cloud = generate({CloudKind::UniformBox, 4, 2, 0});
  cloud.positions.at(2, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(cloud.validate(), InputError);

  PointCloud offsets = generate({CloudKind::UniformBox, 4, 2, 0});
  offsets.batch_offsets = {0, 3};
  CHECK_THROWS_AS(offsets.validate(), InputError);

  PointCloud feats = generate({CloudKind::UniformBox, 4, 2, 0});
  feats.features = Matrix(3, 1);
  CHECK_THROWS_AS(feats.validate(), InputError);
}

TEST_CASE("concat_clouds packs segments with cumulative offsets") {
  const PointCloud a = generate({CloudKind::UniformBox, 3, 2, 1});
  const PointCloud b = generate({CloudKind::UniformBox, 5, 2, 2});
  const PointCloud packed = concat_clouds({a, b});
  CHECK(packed.size() == 8);
  CHECK(packed.batch_offsets == std::vector<i64>{0, 3, 8});
  CHECK(packed.positions.at(3, 0) == b.positions.at(0, 0));
}
