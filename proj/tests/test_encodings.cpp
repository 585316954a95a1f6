#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "blockgcn/encodings.hpp"
#include "blockgcn/gradcheck.hpp"
#include "blockgcn/rng.hpp"
#include "blockgcn/skeleton.hpp"
#include "blockgcn/tensor_ops.hpp"
#include "support/oracles.hpp"

using namespace blockgcn;

namespace {

DistanceMatrix path3_distances() {
  return shortest_path_distances(Skeleton::from_edges(3, {{0, 1}, {1, 2}}));
}

}  // namespace

TEST_CASE("distance table lookup") {
  TopoEncoding enc = TopoEncoding::make(2, false, 0, false);
  enc.table = Tensor::from_data({3}, {0.0, 0.5, -0.25});
  const Tensor b = build_B(enc, path3_distances());
  const Tensor want = Tensor::from_data(
      {3, 3}, {0.0, 0.5, -0.25, 0.5, 0.0, 0.5, -0.25, 0.5, 0.0});
  CHECK(max_abs_diff(b, want) == 0.0);

  // Zero table stays a zero matrix, with or without normalization.
  const TopoEncoding zero = TopoEncoding::make(2, false, 0, true);
  const Tensor bz = build_B(zero, path3_distances());
  for (std::int64_t i = 0; i < bz.size(); ++i) CHECK(bz[i] == 0.0);

  // One-entry-short table is rejected.
  TopoEncoding tight = TopoEncoding::make(1, false, 0, false);
  CHECK_THROWS_AS(build_B(tight, path3_distances()), ValueError);
}

TEST_CASE("table starts at zero in both modes") {
  const TopoEncoding shared = TopoEncoding::make(4, false, 0, true);
  CHECK(shared.table.ndim() == 1);
  CHECK(shared.table_len() == 5);
  for (std::int64_t i = 0; i < shared.table.size(); ++i) CHECK(shared.table[i] == 0.0);

  const TopoEncoding fw = TopoEncoding::make(4, true, 8, true);
  CHECK(fw.table.ndim() == 2);
  CHECK(fw.table.dim(1) == 8);
  for (std::int64_t i = 0; i < fw.table.size(); ++i) CHECK(fw.table[i] == 0.0);
}

TEST_CASE("unnormalized table gradient counts pairs per distance") {
  // d(sum B)/d(table[k]) is the number of joint pairs at distance k.
  const DistanceMatrix d = path3_distances();
  TopoEncoding enc = TopoEncoding::make(2, false, 0, false);
  Rng rng(4);
  for (std::int64_t i = 0; i < enc.table.size(); ++i) enc.table[i] = rng.uniform(-1, 1);

  Tensor g = Tensor::full({3, 3}, 1.0);
  Tensor grad({3});
  build_B_backward(enc, d, g, grad);
  CHECK(grad[0] == 3.0);  // the diagonal
  CHECK(grad[1] == 4.0);  // (0,1),(1,0),(1,2),(2,1)
  CHECK(grad[2] == 2.0);  // (0,2),(2,0)
}

TEST_CASE("row normalization produces unit rows away from the floor") {
  const Skeleton ntu = preset("ntu25");
  const DistanceMatrix d = shortest_path_distances(ntu);
  TopoEncoding enc = TopoEncoding::make(d.max_entry(), false, 0, true);
  Rng rng(8);
  for (std::int64_t i = 0; i < enc.table.size(); ++i) enc.table[i] = rng.uniform(0.5, 1.5);

  const Tensor b = build_B(enc, d);
  const std::int64_t v = ntu.num_joints;
  for (std::int64_t i = 0; i < v; ++i) {
    double sq = 0.0;
    for (std::int64_t j = 0; j < v; ++j) sq += b[i * v + j] * b[i * v + j];
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rows below the norm floor are scaled linearly") {
  // A row of tiny entries is divided by the floor constant 0.1 instead of
  // being blown up to unit length.
  const DistanceMatrix d = path3_distances();
  TopoEncoding enc = TopoEncoding::make(2, false, 0, true);
  enc.table = Tensor::from_data({3}, {1e-3, 2e-3, 3e-3});
  const Tensor b = build_B(enc, d);
  CHECK(b.at({0, 0}) == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(b.at({0, 1}) == doctest::Approx(2e-2).epsilon(1e-12));
  CHECK(b.at({0, 2}) == doctest::Approx(3e-2).epsilon(1e-12));
}

TEST_CASE("normalized table gradients match central differences") {
  const Skeleton tiny = preset("tiny5");
  const DistanceMatrix d = shortest_path_distances(tiny);
  Rng rng(17);
  for (const bool feature_wise : {false, true}) {
    TopoEncoding enc = TopoEncoding::make(d.max_entry(), feature_wise, 4, true);
    // Keep the rows comfortably above the floor so the check stays in the
    // smooth regime.
    for (std::int64_t i = 0; i < enc.table.size(); ++i) enc.table[i] = rng.uniform(0.3, 1.0);
    Tensor g(build_B(enc, d).shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = rng.uniform(-1, 1);

    Tensor grad(enc.table.shape());
    build_B_backward(enc, d, g, grad);
    auto loss = [&]() {
      const Tensor b = build_B(enc, d);
      double acc = 0.0;
      for (std::int64_t i = 0; i < b.size(); ++i) acc += g[i] * b[i];
      return acc;
    };
    const GradCheckReport rep = gradcheck({{"table", &enc.table, &grad}}, loss, 1e-6);
    CHECK(rep.max_rel_error <= 1e-6);
  }
}

TEST_CASE("relabeling joints permutes the encoding consistently") {
  Rng rng(66);
  for (int trial = 0; trial < 30; ++trial) {
    const std::int64_t v = 3 + static_cast<std::int64_t>(rng.next_below(8));
    const auto edges = oracle::random_connected_graph(rng, v);
    std::vector<std::int64_t> perm(static_cast<std::size_t>(v));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    std::vector<std::pair<std::int64_t, std::int64_t>> relabeled;
    for (const auto& [a, b] : edges) {
      relabeled.emplace_back(perm[static_cast<std::size_t>(a)],
                             perm[static_cast<std::size_t>(b)]);
    }
    const Skeleton s1 = Skeleton::from_edges(v, edges, 0);
    const Skeleton s2 = Skeleton::from_edges(v, relabeled, perm[0]);
    const DistanceMatrix d1 = shortest_path_distances(s1);
    const DistanceMatrix d2 = shortest_path_distances(s2);

    // Quarter-step table values keep every row's sum of squares exactly
    // representable, so normalization cannot depend on the summation order
    // and equivariance holds bit for bit.
    TopoEncoding enc = TopoEncoding::make(std::max(d1.max_entry(), d2.max_entry()), false, 0, true);
    for (std::int64_t i = 0; i < enc.table.size(); ++i) {
      const double sign = rng.next_below(2) == 0 ? 1.0 : -1.0;
      enc.table[i] = sign * 0.25 * static_cast<double>(1 + rng.next_below(8));
    }
    const Tensor b1 = build_B(enc, d1);
    const Tensor b2 = build_B(enc, d2);
    // Without normalization the lookup permutes bit for bit at any table.
    TopoEncoding raw = enc;
    raw.l2_normalize = false;
    for (std::int64_t i = 0; i < raw.table.size(); ++i) raw.table[i] = rng.uniform(-1, 1);
    const Tensor r1 = build_B(raw, d1);
    const Tensor r2 = build_B(raw, d2);
    for (std::int64_t i = 0; i < v; ++i) {
      for (std::int64_t j = 0; j < v; ++j) {
        const std::int64_t pi = perm[static_cast<std::size_t>(i)];
        const std::int64_t pj = perm[static_cast<std::size_t>(j)];
        REQUIRE(b1[i * v + j] == b2[pi * v + pj]);
        REQUIRE(r1[i * v + j] == r2[pi * v + pj]);
      }
    }
  }
}

TEST_CASE("temporal mean of relative coordinates") {
  // Constant sequence: the mean equals any single frame's offsets.
  Tensor seq({2, 3, 3});
  Rng rng(12);
  for (std::int64_t vv = 0; vv < 3; ++vv) {
    for (std::int64_t c = 0; c < 3; ++c) {
      const double val = rng.uniform(-1, 1);
      seq[(0 * 3 + vv) * 3 + c] = val;
      seq[(1 * 3 + vv) * 3 + c] = val;
    }
  }
  const Tensor r = temporal_mean_relative(seq);
  CHECK(r.dim(0) == 3);
  CHECK(r.dim(2) == 3);
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 3; ++j) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const double want = seq[(0 * 3 + i) * 3 + c] - seq[(0 * 3 + j) * 3 + c];
        CHECK(r[(i * 3 + j) * 3 + c] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  // Antisymmetry holds exactly on arbitrary input.
  Tensor seq2({4, 5, 3});
  for (std::int64_t i = 0; i < seq2.size(); ++i) seq2[i] = rng.uniform(-2, 2);
  const Tensor r2 = temporal_mean_relative(seq2);
  for (std::int64_t i = 0; i < 5; ++i) {
    for (std::int64_t j = 0; j < 5; ++j) {
      for (std::int64_t c = 0; c < 3; ++c) {
        CHECK(r2[(i * 5 + j) * 3 + c] == -r2[(j * 5 + i) * 3 + c]);
      }
    }
  }

  // Two frames: mean is the midpoint of the per-frame offsets.
  Tensor two({2, 2, 3});
  for (std::int64_t i = 0; i < two.size(); ++i) two[i] = rng.uniform(-1, 1);
  const Tensor rm = temporal_mean_relative(two);
  for (std::int64_t c = 0; c < 3; ++c) {
    const double f0 = two[(0 * 2 + 0) * 3 + c] - two[(0 * 2 + 1) * 3 + c];
    const double f1 = two[(1 * 2 + 0) * 3 + c] - two[(1 * 2 + 1) * 3 + c];
    CHECK(rm[(0 * 2 + 1) * 3 + c] == doctest::Approx(0.5 * (f0 + f1)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(temporal_mean_relative(Tensor({0, 2, 3})), ValueError);
}

TEST_CASE("pairwise mlp output") {
  Rng rng(23);
  StatEncoding enc = StatEncoding::init(6, true, 4, rng);
  CHECK(enc.hidden() == 6);
  CHECK(enc.out_channels() == 4);

  // With zero weights the output is the second bias everywhere.
  StatEncoding flat = enc;
  flat.w1.fill(0.0);
  flat.b1.fill(0.0);
  flat.w2.fill(0.0);
  for (std::int64_t i = 0; i < 4; ++i) flat.b2[i] = 0.5 + static_cast<double>(i);
  Tensor rbar({3, 3, 3});
  for (std::int64_t i = 0; i < rbar.size(); ++i) rbar[i] = rng.uniform(-1, 1);
  const Tensor c = build_C(flat, rbar);
  CHECK(c.dim(0) == 3);
  CHECK(c.dim(2) == 4);
  for (std::int64_t i = 0; i < 9; ++i) {
    for (std::int64_t d = 0; d < 4; ++d) {
      CHECK(c[i * 4 + d] == flat.b2[d]);
    }
  }

  // Every diagonal pair sees rbar = 0, so all diagonal outputs coincide.
  Tensor seq({5, 4, 3});
  for (std::int64_t i = 0; i < seq.size(); ++i) seq[i] = rng.uniform(-1, 1);
  const Tensor r = temporal_mean_relative(seq);
  const StatEncoding enc4 = StatEncoding::init(6, true, 4, rng);
  const Tensor c4 = build_C(enc4, r);
  for (std::int64_t i = 1; i < 4; ++i) {
    for (std::int64_t d = 0; d < 4; ++d) {
      CHECK(c4[((i * 4) + i) * 4 + d] == c4[0 * 4 + d]);
    }
  }
}

TEST_CASE("translation invariance of the statistical encoding is exact") {
  // Coordinates on a 2^-10 grid plus dyadic offsets keep every shifted value
  // exactly representable, so the pairwise differences cancel the offset with
  // no rounding at all.
  Rng rng(29);
  Tensor seq({6, 5, 3});
  for (std::int64_t i = 0; i < seq.size(); ++i) {
    seq[i] = (static_cast<double>(rng.next_below(4097)) - 2048.0) / 1024.0;
  }
  Tensor shifted = seq;
  const double offset[3] = {12.25, -3.5, 0.75};
  for (std::int64_t t = 0; t < 6; ++t) {
    for (std::int64_t v = 0; v < 5; ++v) {
      for (std::int64_t c = 0; c < 3; ++c) {
        shifted[(t * 5 + v) * 3 + c] += offset[c];
      }
    }
  }
  const StatEncoding enc = StatEncoding::init(8, true, 4, rng);
  const Tensor c1 = build_C(enc, temporal_mean_relative(seq));
  const Tensor c2 = build_C(enc, temporal_mean_relative(shifted));
  CHECK(max_abs_diff(c1, c2) == 0.0);
}

TEST_CASE("feature-wise mode generalizes shared mode") {
  Rng rng(31);
  StatEncoding shared = StatEncoding::init(5, false, 4, rng);
  CHECK(shared.out_channels() == 1);

  // Feature-wise encoding whose output rows all equal the shared row.
  StatEncoding fw = shared;
  fw.feature_wise = true;
  fw.w2 = Tensor({5, 4});
  fw.b2 = Tensor({4});
  for (std::int64_t h = 0; h < 5; ++h) {
    for (std::int64_t d = 0; d < 4; ++d) fw.w2[h * 4 + d] = shared.w2[h];
  }
  for (std::int64_t d = 0; d < 4; ++d) fw.b2[d] = shared.b2[0];

  Tensor rbar({4, 4, 3});
  for (std::int64_t i = 0; i < rbar.size(); ++i) rbar[i] = rng.uniform(-1, 1);
  const Tensor cs = build_C(shared, rbar);
  const Tensor cf = build_C(fw, rbar);
  REQUIRE(cs.dim(2) == 1);
  REQUIRE(cf.dim(2) == 4);
  for (std::int64_t i = 0; i < 16; ++i) {
    for (std::int64_t d = 0; d < 4; ++d) {
      CHECK(cf[i * 4 + d] == cs[i]);
    }
  }
}

TEST_CASE("mlp parameter gradients match central differences") {
  Rng rng(37);
  StatEncoding enc = StatEncoding::init(6, true, 3, rng);
  Tensor rbar({4, 4, 3});
  for (std::int64_t i = 0; i < rbar.size(); ++i) rbar[i] = rng.uniform(-1, 1);
  Tensor g({4, 4, 3});
  for (std::int64_t i = 0; i < g.size(); ++i) g[i] = rng.uniform(-1, 1);

  StatActivations acts;
  build_C(enc, rbar, &acts);
  Tensor gw1(enc.w1.shape()), gb1(enc.b1.shape()), gw2(enc.w2.shape()), gb2(enc.b2.shape());
  build_C_backward(enc, rbar, acts, g, gw1, gb1, gw2, gb2);

  auto loss = [&]() {
    const Tensor c = build_C(enc, rbar);
    double acc = 0.0;
    for (std::int64_t i = 0; i < c.size(); ++i) acc += g[i] * c[i];
    return acc;
  };
  const GradCheckReport rep = gradcheck({{"w1", &enc.w1, &gw1},
                                         {"b1", &enc.b1, &gb1},
                                         {"w2", &enc.w2, &gw2},
                                         {"b2", &enc.b2, &gb2}},
                                        loss, 1e-5);
  CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("mlp init stays inside the fan-in bound") {
  Rng rng(41);
  const StatEncoding enc = StatEncoding::init(64, true, 16, rng);
  const double bound1 = 1.0 / std::sqrt(3.0);
  const double bound2 = 1.0 / std::sqrt(64.0);
  for (std::int64_t i = 0; i < enc.w1.size(); ++i) {
    CHECK(std::abs(enc.w1[i]) <= bound1);
  }
  for (std::int64_t i = 0; i < enc.b1.size(); ++i) {
    CHECK(std::abs(enc.b1[i]) <= bound1);
  }
  for (std::int64_t i = 0; i < enc.w2.size(); ++i) {
    CHECK(std::abs(enc.w2[i]) <= bound2);
  }
  for (std::int64_t i = 0; i < enc.b2.size(); ++i) {
    CHECK(std::abs(enc.b2[i]) <= bound2);
  }
}
