#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>

#include "zonalseg/metrics.hpp"
#include "zonalseg/rng.hpp"
#include "zonalseg/training.hpp"

using namespace zonalseg;

namespace {

BinaryMask random_mask(Rng& rng, std::size_t rows, std::size_t cols,
                       double density = 0.4) {
  BinaryMask m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.cells()[i] = rng.uniform() < density;
  return m;
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count_oracle(const BinaryMask& s, const BinaryMask& g) {
  Counts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] && g[i]) ++c.tp;
    else if (s[i]) ++c.fp;
    else if (g[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// All-pairs directed boundary distances.
std::optional<BoundaryDistance> distance_oracle(const BinaryMask& s,
                                                const BinaryMask& g) {
  const auto sb = boundary(s);
  const auto gb = boundary(g);
  if (sb.empty() || gb.empty()) return std::nullopt;
  BoundaryDistance out;
  double total = 0.0;
  for (const auto& p : sb) {
    double best = 1e300;
    for (const auto& q : gb) {
      const double dr = static_cast<double>(p.row) - static_cast<double>(q.row);
      const double dc = static_cast<double>(p.col) - static_cast<double>(q.col);
      best = std::min(best, std::sqrt(dr * dr + dc * dc));
    }
    total += best;
    out.max = std::max(out.max, best);
  }
  out.avg = total / static_cast<double>(sb.size());
  return out;
}

BinaryMask from_bits(std::size_t rows, std::size_t cols, unsigned bits) {
  BinaryMask m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.cells()[i] = (bits >> i) & 1u;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("overlap metric special values") {
  BinaryMask a(4, 4), b(4, 4);
  a.set(1, 1, true);
  a.set(1, 2, true);

  CHECK(dsc(a, a) == 100.0);
  CHECK(sensitivity(a, a) == 100.0);
  CHECK(specificity(a, a) == 100.0);

  b.set(3, 3, true);
  CHECK(dsc(a, b) == 0.0);       // disjoint, both nonempty
  CHECK(sensitivity(b, a) == 0.0 + 0.0);
  CHECK(specificity(b, a) == 0.0);

  const BinaryMask empty(4, 4);
  CHECK(dsc(empty, empty) == 100.0);
  CHECK(sensitivity(a, empty) == 100.0);   // empty truth
  CHECK(specificity(empty, a) == 100.0);   // empty segmentation
  CHECK(sensitivity(empty, a) == 0.0);
}

TEST_CASE("superset segmentation has full sensitivity") {
  BinaryMask g(4, 4), s(4, 4);
  g.set(1, 1, true);
  s.set(1, 1, true);
  s.set(1, 2, true);
  CHECK(sensitivity(s, g) == 100.0);
  CHECK(specificity(s, g) == 50.0);
  CHECK(true_negative_rate(s, g) == doctest::Approx(100.0 * 14.0 / 15.0));
}

TEST_CASE("overlap metrics match counting oracles on random masks") {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const BinaryMask s = random_mask(rng, 16, 16);
    const BinaryMask g = random_mask(rng, 16, 16);
    const Counts c = count_oracle(s, g);

    const ConfusionCounts got = confusion(s, g);
    CHECK(got.tp == c.tp);
    CHECK(got.fp == c.fp);
    CHECK(got.fn == c.fn);
    CHECK(got.tn == c.tn);
    CHECK(got.total() == 256);

    if (c.tp + c.fp + c.fn > 0) {
      CHECK(dsc(s, g) ==
            200.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn));
    }
    if (c.tp + c.fn > 0) {
      CHECK(sensitivity(s, g) ==
            100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn));
    }
    CHECK(dsc(s, g) == dsc(g, s));
    CHECK(dsc(s, g) >= 0.0);
    CHECK(dsc(s, g) <= 100.0);
  }
}

TEST_CASE("dsc agrees with the Dice loss on binary masks") {
  Rng rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const BinaryMask s = random_mask(rng, 8, 8);
    const BinaryMask g = random_mask(rng, 8, 8);
    if (s.none() && g.none()) continue;  // conventions differ on empty/empty
    Tensor sp({64}), gp({64});
    for (std::size_t i = 0; i < 64; ++i) {
      sp[i] = s[i] ? 1.0 : 0.0;
      gp[i] = g[i] ? 1.0 : 0.0;
    }
    CHECK(dsc(s, g) == doctest::Approx(-100.0 * dice_loss(sp, gp)).epsilon(1e-12));
  }
}

TEST_CASE("sensitivity grows monotonically as the segmentation grows") {
  Rng rng(53);
  const BinaryMask g = random_mask(rng, 8, 8, 0.5);
  BinaryMask s(8, 8);
  double last = sensitivity(s, g);
  for (std::size_t i = 0; i < 64; ++i) {
    if (!g[i]) continue;
    s.cells()[i] = 1;
    const double now = sensitivity(s, g);
    CHECK(now >= last);
    last = now;
  }
  CHECK(last == 100.0);
}

TEST_CASE("boundary extraction") {
  BinaryMask single(5, 5);
  single.set(2, 2, true);
  const auto b1 = boundary(single);
  REQUIRE(b1.size() == 1);
  CHECK(b1[0] == PixelCoord{2, 2});

  BinaryMask blockm(6, 6);
  for (std::size_t r = 1; r < 5; ++r) {
    for (std::size_t c = 1; c < 5; ++c) blockm.set(r, c, true);
  }
  CHECK(boundary(blockm).size() == 12);  // 4x4 block: perimeter only

  CHECK(boundary(BinaryMask(4, 4)).empty());

  // Frame border counts as background: a full mask is all boundary at edges.
  BinaryMask full(3, 3);
  for (auto& c : full.cells()) c = 1;
  CHECK(boundary(full).size() == 8);

  Rng rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    const BinaryMask m = random_mask(rng, 10, 10);
    const auto got = boundary(m);
    std::vector<PixelCoord> want;
    for (std::size_t r = 0; r < 10; ++r) {
      for (std::size_t c = 0; c < 10; ++c) {
        if (!m.at(r, c)) continue;
        const bool bg = r == 0 || r == 9 || c == 0 || c == 9 || !m.at(r - 1, c) ||
                        !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
        if (bg) want.push_back({r, c});
      }
    }
    CHECK(got == want);
  }
}

TEST_CASE("directed boundary distances") {
  BinaryMask s(8, 8), g(8, 8);
  s.set(0, 0, true);
  g.set(3, 4, true);
  const auto d = avg_max_distance(s, g);
  REQUIRE(d.has_value());
  CHECK(d->avg == doctest::Approx(5.0));  // 3-4-5 triangle
  CHECK(d->max == doctest::Approx(5.0));

  const auto self = avg_max_distance(g, g);
  REQUIRE(self.has_value());
  CHECK(self->avg == 0.0);
  CHECK(self->max == 0.0);

  CHECK_FALSE(avg_max_distance(BinaryMask(8, 8), g).has_value());
  CHECK_FALSE(avg_max_distance(g, BinaryMask(8, 8)).has_value());
}

TEST_CASE("boundary distances match the all-pairs oracle") {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 4 + rng.below(13), cols = 4 + rng.below(13);
    const BinaryMask s = random_mask(rng, rows, cols, 0.3);
    const BinaryMask g = random_mask(rng, rows, cols, 0.3);
    const auto got = avg_max_distance(s, g);
    const auto want = distance_oracle(s, g);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(std::abs(got->avg - want->avg) < 1e-12);
      CHECK(std::abs(got->max - want->max) < 1e-12);
      CHECK(got->max >= got->avg);
    }
  }
}

TEST_CASE("distances are invariant under simultaneous translation") {
  Rng rng(56);
  BinaryMask s(20, 20), g(20, 20), s2(20, 20), g2(20, 20);
  for (std::size_t r = 3; r < 8; ++r) {
    for (std::size_t c = 3; c < 9; ++c) {
      s.set(r, c, true);
      s2.set(r + 7, c + 6, true);
    }
  }
  for (std::size_t r = 5; r < 9; ++r) {
    for (std::size_t c = 2; c < 7; ++c) {
      g.set(r, c, true);
      g2.set(r + 7, c + 6, true);
    }
  }
  const auto a = avg_max_distance(s, g);
  const auto b = avg_max_distance(s2, g2);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(a->avg == doctest::Approx(b->avg).epsilon(1e-12));
  CHECK(a->max == doctest::Approx(b->max).epsilon(1e-12));
}

TEST_CASE("symmetric variant bounds the directed one") {
  Rng rng(57);
  const BinaryMask s = random_mask(rng, 12, 12, 0.4);
  const BinaryMask g = random_mask(rng, 12, 12, 0.4);
  const auto directed = avg_max_distance(s, g);
  const auto symmetric = symmetric_avg_max_distance(s, g);
  REQUIRE(directed.has_value());
  REQUIRE(symmetric.has_value());
  CHECK(symmetric->max >= directed->max - 1e-12);
}

TEST_CASE("overlap metrics equal oracles exactly on sampled 3x3 pairs") {
  // The exhaustive 2^9 x 2^9 sweep runs in the acceptance suite.
  Rng rng(58);
  for (int trial = 0; trial < 4000; ++trial) {
    const auto s = from_bits(3, 3, static_cast<unsigned>(rng.below(512)));
    const auto g = from_bits(3, 3, static_cast<unsigned>(rng.below(512)));
    const Counts c = count_oracle(s, g);
    const double want_dsc = (2 * c.tp + c.fp + c.fn) == 0
                                ? 100.0
                                : 200.0 * static_cast<double>(c.tp) /
                                      static_cast<double>(2 * c.tp + c.fp + c.fn);
    CHECK(dsc(s, g) == want_dsc);
  }
}

TEST_CASE("patient aggregation averages defined entries only") {
  RegionMetrics full{80.0, 90.0, 95.0, 1.0, 2.0};
  RegionMetrics no_distance{100.0, 100.0, 100.0, std::nullopt, std::nullopt};

  SUBCASE("single slice is the identity") {
    const PatientMetrics p = aggregate_patient("p1", {SliceMetrics{0, full, full}});
    CHECK(p.cg.dsc == 80.0);
    CHECK(p.cg.avgd == 1.0);
  }
  SUBCASE("two slices average, undefined distances are excluded") {
    const PatientMetrics p = aggregate_patient(
        "p2", {SliceMetrics{0, full, full}, SliceMetrics{1, no_distance, no_distance}});
    CHECK(p.cg.dsc == 90.0);       // (80+100)/2
    CHECK(p.cg.avgd == 1.0);       // only the defined slice
    CHECK(p.slices == 2);
  }
  SUBCASE("random sets match a mean oracle") {
    Rng rng(59);
    std::vector<SliceMetrics> slices;
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) {
      const double v = rng.uniform(0.0, 100.0);
      sum += v;
      slices.push_back({static_cast<std::size_t>(i),
                        RegionMetrics{v, v, v, std::nullopt, std::nullopt},
                        RegionMetrics{v, v, v, std::nullopt, std::nullopt}});
    }
    const PatientMetrics p = aggregate_patient("p3", slices);
    CHECK(p.cg.dsc == doctest::Approx(sum / 7.0).epsilon(1e-12));
    CHECK_FALSE(p.cg.avgd.has_value());
  }
  SUBCASE("no slices rejected") {
    CHECK_THROWS_AS(aggregate_patient("p4", {}), std::invalid_argument);
  }
}

TEST_CASE("metrics csv rows carry empty distance fields when undefined") {
  RegionMetrics m{50.0, 60.0, 70.0, std::nullopt, std::nullopt};
  const std::string row =
      metrics_csv_row("ds", "#1->#2", 2, "007", "CG", MetricsLevel::patient, m);
  CHECK(row == "ds,#1->#2,2,007,CG,patient,50,60,70,,");
}

TEST_SUITE_END();
