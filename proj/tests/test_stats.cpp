#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>
#include <filesystem>

#include "zonalseg/rng.hpp"
#include "zonalseg/stats.hpp"

using namespace zonalseg;

TEST_SUITE_BEGIN("stats");

TEST_CASE("identical scores in every block give statistic 0 and p 1") {
  const std::vector<std::vector<double>> scores(5, std::vector<double>{3.0, 3.0, 3.0});
  const FriedmanResult r = friedman(scores);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
  for (double mean : r.ranks.mean_ranks) CHECK(mean == doctest::Approx(2.0));
}

TEST_CASE("hand-computed N=4, k=3 example") {
  // Ranks per block (higher score = rank 1):
  //   (3,2,1), (1,2,3), (3,1,2), (2.5,2.5,1)
  // Mean ranks: 2.375, 1.875, 1.75 -> chi^2 = 4 * (12.21875 - 12) = 0.875.
  const std::vector<std::vector<double>> scores = {
      {0.50, 0.70, 0.90},
      {0.90, 0.70, 0.50},
      {0.60, 0.80, 0.70},
      {0.50, 0.50, 0.90},
  };
  const FriedmanResult r = friedman(scores);
  CHECK(r.statistic == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(r.ranks.mean_ranks[0] == doctest::Approx(2.375));
  CHECK(r.ranks.mean_ranks[1] == doctest::Approx(1.875));
  CHECK(r.ranks.mean_ranks[2] == doctest::Approx(1.75));
  // Chi-square upper tail with 2 dof: exp(-x/2).
  CHECK(r.p_value == doctest::Approx(std::exp(-0.4375)).epsilon(1e-9));
}

TEST_CASE("block rank sums always equal k(k+1)/2") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(8), k = 2 + rng.below(5);
    std::vector<std::vector<double>> scores(n, std::vector<double>(k));
    for (auto& row : scores) {
      for (auto& v : row) v = rng.below(4);  // plenty of ties
    }
    const RankTable table = rank_scores(scores);
    for (const auto& row : table.ranks) {
      double sum = 0.0;
      for (double v : row) sum += v;
      CHECK(sum == doctest::Approx(static_cast<double>(k * (k + 1)) / 2.0));
    }
    for (double mean : table.mean_ranks) {
      CHECK(mean >= 1.0);
      CHECK(mean <= static_cast<double>(k));
    }
  }
}

TEST_CASE("statistic is invariant under per-block monotone transforms") {
  Rng rng(62);
  std::vector<std::vector<double>> scores(6, std::vector<double>(4));
  for (auto& row : scores) {
    for (auto& v : row) v = rng.uniform(0.0, 1.0);
  }
  const double base = friedman(scores).statistic;

  std::vector<std::vector<double>> warped = scores;
  for (std::size_t b = 0; b < warped.size(); ++b) {
    const double scale = 1.0 + static_cast<double>(b);
    for (auto& v : warped[b]) v = std::exp(scale * v) + b;  // strictly monotone
  }
  CHECK(friedman(warped).statistic == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("friedman rejects degenerate inputs") {
  CHECK_THROWS_AS(friedman({{1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(friedman({{1.0}, {2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(friedman({{1.0, 2.0}, {1.0}}), std::invalid_argument);
}

TEST_CASE("f-refinement variant produces a valid p") {
  Rng rng(63);
  std::vector<std::vector<double>> scores(10, std::vector<double>(3));
  for (auto& row : scores) {
    for (auto& v : row) v = rng.uniform(0.0, 1.0);
  }
  const FriedmanResult chi = friedman(scores, false);
  const FriedmanResult ff = friedman(scores, true);
  CHECK(ff.f_refinement);
  CHECK(ff.p_value >= 0.0);
  CHECK(ff.p_value <= 1.0);
  CHECK(ff.statistic == chi.statistic);
}

TEST_CASE("critical values match the published two-sided table") {
  // Independently tabulated q at alpha = 0.05: k=2 -> 1.960, k=5 -> 2.498,
  // and at alpha = 0.10: k=4 -> 2.128.
  CHECK(std::abs(bonferroni_dunn_critical_value(2, 0.05) - 1.960) < 5e-4);
  CHECK(std::abs(bonferroni_dunn_critical_value(5, 0.05) - 2.498) < 5e-4);
  CHECK(std::abs(bonferroni_dunn_critical_value(4, 0.10) - 2.128) < 5e-4);
  CHECK_THROWS_WITH_AS(bonferroni_dunn_critical_value(11, 0.05),
                       doctest::Contains("2..10"), std::invalid_argument);
  CHECK_THROWS_AS(bonferroni_dunn_critical_value(3, 0.01), std::invalid_argument);
}

TEST_CASE("critical difference for k=5, N=12 matches the closed form") {
  std::vector<std::vector<double>> scores(12, std::vector<double>(5));
  Rng rng(64);
  for (auto& row : scores) {
    for (auto& v : row) v = rng.uniform(0.0, 1.0);
  }
  const DunnResult r = bonferroni_dunn(scores, 0, 0.05);
  const double expected = 2.497705 * std::sqrt(5.0 * 6.0 / (6.0 * 12.0));
  CHECK(r.critical_difference == doctest::Approx(expected).epsilon(1e-9));
  CHECK(std::abs(r.q_value - 2.498) < 5e-4);
}

TEST_CASE("identical mean ranks are never significant") {
  const std::vector<std::vector<double>> scores(6, std::vector<double>{1.0, 1.0, 1.0});
  const DunnResult r = bonferroni_dunn(scores, 0, 0.05);
  for (bool sig : r.differs_from_control) CHECK_FALSE(sig);
}

TEST_CASE("critical difference shrinks with N and grows with k") {
  auto cd = [](std::size_t n, std::size_t k) {
    std::vector<std::vector<double>> scores(n, std::vector<double>(k, 0.0));
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t m = 0; m < k; ++m) scores[b][m] = static_cast<double>(m);
    }
    return bonferroni_dunn(scores, 0, 0.05).critical_difference;
  };
  CHECK(cd(10, 3) > cd(100, 3));
  CHECK(cd(100, 3) > cd(1000, 3));
  CHECK(cd(12, 5) > cd(12, 4));
  CHECK(cd(12, 4) > cd(12, 3));
}

TEST_CASE("a fixed rank gap eventually exceeds the critical difference") {
  // Method 0 always ranks 1, method 1 always 2, method 2 always 3.
  auto gap_significant = [](std::size_t n) {
    std::vector<std::vector<double>> scores(n, std::vector<double>{3.0, 2.0, 1.0});
    const DunnResult r = bonferroni_dunn(scores, 0, 0.05);
    return static_cast<bool>(r.differs_from_control[2]);
  };
  CHECK_FALSE(gap_significant(2));
  CHECK(gap_significant(10));
  CHECK(gap_significant(1000));
}

TEST_CASE("cd diagram renders to svg") {
  std::vector<std::vector<double>> scores(12, std::vector<double>{3.0, 2.0, 1.0});
  const DunnResult r = bonferroni_dunn(scores, 0, 0.05);
  const auto path =
      (std::filesystem::temp_directory_path() / "zonalseg_cd_test.svg").string();
  write_cd_diagram_svg(path, r, {"alpha", "beta", "gamma"}, "test diagram");
  CHECK(std::filesystem::file_size(path) > 400);
  std::filesystem::remove(path);
}

TEST_SUITE_END();
