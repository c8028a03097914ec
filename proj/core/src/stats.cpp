#include "zonalseg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include "zonalseg/svg.hpp"

namespace zonalseg {

RankTable rank_scores(const std::vector<std::vector<double>>& scores) {
  if (scores.empty()) throw std::invalid_argument("rank_scores: no blocks");
  const std::size_t k = scores.front().size();
  if (k < 2) throw std::invalid_argument("rank_scores: need at least 2 methods");

  RankTable table;
  table.blocks = scores.size();
  table.methods = k;
  table.ranks.reserve(scores.size());
  table.mean_ranks.assign(k, 0.0);

  for (const auto& row : scores) {
    if (row.size() != k) {
      throw std::invalid_argument("rank_scores: ragged score matrix");
    }
    // Sort descending; tied scores share the average of their positions.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });

    std::vector<double> ranks(k, 0.0);
    std::size_t i = 0;
    while (i < k) {
      std::size_t j = i;
      while (j + 1 < k && row[order[j + 1]] == row[order[i]]) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
      i = j + 1;
    }
    for (std::size_t m = 0; m < k; ++m) table.mean_ranks[m] += ranks[m];
    table.ranks.push_back(std::move(ranks));
  }
  for (auto& r : table.mean_ranks) r /= static_cast<double>(table.blocks);
  return table;
}

FriedmanResult friedman(const std::vector<std::vector<double>>& scores,
                        bool f_refinement) {
  if (scores.size() < 2) {
    throw std::invalid_argument("friedman: need at least 2 blocks, got " +
                                std::to_string(scores.size()));
  }
  FriedmanResult result;
  result.ranks = rank_scores(scores);
  result.f_refinement = f_refinement;

  const double n = static_cast<double>(result.ranks.blocks);
  const double k = static_cast<double>(result.ranks.methods);

  double sum_sq = 0.0;
  for (double r : result.ranks.mean_ranks) sum_sq += r * r;
  const double chi2 =
      12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
  result.statistic = std::max(0.0, chi2);

  if (result.statistic <= 0.0) {
    result.p_value = 1.0;
    return result;
  }
  if (!f_refinement) {
    boost::math::chi_squared dist(k - 1.0);
    result.p_value = boost::math::cdf(boost::math::complement(dist, result.statistic));
  } else {
    const double denom = n * (k - 1.0) - result.statistic;
    if (denom <= 0.0) {
      result.p_value = 0.0;
    } else {
      const double ff = (n - 1.0) * result.statistic / denom;
      boost::math::fisher_f dist(k - 1.0, (k - 1.0) * (n - 1.0));
      result.p_value = boost::math::cdf(boost::math::complement(dist, ff));
    }
  }
  return result;
}

double bonferroni_dunn_critical_value(std::size_t methods, double alpha) {
  // Two-sided normal quantiles at alpha / (k-1) comparisons,
  // z_{alpha / (2(k-1))}, tabulated for the supported range.
  static constexpr double k_q05[] = {1.959964, 2.241403, 2.394000, 2.497705,
                                     2.575829, 2.638257, 2.690110, 2.734369,
                                     2.772921};
  static constexpr double k_q10[] = {1.644854, 1.959964, 2.128045, 2.241403,
                                     2.326348, 2.394000, 2.450089, 2.497705,
                                     2.539483};
  if (methods < 2 || methods > 10) {
    throw std::invalid_argument(
        "bonferroni_dunn_critical_value: tabulated for 2..10 methods, got " +
        std::to_string(methods));
  }
  if (alpha == 0.05) return k_q05[methods - 2];
  if (alpha == 0.10) return k_q10[methods - 2];
  throw std::invalid_argument(
      "bonferroni_dunn_critical_value: alpha must be 0.05 or 0.10, got " +
      std::to_string(alpha));
}

DunnResult bonferroni_dunn(const std::vector<std::vector<double>>& scores,
                           std::size_t control, double alpha,
                           bool omnibus_rejected) {
  const RankTable table = rank_scores(scores);
  if (control >= table.methods) {
    throw std::invalid_argument("bonferroni_dunn: control index " +
                                std::to_string(control) + " out of range");
  }
  DunnResult result;
  result.alpha = alpha;
  result.control = control;
  result.omnibus_rejected = omnibus_rejected;
  result.q_value = bonferroni_dunn_critical_value(table.methods, alpha);
  const double n = static_cast<double>(table.blocks);
  const double k = static_cast<double>(table.methods);
  result.critical_difference = result.q_value * std::sqrt(k * (k + 1.0) / (6.0 * n));
  result.mean_ranks = table.mean_ranks;
  result.differs_from_control.resize(table.methods);
  for (std::size_t m = 0; m < table.methods; ++m) {
    result.differs_from_control[m] =
        std::abs(table.mean_ranks[m] - table.mean_ranks[control]) >
        result.critical_difference;
  }
  return result;
}

void write_cd_diagram_svg(const std::string& path, const DunnResult& result,
                          const std::vector<std::string>& method_names,
                          const std::string& title) {
  const std::size_t k = result.mean_ranks.size();
  if (method_names.size() != k) {
    throw std::invalid_argument("write_cd_diagram_svg: need one name per method");
  }

  const double width = 640.0, height = 120.0 + 24.0 * static_cast<double>(k);
  const double axis_left = 60.0, axis_right = width - 60.0, axis_y = 70.0;
  const double lo = 1.0, hi = static_cast<double>(k);
  auto x_of = [&](double rank) {
    if (hi == lo) return (axis_left + axis_right) / 2.0;
    return axis_left + (rank - lo) / (hi - lo) * (axis_right - axis_left);
  };

  SvgWriter svg(width, height);
  svg.text(width / 2.0, 20.0, title, 14, "middle");
  svg.line(axis_left, axis_y, axis_right, axis_y, "#000", 1.5);
  for (std::size_t m = 1; m <= k; ++m) {
    const double x = x_of(static_cast<double>(m));
    svg.line(x, axis_y - 5.0, x, axis_y + 5.0, "#000", 1.0);
    svg.text(x, axis_y - 10.0, std::to_string(m), 11, "middle");
  }

  // CD bar anchored at the best (lowest) mean rank.
  const double best = *std::min_element(result.mean_ranks.begin(), result.mean_ranks.end());
  svg.line(x_of(best), 34.0, x_of(std::min(hi, best + result.critical_difference)), 34.0,
           "#444", 3.0);
  svg.text(x_of(best), 30.0, "CD = " + SvgWriter::round3(result.critical_difference), 11,
           "start");

  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.mean_ranks[a] < result.mean_ranks[b];
  });
  for (std::size_t row = 0; row < k; ++row) {
    const std::size_t m = order[row];
    const double y = axis_y + 24.0 + 24.0 * static_cast<double>(row);
    const double x = x_of(result.mean_ranks[m]);
    svg.line(x, axis_y, x, y, "#888", 1.0);
    svg.line(x, y, axis_left - 6.0, y, "#888", 1.0);
    std::string label = method_names[m] + " (" + SvgWriter::round3(result.mean_ranks[m]) + ")";
    if (m == result.control) label += " [control]";
    if (result.differs_from_control[m] && m != result.control) label += " *";
    svg.text(axis_left - 4.0, y + 4.0, label, 11, "start");
  }
  svg.save(path);
}

}  // namespace zonalseg
