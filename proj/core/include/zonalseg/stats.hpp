#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace zonalseg {

// Per-block ranks for a blocks x methods score matrix; rank 1 is the best
// (highest) score, ties receive average ranks. Every block's ranks sum to
// k(k+1)/2.
struct RankTable {
  std::size_t blocks = 0;
  std::size_t methods = 0;
  std::vector<std::vector<double>> ranks;  // [block][method]
  std::vector<double> mean_ranks;          // [method]
};

RankTable rank_scores(const std::vector<std::vector<double>>& scores);

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  RankTable ranks;
  bool f_refinement = false;
};

// Friedman omnibus test over a blocks x methods score matrix (higher scores
// are better). The p-value uses the chi-square upper tail with k-1 degrees
// of freedom by default; `f_refinement` switches to the F-distribution
// variant. Requires >= 2 blocks and >= 2 methods.
FriedmanResult friedman(const std::vector<std::vector<double>>& scores,
                        bool f_refinement = false);

// Two-sided critical value for comparing k-1 methods against one control at
// level alpha (Bonferroni-corrected normal quantiles, tabulated for
// k in [2,10] and alpha in {0.05, 0.10}).
double bonferroni_dunn_critical_value(std::size_t methods, double alpha);

struct DunnResult {
  double critical_difference = 0.0;
  double q_value = 0.0;
  double alpha = 0.05;
  std::size_t control = 0;
  std::vector<double> mean_ranks;
  std::vector<bool> differs_from_control;
  bool omnibus_rejected = false;  // caller-supplied flag, passed through
};

// Post hoc comparison of every method against the control:
// CD = q_alpha * sqrt(k(k+1)/(6N)); method j differs from the control iff
// |mean_rank_j - mean_rank_control| > CD.
DunnResult bonferroni_dunn(const std::vector<std::vector<double>>& scores,
                           std::size_t control, double alpha = 0.05,
                           bool omnibus_rejected = true);

// Critical-difference diagram (methods on a mean-rank axis with a CD bar),
// written as a standalone SVG.
void write_cd_diagram_svg(const std::string& path, const DunnResult& result,
                          const std::vector<std::string>& method_names,
                          const std::string& title);

}  // namespace zonalseg
