#pragma once

#include <functional>

#include "zonalseg/tape.hpp"

namespace zonalseg {

// Builds a scalar-valued computation on the given tape from one tracked
// input variable.
using ScalarGraph = std::function<VarId(Tape&, VarId)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares the analytic gradient of `graph` at `point` against central
// differences with step `eps`. Error per coordinate is
// |analytic - numeric| / max(1, |analytic|, |numeric|); the max is returned.
// eps must lie in [1e-6, 1e-4]; non-finite values anywhere are rejected.
GradCheckResult gradient_check(const ScalarGraph& graph, const Tensor& point,
                               double eps = 1e-5);

struct LayerCheck {
  std::string name;
  double max_rel_error = 0.0;
};

// Finite-difference verification of every registered tape operation, each
// differentiated input in turn, on small seeded random tensors.
std::vector<LayerCheck> layer_gradient_checks(std::uint64_t seed,
                                              double eps = 1e-5);

struct ModelGradCheck {
  double max_rel_error = 0.0;
  std::string worst_param;
};

struct ModelState;  // model.hpp

// Central-difference check of the Dice loss gradient with respect to every
// weight of `state` on the given batch/truth pair.
ModelGradCheck model_gradient_check(const ModelState& state, const Tensor& batch,
                                    const Tensor& truth, double eps = 1e-5);

}  // namespace zonalseg
