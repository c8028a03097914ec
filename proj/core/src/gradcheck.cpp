#include "zonalseg/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "zonalseg/model.hpp"
#include "zonalseg/rng.hpp"

namespace zonalseg {

namespace {

double eval_scalar(const ScalarGraph& graph, const Tensor& point) {
  Tape tape;
  const VarId x = tape.input(point);
  const VarId y = graph(tape, x);
  const Tensor& out = tape.value(y);
  if (out.size() != 1) {
    throw std::invalid_argument("gradient_check: graph output must be scalar, got shape " +
                                shape_str(out.shape()));
  }
  const double v = out[0];
  if (!std::isfinite(v)) {
    throw std::runtime_error("gradient_check: non-finite function value");
  }
  return v;
}

}  // namespace

GradCheckResult gradient_check(const ScalarGraph& graph, const Tensor& point,
                               double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw std::invalid_argument("gradient_check: eps must be in [1e-6, 1e-4], got " +
                                std::to_string(eps));
  }
  if (!point.all_finite()) {
    throw std::invalid_argument("gradient_check: point contains non-finite values");
  }

  Tape tape;
  const VarId x = tape.input(point);
  const VarId y = graph(tape, x);
  if (tape.value(y).size() != 1) {
    throw std::invalid_argument("gradient_check: graph output must be scalar, got shape " +
                                shape_str(tape.value(y).shape()));
  }
  tape.backward(y);
  const Tensor analytic = tape.grad(x);
  if (!analytic.all_finite()) {
    throw std::runtime_error("gradient_check: non-finite analytic gradient");
  }

  GradCheckResult result;
  Tensor probe = point;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double fp = eval_scalar(graph, probe);
    probe[i] = saved - eps;
    const double fm = eval_scalar(graph, probe);
    probe[i] = saved;

    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_coordinate = i;
      result.analytic_at_worst = a;
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Keeps ReLU arguments away from the kink so central differences stay valid.
Tensor random_away_from_zero(Rng& rng, Shape shape, double margin = 0.05) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = margin + rng.uniform(0.0, 1.0);
    t[i] = rng.coin_flip() ? mag : -mag;
  }
  return t;
}

Tensor random_binary(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.coin_flip() ? 1.0 : 0.0;
  return t;
}

}  // namespace

std::vector<LayerCheck> layer_gradient_checks(std::uint64_t seed, double eps) {
  Rng rng(seed);
  std::vector<LayerCheck> checks;
  auto run = [&](const std::string& name, const ScalarGraph& graph, const Tensor& point) {
    checks.push_back({name, gradient_check(graph, point, eps).max_rel_error});
  };

  {
    const Tensor kernel = random_tensor(rng, {3, 2, 3, 3});
    const Tensor bias = random_tensor(rng, {3});
    const Tensor input = random_tensor(rng, {1, 2, 6, 6});
    auto wrt_input = [&](Padding pad) {
      return [kernel, bias, pad](Tape& t, VarId x) {
        return t.sum(t.conv2d(x, t.constant(kernel), t.constant(bias), pad));
      };
    };
    run("conv2d/same/input", wrt_input(Padding::same), input);
    run("conv2d/valid/input", wrt_input(Padding::valid), input);
    run("conv2d/kernel",
        [input, bias](Tape& t, VarId x) {
          return t.sum(t.conv2d(t.constant(input), x, t.constant(bias)));
        },
        kernel);
    run("conv2d/bias",
        [input, kernel](Tape& t, VarId x) {
          return t.sum(t.conv2d(t.constant(input), t.constant(kernel), x));
        },
        bias);
  }
  {
    // Distinct window entries so the argmax is stable under perturbation.
    Tensor input({1, 2, 4, 4});
    for (std::size_t i = 0; i < input.size(); ++i) {
      input[i] = static_cast<double>((i * 7919) % 97) / 10.0 + rng.uniform(0.0, 0.01);
    }
    run("max_pool_2x2/input",
        [](Tape& t, VarId x) { return t.sum(t.max_pool_2x2(x)); }, input);
  }
  {
    const Tensor kernel = random_tensor(rng, {3, 2, 2, 2});
    const Tensor input = random_tensor(rng, {1, 3, 3, 3});
    run("conv_transpose_2x2/input",
        [kernel](Tape& t, VarId x) {
          return t.sum(t.conv_transpose_2x2(x, t.constant(kernel)));
        },
        input);
    run("conv_transpose_2x2/kernel",
        [input](Tape& t, VarId x) {
          return t.sum(t.conv_transpose_2x2(t.constant(input), x));
        },
        kernel);
  }
  run("global_avg_pool/input",
      [](Tape& t, VarId x) { return t.sum(t.global_avg_pool(x)); },
      random_tensor(rng, {2, 3, 4, 4}));
  {
    const Tensor a = random_tensor(rng, {4, 6});
    const Tensor b = random_tensor(rng, {6, 3});
    run("matmul/a", [b](Tape& t, VarId x) { return t.sum(t.matmul(x, t.constant(b))); }, a);
    run("matmul/b", [a](Tape& t, VarId x) { return t.sum(t.matmul(t.constant(a), x)); }, b);
  }
  run("relu/input",
      [](Tape& t, VarId x) { return t.sum(t.activation(x, Activation::relu)); },
      random_away_from_zero(rng, {3, 5}));
  run("sigmoid/input",
      [](Tape& t, VarId x) { return t.sum(t.activation(x, Activation::sigmoid)); },
      random_tensor(rng, {3, 5}, -4.0, 4.0));
  {
    const Tensor features = random_tensor(rng, {1, 3, 4, 4});
    const Tensor gates = random_tensor(rng, {1, 3}, 0.0, 1.0);
    run("scale_channels/input",
        [gates](Tape& t, VarId x) {
          return t.sum(t.scale_channels(x, t.constant(gates)));
        },
        features);
    run("scale_channels/gates",
        [features](Tape& t, VarId x) {
          return t.sum(t.scale_channels(t.constant(features), x));
        },
        gates);
  }
  {
    const Tensor other = random_tensor(rng, {1, 2, 3, 3});
    run("concat_channels/input",
        [other](Tape& t, VarId x) {
          return t.sum(t.multiply(t.concat_channels(x, t.constant(other)),
                                  t.concat_channels(x, t.constant(other))));
        },
        random_tensor(rng, {1, 2, 3, 3}));
  }
  run("multiply/input",
      [](Tape& t, VarId x) { return t.sum(t.multiply(x, x)); },
      random_tensor(rng, {7}));
  {
    const Tensor truth = random_binary(rng, {40});
    run("dice_loss/prediction",
        [truth](Tape& t, VarId x) { return t.dice_loss(x, t.constant(truth)); },
        random_tensor(rng, {40}, 0.05, 0.95));
  }
  {
    // Excitation path end to end: squeeze, bottleneck, gate, rescale.
    const Tensor reduce = random_tensor(rng, {4, 2});
    const Tensor expand = random_tensor(rng, {2, 4});
    run("se_block/features",
        [reduce, expand](Tape& t, VarId x) {
          const VarId z = t.global_avg_pool(x);
          const VarId h = t.activation(t.matmul(z, t.constant(reduce)), Activation::relu);
          const VarId s = t.activation(t.matmul(h, t.constant(expand)), Activation::sigmoid);
          return t.sum(t.scale_channels(x, s));
        },
        random_tensor(rng, {1, 4, 4, 4}));
  }
  {
    // Three-layer stack: composed backward equals composition of backwards.
    const Tensor k1 = random_tensor(rng, {2, 1, 3, 3});
    const Tensor b1 = random_tensor(rng, {2});
    const Tensor k2 = random_tensor(rng, {3, 2, 3, 3});
    const Tensor b2 = random_tensor(rng, {3});
    const Tensor w = random_tensor(rng, {3, 2});
    run("stack/conv-pool-conv-gap-matmul",
        [k1, b1, k2, b2, w](Tape& t, VarId x) {
          VarId y = t.activation(t.conv2d(x, t.constant(k1), t.constant(b1)),
                                 Activation::sigmoid);
          y = t.max_pool_2x2(y);
          y = t.activation(t.conv2d(y, t.constant(k2), t.constant(b2)),
                           Activation::sigmoid);
          const VarId z = t.global_avg_pool(y);
          return t.sum(t.activation(t.matmul(z, t.constant(w)), Activation::sigmoid));
        },
        random_tensor(rng, {1, 1, 8, 8}));
  }
  return checks;
}

ModelGradCheck model_gradient_check(const ModelState& state, const Tensor& batch,
                                    const Tensor& truth, double eps) {
  // Analytic gradients for every weight from one taped pass.
  Tape tape;
  const ForwardBinding binding = model_forward(tape, state, batch);
  const VarId loss = tape.dice_loss(binding.output, tape.constant(truth));
  tape.backward(loss);

  auto loss_at = [&](const ModelState& s) {
    Tape t;
    const ForwardBinding b = model_forward(t, s, batch);
    return t.value(t.dice_loss(b.output, t.constant(truth)))[0];
  };

  ModelGradCheck result;
  ModelState probe = state;
  for (std::size_t p = 0; p < state.params.size(); ++p) {
    const Tensor& analytic = tape.grad(binding.param_ids[p]);
    Tensor& weights = probe.params[p].second;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double saved = weights[i];
      weights[i] = saved + eps;
      const double fp = loss_at(probe);
      weights[i] = saved - eps;
      const double fm = loss_at(probe);
      weights[i] = saved;

      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = state.params[p].first;
      }
    }
  }
  return result;
}

}  // namespace zonalseg
