#include "zonalseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace zonalseg {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0)) {
    throw std::invalid_argument("TrainConfig: negative hyperparameter");
  }
  if (batch_size == 0 || epochs == 0 || crop == 0) {
    throw std::invalid_argument("TrainConfig: batch_size, epochs and crop must be positive");
  }
  if (!(lr_decay_factor > 0.0)) {
    throw std::invalid_argument("TrainConfig: lr_decay_factor must be positive");
  }
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] >= epochs) {
      throw std::invalid_argument("TrainConfig: decay epoch " +
                                  std::to_string(lr_decay_epochs[i]) +
                                  " is not below epochs = " + std::to_string(epochs));
    }
    if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
      throw std::invalid_argument("TrainConfig: decay epochs must be strictly increasing");
    }
  }
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.epochs) {
    throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) +
                                " out of range [0, " + std::to_string(config.epochs) + ")");
  }
  double lr = config.lr0;
  for (std::size_t decay : config.lr_decay_epochs) {
    if (decay <= epoch) lr *= config.lr_decay_factor;
  }
  return lr;
}

double dice_loss(const Tensor& prediction, const Tensor& truth) {
  Tape tape;
  const VarId p = tape.constant(prediction);
  const VarId r = tape.constant(truth);
  return tape.value(tape.dice_loss(p, r))[0];
}

Tensor dice_loss_gradient(const Tensor& prediction, const Tensor& truth) {
  Tape tape;
  const VarId p = tape.input(prediction);
  const VarId r = tape.constant(truth);
  tape.backward(tape.dice_loss(p, r));
  return tape.grad(p);
}

void sgd_step(OptimizerState& optimizer, ModelState& model,
              const std::vector<Tensor>& gradients, double lr,
              const TrainConfig& config) {
  if (gradients.size() != model.params.size()) {
    throw std::invalid_argument("sgd_step: got " + std::to_string(gradients.size()) +
                                " gradients for " + std::to_string(model.params.size()) +
                                " parameters");
  }
  if (optimizer.velocity.empty()) {
    optimizer.velocity.reserve(model.params.size());
    for (const auto& [name, t] : model.params) {
      optimizer.velocity.emplace_back(t.shape());
    }
  }
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto& [name, w] = model.params[i];
    const Tensor& g = gradients[i];
    if (!g.same_shape(w)) {
      throw std::invalid_argument("sgd_step: gradient shape " + shape_str(g.shape()) +
                                  " does not match parameter '" + name + "' " +
                                  shape_str(w.shape()));
    }
    if (!g.all_finite()) {
      throw std::runtime_error("sgd_step: non-finite gradient for parameter '" + name + "'");
    }
    Tensor& v = optimizer.velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = config.momentum * v[j] + (g[j] + config.weight_decay * w[j]);
      w[j] -= lr * v[j];
    }
  }
  ++optimizer.steps;
}

SliceRecord crop_window(const SliceRecord& slice, std::size_t row0,
                        std::size_t col0, std::size_t rows, std::size_t cols) {
  if (row0 + rows > slice.rows() || col0 + cols > slice.cols()) {
    throw std::invalid_argument("crop_window: window exceeds slice bounds");
  }
  SliceRecord out;
  out.index = slice.index;
  out.pixel_spacing_mm = slice.pixel_spacing_mm;
  out.image = Tensor({rows, cols});
  out.wg = BinaryMask(rows, cols);
  out.cg = BinaryMask(rows, cols);
  const std::size_t sc = slice.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t si = (r + row0) * sc + (c + col0);
      const std::size_t di = r * cols + c;
      out.image[di] = slice.image[si];
      out.wg.cells()[di] = slice.wg.cells()[si];
      out.cg.cells()[di] = slice.cg.cells()[si];
    }
  }
  return out;
}

SliceRecord hflip(const SliceRecord& slice) {
  SliceRecord out = slice;
  const std::size_t rows = slice.rows(), cols = slice.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t si = r * cols + (cols - 1 - c);
      const std::size_t di = r * cols + c;
      out.image[di] = slice.image[si];
      out.wg.cells()[di] = slice.wg.cells()[si];
      out.cg.cells()[di] = slice.cg.cells()[si];
    }
  }
  return out;
}

SliceRecord augment(const SliceRecord& slice, std::size_t rows,
                    std::size_t cols, Rng& rng) {
  if (slice.rows() < rows || slice.cols() < cols) {
    throw std::invalid_argument("augment: crop " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " larger than canvas " +
                                std::to_string(slice.rows()) + "x" +
                                std::to_string(slice.cols()));
  }
  const std::size_t row0 = rng.below(slice.rows() - rows + 1);
  const std::size_t col0 = rng.below(slice.cols() - cols + 1);
  SliceRecord out = crop_window(slice, row0, col0, rows, cols);
  if (rng.coin_flip()) out = hflip(out);
  return out;
}

namespace {

// Stacks augmented slices into (input, truth), both (B,1,crop,crop); the
// truth plane is the central-gland mask.
std::pair<Tensor, Tensor> make_batch(const std::vector<SliceRecord>& slices,
                                     const std::vector<std::size_t>& order,
                                     std::size_t begin, std::size_t end,
                                     std::size_t crop, Rng& rng) {
  const std::size_t b = end - begin;
  Tensor input({b, 1, crop, crop});
  Tensor truth({b, 1, crop, crop});
  for (std::size_t k = 0; k < b; ++k) {
    const SliceRecord view = augment(slices[order[begin + k]], crop, crop, rng);
    double* ip = input.data() + k * crop * crop;
    double* tp = truth.data() + k * crop * crop;
    for (std::size_t i = 0; i < crop * crop; ++i) {
      ip[i] = view.image[i];
      tp[i] = view.cg[i] ? 1.0 : 0.0;
    }
  }
  return {std::move(input), std::move(truth)};
}

using EpochHook = std::function<void(std::size_t epoch, double loss, double lr,
                                     const ModelState& model)>;

TrainResult train_loop(ModelState& model, const std::vector<SliceRecord>& slices,
                       const TrainConfig& config, const EpochHook& hook) {
  config.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i].wg.none() || slices[i].cg.none()) continue;
    if (slices[i].rows() < config.crop || slices[i].cols() < config.crop) {
      throw std::invalid_argument("train: slice canvas " + std::to_string(slices[i].rows()) +
                                  "x" + std::to_string(slices[i].cols()) +
                                  " smaller than crop " + std::to_string(config.crop));
    }
    usable.push_back(i);
  }
  if (usable.empty()) {
    throw std::invalid_argument("train: training split has no usable slices");
  }

  Rng shuffle_rng = Rng(config.seed).fork("train:shuffle");
  Rng augment_rng = Rng(config.seed).fork("train:augment");
  OptimizerState optimizer;
  TrainResult result;
  result.epoch_loss.reserve(config.epochs);

  std::vector<Tensor> grads(model.params.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    std::vector<std::size_t> order = usable;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      auto [input, truth] = make_batch(slices, order, begin, end, config.crop, augment_rng);

      Tape tape;
      const ForwardBinding binding = model_forward(tape, model, input);
      const VarId loss = tape.dice_loss(binding.output, tape.constant(truth));
      tape.backward(loss);
      for (std::size_t i = 0; i < model.params.size(); ++i) {
        grads[i] = tape.grad(binding.param_ids[i]);
      }
      sgd_step(optimizer, model, grads, lr, config);
      loss_sum += tape.value(loss)[0];
      ++batches;
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    result.epoch_loss.push_back(mean_loss);
    result.epoch_lr.push_back(lr);
    if (hook) hook(epoch, mean_loss, lr, model);
  }
  return result;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"lr0", c.lr0},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"lr_decay_factor", c.lr_decay_factor},
              {"lr_decay_epochs", c.lr_decay_epochs},
              {"seed", c.seed},
              {"crop", c.crop}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr0 = j.value("lr0", c.lr0);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_epochs = j.value("lr_decay_epochs", c.lr_decay_epochs);
  c.seed = j.value("seed", c.seed);
  c.crop = j.value("crop", c.crop);
  c.validate();
  return c;
}

}  // namespace

TrainResult train(ModelState& model, const std::vector<SliceRecord>& slices,
                  const TrainConfig& config) {
  return train_loop(model, slices, config, {});
}

TrainResult train_run(ModelState& model, const std::vector<SliceRecord>& slices,
                      const TrainConfig& config,
                      const std::filesystem::path& run_dir) {
  config.validate();
  std::filesystem::create_directories(run_dir);
  to_json_file(config, run_dir / "train_config.json");

  std::ofstream loss_csv(run_dir / "loss.csv");
  loss_csv << "epoch,loss,lr\n";

  const auto hook = [&](std::size_t epoch, double loss, double lr,
                        const ModelState& m) {
    char row[96];
    std::snprintf(row, sizeof(row), "%zu,%.17g,%.17g\n", epoch, loss, lr);
    loss_csv << row;
    loss_csv.flush();
    if (std::find(config.lr_decay_epochs.begin(), config.lr_decay_epochs.end(),
                  epoch + 1) != config.lr_decay_epochs.end()) {
      char name[48];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%03zu.zck", epoch + 1);
      save_checkpoint(m, run_dir / name);
    }
  };

  TrainResult result = train_loop(model, slices, config, hook);
  save_checkpoint(model, run_dir / "ckpt_final.zck");
  return result;
}

std::string train_config_to_json_text(const TrainConfig& config) {
  return train_config_to_json(config).dump(2);
}

TrainConfig train_config_from_json_text(const std::string& text) {
  return train_config_from_json(json::parse(text));
}

void to_json_file(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << train_config_to_json_text(config) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace zonalseg
