#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "zonalseg/dataset.hpp"
#include "zonalseg/model.hpp"
#include "zonalseg/rng.hpp"

namespace zonalseg {

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 50;
  double lr_decay_factor = 0.2;
  std::vector<std::size_t> lr_decay_epochs = {20, 40};
  std::uint64_t seed = 0;
  // Network input size; training crops randomly from the slice canvas to
  // this size, evaluation center-crops.
  std::size_t crop = 64;

  void validate() const;
};

// Piecewise-constant schedule: lr0 scaled by decay_factor once per decay
// epoch <= the current epoch.
double lr_at(const TrainConfig& config, std::size_t epoch);

// Soft Dice loss over all entries; returns a value in [-1, 0] (0 when both
// prediction and truth are empty). The gradient form matches the Tape op.
double dice_loss(const Tensor& prediction, const Tensor& truth);
Tensor dice_loss_gradient(const Tensor& prediction, const Tensor& truth);

struct OptimizerState {
  std::vector<Tensor> velocity;  // mirrors model.params shapes
  std::size_t steps = 0;
};

// Classical momentum SGD with decoupled-from-nothing weight decay in the
// gradient: v <- mu*v + (g + lambda*w); w <- w - lr*v.
// Rejects non-finite gradients, naming the offending weight.
void sgd_step(OptimizerState& optimizer, ModelState& model,
              const std::vector<Tensor>& gradients, double lr,
              const TrainConfig& config);

// Deterministic window copy; masks follow the image.
SliceRecord crop_window(const SliceRecord& slice, std::size_t row0,
                        std::size_t col0, std::size_t rows, std::size_t cols);
SliceRecord hflip(const SliceRecord& slice);

// Random crop (uniform over valid offsets) plus horizontal flip with
// probability 1/2; the same transform applies to image and both masks.
SliceRecord augment(const SliceRecord& slice, std::size_t rows,
                    std::size_t cols, Rng& rng);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean over the epoch's batches
  std::vector<double> epoch_lr;
};

// Trains in place. Slices must be whole-gland masked and at least crop-sized;
// slices with an empty central gland are skipped (nothing to learn from
// them under the loss). Throws if no trainable slice remains.
TrainResult train(ModelState& model, const std::vector<SliceRecord>& slices,
                  const TrainConfig& config);

// train() plus a run directory: config echo (JSON), per-epoch
// `epoch,loss,lr` CSV, checkpoints at schedule boundaries and at the end.
TrainResult train_run(ModelState& model, const std::vector<SliceRecord>& slices,
                      const TrainConfig& config,
                      const std::filesystem::path& run_dir);

void to_json_file(const TrainConfig& config, const std::filesystem::path& path);
TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json_text(const TrainConfig& config);

}  // namespace zonalseg
