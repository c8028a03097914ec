#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zonalseg/tape.hpp"

namespace zonalseg {

enum class ModelVariant { unet, enc_use, enc_dec_use };

std::string to_string(ModelVariant v);
ModelVariant variant_from_string(std::string_view s);

// Channel-recalibration block: squeeze (global average pool), excitation
// (two bias-free dense layers, ReLU then sigmoid), then per-channel scaling.
// Weight count is exactly 2*F^2/r.
struct SEBlockSpec {
  std::size_t channels = 0;
  std::size_t reduction = 8;

  std::size_t hidden() const { return channels / reduction; }
  std::size_t weight_count() const { return 2 * channels * channels / reduction; }
  void validate(const std::string& site) const;
};

// Encoder-decoder segmentation net with `depth` pooling steps, channel count
// doubling per level, skip concatenation, and a single-channel sigmoid head.
// enc_use places one SE block after each encoder block (depth blocks);
// enc_dec_use also covers the bottleneck and every decoder block
// (2*depth + 1 blocks).
struct ModelSpec {
  ModelVariant variant = ModelVariant::unet;
  std::size_t depth = 4;
  std::size_t base_width = 8;
  std::size_t se_reduction = 8;
  std::size_t in_channels = 1;

  std::size_t se_site_count() const;
  void validate() const;
};

struct ModelState {
  ModelSpec spec;
  std::uint64_t seed = 0;
  // Ordered, named weight tensors; order is the build order and is part of
  // the checkpoint contract.
  std::vector<std::pair<std::string, Tensor>> params;

  std::size_t parameter_count() const;
  const Tensor& param(std::string_view name) const;
  Tensor& param(std::string_view name);
  bool has_param(std::string_view name) const;
};

// Deterministic initialisation: fan-in-scaled normal kernels, zero biases.
// Identical (spec, seed) pairs produce bit-identical states.
ModelState build_model(const ModelSpec& spec, std::uint64_t seed);

struct ForwardOptions {
  // Diagnostic: skip the channel-scaling step of every SE block, turning the
  // variant into a plain U-Net with the same convolution weights.
  bool bypass_se = false;
};

struct ForwardBinding {
  std::vector<VarId> param_ids;  // same order as state.params
  VarId input = -1;
  VarId output = -1;
};

// Records the full forward pass on `tape` with all weights as tracked inputs.
// Batch is (B, in_channels, H, W) with H and W divisible by 2^depth; output
// is (B, 1, H, W) through a sigmoid head.
ForwardBinding model_forward(Tape& tape, const ModelState& state,
                             const Tensor& batch,
                             const ForwardOptions& options = {});

// Convenience forward without gradient bookkeeping.
Tensor forward(const ModelState& state, const Tensor& batch,
               const ForwardOptions& options = {});

// Standalone SE block evaluation on (B,F,H,W) features. w_reduce is (F, F/r),
// w_expand is (F/r, F); both act as transposed dense layers on the squeezed
// channel vector.
Tensor se_block_forward(const Tensor& features, const Tensor& w_reduce,
                        const Tensor& w_expand);

// Self-describing checkpoint container: JSON header (spec echo, seed, array
// directory) followed by raw little-endian doubles. Round trips bit-exactly.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace zonalseg
