#pragma once

#include <cstdint>
#include <vector>

#include "zonalseg/tensor.hpp"

namespace zonalseg {

// 2D boolean raster. All morphology in this project uses 4-connectivity.
class BinaryMask {
public:
  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols);
  BinaryMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> cells);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return cells_.size(); }

  bool at(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { cells_[r * cols_ + c] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return cells_[i] != 0; }

  const std::vector<std::uint8_t>& cells() const { return cells_; }
  std::vector<std::uint8_t>& cells() { return cells_; }

  std::size_t count() const;  // foreground pixels
  bool none() const { return count() == 0; }
  bool same_shape(const BinaryMask& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  // True when every foreground pixel of this mask lies inside `outer`.
  bool subset_of(const BinaryMask& outer) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Pixel true iff value >= t. Probability map must be a (H,W) tensor in [0,1].
BinaryMask threshold(const Tensor& probability, double t = 0.5);

// Background components (4-connectivity) not touching the frame border become
// foreground. Extensive and idempotent.
BinaryMask fill_holes(const BinaryMask& mask);

// Removes 4-connected foreground components with pixel count strictly below
// floor(|wg| / 8); the threshold is recomputed per slice. An empty whole-gland
// mask empties the result. Anti-extensive and idempotent.
BinaryMask remove_small(const BinaryMask& mask, const BinaryMask& wg);

// Peripheral zone = wg AND NOT cg; cg is clipped to wg first. The result and
// the clipped cg always partition wg.
BinaryMask derive_pz(const BinaryMask& wg, const BinaryMask& cg);

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);

// 4-connected component labels over foreground (or background) pixels.
// label[i] == -1 for pixels outside the selected set.
struct ComponentLabels {
  std::vector<std::int32_t> label;
  std::vector<std::size_t> component_size;
};
ComponentLabels label_components(const BinaryMask& mask, bool foreground);

// threshold -> clip to wg -> fill_holes -> remove_small.
BinaryMask postprocess_cg(const Tensor& probability, const BinaryMask& wg,
                          double t = 0.5);

}  // namespace zonalseg
