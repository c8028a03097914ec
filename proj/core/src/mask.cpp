#include "zonalseg/mask.hpp"

#include <numeric>
#include <stdexcept>

namespace zonalseg {

BinaryMask::BinaryMask(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), cells_(rows * cols, 0) {}

BinaryMask::BinaryMask(std::size_t rows, std::size_t cols,
                       std::vector<std::uint8_t> cells)
    : rows_(rows), cols_(cols), cells_(std::move(cells)) {
  if (cells_.size() != rows * cols) {
    throw std::invalid_argument("BinaryMask: cell count does not match " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (auto& c : cells_) c = c ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return std::accumulate(cells_.begin(), cells_.end(), std::size_t{0});
}

bool BinaryMask::subset_of(const BinaryMask& outer) const {
  if (!same_shape(outer)) return false;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] && !outer.cells_[i]) return false;
  }
  return true;
}

BinaryMask threshold(const Tensor& probability, double t) {
  if (probability.rank() != 2) {
    throw std::invalid_argument("threshold: probability map must be (H,W), got " +
                                shape_str(probability.shape()));
  }
  const std::size_t rows = probability.dim(0), cols = probability.dim(1);
  BinaryMask out(rows, cols);
  for (std::size_t i = 0; i < probability.size(); ++i) {
    out.cells()[i] = probability[i] >= t ? 1 : 0;
  }
  return out;
}

namespace {

// Union-find over the pixel grid.
class DisjointSet {
public:
  explicit DisjointSet(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
  std::vector<std::size_t> parent_;
};

}  // namespace

ComponentLabels label_components(const BinaryMask& mask, bool foreground) {
  const std::size_t rows = mask.rows(), cols = mask.cols();
  const std::size_t n = rows * cols;
  auto selected = [&](std::size_t i) { return mask[i] == foreground; };

  DisjointSet ds(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (!selected(i)) continue;
      if (c + 1 < cols && selected(i + 1)) ds.unite(i, i + 1);
      if (r + 1 < rows && selected(i + cols)) ds.unite(i, i + cols);
    }
  }

  ComponentLabels out;
  out.label.assign(n, -1);
  std::vector<std::int32_t> root_label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!selected(i)) continue;
    const std::size_t root = ds.find(i);
    if (root_label[root] < 0) {
      root_label[root] = static_cast<std::int32_t>(out.component_size.size());
      out.component_size.push_back(0);
    }
    out.label[i] = root_label[root];
    ++out.component_size[static_cast<std::size_t>(root_label[root])];
  }
  return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const std::size_t rows = mask.rows(), cols = mask.cols();
  const ComponentLabels bg = label_components(mask, false);

  std::vector<std::uint8_t> touches_border(bg.component_size.size(), 0);
  auto mark = [&](std::size_t i) {
    if (bg.label[i] >= 0) touches_border[static_cast<std::size_t>(bg.label[i])] = 1;
  };
  for (std::size_t c = 0; c < cols; ++c) {
    mark(c);
    mark((rows - 1) * cols + c);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    mark(r * cols);
    mark(r * cols + cols - 1);
  }

  BinaryMask out = mask;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    if (bg.label[i] >= 0 && !touches_border[static_cast<std::size_t>(bg.label[i])]) {
      out.cells()[i] = 1;
    }
  }
  return out;
}

BinaryMask remove_small(const BinaryMask& mask, const BinaryMask& wg) {
  if (!mask.same_shape(wg)) {
    throw std::invalid_argument("remove_small: mask is " + std::to_string(mask.rows()) +
                                "x" + std::to_string(mask.cols()) + " but whole-gland mask is " +
                                std::to_string(wg.rows()) + "x" + std::to_string(wg.cols()));
  }
  const std::size_t wg_pixels = wg.count();
  if (wg_pixels == 0) return BinaryMask(mask.rows(), mask.cols());

  // "Smaller than" is strict: a component of exactly floor(|wg|/8) pixels stays.
  const std::size_t min_size = wg_pixels / 8;
  const ComponentLabels fg = label_components(mask, true);

  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (fg.label[i] >= 0 &&
        fg.component_size[static_cast<std::size_t>(fg.label[i])] < min_size) {
      out.cells()[i] = 0;
    }
  }
  return out;
}

BinaryMask derive_pz(const BinaryMask& wg, const BinaryMask& cg) {
  if (!wg.same_shape(cg)) {
    throw std::invalid_argument("derive_pz: whole-gland and central-gland masks differ in shape");
  }
  BinaryMask pz(wg.rows(), wg.cols());
  for (std::size_t i = 0; i < wg.size(); ++i) {
    pz.cells()[i] = (wg[i] && !cg[i]) ? 1 : 0;
  }
  return pz;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("mask_and: shapes differ");
  }
  BinaryMask out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.cells()[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("mask_or: shapes differ");
  }
  BinaryMask out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.cells()[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

BinaryMask postprocess_cg(const Tensor& probability, const BinaryMask& wg,
                          double t) {
  // The network only ever sees whole-gland-masked input, so activations
  // outside the gland are artifacts; clip before morphology. Filling can
  // annex enclosed non-gland pixels, so clip once more before area removal
  // to keep the output inside the gland.
  BinaryMask cg = mask_and(threshold(probability, t), wg);
  cg = mask_and(fill_holes(cg), wg);
  return remove_small(cg, wg);
}

}  // namespace zonalseg
