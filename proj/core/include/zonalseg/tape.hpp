#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "zonalseg/tensor.hpp"

namespace zonalseg {

enum class Padding { same, valid };
enum class Activation { relu, sigmoid };

using VarId = std::int32_t;

// Reverse-mode differentiation tape. Operations append nodes in execution
// order; backward() visits them in exact reverse order. Saved activations are
// held by the node closures and released by clear().
//
// Single-threaded per instance; distinct tapes are fully independent.
class Tape {
public:
  // Tracked input: receives a gradient buffer during backward.
  VarId input(Tensor value);
  // Untracked input (ground truth, fixed operands): never differentiated.
  VarId constant(Tensor value);

  // input (B,Ci,H,W) * kernel (Co,Ci,kh,kw) + bias (Co) -> (B,Co,H',W').
  // Odd kernel sizes only under `same` padding.
  VarId conv2d(VarId input, VarId kernel, VarId bias,
               Padding padding = Padding::same);

  // (B,C,H,W) -> (B,C,H/2,W/2); H and W must be even. Gradient goes to the
  // first maximum of each window in row-major scan order.
  VarId max_pool_2x2(VarId input);

  // Transposed convolution, kernel (Ci,Co,2,2), stride 2: doubles H and W.
  VarId conv_transpose_2x2(VarId input, VarId kernel);

  // (B,C,H,W) -> (B,C): per-channel arithmetic mean over H*W.
  VarId global_avg_pool(VarId input);

  // (p,q) x (q,r) -> (p,r).
  VarId matmul(VarId a, VarId b);

  VarId activation(VarId input, Activation kind);

  // (B,Ca,H,W) ++ (B,Cb,H,W) -> (B,Ca+Cb,H,W).
  VarId concat_channels(VarId a, VarId b);

  // (B,C,H,W) scaled per channel by gates (B,C).
  VarId scale_channels(VarId input, VarId gates);

  VarId multiply(VarId a, VarId b);  // elementwise, same shape
  VarId sum(VarId a);                // -> scalar (shape (1))

  // Soft Dice loss -2*sum(s*r)/(sum(s)+sum(r)) over all entries; 0 when both
  // sums vanish. `truth` is typically a constant 0/1 tensor.
  VarId dice_loss(VarId prediction, VarId truth);

  void backward(VarId root);  // root must be scalar

  const Tensor& value(VarId id) const;
  // Gradient of the last backward() root w.r.t. this variable. Zero tensor if
  // the variable did not influence the root.
  const Tensor& grad(VarId id) const;

  std::size_t node_count() const { return nodes_.size(); }
  void clear();

private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward
    bool tracked = false;
    std::function<void(Tape&)> backprop;  // empty for inputs/constants
  };

  std::vector<Node> nodes_;
  mutable Tensor zero_grad_;  // scratch for grad() on untouched nodes

  VarId push(Tensor value, bool tracked, std::function<void(Tape&)> backprop);
  const Node& at(VarId id) const;
  bool tracked(VarId id) const { return at(id).tracked; }
  // Gradient accumulation buffer; nullptr when the variable is untracked.
  Tensor* grad_buf(VarId id);
};

double relu(double x);
double sigmoid(double x);

}  // namespace zonalseg
