#include "zonalseg/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

namespace zonalseg {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Dot product with four independent accumulation chains so the compiler can
// vectorize the reduction without reassociating a single serial chain.
double row_dot(const double* __restrict a, const double* __restrict b,
               std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) acc0 += a[i] * b[i];
  return (acc0 + acc1) + (acc2 + acc3);
}

// y += a * x over a row; __restrict lets the compiler vectorize without
// overlap checks (rows of distinct tensors never alias).
void row_axpy(double* __restrict y, const double* __restrict x, double a,
              std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Zero-padded copy of a (B,C,H,W) tensor, pad rows/cols on both sides.
Tensor pad_spatial(const Tensor& t, std::size_t ph, std::size_t pw) {
  const Shape& s = t.shape();
  const std::size_t b = s[0], c = s[1], h = s[2], w = s[3];
  Tensor out({b, c, h + 2 * ph, w + 2 * pw});
  const std::size_t wo = w + 2 * pw;
  for (std::size_t i = 0; i < b * c; ++i) {
    const double* src = t.data() + i * h * w;
    double* dst = out.data() + i * (h + 2 * ph) * wo + ph * wo + pw;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) dst[y * wo + x] = src[y * w + x];
    }
  }
  return out;
}

}  // namespace

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

VarId Tape::push(Tensor value, bool tracked,
                 std::function<void(Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), Tensor{}, tracked, std::move(backprop)});
  return static_cast<VarId>(nodes_.size() - 1);
}

const Tape::Node& Tape::at(VarId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    fail("Tape: invalid variable id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

Tensor* Tape::grad_buf(VarId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.tracked) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

const Tensor& Tape::value(VarId id) const { return at(id).value; }

const Tensor& Tape::grad(VarId id) const {
  const Node& n = at(id);
  if (!n.grad.empty()) return n.grad;
  zero_grad_ = Tensor(n.value.shape());
  return zero_grad_;
}

void Tape::clear() {
  nodes_.clear();
  zero_grad_ = Tensor{};
}

VarId Tape::input(Tensor value) { return push(std::move(value), true, {}); }

VarId Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

void Tape::backward(VarId root) {
  const Node& r = at(root);
  require(r.value.size() == 1,
          "backward: root must be scalar, got shape " + shape_str(r.value.shape()));
  require(r.tracked, "backward: root does not depend on any tracked input");
  for (auto& n : nodes_) n.grad = Tensor{};
  grad_buf(root)->data()[0] = 1.0;
  for (VarId i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backprop && !n.grad.empty()) n.backprop(*this);
  }
}

VarId Tape::conv2d(VarId input, VarId kernel, VarId bias, Padding padding) {
  const Tensor& in = value(input);
  const Tensor& k = value(kernel);
  const Tensor& bs = value(bias);
  require(in.rank() == 4, "conv2d: input must be (B,C,H,W), got " + shape_str(in.shape()));
  require(k.rank() == 4, "conv2d: kernel must be (Co,Ci,kh,kw), got " + shape_str(k.shape()));
  require(in.dim(1) == k.dim(1),
          "conv2d: input channels " + std::to_string(in.dim(1)) +
              " do not match kernel input channels " + std::to_string(k.dim(1)) +
              " (input " + shape_str(in.shape()) + ", kernel " + shape_str(k.shape()) + ")");
  require(bs.rank() == 1 && bs.dim(0) == k.dim(0),
          "conv2d: bias shape " + shape_str(bs.shape()) + " does not match " +
              std::to_string(k.dim(0)) + " output channels");
  const std::size_t B = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t Co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  std::size_t ph = 0, pw = 0, Ho, Wo;
  if (padding == Padding::same) {
    require(kh % 2 == 1 && kw % 2 == 1,
            "conv2d: same padding needs odd kernel size, got " + shape_str(k.shape()));
    ph = kh / 2;
    pw = kw / 2;
    Ho = H;
    Wo = W;
  } else {
    require(H >= kh && W >= kw,
            "conv2d: kernel " + shape_str(k.shape()) + " larger than input " + shape_str(in.shape()));
    Ho = H - kh + 1;
    Wo = W - kw + 1;
  }

  auto padded = std::make_shared<Tensor>(pad_spatial(in, ph, pw));
  const std::size_t Hp = H + 2 * ph, Wp = W + 2 * pw;

  Tensor out({B, Co, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Co; ++co) {
      double* op = out.data() + (b * Co + co) * Ho * Wo;
      const double bv = bs[co];
      for (std::size_t i = 0; i < Ho * Wo; ++i) op[i] = bv;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* pp = padded->data() + (b * Ci + ci) * Hp * Wp;
        const double* kp = k.data() + (co * Ci + ci) * kh * kw;
        for (std::size_t dy = 0; dy < kh; ++dy) {
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const double kv = kp[dy * kw + dx];
            for (std::size_t y = 0; y < Ho; ++y) {
              row_axpy(op + y * Wo, pp + (y + dy) * Wp + dx, kv, Wo);
            }
          }
        }
      }
    }
  }

  const bool track = tracked(input) || tracked(kernel) || tracked(bias);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      const Tensor& dout = t.nodes_[self].grad;
      const Tensor& kk = t.value(kernel);
      if (Tensor* db = t.grad_buf(bias)) {
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Co; ++co) {
            const double* dp = dout.data() + (b * Co + co) * Ho * Wo;
            double acc = 0.0;
            for (std::size_t i = 0; i < Ho * Wo; ++i) acc += dp[i];
            (*db)[co] += acc;
          }
        }
      }
      if (Tensor* dk = t.grad_buf(kernel)) {
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Co; ++co) {
            const double* dp = dout.data() + (b * Co + co) * Ho * Wo;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const double* pp = padded->data() + (b * Ci + ci) * Hp * Wp;
              double* dkp = dk->data() + (co * Ci + ci) * kh * kw;
              for (std::size_t dy = 0; dy < kh; ++dy) {
                for (std::size_t dx = 0; dx < kw; ++dx) {
                  double acc = 0.0;
                  for (std::size_t y = 0; y < Ho; ++y) {
                    acc += row_dot(dp + y * Wo, pp + (y + dy) * Wp + dx, Wo);
                  }
                  dkp[dy * kw + dx] += acc;
                }
              }
            }
          }
        }
      }
      if (Tensor* din = t.grad_buf(input)) {
        Tensor dpad({B, Ci, Hp, Wp});
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Co; ++co) {
            const double* dp = dout.data() + (b * Co + co) * Ho * Wo;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              double* gp = dpad.data() + (b * Ci + ci) * Hp * Wp;
              const double* kp = kk.data() + (co * Ci + ci) * kh * kw;
              for (std::size_t dy = 0; dy < kh; ++dy) {
                for (std::size_t dx = 0; dx < kw; ++dx) {
                  const double kv = kp[dy * kw + dx];
                  for (std::size_t y = 0; y < Ho; ++y) {
                    row_axpy(gp + (y + dy) * Wp + dx, dp + y * Wo, kv, Wo);
                  }
                }
              }
            }
          }
        }
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double* gp = dpad.data() + (b * Ci + ci) * Hp * Wp;
            double* dst = din->data() + (b * Ci + ci) * H * W;
            for (std::size_t y = 0; y < H; ++y) {
              for (std::size_t x = 0; x < W; ++x) {
                dst[y * W + x] += gp[(y + ph) * Wp + (x + pw)];
              }
            }
          }
        }
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::max_pool_2x2(VarId input) {
  const Tensor& in = value(input);
  require(in.rank() == 4, "max_pool_2x2: input must be (B,C,H,W), got " + shape_str(in.shape()));
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  require(H % 2 == 0 && W % 2 == 0,
          "max_pool_2x2: spatial dims must be even, got " + shape_str(in.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;

  Tensor out({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  for (std::size_t i = 0; i < B * C; ++i) {
    const double* ip = in.data() + i * H * W;
    double* op = out.data() + i * Ho * Wo;
    std::uint32_t* ap = argmax->data() + i * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t x = 0; x < Wo; ++x) {
        // Ties resolve to the first maximum in row-major window order.
        std::size_t best = (2 * y) * W + 2 * x;
        double bv = ip[best];
        const std::size_t cand[3] = {(2 * y) * W + 2 * x + 1,
                                     (2 * y + 1) * W + 2 * x,
                                     (2 * y + 1) * W + 2 * x + 1};
        for (std::size_t c2 : cand) {
          if (ip[c2] > bv) {
            bv = ip[c2];
            best = c2;
          }
        }
        op[y * Wo + x] = bv;
        ap[y * Wo + x] = static_cast<std::uint32_t>(best);
      }
    }
  }

  const bool track = tracked(input);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      Tensor* din = t.grad_buf(input);
      if (!din) return;
      const Tensor& dout = t.nodes_[self].grad;
      for (std::size_t i = 0; i < B * C; ++i) {
        const double* dp = dout.data() + i * Ho * Wo;
        const std::uint32_t* ap = argmax->data() + i * Ho * Wo;
        double* gp = din->data() + i * H * W;
        for (std::size_t j = 0; j < Ho * Wo; ++j) gp[ap[j]] += dp[j];
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::conv_transpose_2x2(VarId input, VarId kernel) {
  const Tensor& in = value(input);
  const Tensor& k = value(kernel);
  require(in.rank() == 4,
          "conv_transpose_2x2: input must be (B,C,H,W), got " + shape_str(in.shape()));
  require(k.rank() == 4 && k.dim(2) == 2 && k.dim(3) == 2,
          "conv_transpose_2x2: kernel must be (Ci,Co,2,2), got " + shape_str(k.shape()));
  require(in.dim(1) == k.dim(0),
          "conv_transpose_2x2: input channels " + std::to_string(in.dim(1)) +
              " do not match kernel input channels " + std::to_string(k.dim(0)));
  const std::size_t B = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t Co = k.dim(1);
  const std::size_t Ho = 2 * H, Wo = 2 * W;

  Tensor out({B, Co, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ci = 0; ci < Ci; ++ci) {
      const double* ip = in.data() + (b * Ci + ci) * H * W;
      for (std::size_t co = 0; co < Co; ++co) {
        double* op = out.data() + (b * Co + co) * Ho * Wo;
        const double* kp = k.data() + (ci * Co + co) * 4;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const double kv = kp[dy * 2 + dx];
            for (std::size_t y = 0; y < H; ++y) {
              const double* irow = ip + y * W;
              double* orow = op + (2 * y + dy) * Wo + dx;
              for (std::size_t x = 0; x < W; ++x) orow[2 * x] += kv * irow[x];
            }
          }
        }
      }
    }
  }

  const bool track = tracked(input) || tracked(kernel);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      const Tensor& dout = t.nodes_[self].grad;
      const Tensor& kk = t.value(kernel);
      const Tensor& inv = t.value(input);
      if (Tensor* dk = t.grad_buf(kernel)) {
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double* ip = inv.data() + (b * Ci + ci) * H * W;
            for (std::size_t co = 0; co < Co; ++co) {
              const double* dp = dout.data() + (b * Co + co) * Ho * Wo;
              double* dkp = dk->data() + (ci * Co + co) * 4;
              for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  double acc = 0.0;
                  for (std::size_t y = 0; y < H; ++y) {
                    const double* irow = ip + y * W;
                    const double* drow = dp + (2 * y + dy) * Wo + dx;
                    for (std::size_t x = 0; x < W; ++x) acc += irow[x] * drow[2 * x];
                  }
                  dkp[dy * 2 + dx] += acc;
                }
              }
            }
          }
        }
      }
      if (Tensor* din = t.grad_buf(input)) {
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            double* gp = din->data() + (b * Ci + ci) * H * W;
            for (std::size_t co = 0; co < Co; ++co) {
              const double* dp = dout.data() + (b * Co + co) * Ho * Wo;
              const double* kp = kk.data() + (ci * Co + co) * 4;
              for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const double kv = kp[dy * 2 + dx];
                  for (std::size_t y = 0; y < H; ++y) {
                    double* grow = gp + y * W;
                    const double* drow = dp + (2 * y + dy) * Wo + dx;
                    for (std::size_t x = 0; x < W; ++x) grow[x] += kv * drow[2 * x];
                  }
                }
              }
            }
          }
        }
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::global_avg_pool(VarId input) {
  const Tensor& in = value(input);
  require(in.rank() == 4,
          "global_avg_pool: input must be (B,C,H,W), got " + shape_str(in.shape()));
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const double inv = 1.0 / static_cast<double>(H * W);

  Tensor out({B, C});
  for (std::size_t i = 0; i < B * C; ++i) {
    const double* ip = in.data() + i * H * W;
    double acc = 0.0;
    for (std::size_t j = 0; j < H * W; ++j) acc += ip[j];
    out[i] = acc * inv;
  }

  const bool track = tracked(input);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      Tensor* din = t.grad_buf(input);
      if (!din) return;
      const Tensor& dout = t.nodes_[self].grad;
      for (std::size_t i = 0; i < B * C; ++i) {
        const double g = dout[i] * inv;
        double* gp = din->data() + i * H * W;
        for (std::size_t j = 0; j < H * W; ++j) gp[j] += g;
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::matmul(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2,
          "matmul: operands must be matrices, got " + shape_str(av.shape()) +
              " and " + shape_str(bv.shape()));
  require(av.dim(1) == bv.dim(0),
          "matmul: inner dimensions disagree, " + shape_str(av.shape()) +
              " x " + shape_str(bv.shape()));
  const std::size_t P = av.dim(0), Q = av.dim(1), R = bv.dim(1);

  Tensor out({P, R});
  for (std::size_t p = 0; p < P; ++p) {
    const double* ar = av.data() + p * Q;
    double* orow = out.data() + p * R;
    for (std::size_t q = 0; q < Q; ++q) {
      const double x = ar[q];
      const double* br = bv.data() + q * R;
      for (std::size_t r = 0; r < R; ++r) orow[r] += x * br[r];
    }
  }

  const bool track = tracked(a) || tracked(b);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      const Tensor& dout = t.nodes_[self].grad;
      const Tensor& aa = t.value(a);
      const Tensor& bb = t.value(b);
      if (Tensor* da = t.grad_buf(a)) {  // dA = dY * B^T
        for (std::size_t p = 0; p < P; ++p) {
          const double* dr = dout.data() + p * R;
          double* gr = da->data() + p * Q;
          for (std::size_t q = 0; q < Q; ++q) {
            const double* br = bb.data() + q * R;
            double acc = 0.0;
            for (std::size_t r = 0; r < R; ++r) acc += dr[r] * br[r];
            gr[q] += acc;
          }
        }
      }
      if (Tensor* db = t.grad_buf(b)) {  // dB = A^T * dY
        for (std::size_t p = 0; p < P; ++p) {
          const double* ar = aa.data() + p * Q;
          const double* dr = dout.data() + p * R;
          for (std::size_t q = 0; q < Q; ++q) {
            double* gr = db->data() + q * R;
            const double x = ar[q];
            for (std::size_t r = 0; r < R; ++r) gr[r] += x * dr[r];
          }
        }
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::activation(VarId input, Activation kind) {
  const Tensor& in = value(input);
  Tensor out(in.shape());
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = relu(in[i]);
  } else {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid(in[i]);
  }

  const bool track = tracked(input);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      Tensor* din = t.grad_buf(input);
      if (!din) return;
      const Tensor& dout = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      if (kind == Activation::relu) {
        const Tensor& x = t.value(input);
        // Subgradient 0 at x == 0.
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (x[i] > 0.0) (*din)[i] += dout[i];
        }
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) {
          (*din)[i] += dout[i] * y[i] * (1.0 - y[i]);
        }
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::concat_channels(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 4 && bv.rank() == 4 && av.dim(0) == bv.dim(0) &&
              av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
          "concat_channels: incompatible shapes " + shape_str(av.shape()) +
              " and " + shape_str(bv.shape()));
  const std::size_t B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1);
  const std::size_t HW = av.dim(2) * av.dim(3);

  Tensor out({B, Ca + Cb, av.dim(2), av.dim(3)});
  for (std::size_t bi = 0; bi < B; ++bi) {
    double* op = out.data() + bi * (Ca + Cb) * HW;
    const double* ap = av.data() + bi * Ca * HW;
    const double* bp2 = bv.data() + bi * Cb * HW;
    std::copy(ap, ap + Ca * HW, op);
    std::copy(bp2, bp2 + Cb * HW, op + Ca * HW);
  }

  const bool track = tracked(a) || tracked(b);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      const Tensor& dout = t.nodes_[self].grad;
      if (Tensor* da = t.grad_buf(a)) {
        for (std::size_t bi = 0; bi < B; ++bi) {
          const double* dp = dout.data() + bi * (Ca + Cb) * HW;
          double* gp = da->data() + bi * Ca * HW;
          for (std::size_t i = 0; i < Ca * HW; ++i) gp[i] += dp[i];
        }
      }
      if (Tensor* db = t.grad_buf(b)) {
        for (std::size_t bi = 0; bi < B; ++bi) {
          const double* dp = dout.data() + bi * (Ca + Cb) * HW + Ca * HW;
          double* gp = db->data() + bi * Cb * HW;
          for (std::size_t i = 0; i < Cb * HW; ++i) gp[i] += dp[i];
        }
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::scale_channels(VarId input, VarId gates) {
  const Tensor& in = value(input);
  const Tensor& g = value(gates);
  require(in.rank() == 4 && g.rank() == 2 && in.dim(0) == g.dim(0) &&
              in.dim(1) == g.dim(1),
          "scale_channels: feature map " + shape_str(in.shape()) +
              " incompatible with gates " + shape_str(g.shape()));
  const std::size_t BC = in.dim(0) * in.dim(1);
  const std::size_t HW = in.dim(2) * in.dim(3);

  Tensor out(in.shape());
  for (std::size_t i = 0; i < BC; ++i) {
    const double s = g[i];
    const double* ip = in.data() + i * HW;
    double* op = out.data() + i * HW;
    for (std::size_t j = 0; j < HW; ++j) op[j] = s * ip[j];
  }

  const bool track = tracked(input) || tracked(gates);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      const Tensor& dout = t.nodes_[self].grad;
      const Tensor& inv = t.value(input);
      const Tensor& gv = t.value(gates);
      if (Tensor* din = t.grad_buf(input)) {
        for (std::size_t i = 0; i < BC; ++i) {
          const double s = gv[i];
          const double* dp = dout.data() + i * HW;
          double* gp = din->data() + i * HW;
          for (std::size_t j = 0; j < HW; ++j) gp[j] += s * dp[j];
        }
      }
      if (Tensor* dg = t.grad_buf(gates)) {
        for (std::size_t i = 0; i < BC; ++i) {
          const double* dp = dout.data() + i * HW;
          const double* ip = inv.data() + i * HW;
          double acc = 0.0;
          for (std::size_t j = 0; j < HW; ++j) acc += dp[j] * ip[j];
          (*dg)[i] += acc;
        }
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::multiply(VarId a, VarId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.same_shape(bv), "multiply: shape " + shape_str(av.shape()) +
                                 " vs " + shape_str(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];

  const bool track = tracked(a) || tracked(b);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      const Tensor& dout = t.nodes_[self].grad;
      if (Tensor* da = t.grad_buf(a)) {
        const Tensor& bb = t.value(b);
        for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += dout[i] * bb[i];
      }
      if (Tensor* db = t.grad_buf(b)) {
        const Tensor& aa = t.value(a);
        for (std::size_t i = 0; i < dout.size(); ++i) (*db)[i] += dout[i] * aa[i];
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::sum(VarId a) {
  const Tensor& av = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  Tensor out({1});
  out[0] = acc;

  const bool track = tracked(a);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      Tensor* da = t.grad_buf(a);
      if (!da) return;
      const double g = t.nodes_[self].grad[0];
      for (std::size_t i = 0; i < da->size(); ++i) (*da)[i] += g;
    };
  }
  return push(std::move(out), track, std::move(bp));
}

VarId Tape::dice_loss(VarId prediction, VarId truth) {
  const Tensor& s = value(prediction);
  const Tensor& r = value(truth);
  require(s.size() == r.size(),
          "dice_loss: prediction has " + std::to_string(s.size()) +
              " entries, truth has " + std::to_string(r.size()));
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    inter += s[i] * r[i];
    total += s[i] + r[i];
  }
  Tensor out({1});
  out[0] = total > 0.0 ? -2.0 * inter / total : 0.0;

  const bool track = tracked(prediction);
  std::function<void(Tape&)> bp;
  if (track) {
    const VarId self = static_cast<VarId>(nodes_.size());
    bp = [=](Tape& t) {
      Tensor* ds = t.grad_buf(prediction);
      if (!ds || total <= 0.0) return;
      const double g = t.nodes_[self].grad[0];
      const Tensor& rr = t.value(truth);
      const double t2 = total * total;
      for (std::size_t i = 0; i < ds->size(); ++i) {
        (*ds)[i] += g * (2.0 * inter - 2.0 * rr[i] * total) / t2;
      }
    };
  }
  return push(std::move(out), track, std::move(bp));
}

}  // namespace zonalseg
