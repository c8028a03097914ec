#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace zonalseg {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_volume(const Shape& s);

// Dense row-major array of doubles. Feature maps are (batch, channels, H, W);
// vectors and matrices drop the leading dimensions. Gradients for tracked
// tensors live on the Tape node that owns the value.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor full(Shape shape, double value);
  static Tensor of(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

  double max_abs_diff(const Tensor& other) const;

private:
  Shape shape_;
  std::vector<double> data_;
};

inline std::size_t idx4(const Shape& s, std::size_t a, std::size_t b,
                        std::size_t c, std::size_t d) {
  return ((a * s[1] + b) * s[2] + c) * s[3] + d;
}

}  // namespace zonalseg
