#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvin {

/// Dense row-major float32 array. Shapes are small (rank <= 4), so all
/// indexing helpers recompute strides on the fly; hot loops take raw
/// pointers instead.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0f);
  }

  Tensor(std::vector<int> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<size_t>(count(shape_)) != data_.size())
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int numel() const { return static_cast<int>(data_.size()); }
  const std::vector<int>& shape() const { return shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int i) const { return data_[static_cast<size_t>(i)]; }

  float& at(int c, int h, int w) {
    assert(rank() == 3);
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  float at(int c, int h, int w) const {
    return const_cast<Tensor*>(this)->at(c, h, w);
  }
  float& at(int o, int c, int h, int w) {
    assert(rank() == 4);
    return data_[static_cast<size_t>(((o * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float at(int o, int c, int h, int w) const {
    return const_cast<Tensor*>(this)->at(o, c, h, w);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  void add_inplace(const Tensor& o) {
    assert(same_shape(o));
    const float* src = o.data();
    float* dst = data();
    const int n = numel();
    for (int i = 0; i < n; ++i) dst[i] += src[i];
  }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  static int count(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<float> data_;
};

/// Errors surfaced to the CLI as distinct exit codes.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tvin
