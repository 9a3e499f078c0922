#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ersinv/common.hpp"

namespace ersinv::nn {

struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  std::string str() const;
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

// N x C x H x W, contiguous row-major.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return data_[((n * shape_.c + c) * shape_.h + i) * shape_.w + j];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[((n * shape_.c + c) * shape_.h + i) * shape_.w + j];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Pointer to plane (n, c).
  double* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const double* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  // Pointer to sample n (C x H x W block).
  double* sample(std::size_t n) { return data_.data() + n * shape_.c * shape_.plane(); }
  const double* sample(std::size_t n) const { return data_.data() + n * shape_.c * shape_.plane(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const;
  void add(const Tensor4& other);

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

}  // namespace ersinv::nn
