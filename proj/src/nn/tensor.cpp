#include "ersinv/nn/tensor.hpp"

#include <cmath>

namespace ersinv::nn {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor4::add(const Tensor4& other) {
  if (!(shape_ == other.shape_))
    throw Error(ErrorCode::ShapeMismatch, "add: " + shape_.str() + " vs " + other.shape_.str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

}  // namespace ersinv::nn
