#pragma once

#include <cstdint>
#include <vector>

#include "ersinv/nn/tensor.hpp"

// Layer primitives and their exact adjoints. Forward functions return the output; backward
// functions take the upstream gradient plus whatever the forward pass cached.
namespace ersinv::nn {

// Square odd kernel (k = 1, 3, 5, ...), stride 1, zero "same" padding k/2.
// Weights (out, in, k, k), bias (out).
Tensor4 conv_forward(const Tensor4& x, const Tensor4& weight, const std::vector<double>& bias);

struct ConvGrads {
  Tensor4 dx;
  Tensor4 dweight;
  std::vector<double> dbias;
};
ConvGrads conv_backward(const Tensor4& dy, const Tensor4& x, const Tensor4& weight);

Tensor4 relu_forward(const Tensor4& x);
// Uses the forward output; the subgradient at 0 is 0.
Tensor4 relu_backward(const Tensor4& dy, const Tensor4& y);

Tensor4 sigmoid_forward(const Tensor4& x);
Tensor4 sigmoid_backward(const Tensor4& dy, const Tensor4& y);

struct PoolResult {
  Tensor4 y;
  std::vector<std::uint32_t> argmax;  // flat index into the input for every output element
};
// 2x2 window, stride 2. Ties go to the smallest flat index.
PoolResult maxpool_forward(const Tensor4& x);
Tensor4 maxpool_backward(const Tensor4& dy, const std::vector<std::uint32_t>& argmax, const Shape4& x_shape);

// 2x2 kernel, stride 2 transposed convolution. Weights (out, in, 2, 2), bias (out).
Tensor4 tconv_forward(const Tensor4& x, const Tensor4& weight, const std::vector<double>& bias);
ConvGrads tconv_backward(const Tensor4& dy, const Tensor4& x, const Tensor4& weight);

// Channel concatenation [a, b].
Tensor4 concat_forward(const Tensor4& a, const Tensor4& b);
void concat_backward(const Tensor4& dy, std::size_t a_channels, Tensor4& da, Tensor4& db);

Tensor4 add_forward(const Tensor4& a, const Tensor4& b);

enum class BnMode { Train, Eval };

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

struct BnCache {
  Tensor4 xhat;
  std::vector<double> inv_std;
  BnMode mode = BnMode::Train;
};

// Per-channel standardisation over (N, H, W). Train mode uses batch statistics and updates the
// running estimates; eval mode uses the running estimates.
Tensor4 batchnorm_forward(const Tensor4& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                          std::vector<double>& running_mean, std::vector<double>& running_var, BnMode mode,
                          BnCache* cache);

struct BnGrads {
  Tensor4 dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};
BnGrads batchnorm_backward(const Tensor4& dy, const BnCache& cache, const std::vector<double>& gamma);

}  // namespace ersinv::nn
