#pragma once

#include <string>
#include <string_view>

#include "ersinv/common.hpp"
#include "ersinv/nn/tensor.hpp"

namespace ersinv {

// L = (v + alpha * s) / (H * W) with depth-weighted squared misfit v and total variation s.
struct LossConfig {
  double alpha = 0.2;
  double beta = 1.0;
  double lambda = 8.0;

  void validate() const;
  std::string describe() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// SD smooth+depth, OS smooth only, OD depth only, NA neither.
enum class LossVariant { SD, OS, OD, NA };
std::string_view to_string(LossVariant v);
LossVariant parse_loss_variant(std::string_view s);
LossConfig loss_config(LossVariant v);

// (i + lambda)^(beta/2)
double depth_weight(std::size_t row, const LossConfig& cfg);
Field depth_weight_map(std::size_t height, std::size_t width, const LossConfig& cfg);

double value_term(const Field& pred, const Field& truth, const LossConfig& cfg);
double smooth_term(const Field& pred);
double total_loss(const Field& pred, const Field& truth, const LossConfig& cfg);
// sign(0) taken as 0 in the TV part.
Field loss_grad(const Field& pred, const Field& truth, const LossConfig& cfg);

// Mean of total_loss over an N x 1 x H x W batch; if `grad` is given it receives dL/dpred.
double batch_loss(const nn::Tensor4& pred, const nn::Tensor4& truth, const LossConfig& cfg,
                  nn::Tensor4* grad = nullptr);

}  // namespace ersinv
