#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ersinv/nn/ops.hpp"
#include "ersinv/nn/tensor.hpp"

namespace ersinv::nn {

enum class LayerKind : std::uint8_t { Conv, ReLU, BatchNorm, MaxPool, TConv, Concat, ResidualAdd, Sigmoid };

std::string_view to_string(LayerKind kind);

// Each layer consumes the previous layer's output (the network input for layer 0).
// Concat appends the output of `source`; ResidualAdd adds it.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;  // Conv: odd size; TConv: 2; otherwise 0
  int source = -1;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::size_t in_channels = 3;
  std::vector<LayerSpec> layers;

  // Channel and resolution consistency along the graph; throws ShapeMismatch.
  void validate() const;
  std::size_t out_channels() const;
  std::size_t count(LayerKind kind) const;
  std::size_t count_conv(std::size_t kernel) const;
  // H and W must be multiples of this (2^pools).
  std::size_t input_divisor() const;
  std::string canonical() const;
  std::uint64_t digest() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Incremental construction; each call validates channels and returns the new layer id.
class SpecBuilder {
 public:
  explicit SpecBuilder(std::size_t in_channels);
  std::size_t conv(std::size_t out_channels, std::size_t kernel = 3);
  std::size_t batchnorm();
  std::size_t relu();
  std::size_t sigmoid();
  std::size_t maxpool();
  std::size_t tconv(std::size_t out_channels);
  std::size_t concat(std::size_t source);
  std::size_t residual_add(std::size_t source);
  // conv + batchnorm + relu; returns the relu id
  std::size_t conv_bn_relu(std::size_t out_channels, std::size_t kernel = 3);
  std::size_t last() const;
  std::size_t channels() const { return channels_; }
  NetworkSpec build() const;

 private:
  std::size_t push(LayerSpec l);
  NetworkSpec spec_;
  std::size_t channels_;
};

struct UNetConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> widths{16, 32, 64, 128, 256};  // 4 encoder levels + bottleneck
  std::size_t residual_blocks = 2;
};

UNetConfig desk_unet(bool tier_enabled = true);
// Desk widths times four.
UNetConfig paper_unet(bool tier_enabled = true);
NetworkSpec build_unet(const UNetConfig& cfg);

// Trainable tensors plus batchnorm running statistics. Gradients reuse the same layout.
struct LayerParams {
  Tensor4 weight;             // Conv (out,in,k,k) or TConv (out,in,2,2)
  std::vector<double> bias;   // Conv / TConv
  std::vector<double> gamma;  // BatchNorm
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct Parameters {
  std::vector<LayerParams> layers;

  std::size_t trainable_count() const;
  bool all_finite() const;
  friend bool operator==(const Parameters&, const Parameters&) = default;
};
using Gradients = Parameters;

Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed);
// Zero-filled trainable tensors shaped like `params` (running statistics left empty).
Gradients zero_gradients(const Parameters& params);

struct ForwardCache {
  std::uint64_t digest = 0;
  BnMode mode = BnMode::Train;
  Tensor4 input;
  std::vector<Tensor4> outputs;
  std::vector<BnCache> bn;
  std::vector<std::vector<std::uint32_t>> argmax;
};

// Train mode updates batchnorm running statistics in `params`. Throws NaNDetected if the
// output is not finite.
Tensor4 forward(const NetworkSpec& spec, Parameters& params, const Tensor4& input, BnMode mode,
                ForwardCache* cache = nullptr);

struct BackwardResult {
  Gradients grads;
  Tensor4 dinput;
};
BackwardResult backward(const NetworkSpec& spec, const Parameters& params, const ForwardCache& cache,
                        const Tensor4& dy);

struct RfEntry {
  std::size_t layer = 0;
  LayerKind kind = LayerKind::Conv;
  double rf = 1.0;
  double jump = 1.0;
  double start = 0.0;  // centre of the first output cell's field, input coordinates
};

struct ReceptiveFieldReport {
  std::vector<RfEntry> layers;
  double rf = 1.0;
};

// rf += (k-1)*jump, jump *= stride along the main chain; TConv counts as k=2, stride 1/2.
ReceptiveFieldReport receptive_field(const NetworkSpec& spec);

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const NetworkSpec& spec, const Parameters& params);
Parameters decode_checkpoint(const std::vector<std::uint8_t>& bytes, const NetworkSpec& spec);
void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const Parameters& params);
Parameters load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec);

}  // namespace ersinv::nn
