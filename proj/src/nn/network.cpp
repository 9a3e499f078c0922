#include "ersinv/nn/network.hpp"

#include <cmath>
#include <random>

#include "../bytes.hpp"
#include "ersinv/features.hpp"

namespace ersinv::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::TConv: return "tconv";
    case LayerKind::Concat: return "concat";
    case LayerKind::ResidualAdd: return "residual_add";
    case LayerKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

namespace {

struct Node {
  std::size_t channels;
  int depth;  // number of net poolings applied
};

[[noreturn]] void bad_layer(std::size_t i, const std::string& msg) {
  throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + ": " + msg);
}

// Output channels/depth of every layer, validating as it goes.
std::vector<Node> trace(const NetworkSpec& spec, int* max_depth = nullptr) {
  if (spec.in_channels == 0) throw Error(ErrorCode::ShapeMismatch, "network needs at least one input channel");
  std::vector<Node> nodes;
  nodes.reserve(spec.layers.size());
  Node cur{spec.in_channels, 0};
  int deepest = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.in_channels != cur.channels)
      bad_layer(i, "expects " + std::to_string(l.in_channels) + " channels, receives " + std::to_string(cur.channels));
    const bool has_source = l.kind == LayerKind::Concat || l.kind == LayerKind::ResidualAdd;
    if (has_source != (l.source >= 0)) bad_layer(i, "source id only allowed on concat/residual layers");
    if (has_source && static_cast<std::size_t>(l.source) >= i) bad_layer(i, "source must precede the layer");
    const std::size_t same = cur.channels;
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.kernel % 2 == 0) bad_layer(i, "conv kernel must be odd");
        if (l.out_channels == 0) bad_layer(i, "conv needs output channels");
        cur.channels = l.out_channels;
        break;
      case LayerKind::TConv:
        if (l.kernel != 2) bad_layer(i, "tconv kernel must be 2");
        if (l.out_channels == 0) bad_layer(i, "tconv needs output channels");
        if (cur.depth == 0) bad_layer(i, "tconv would exceed the input resolution");
        cur.channels = l.out_channels;
        --cur.depth;
        break;
      case LayerKind::MaxPool:
        ++cur.depth;
        deepest = std::max(deepest, cur.depth);
        break;
      case LayerKind::Concat: {
        const Node& s = nodes[static_cast<std::size_t>(l.source)];
        if (s.depth != cur.depth) bad_layer(i, "concat source has a different resolution");
        cur.channels += s.channels;
        break;
      }
      case LayerKind::ResidualAdd: {
        const Node& s = nodes[static_cast<std::size_t>(l.source)];
        if (s.depth != cur.depth || s.channels != cur.channels) bad_layer(i, "residual source shape differs");
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::BatchNorm:
      case LayerKind::Sigmoid:
        break;
    }
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::TConv && l.kind != LayerKind::Concat &&
        l.out_channels != same)
      bad_layer(i, "channel-preserving layer declares a different width");
    if (l.out_channels != cur.channels) bad_layer(i, "declared output channels disagree with the graph");
    nodes.push_back(cur);
  }
  if (max_depth) *max_depth = deepest;
  return nodes;
}

}  // namespace

void NetworkSpec::validate() const {
  if (layers.empty()) throw Error(ErrorCode::ShapeMismatch, "network has no layers");
  (void)trace(*this);
}

std::size_t NetworkSpec::out_channels() const { return layers.empty() ? in_channels : layers.back().out_channels; }

std::size_t NetworkSpec::count(LayerKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.kind == kind; }));
}

std::size_t NetworkSpec::count_conv(std::size_t kernel) const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [&](const LayerSpec& l) {
    return l.kind == LayerKind::Conv && l.kernel == kernel;
  }));
}

std::size_t NetworkSpec::input_divisor() const {
  int deepest = 0;
  (void)trace(*this, &deepest);
  return std::size_t{1} << deepest;
}

std::string NetworkSpec::canonical() const {
  std::string s = "in=" + std::to_string(in_channels) + "\n";
  for (const auto& l : layers) {
    s += std::string(to_string(l.kind)) + " " + std::to_string(l.in_channels) + " " + std::to_string(l.out_channels) +
         " k" + std::to_string(l.kernel) + " s" + std::to_string(l.source) + "\n";
  }
  return s;
}

std::uint64_t NetworkSpec::digest() const { return fnv1a(canonical()); }

SpecBuilder::SpecBuilder(std::size_t in_channels) : channels_(in_channels) { spec_.in_channels = in_channels; }

std::size_t SpecBuilder::push(LayerSpec l) {
  spec_.layers.push_back(l);
  (void)trace(spec_);
  channels_ = l.out_channels;
  return spec_.layers.size() - 1;
}

std::size_t SpecBuilder::conv(std::size_t out_channels, std::size_t kernel) {
  return push({LayerKind::Conv, channels_, out_channels, kernel, -1});
}
std::size_t SpecBuilder::batchnorm() { return push({LayerKind::BatchNorm, channels_, channels_, 0, -1}); }
std::size_t SpecBuilder::relu() { return push({LayerKind::ReLU, channels_, channels_, 0, -1}); }
std::size_t SpecBuilder::sigmoid() { return push({LayerKind::Sigmoid, channels_, channels_, 0, -1}); }
std::size_t SpecBuilder::maxpool() { return push({LayerKind::MaxPool, channels_, channels_, 0, -1}); }
std::size_t SpecBuilder::tconv(std::size_t out_channels) {
  return push({LayerKind::TConv, channels_, out_channels, 2, -1});
}
std::size_t SpecBuilder::concat(std::size_t source) {
  if (source >= spec_.layers.size()) throw Error(ErrorCode::ShapeMismatch, "concat source out of range");
  return push({LayerKind::Concat, channels_, channels_ + spec_.layers[source].out_channels, 0,
               static_cast<int>(source)});
}
std::size_t SpecBuilder::residual_add(std::size_t source) {
  return push({LayerKind::ResidualAdd, channels_, channels_, 0, static_cast<int>(source)});
}
std::size_t SpecBuilder::conv_bn_relu(std::size_t out_channels, std::size_t kernel) {
  conv(out_channels, kernel);
  batchnorm();
  return relu();
}
std::size_t SpecBuilder::last() const {
  if (spec_.layers.empty()) throw Error(ErrorCode::ShapeMismatch, "no layers yet");
  return spec_.layers.size() - 1;
}
NetworkSpec SpecBuilder::build() const {
  spec_.validate();
  return spec_;
}

UNetConfig desk_unet(bool tier_enabled) {
  UNetConfig c;
  c.in_channels = tier_enabled ? 3 : 2;
  return c;
}

UNetConfig paper_unet(bool tier_enabled) {
  UNetConfig c = desk_unet(tier_enabled);
  for (auto& w : c.widths) w *= 4;
  return c;
}

NetworkSpec build_unet(const UNetConfig& cfg) {
  if (cfg.widths.size() != 5) throw Error(ErrorCode::InvalidArgument, "U-Net needs 5 widths (4 levels + bottleneck)");
  for (auto w : cfg.widths)
    if (w == 0) throw Error(ErrorCode::InvalidArgument, "U-Net widths must be positive");
  SpecBuilder b(cfg.in_channels);
  std::vector<std::size_t> skips;
  for (std::size_t level = 0; level < 4; ++level) {
    b.conv_bn_relu(cfg.widths[level]);
    skips.push_back(b.conv_bn_relu(cfg.widths[level]));
    b.maxpool();
  }
  b.conv_bn_relu(cfg.widths[4]);
  b.conv_bn_relu(cfg.widths[4]);
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t level = 3 - k;
    b.tconv(cfg.widths[level]);
    b.concat(skips[level]);
    b.conv_bn_relu(cfg.widths[level]);
    b.conv_bn_relu(cfg.widths[level]);
  }
  for (std::size_t r = 0; r < cfg.residual_blocks; ++r) {
    const std::size_t src = b.last();
    b.conv_bn_relu(cfg.widths[0]);
    b.conv(cfg.widths[0]);
    b.batchnorm();
    b.residual_add(src);
    b.relu();
  }
  b.conv(1, 1);
  b.sigmoid();
  return b.build();
}

std::size_t Parameters::trainable_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size() + l.gamma.size() + l.beta.size();
  return n;
}

bool Parameters::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  for (const auto& l : layers)
    if (!l.weight.all_finite() || !finite(l.bias) || !finite(l.gamma) || !finite(l.beta) ||
        !finite(l.running_mean) || !finite(l.running_var))
      return false;
  return true;
}

Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Parameters p;
  p.layers.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    auto& lp = p.layers[i];
    std::mt19937_64 rng(mix_seed(seed, i));
    if (l.kind == LayerKind::Conv) {
      lp.weight = Tensor4(l.out_channels, l.in_channels, l.kernel, l.kernel);
      const double fan_in = static_cast<double>(l.in_channels * l.kernel * l.kernel);
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : lp.weight.values()) v = nd(rng);
      lp.bias.assign(l.out_channels, 0.0);
    } else if (l.kind == LayerKind::TConv) {
      // Channel-averaging nearest-neighbour upsampling plus a little noise.
      lp.weight = Tensor4(l.out_channels, l.in_channels, 2, 2);
      const double share = static_cast<double>(l.out_channels) / static_cast<double>(l.in_channels);
      std::normal_distribution<double> nd(0.0, 0.01);
      for (std::size_t o = 0; o < l.out_channels; ++o)
        for (std::size_t c = 0; c < l.in_channels; ++c)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              lp.weight(o, c, a, b) = (c % l.out_channels == o ? share : 0.0) + nd(rng);
      lp.bias.assign(l.out_channels, 0.0);
    } else if (l.kind == LayerKind::BatchNorm) {
      lp.gamma.assign(l.out_channels, 1.0);
      lp.beta.assign(l.out_channels, 0.0);
      lp.running_mean.assign(l.out_channels, 0.0);
      lp.running_var.assign(l.out_channels, 1.0);
    }
  }
  return p;
}

Gradients zero_gradients(const Parameters& params) {
  Gradients g;
  g.layers.resize(params.layers.size());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& s = params.layers[i];
    auto& d = g.layers[i];
    d.weight = Tensor4(s.weight.shape());
    d.bias.assign(s.bias.size(), 0.0);
    d.gamma.assign(s.gamma.size(), 0.0);
    d.beta.assign(s.beta.size(), 0.0);
  }
  return g;
}

namespace {

void check_params(const NetworkSpec& spec, const Parameters& params) {
  if (params.layers.size() != spec.layers.size())
    throw Error(ErrorCode::ShapeMismatch, "parameter set has " + std::to_string(params.layers.size()) +
                                              " layers, network has " + std::to_string(spec.layers.size()));
}

}  // namespace

Tensor4 forward(const NetworkSpec& spec, Parameters& params, const Tensor4& input, BnMode mode, ForwardCache* cache) {
  check_params(spec, params);
  const std::size_t div = spec.input_divisor();
  if (input.c() != spec.in_channels || input.n() == 0)
    throw Error(ErrorCode::ShapeMismatch, "network expects " + std::to_string(spec.in_channels) +
                                              " input channels, got " + input.shape().str());
  if (input.h() == 0 || input.w() == 0 || input.h() % div != 0 || input.w() % div != 0)
    throw Error(ErrorCode::ShapeMismatch,
                "input H and W must be positive multiples of " + std::to_string(div) + ", got " + input.shape().str());

  const std::size_t n_layers = spec.layers.size();
  std::vector<Tensor4> outputs(n_layers);
  std::vector<BnCache> bn(n_layers);
  std::vector<std::vector<std::uint32_t>> argmax(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = spec.layers[i];
    auto& lp = params.layers[i];
    const Tensor4& x = i == 0 ? input : outputs[i - 1];
    switch (l.kind) {
      case LayerKind::Conv: outputs[i] = conv_forward(x, lp.weight, lp.bias); break;
      case LayerKind::TConv: outputs[i] = tconv_forward(x, lp.weight, lp.bias); break;
      case LayerKind::ReLU: outputs[i] = relu_forward(x); break;
      case LayerKind::Sigmoid: outputs[i] = sigmoid_forward(x); break;
      case LayerKind::BatchNorm:
        outputs[i] = batchnorm_forward(x, lp.gamma, lp.beta, lp.running_mean, lp.running_var, mode,
                                       cache ? &bn[i] : nullptr);
        break;
      case LayerKind::MaxPool: {
        auto r = maxpool_forward(x);
        outputs[i] = std::move(r.y);
        if (cache) argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::Concat: outputs[i] = concat_forward(x, outputs[static_cast<std::size_t>(l.source)]); break;
      case LayerKind::ResidualAdd: outputs[i] = add_forward(x, outputs[static_cast<std::size_t>(l.source)]); break;
    }
  }
  Tensor4 out = outputs.back();
  if (!out.all_finite()) throw Error(ErrorCode::NaNDetected, "network output contains non-finite values");
  if (cache) {
    cache->digest = spec.digest();
    cache->mode = mode;
    cache->input = input;
    cache->outputs = std::move(outputs);
    cache->bn = std::move(bn);
    cache->argmax = std::move(argmax);
  }
  return out;
}

namespace {

void accumulate(std::vector<Tensor4>& grads, Tensor4& dinput, std::ptrdiff_t target, Tensor4&& g) {
  Tensor4& dst = target < 0 ? dinput : grads[static_cast<std::size_t>(target)];
  if (dst.size() == 0)
    dst = std::move(g);
  else
    dst.add(g);
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

BackwardResult backward(const NetworkSpec& spec, const Parameters& params, const ForwardCache& cache,
                        const Tensor4& dy) {
  check_params(spec, params);
  const std::size_t n_layers = spec.layers.size();
  if (cache.digest != spec.digest() || cache.outputs.size() != n_layers || cache.bn.size() != n_layers)
    throw Error(ErrorCode::CacheMismatch, "forward cache was produced by a different network");
  if (!(dy.shape() == cache.outputs.back().shape()))
    throw Error(ErrorCode::CacheMismatch,
                "output gradient " + dy.shape().str() + " does not match cached output " +
                    cache.outputs.back().shape().str());

  BackwardResult res{zero_gradients(params), Tensor4()};
  std::vector<Tensor4> dout(n_layers);
  dout.back() = dy;
  for (std::size_t k = n_layers; k-- > 0;) {
    if (dout[k].size() == 0) continue;  // no path from the output
    Tensor4 g = std::move(dout[k]);
    const auto& l = spec.layers[k];
    const auto& lp = params.layers[k];
    auto& gp = res.grads.layers[k];
    const Tensor4& x = k == 0 ? cache.input : cache.outputs[k - 1];
    const std::ptrdiff_t prev = static_cast<std::ptrdiff_t>(k) - 1;
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::TConv: {
        auto cg = l.kind == LayerKind::Conv ? conv_backward(g, x, lp.weight) : tconv_backward(g, x, lp.weight);
        gp.weight = std::move(cg.dweight);
        gp.bias = std::move(cg.dbias);
        accumulate(dout, res.dinput, prev, std::move(cg.dx));
        break;
      }
      case LayerKind::ReLU: accumulate(dout, res.dinput, prev, relu_backward(g, cache.outputs[k])); break;
      case LayerKind::Sigmoid: accumulate(dout, res.dinput, prev, sigmoid_backward(g, cache.outputs[k])); break;
      case LayerKind::BatchNorm: {
        if (cache.bn[k].xhat.size() == 0) throw Error(ErrorCode::CacheMismatch, "batchnorm cache missing");
        auto bg = batchnorm_backward(g, cache.bn[k], lp.gamma);
        add_into(gp.gamma, bg.dgamma);
        add_into(gp.beta, bg.dbeta);
        accumulate(dout, res.dinput, prev, std::move(bg.dx));
        break;
      }
      case LayerKind::MaxPool:
        if (cache.argmax[k].size() != g.size()) throw Error(ErrorCode::CacheMismatch, "pooling cache missing");
        accumulate(dout, res.dinput, prev, maxpool_backward(g, cache.argmax[k], x.shape()));
        break;
      case LayerKind::Concat: {
        Tensor4 da, db;
        concat_backward(g, x.c(), da, db);
        accumulate(dout, res.dinput, prev, std::move(da));
        accumulate(dout, res.dinput, l.source, std::move(db));
        break;
      }
      case LayerKind::ResidualAdd: {
        Tensor4 copy = g;
        accumulate(dout, res.dinput, prev, std::move(g));
        accumulate(dout, res.dinput, l.source, std::move(copy));
        break;
      }
    }
  }
  if (res.dinput.size() == 0) res.dinput = Tensor4(cache.input.shape());
  return res;
}

ReceptiveFieldReport receptive_field(const NetworkSpec& spec) {
  spec.validate();
  ReceptiveFieldReport rep;
  double rf = 1.0, jump = 1.0, start = 0.0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv:
        rf += static_cast<double>(l.kernel - 1) * jump;
        break;
      case LayerKind::MaxPool:
        rf += jump;
        start += 0.5 * jump;
        jump *= 2.0;
        break;
      case LayerKind::TConv:
        rf += jump;
        start -= 0.25 * jump;
        jump *= 0.5;
        break;
      default:
        break;
    }
    rep.layers.push_back({i, l.kind, rf, jump, start});
  }
  rep.rf = rf;
  return rep;
}

namespace {

constexpr char kMagic[4] = {'E', 'R', 'S', 'W'};

void put_block(detail::Writer& w, const std::vector<double>& v) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
  for (double x : v) w.put<float>(static_cast<float>(x));
}

std::vector<double> get_block(detail::Reader& r, std::size_t expected, std::size_t layer) {
  const auto n = r.get<std::uint32_t>();
  if (n != expected)
    throw Error(ErrorCode::ShapeMismatch, "checkpoint layer " + std::to_string(layer) + " holds " + std::to_string(n) +
                                              " values, expected " + std::to_string(expected));
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(r.get<float>());
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkSpec& spec, const Parameters& params) {
  check_params(spec, params);
  detail::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint64_t>(spec.digest());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& lp = params.layers[i];
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.layers[i].kind));
    put_block(w, lp.weight.values());
    put_block(w, lp.bias);
    put_block(w, lp.gamma);
    put_block(w, lp.beta);
    put_block(w, lp.running_mean);
    put_block(w, lp.running_var);
  }
  w.put<std::uint32_t>(crc32(w.bytes, w.bytes.size()));
  return std::move(w.bytes);
}

Parameters decode_checkpoint(const std::vector<std::uint8_t>& bytes, const NetworkSpec& spec) {
  if (bytes.size() < 4 + 2 + 8 + 4 + 4) throw Error(ErrorCode::TruncatedFile, "checkpoint too short");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not an ERSW checkpoint");
  const std::size_t payload = bytes.size() - 4;
  detail::Reader r(bytes, payload, "checkpoint");
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + " unsupported");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + payload, 4);
  if (stored != crc32(bytes, payload)) throw Error(ErrorCode::ChecksumMismatch, "checkpoint checksum mismatch");
  const auto digest = r.get<std::uint64_t>();
  if (digest != spec.digest())
    throw Error(ErrorCode::DigestMismatch,
                "checkpoint was written for network " + hex64(digest) + ", expected " + hex64(spec.digest()));
  const auto n_layers = r.get<std::uint32_t>();
  if (n_layers != spec.layers.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint layer count differs");
  Parameters p = init_parameters(spec, 0);
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(spec.layers[i].kind))
      throw Error(ErrorCode::ShapeMismatch, "checkpoint layer kind differs at " + std::to_string(i));
    auto& lp = p.layers[i];
    lp.weight.values() = get_block(r, lp.weight.size(), i);
    lp.bias = get_block(r, lp.bias.size(), i);
    lp.gamma = get_block(r, lp.gamma.size(), i);
    lp.beta = get_block(r, lp.beta.size(), i);
    lp.running_mean = get_block(r, lp.running_mean.size(), i);
    lp.running_var = get_block(r, lp.running_var.size(), i);
  }
  if (r.pos() != payload) throw Error(ErrorCode::TruncatedFile, "trailing bytes in checkpoint");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const Parameters& params) {
  write_file_atomic(path, encode_checkpoint(spec, params));
}

Parameters load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec) {
  return decode_checkpoint(read_file(path), spec);
}

}  // namespace ersinv::nn
