#include "ersinv/features.hpp"

#include "bytes.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ersinv {

Field tier_map(std::size_t height, std::size_t width) {
  if (height < 1 || width < 1) throw Error(ErrorCode::InvalidArgument, "tier map needs h, w >= 1");
  Field t(height, width);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) t(i, j) = static_cast<double>(i);
  return t;
}

void NormalizationSpec::validate() const {
  if (!(lo > 0.0) || !(hi > lo)) throw Error(ErrorCode::InvalidArgument, "normalization needs 0 < lo < hi");
}

double normalize(double rho, const NormalizationSpec& spec) {
  spec.validate();
  if (!(rho >= spec.lo && rho <= spec.hi))
    throw Error(ErrorCode::OutOfRange, std::to_string(rho) + " outside normalization bounds");
  return (std::log10(rho) - std::log10(spec.lo)) / (std::log10(spec.hi) - std::log10(spec.lo));
}

double denormalize(double u, const NormalizationSpec& spec) {
  spec.validate();
  const double l = std::log10(spec.lo), h = std::log10(spec.hi);
  return std::pow(10.0, l + u * (h - l));
}

std::array<Image, kInputChannels> assemble_input(const Field& wenner, const Field& ws, const Field& tier,
                                                 const NormalizationSpec& spec, TierScaling scaling) {
  if (!wenner.same_shape(ws) || !wenner.same_shape(tier))
    throw Error(ErrorCode::DimensionMismatch, "input channels are not aligned");
  const std::size_t h = wenner.rows(), w = wenner.cols();
  std::array<Image, kInputChannels> out{Image(h, w), Image(h, w), Image(h, w)};
  const double tier_scale = (scaling == TierScaling::Raw || h == 1) ? 1.0 : 1.0 / static_cast<double>(h - 1);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      out[kWennerChannel](i, j) = static_cast<float>(normalize(std::clamp(wenner(i, j), spec.lo, spec.hi), spec));
      out[kSchlumbergerChannel](i, j) = static_cast<float>(normalize(std::clamp(ws(i, j), spec.lo, spec.hi), spec));
      out[kTierChannel](i, j) = h == 1 ? 0.0f : static_cast<float>(tier(i, j) * tier_scale);
    }
  }
  return out;
}

Image normalize_model(const ResistivityModel& model, const NormalizationSpec& spec) {
  Image out(model.values.rows(), model.values.cols());
  for (std::size_t k = 0; k < out.size(); ++k)
    out.data()[k] = static_cast<float>(normalize(model.values.data()[k], spec));
  return out;
}

double NoiseSpec::sigma() const {
  if (!(reference_gain > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise gain must be positive");
  if (std::isinf(level_dbw) && level_dbw < 0) return 0.0;
  return reference_gain * std::sqrt(std::pow(10.0, level_dbw / 10.0));
}

Image add_noise(const Image& section, const NoiseSpec& spec, std::mt19937_64& rng) {
  const double sigma = spec.sigma();
  Image out = section;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : out.data()) v = static_cast<float>(std::clamp(static_cast<double>(v) + dist(rng), 0.0, 1.0));
  return out;
}

// ---------------------------------------------------------------------------

void Dataset::validate() const {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "dataset is empty");
  if (n_train + n_valid + n_test != samples.size())
    throw Error(ErrorCode::InvalidArgument, "split counts do not add up");
  for (const auto& s : samples) {
    for (const auto& ch : s.input)
      if (ch.rows() != grid.height || ch.cols() != grid.width)
        throw Error(ErrorCode::DimensionMismatch, "sample input does not match grid");
    if (s.target.rows() != grid.height || s.target.cols() != grid.width)
      throw Error(ErrorCode::DimensionMismatch, "sample target does not match grid");
  }
}

namespace {

using detail::Reader;
using detail::Writer;

void check_unit(const Image& im) {
  for (float v : im.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorCode::OutOfRange, "stored value outside [0, 1]");
}

}  // namespace

std::uint32_t crc32(const std::vector<std::uint8_t>& bytes, std::size_t length) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(::crc32(c, bytes.data(), static_cast<uInt>(length)));
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  Writer w;
  w.put_bytes("ERSD", 4);
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.grid.height));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.grid.width));
  w.put<double>(ds.grid.cell_size);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.samples.size()));
  w.put<std::uint8_t>(0);  // log10 normalisation
  w.put<double>(ds.norm.lo);
  w.put<double>(ds.norm.hi);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_train));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_valid));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_test));
  const std::size_t plane = ds.grid.height * ds.grid.width * sizeof(float);
  for (const auto& s : ds.samples) {
    for (const auto& ch : s.input) {
      check_unit(ch);
      w.put_bytes(ch.data().data(), plane);
    }
    check_unit(s.target);
    w.put_bytes(s.target.data().data(), plane);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.meta.family));
    w.put<std::uint64_t>(s.meta.seed);
    w.put<std::uint32_t>(s.meta.source_index);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.meta.bodies.size()));
    for (const auto& b : s.meta.bodies) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(b.shape));
      w.put<std::uint16_t>(static_cast<std::uint16_t>(b.height_cells));
      w.put<std::uint16_t>(static_cast<std::uint16_t>(b.width_cells));
      w.put<std::uint8_t>(static_cast<std::uint8_t>(b.layers));
      w.put<double>(b.value);
      w.put<std::uint16_t>(static_cast<std::uint16_t>(b.row));
      w.put<std::uint16_t>(static_cast<std::uint16_t>(b.col));
    }
  }
  w.put<std::uint32_t>(crc32(w.bytes, w.bytes.size()));
  return std::move(w.bytes);
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ERSD", 4) != 0)
    throw Error(ErrorCode::BadMagic, "not an ERSD container");
  if (bytes.size() < 4 + sizeof(std::uint32_t))
    throw Error(ErrorCode::TruncatedFile, "container too short");
  const std::size_t payload = bytes.size() - sizeof(std::uint32_t);
  Reader r(bytes, payload, "dataset container");
  char magic[4];
  r.get_bytes(magic, 4);
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion)
    throw Error(ErrorCode::VersionMismatch, "container version " + std::to_string(version));
  Dataset ds;
  ds.grid.height = r.get<std::uint32_t>();
  ds.grid.width = r.get<std::uint32_t>();
  ds.grid.cell_size = r.get<double>();
  const auto count = r.get<std::uint32_t>();
  if (r.get<std::uint8_t>() != 0) throw Error(ErrorCode::VersionMismatch, "unknown normalisation mode");
  ds.norm.lo = r.get<double>();
  ds.norm.hi = r.get<double>();
  ds.n_train = r.get<std::uint32_t>();
  ds.n_valid = r.get<std::uint32_t>();
  ds.n_test = r.get<std::uint32_t>();
  const std::size_t h = ds.grid.height, wd = ds.grid.width;
  const std::size_t plane = h * wd * sizeof(float);
  if (plane == 0) throw Error(ErrorCode::DimensionMismatch, "container grid is empty");
  ds.samples.reserve(std::min<std::size_t>(count, payload / (4 * plane)));
  for (std::uint32_t k = 0; k < count; ++k) {
    // Refuse to allocate planes the remaining bytes cannot hold.
    if (payload - r.pos() < 4 * plane) throw Error(ErrorCode::TruncatedFile, "unexpected end of dataset container");
    SamplePair s;
    for (auto& ch : s.input) {
      ch = Image(h, wd);
      r.get_bytes(ch.data().data(), plane);
    }
    s.target = Image(h, wd);
    r.get_bytes(s.target.data().data(), plane);
    s.meta.family = static_cast<FamilyType>(r.get<std::uint8_t>());
    s.meta.seed = r.get<std::uint64_t>();
    s.meta.source_index = r.get<std::uint32_t>();
    const auto n_bodies = r.get<std::uint8_t>();
    for (std::uint8_t b = 0; b < n_bodies; ++b) {
      AnomalySpec a;
      a.shape = static_cast<BodyShape>(r.get<std::uint8_t>());
      a.height_cells = r.get<std::uint16_t>();
      a.width_cells = r.get<std::uint16_t>();
      a.layers = r.get<std::uint8_t>();
      a.value = r.get<double>();
      a.row = r.get<std::uint16_t>();
      a.col = r.get<std::uint16_t>();
      s.meta.bodies.push_back(a);
    }
    ds.samples.push_back(std::move(s));
  }
  if (r.pos() != payload) throw Error(ErrorCode::ChecksumMismatch, "trailing bytes before checksum");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + payload, sizeof stored);
  if (stored != crc32(bytes, payload)) throw Error(ErrorCode::ChecksumMismatch, "CRC32 mismatch");
  for (const auto& s : ds.samples) {
    for (const auto& ch : s.input) check_unit(ch);
    check_unit(s.target);
  }
  ds.validate();
  return ds;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dataset(ds));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace ersinv
