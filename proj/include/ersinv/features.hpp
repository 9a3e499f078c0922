#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include "ersinv/common.hpp"
#include "ersinv/forward.hpp"
#include "ersinv/model.hpp"

namespace ersinv {

using Image = Array2D<float>;

// t[i][j] = i, surface row 0.
Field tier_map(std::size_t height, std::size_t width);

struct NormalizationSpec {
  double lo = 10.0;
  double hi = 2000.0;

  void validate() const;
  friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;
};

// log10 mapping of [lo, hi] onto [0, 1]; throws OutOfRange outside the bounds.
double normalize(double rho, const NormalizationSpec& spec);
double denormalize(double u, const NormalizationSpec& spec);

enum class TierScaling : std::uint8_t { Unit = 0, Raw = 1 };

inline constexpr std::size_t kWennerChannel = 0;
inline constexpr std::size_t kSchlumbergerChannel = 1;
inline constexpr std::size_t kTierChannel = 2;
inline constexpr std::size_t kInputChannels = 3;

struct SampleMeta {
  FamilyType family = FamilyType::I;
  std::uint64_t seed = 0;
  std::uint32_t source_index = 0;  // index before the split shuffle
  std::vector<AnomalySpec> bodies;

  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct SamplePair {
  std::array<Image, kInputChannels> input;  // Wenner, Wenner-Schlumberger, tier
  Image target;                             // normalized resistivity
  SampleMeta meta;

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

// Channel layout is fixed: Wenner, Wenner-Schlumberger, tier. Apparent resistivities are
// clamped into [lo, hi] before normalisation.
std::array<Image, kInputChannels> assemble_input(const Field& wenner, const Field& ws, const Field& tier,
                                                 const NormalizationSpec& spec,
                                                 TierScaling scaling = TierScaling::Unit);

Image normalize_model(const ResistivityModel& model, const NormalizationSpec& spec);

struct NoiseSpec {
  double level_dbw = -std::numeric_limits<double>::infinity();
  double reference_gain = 0.05;  // gamma, in normalized units

  double sigma() const;
};

// Adds i.i.d. N(0, sigma^2) to every cell in row-major order, then clamps to [0, 1].
Image add_noise(const Image& section, const NoiseSpec& spec, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// "ERSD" dataset container

inline constexpr std::uint16_t kDatasetVersion = 1;

struct Dataset {
  GridSpec grid;
  NormalizationSpec norm;
  std::vector<SamplePair> samples;  // train, then validation, then test
  std::size_t n_train = 0;
  std::size_t n_valid = 0;
  std::size_t n_test = 0;

  std::size_t size() const { return samples.size(); }
  std::size_t valid_begin() const { return n_train; }
  std::size_t test_begin() const { return n_train + n_valid; }
  void validate() const;
};

void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

// Writes bytes to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

std::uint32_t crc32(const std::vector<std::uint8_t>& bytes, std::size_t length);

}  // namespace ersinv
