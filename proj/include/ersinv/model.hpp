#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ersinv/common.hpp"

namespace ersinv {

inline constexpr double kBackgroundResistivity = 500.0;
inline constexpr std::array<double, 3> kLowValues{10.0, 20.0, 50.0};
inline constexpr std::array<double, 3> kHighValues{1000.0, 1500.0, 2000.0};

struct GridSpec {
  std::size_t height = 32;  // rows, depth axis
  std::size_t width = 96;   // columns, lateral axis
  double cell_size = 1.0;   // metres

  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

GridSpec desk_grid();
GridSpec paper_grid();

struct ResistivityModel {
  GridSpec grid;
  Field values;  // ohm-m, row 0 = surface

  static ResistivityModel homogeneous(const GridSpec& grid, double rho = kBackgroundResistivity);
  void validate() const;
};

enum class BodyShape : std::uint8_t { Rectangular = 0, Declining = 1 };

struct AnomalySpec {
  BodyShape shape = BodyShape::Rectangular;
  std::size_t height_cells = 0;
  std::size_t width_cells = 0;
  std::size_t layers = 1;  // declining bodies only
  double value = 10.0;
  std::size_t row = 0;  // anchor of the top-left cell
  std::size_t col = 0;

  // Each declining step is a height x width rectangle; successive steps move down by
  // ceil(height/2) rows and right by width columns.
  std::size_t step_down() const { return (height_cells + 1) / 2; }
  std::size_t step_right() const { return width_cells; }
  std::size_t extent_rows() const;
  std::size_t extent_cols() const;

  // Rasterized cells, row-major by step.
  std::vector<std::pair<std::size_t, std::size_t>> cells() const;

  friend bool operator==(const AnomalySpec&, const AnomalySpec&) = default;
};

bool is_allowed_anomaly_value(double v);

struct BodySize {
  std::size_t height;
  std::size_t width;
  friend bool operator==(const BodySize&, const BodySize&) = default;
};

enum class FamilyType : std::uint8_t { I = 1, II = 2, III = 3, IV = 4, V = 5 };

std::string to_string(FamilyType f);
FamilyType family_from_int(int v);

// Number of low-valued bodies in each admissible combination for the family.
struct ValueCombination {
  std::size_t low;
  std::size_t high;
};

struct ModelFamilyConfig {
  FamilyType family = FamilyType::I;
  std::size_t count = 0;
  std::vector<BodySize> allowed_sizes;
  std::vector<std::size_t> allowed_layers;  // declining families
  std::size_t min_separation = 3;
  std::size_t margin = 2;
  std::size_t max_retries = 200;

  void validate() const;
  std::size_t body_count() const;
  BodyShape shape() const;
  std::vector<ValueCombination> combinations() const;
};

// Reference recipe for a family with the full-scale sample count.
ModelFamilyConfig reference_family(FamilyType family);
std::vector<ModelFamilyConfig> reference_families();

// Same families with counts scaled to `total` (largest remainder rounding).
std::vector<ModelFamilyConfig> scaled_families(std::size_t total);

// Writes the body into `model`; throws OutOfBounds or Overlap.
ResistivityModel place_anomaly(ResistivityModel model, const AnomalySpec& spec);

struct SampledModel {
  ResistivityModel model;
  std::vector<AnomalySpec> bodies;
};

SampledModel sample_model(const GridSpec& grid, const ModelFamilyConfig& cfg, std::mt19937_64& rng);

// Minimum Chebyshev distance between the cells of two bodies.
std::size_t chebyshev_gap(const AnomalySpec& a, const AnomalySpec& b);

}  // namespace ersinv
