#include "ersinv/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ersinv {

void GridSpec::validate() const {
  if (height < 8 || width < 16) {
    throw Error(ErrorCode::InvalidArgument, "grid must be at least 8x16, got " +
                                                std::to_string(height) + "x" + std::to_string(width));
  }
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "cell_size must be positive");
}

GridSpec desk_grid() { return GridSpec{32, 96, 1.0}; }
GridSpec paper_grid() { return GridSpec{64, 304, 1.0}; }

ResistivityModel ResistivityModel::homogeneous(const GridSpec& grid, double rho) {
  grid.validate();
  if (!(rho > 0.0)) throw Error(ErrorCode::NonPositiveResistivity, "background must be positive");
  return ResistivityModel{grid, Field(grid.height, grid.width, rho)};
}

void ResistivityModel::validate() const {
  grid.validate();
  if (values.rows() != grid.height || values.cols() != grid.width) {
    throw Error(ErrorCode::DimensionMismatch, "model values do not match grid");
  }
  for (double v : values.data()) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::NonPositiveResistivity, "resistivity must be positive and finite");
    }
  }
}

std::size_t AnomalySpec::extent_rows() const {
  const std::size_t steps = shape == BodyShape::Declining ? layers : 1;
  return height_cells + (steps - 1) * step_down();
}

std::size_t AnomalySpec::extent_cols() const {
  const std::size_t steps = shape == BodyShape::Declining ? layers : 1;
  return width_cells + (steps - 1) * step_right();
}

std::vector<std::pair<std::size_t, std::size_t>> AnomalySpec::cells() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t steps = shape == BodyShape::Declining ? layers : 1;
  out.reserve(steps * height_cells * width_cells);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t r0 = row + s * step_down();
    const std::size_t c0 = col + s * step_right();
    for (std::size_t i = 0; i < height_cells; ++i)
      for (std::size_t j = 0; j < width_cells; ++j) out.emplace_back(r0 + i, c0 + j);
  }
  return out;
}

bool is_allowed_anomaly_value(double v) {
  return std::find(kLowValues.begin(), kLowValues.end(), v) != kLowValues.end() ||
         std::find(kHighValues.begin(), kHighValues.end(), v) != kHighValues.end();
}

std::string to_string(FamilyType f) {
  switch (f) {
    case FamilyType::I: return "I";
    case FamilyType::II: return "II";
    case FamilyType::III: return "III";
    case FamilyType::IV: return "IV";
    case FamilyType::V: return "V";
  }
  return "?";
}

FamilyType family_from_int(int v) {
  if (v < 1 || v > 5) throw Error(ErrorCode::InvalidArgument, "family type must be 1..5");
  return static_cast<FamilyType>(v);
}

void ModelFamilyConfig::validate() const {
  if (allowed_sizes.empty()) throw Error(ErrorCode::InvalidArgument, "allowed_sizes is empty");
  if (min_separation < 1) throw Error(ErrorCode::InvalidArgument, "min_separation must be >= 1");
  if (shape() == BodyShape::Declining) {
    if (allowed_layers.empty()) throw Error(ErrorCode::InvalidArgument, "allowed_layers is empty");
    for (auto l : allowed_layers)
      if (l < 3 || l > 5) throw Error(ErrorCode::InvalidArgument, "declining layers must be 3..5");
  }
  for (const auto& s : allowed_sizes)
    if (s.height == 0 || s.width == 0) throw Error(ErrorCode::InvalidArgument, "empty body size");
}

std::size_t ModelFamilyConfig::body_count() const {
  switch (family) {
    case FamilyType::I:
    case FamilyType::IV: return 1;
    case FamilyType::II:
    case FamilyType::V: return 2;
    case FamilyType::III: return 3;
  }
  return 0;
}

BodyShape ModelFamilyConfig::shape() const {
  return (family == FamilyType::IV || family == FamilyType::V) ? BodyShape::Declining
                                                                : BodyShape::Rectangular;
}

std::vector<ValueCombination> ModelFamilyConfig::combinations() const {
  switch (body_count()) {
    case 1: return {{1, 0}, {0, 1}};
    case 2: return {{2, 0}, {0, 2}, {1, 1}};
    case 3: return {{3, 0}, {0, 3}, {1, 2}, {2, 1}};
  }
  return {};
}

ModelFamilyConfig reference_family(FamilyType family) {
  ModelFamilyConfig cfg;
  cfg.family = family;
  const std::vector<BodySize> multi{{8, 8}, {10, 10}, {8, 30}, {20, 10}};
  switch (family) {
    case FamilyType::I:
      cfg.count = 5236;
      cfg.allowed_sizes = {{4, 4},   {6, 6},   {8, 8},   {10, 10}, {12, 12}, {14, 14},
                           {16, 16}, {18, 18}, {20, 20}, {8, 30},  {20, 10}};
      break;
    case FamilyType::II:
      cfg.count = 7560;
      cfg.allowed_sizes = multi;
      break;
    case FamilyType::III:
      cfg.count = 7920;
      cfg.allowed_sizes = multi;
      break;
    case FamilyType::IV:
      cfg.count = 6426;
      cfg.allowed_sizes = {{8, 4}, {10, 5}, {12, 6}};
      cfg.allowed_layers = {3, 4, 5};
      break;
    case FamilyType::V:
      cfg.count = 9072;
      cfg.allowed_sizes = {{8, 4}, {12, 6}};
      cfg.allowed_layers = {4, 5};
      break;
  }
  return cfg;
}

std::vector<ModelFamilyConfig> reference_families() {
  std::vector<ModelFamilyConfig> out;
  for (int f = 1; f <= 5; ++f) out.push_back(reference_family(family_from_int(f)));
  return out;
}

std::vector<ModelFamilyConfig> scaled_families(std::size_t total) {
  auto fams = reference_families();
  double paper_total = 0.0;
  for (const auto& f : fams) paper_total += static_cast<double>(f.count);
  std::vector<double> remainders(fams.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fams.size(); ++i) {
    const double exact = static_cast<double>(total) * static_cast<double>(fams[i].count) / paper_total;
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = exact - static_cast<double>(whole);
    fams[i].count = whole;
    assigned += whole;
  }
  std::vector<std::size_t> order(fams.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++fams[order[k % order.size()]].count;
  return fams;
}

ResistivityModel place_anomaly(ResistivityModel model, const AnomalySpec& spec) {
  if (spec.height_cells == 0 || spec.width_cells == 0)
    throw Error(ErrorCode::InvalidArgument, "anomaly has zero size");
  if (!is_allowed_anomaly_value(spec.value))
    throw Error(ErrorCode::InvalidArgument, "anomaly value not in the allowed set");
  if (spec.shape == BodyShape::Declining && (spec.layers < 1))
    throw Error(ErrorCode::InvalidArgument, "declining body needs layers >= 1");
  if (spec.row + spec.extent_rows() > model.grid.height ||
      spec.col + spec.extent_cols() > model.grid.width) {
    throw Error(ErrorCode::OutOfBounds, "anomaly exceeds the grid");
  }
  const auto cells = spec.cells();
  for (auto [i, j] : cells) {
    if (model.values(i, j) != kBackgroundResistivity) {
      throw Error(ErrorCode::Overlap, "target cell (" + std::to_string(i) + "," +
                                          std::to_string(j) + ") already anomalous");
    }
  }
  for (auto [i, j] : cells) model.values(i, j) = spec.value;
  return model;
}

std::size_t chebyshev_gap(const AnomalySpec& a, const AnomalySpec& b) {
  std::size_t best = static_cast<std::size_t>(-1);
  const auto ca = a.cells();
  const auto cb = b.cells();
  for (auto [i1, j1] : ca) {
    for (auto [i2, j2] : cb) {
      const std::size_t di = i1 > i2 ? i1 - i2 : i2 - i1;
      const std::size_t dj = j1 > j2 ? j1 - j2 : j2 - j1;
      best = std::min(best, std::max(di, dj));
      if (best == 0) return 0;
    }
  }
  return best;
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

}  // namespace

SampledModel sample_model(const GridSpec& grid, const ModelFamilyConfig& cfg, std::mt19937_64& rng) {
  grid.validate();
  cfg.validate();
  const BodyShape shape = cfg.shape();
  const std::size_t n_bodies = cfg.body_count();

  // Candidate (size, layers) pairs that fit inside the margins.
  struct Candidate {
    BodySize size;
    std::size_t layers;
  };
  std::vector<Candidate> candidates;
  const std::vector<std::size_t> layer_options =
      shape == BodyShape::Declining ? cfg.allowed_layers : std::vector<std::size_t>{1};
  for (const auto& s : cfg.allowed_sizes) {
    for (auto l : layer_options) {
      AnomalySpec probe{shape, s.height, s.width, l, kLowValues[0], 0, 0};
      if (probe.extent_rows() + 2 * cfg.margin <= grid.height &&
          probe.extent_cols() + 2 * cfg.margin <= grid.width) {
        candidates.push_back({s, l});
      }
    }
  }
  if (candidates.empty()) {
    throw Error(ErrorCode::Infeasible, "no body size of family " + to_string(cfg.family) +
                                           " fits the grid");
  }

  // Values: pick a combination, then shuffle which bodies are low/high.
  const auto combos = cfg.combinations();
  const ValueCombination combo = pick(combos, rng);
  std::vector<bool> is_low(n_bodies, false);
  for (std::size_t k = 0; k < combo.low; ++k) is_low[k] = true;
  std::shuffle(is_low.begin(), is_low.end(), rng);
  std::vector<double> values(n_bodies);
  for (std::size_t k = 0; k < n_bodies; ++k) {
    std::uniform_int_distribution<std::size_t> d(0, 2);
    values[k] = is_low[k] ? kLowValues[d(rng)] : kHighValues[d(rng)];
  }

  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    std::vector<AnomalySpec> bodies;
    bool ok = true;
    for (std::size_t k = 0; k < n_bodies && ok; ++k) {
      const Candidate& c = pick(candidates, rng);
      AnomalySpec spec{shape, c.size.height, c.size.width, c.layers, values[k], 0, 0};
      const std::size_t max_row = grid.height - cfg.margin - spec.extent_rows();
      const std::size_t max_col = grid.width - cfg.margin - spec.extent_cols();
      std::uniform_int_distribution<std::size_t> dr(cfg.margin, max_row);
      std::uniform_int_distribution<std::size_t> dc(cfg.margin, max_col);
      spec.row = dr(rng);
      spec.col = dc(rng);
      for (const auto& other : bodies) {
        if (chebyshev_gap(spec, other) < cfg.min_separation) {
          ok = false;
          break;
        }
      }
      bodies.push_back(spec);
    }
    if (!ok) continue;
    auto model = ResistivityModel::homogeneous(grid);
    for (const auto& b : bodies) model = place_anomaly(std::move(model), b);
    return SampledModel{std::move(model), std::move(bodies)};
  }
  throw Error(ErrorCode::Infeasible, "no placement for family " + to_string(cfg.family) + " after " +
                                         std::to_string(cfg.max_retries) + " retries");
}

}  // namespace ersinv
