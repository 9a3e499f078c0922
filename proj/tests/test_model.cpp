#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "ersinv/dataset.hpp"
#include "ersinv/model.hpp"

using namespace ersinv;

namespace {

std::size_t count_value(const ResistivityModel& m, double v) {
  return static_cast<std::size_t>(std::count(m.values.data().begin(), m.values.data().end(), v));
}

AnomalySpec rect(std::size_t h, std::size_t w, std::size_t row, std::size_t col, double value) {
  AnomalySpec s;
  s.height_cells = h;
  s.width_cells = w;
  s.row = row;
  s.col = col;
  s.value = value;
  return s;
}

// Chebyshev distance between two cell sets, by exhaustive pairing.
std::size_t brute_gap(const AnomalySpec& a, const AnomalySpec& b) {
  std::size_t best = SIZE_MAX;
  for (auto [i1, j1] : a.cells())
    for (auto [i2, j2] : b.cells()) {
      const std::size_t di = i1 > i2 ? i1 - i2 : i2 - i1;
      const std::size_t dj = j1 > j2 ? j1 - j2 : j2 - j1;
      best = std::min(best, std::max(di, dj));
    }
  return best;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_NOTHROW(desk_grid().validate());
  CHECK(desk_grid().height == 32);
  CHECK(desk_grid().width == 96);
  CHECK(paper_grid().height == 64);
  CHECK(paper_grid().width == 304);
  CHECK_THROWS_AS((GridSpec{7, 96, 1.0}.validate()), Error);
  CHECK_THROWS_AS((GridSpec{32, 15, 1.0}.validate()), Error);
  CHECK_THROWS_AS((GridSpec{32, 96, 0.0}.validate()), Error);
}

TEST_CASE("rectangular placement writes exactly the rectangle") {
  auto m = ResistivityModel::homogeneous(desk_grid());
  m = place_anomaly(m, rect(8, 8, 10, 40, 10.0));
  CHECK(count_value(m, 10.0) == 64);
  CHECK(count_value(m, 500.0) == 32 * 96 - 64);
  CHECK(m.values(10, 40) == 10.0);
  CHECK(m.values(17, 47) == 10.0);
  CHECK(m.values(18, 47) == 500.0);
  CHECK(m.values(17, 48) == 500.0);
}

TEST_CASE("placement errors") {
  const auto m = ResistivityModel::homogeneous(desk_grid());
  try {
    place_anomaly(m, rect(8, 8, 10, 90, 10.0));
    FAIL("expected OutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfBounds);
  }
  const auto once = place_anomaly(m, rect(8, 8, 10, 40, 10.0));
  try {
    place_anomaly(once, rect(4, 4, 12, 44, 2000.0));
    FAIL("expected Overlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Overlap);
  }
  CHECK_THROWS_AS(place_anomaly(m, rect(4, 4, 2, 2, 700.0)), Error);
}

TEST_CASE("declining staircase rasterization") {
  AnomalySpec s = rect(8, 4, 2, 10, 20.0);
  s.shape = BodyShape::Declining;
  s.layers = 3;
  const auto m = place_anomaly(ResistivityModel::homogeneous(desk_grid()), s);
  CHECK(count_value(m, 20.0) == 96);
  // Independent rasterization: step k covers rows [2 + 4k, 10 + 4k), cols [10 + 4k, 14 + 4k).
  std::set<std::pair<std::size_t, std::size_t>> expect;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 4; ++j) expect.insert({2 + 4 * k + i, 10 + 4 * k + j});
  CHECK(expect.size() == 96);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 96; ++j) CHECK((m.values(i, j) == 20.0) == (expect.count({i, j}) == 1));
  CHECK(s.extent_rows() == 16);
  CHECK(s.extent_cols() == 12);
}

TEST_CASE("family body counts and value combinations") {
  const std::size_t expected_bodies[] = {1, 2, 3, 1, 2};
  std::mt19937_64 rng(42);
  for (int f = 1; f <= 5; ++f) {
    const auto cfg = reference_family(family_from_int(f));
    CHECK(cfg.body_count() == expected_bodies[f - 1]);
    for (int rep = 0; rep < 40; ++rep) {
      const auto s = sample_model(desk_grid(), cfg, rng);
      REQUIRE(s.bodies.size() == expected_bodies[f - 1]);
      for (double v : s.model.values.data()) CHECK((v == 500.0 || is_allowed_anomaly_value(v)));
      std::size_t cells = 0;
      for (const auto& b : s.bodies) {
        cells += b.cells().size();
        CHECK(b.row >= cfg.margin);
        CHECK(b.col >= cfg.margin);
        CHECK(b.row + b.extent_rows() + cfg.margin <= 32);
        CHECK(b.col + b.extent_cols() + cfg.margin <= 96);
        CHECK(std::find(cfg.allowed_sizes.begin(), cfg.allowed_sizes.end(), BodySize{b.height_cells, b.width_cells}) !=
              cfg.allowed_sizes.end());
        if (cfg.shape() == BodyShape::Declining) {
          CHECK(b.shape == BodyShape::Declining);
          CHECK(std::find(cfg.allowed_layers.begin(), cfg.allowed_layers.end(), b.layers) !=
                cfg.allowed_layers.end());
        }
      }
      CHECK(count_value(s.model, 500.0) == 32 * 96 - cells);
      for (std::size_t a = 0; a < s.bodies.size(); ++a)
        for (std::size_t b = a + 1; b < s.bodies.size(); ++b) {
          CHECK(brute_gap(s.bodies[a], s.bodies[b]) >= cfg.min_separation);
          CHECK(chebyshev_gap(s.bodies[a], s.bodies[b]) == brute_gap(s.bodies[a], s.bodies[b]));
        }
    }
  }
}

TEST_CASE("family II combinations cover low/high mixes") {
  const auto cfg = reference_family(FamilyType::II);
  std::mt19937_64 rng(5);
  std::set<std::size_t> lows_seen;
  for (int rep = 0; rep < 200; ++rep) {
    const auto s = sample_model(desk_grid(), cfg, rng);
    std::size_t lows = 0;
    for (const auto& b : s.bodies) lows += b.value < 500.0 ? 1 : 0;
    lows_seen.insert(lows);
  }
  CHECK(lows_seen == std::set<std::size_t>{0, 1, 2});
}

TEST_CASE("tight grid still admits a single body") {
  ModelFamilyConfig cfg = reference_family(FamilyType::I);
  cfg.allowed_sizes = {{4, 12}};
  std::mt19937_64 rng(1);
  const GridSpec g{8, 16, 1.0};
  const auto s = sample_model(g, cfg, rng);
  CHECK(s.bodies.size() == 1);
  CHECK(s.bodies[0].row == 2);
  CHECK(s.bodies[0].col == 2);
  CHECK_NOTHROW(s.model.validate());
}

TEST_CASE("infeasible configurations") {
  ModelFamilyConfig cfg = reference_family(FamilyType::III);
  cfg.allowed_sizes = {{10, 10}};
  std::mt19937_64 rng(3);
  try {
    sample_model(GridSpec{16, 32, 1.0}, cfg, rng);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("sampling is deterministic under a seed") {
  const auto cfg = reference_family(FamilyType::V);
  std::mt19937_64 a(99), b(99);
  const auto s1 = sample_model(desk_grid(), cfg, a);
  const auto s2 = sample_model(desk_grid(), cfg, b);
  CHECK(s1.model.values == s2.model.values);
  CHECK(s1.bodies == s2.bodies);
}

TEST_CASE("full-scale counts and splits") {
  std::size_t total = 0;
  for (const auto& f : reference_families()) total += f.count;
  CHECK(total == 36214);
  const auto c = split_counts(36214, SplitRatio{});
  CHECK(c.train == 30180);
  CHECK(c.valid == 3017);
  CHECK(c.test == 3017);
  const auto d = split_counts(120, SplitRatio{});
  CHECK(d.train == 100);
  CHECK(d.valid == 10);
  CHECK(d.test == 10);
  for (std::size_t n : {16u, 120u, 300u, 1000u}) {
    std::size_t sum = 0;
    for (const auto& f : scaled_families(n)) sum += f.count;
    CHECK(sum == n);
  }
}
