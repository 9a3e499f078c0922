#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ersinv/features.hpp"
#include "ersinv/forward.hpp"
#include "ersinv/model.hpp"

namespace ersinv {

struct SplitRatio {
  double train = 10.0;
  double valid = 1.0;
  double test = 1.0;
};

struct SplitCounts {
  std::size_t train = 0, valid = 0, test = 0;
};

// Validation and test sizes are floor(N * ratio); the remainder goes to training.
SplitCounts split_counts(std::size_t total, const SplitRatio& ratio);

struct GenerationConfig {
  GridSpec grid = desk_grid();
  std::vector<ModelFamilyConfig> families;
  SplitRatio split;
  std::uint64_t seed = 1;
  std::size_t electrode_every = 4;  // columns between electrodes
  NormalizationSpec norm;
  ForwardOptions forward;
  std::size_t threads = 0;  // 0 = single-threaded
};

struct GeneratedDataset {
  Dataset dataset;
  nlohmann::json manifest;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// Samples every family, forward-models both arrays, assembles the 3-channel inputs, shuffles
// once and splits. Errors carry the failing sample index.
GeneratedDataset generate_dataset(const GenerationConfig& cfg, const ProgressFn& progress = {});

// Forward-model one resistivity model into a sample (shared by generation and the CLI).
SamplePair make_sample(ForwardSolver& solver, const SampledModel& sampled, const NormalizationSpec& norm,
                       const SampleMeta& meta);

}  // namespace ersinv
