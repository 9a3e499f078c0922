#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ersinv/features.hpp"
#include "ersinv/model.hpp"
#include "ersinv/nn/network.hpp"
#include "ersinv/objective.hpp"

namespace ersinv {

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 5;
  std::size_t epochs = 500;
  std::uint64_t seed = 1;
  LossConfig loss;
  bool tier_enabled = true;

  void validate() const;
};

struct OptimizerState {
  nn::Gradients velocity;  // empty until the first step
  std::uint64_t steps = 0;
};

// v <- momentum*v + g + wd*p ; p <- p - lr*v. Weight decay applies to conv/tconv kernels only.
void sgd_step(nn::Parameters& params, const nn::Gradients& grads, OptimizerState& state, const TrainConfig& cfg);

// Network input for samples `idx`: Wenner, Wenner-Schlumberger and (when enabled) tier planes.
// With `noise`, both section planes get add_noise seeded by (noise_seed, sample index).
nn::Tensor4 batch_inputs(const Dataset& ds, std::span<const std::size_t> idx, bool tier_enabled,
                         const std::optional<NoiseSpec>& noise = std::nullopt, std::uint64_t noise_seed = 0);
nn::Tensor4 batch_targets(const Dataset& ds, std::span<const std::size_t> idx);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;  // NaN without a validation split
  std::size_t steps = 0;    // optimizer steps taken in this epoch
};

struct TrainResult {
  nn::Parameters best;  // lowest validation loss (last epoch without a validation split)
  nn::Parameters last;
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  std::size_t total_steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Parameters are initialised from cfg.seed; the training order of epoch e is shuffled with
// mix_seed(cfg.seed, e). Throws NaNDetected with epoch/step context.
TrainResult train(const Dataset& ds, const nn::NetworkSpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Mean batch loss of a split in eval mode.
double split_loss(const Dataset& ds, std::size_t begin, std::size_t end, const nn::NetworkSpec& spec,
                  nn::Parameters& params, const TrainConfig& cfg);

// --- metrics ---------------------------------------------------------------

using Mask = Array2D<std::uint8_t>;

Mask anomaly_mask(const ResistivityModel& model, double background = kBackgroundResistivity);
Mask anomaly_mask(const std::vector<AnomalySpec>& bodies, const GridSpec& grid);

// 1 + D/Dmax, D the Chebyshev distance to the nearest anomalous cell. No anomaly -> all ones.
Field metric_weights(const Mask& mask);
Field metric_weights(const ResistivityModel& model);

double wmse(const std::vector<Field>& preds, const std::vector<Field>& truths, const std::vector<Field>& weights);
std::vector<double> wmse_per_sample(const std::vector<Field>& preds, const std::vector<Field>& truths,
                                    const std::vector<Field>& weights);

struct WrResult {
  double mean = 0.0;                // over non-degenerate samples; NaN if none
  std::size_t used = 0;
  std::size_t excluded = 0;         // samples with a zero deviation vector
  std::vector<double> per_sample;   // NaN where excluded
};
WrResult wr(const std::vector<Field>& preds, const std::vector<Field>& truths, const std::vector<Field>& weights);

enum class LineAxis { Row, Column };
// |pred - truth| / truth along one row or column; throws ZeroTruth if truth <= 0 there.
std::vector<double> profile_relative_error(const Field& pred, const Field& truth, LineAxis axis, std::size_t index);

struct EvalReport {
  std::size_t count = 0;
  double wmse = 0.0;
  double wr = 0.0;
  std::size_t wr_excluded = 0;
  std::vector<double> per_sample_wmse;
  std::vector<double> per_sample_wr;
  double seconds_per_sample = 0.0;  // wall clock, excluded from digests
};

struct Predictions {
  std::vector<Field> preds;    // normalized
  std::vector<Field> truths;   // normalized
  std::vector<Field> weights;
};

Predictions predict_split(const Dataset& ds, std::size_t begin, std::size_t end, const nn::NetworkSpec& spec,
                          nn::Parameters& params, bool tier_enabled,
                          const std::optional<NoiseSpec>& noise = std::nullopt, std::uint64_t noise_seed = 0,
                          double* seconds = nullptr);
EvalReport evaluate(const Predictions& p);
EvalReport evaluate_split(const Dataset& ds, std::size_t begin, std::size_t end, const nn::NetworkSpec& spec,
                          nn::Parameters& params, bool tier_enabled,
                          const std::optional<NoiseSpec>& noise = std::nullopt, std::uint64_t noise_seed = 0);

// --- experiment drivers ------------------------------------------------------

struct AblationCombo {
  bool tier = true;
  LossVariant variant = LossVariant::SD;
};
std::vector<AblationCombo> all_ablation_combos();

struct AblationRow {
  AblationCombo combo;
  std::uint64_t seed = 0;
  std::string loss_digest;  // hex digest of the loss configuration
  std::size_t best_epoch = 0;
  double final_train_loss = 0.0;
  EvalReport valid;
  EvalReport test;
  nn::Parameters params;  // best checkpoint
};

using AblationProgress = std::function<void(const AblationCombo&, const EpochRecord&)>;

// Trains every combo with identical seeds and data; the network input width follows the tier flag.
std::vector<AblationRow> run_ablation(const Dataset& ds, const TrainConfig& base, const nn::UNetConfig& widths,
                                      const std::vector<AblationCombo>& combos = all_ablation_combos(),
                                      const AblationProgress& progress = {});

struct NoiseRow {
  double level_dbw = 0.0;  // -inf for clean
  EvalReport report;
};

// Evaluates the test split at each level with common random numbers across levels.
std::vector<NoiseRow> run_noise_eval(const Dataset& ds, const nn::NetworkSpec& spec, nn::Parameters& params,
                                     bool tier_enabled, const std::vector<double>& levels_dbw,
                                     std::uint64_t noise_seed);

// --- CSV ----------------------------------------------------------------------

std::string format_number(double v);  // 9 significant digits
std::string curve_csv(const std::vector<EpochRecord>& curve);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string noise_csv(const std::vector<NoiseRow>& rows);
std::string eval_csv(const EvalReport& report);

}  // namespace ersinv
