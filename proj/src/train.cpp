#include "ersinv/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ersinv {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight_decay must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  loss.validate();
}

namespace {

void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& v, double lr, double mom,
            double wd) {
  if (g.size() != p.size() || v.size() != p.size())
    throw Error(ErrorCode::ShapeMismatch, "gradient/parameter size mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = mom * v[i] + g[i] + wd * p[i];
    p[i] -= lr * v[i];
  }
}

}  // namespace

void sgd_step(nn::Parameters& params, const nn::Gradients& grads, OptimizerState& state, const TrainConfig& cfg) {
  if (grads.layers.size() != params.layers.size())
    throw Error(ErrorCode::ShapeMismatch, "gradients do not mirror the parameter set");
  if (state.velocity.layers.empty()) state.velocity = nn::zero_gradients(params);
  if (state.velocity.layers.size() != params.layers.size())
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not mirror the parameter set");
  const double lr = cfg.learning_rate, mom = cfg.momentum;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    auto& v = state.velocity.layers[i];
    update(p.weight.values(), g.weight.values(), v.weight.values(), lr, mom, cfg.weight_decay);
    update(p.bias, g.bias, v.bias, lr, mom, 0.0);
    update(p.gamma, g.gamma, v.gamma, lr, mom, 0.0);
    update(p.beta, g.beta, v.beta, lr, mom, 0.0);
  }
  ++state.steps;
}

nn::Tensor4 batch_inputs(const Dataset& ds, std::span<const std::size_t> idx, bool tier_enabled,
                         const std::optional<NoiseSpec>& noise, std::uint64_t noise_seed) {
  const std::size_t h = ds.grid.height, w = ds.grid.width, channels = tier_enabled ? 3 : 2;
  nn::Tensor4 x(idx.size(), channels, h, w);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= ds.size()) throw Error(ErrorCode::OutOfBounds, "sample index out of range");
    const auto& s = ds.samples[idx[k]];
    std::mt19937_64 rng(mix_seed(noise_seed, idx[k]));
    for (std::size_t c = 0; c < channels; ++c) {
      const Image& plane = s.input[c];
      if (plane.rows() != h || plane.cols() != w)
        throw Error(ErrorCode::DimensionMismatch, "sample plane does not match the dataset grid");
      const Image& src = (noise && c != kTierChannel) ? add_noise(plane, *noise, rng) : plane;
      std::transform(src.data().begin(), src.data().end(), x.plane(k, c), [](float v) { return double(v); });
    }
  }
  return x;
}

nn::Tensor4 batch_targets(const Dataset& ds, std::span<const std::size_t> idx) {
  nn::Tensor4 t(idx.size(), 1, ds.grid.height, ds.grid.width);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= ds.size()) throw Error(ErrorCode::OutOfBounds, "sample index out of range");
    const auto& src = ds.samples[idx[k]].target.data();
    if (src.size() != t.h() * t.w()) throw Error(ErrorCode::DimensionMismatch, "target does not match grid");
    std::transform(src.begin(), src.end(), t.plane(k, 0), [](float v) { return double(v); });
  }
  return t;
}

namespace {

void check_network(const Dataset& ds, const nn::NetworkSpec& spec, bool tier_enabled) {
  const std::size_t want = tier_enabled ? 3 : 2;
  if (spec.in_channels != want)
    throw Error(ErrorCode::ShapeMismatch, "network takes " + std::to_string(spec.in_channels) +
                                              " input channels, tier setting needs " + std::to_string(want));
  if (spec.out_channels() != 1) throw Error(ErrorCode::ShapeMismatch, "network must emit one channel");
  const std::size_t div = spec.input_divisor();
  if (ds.grid.height % div != 0 || ds.grid.width % div != 0)
    throw Error(ErrorCode::ShapeMismatch, "grid is not a multiple of " + std::to_string(div));
}

constexpr std::size_t kEvalBatch = 8;

}  // namespace

double split_loss(const Dataset& ds, std::size_t begin, std::size_t end, const nn::NetworkSpec& spec,
                  nn::Parameters& params, const TrainConfig& cfg) {
  if (begin >= end) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t b = begin; b < end; b += kEvalBatch) {
    idx.clear();
    for (std::size_t i = b; i < std::min(end, b + kEvalBatch); ++i) idx.push_back(i);
    const auto x = batch_inputs(ds, idx, cfg.tier_enabled);
    const auto y = nn::forward(spec, params, x, nn::BnMode::Eval);
    sum += batch_loss(y, batch_targets(ds, idx), cfg.loss) * static_cast<double>(idx.size());
  }
  return sum / static_cast<double>(end - begin);
}

TrainResult train(const Dataset& ds, const nn::NetworkSpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  ds.validate();
  if (ds.n_train == 0) throw Error(ErrorCode::InvalidArgument, "dataset has no training samples");
  check_network(ds, spec, cfg.tier_enabled);

  TrainResult res;
  nn::Parameters params = nn::init_parameters(spec, cfg.seed);
  OptimizerState state;
  double best_valid = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(ds.n_train);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(cfg.batch_size, order.size() - b));
      try {
        const auto x = batch_inputs(ds, idx, cfg.tier_enabled);
        nn::ForwardCache cache;
        const auto y = nn::forward(spec, params, x, nn::BnMode::Train, &cache);
        nn::Tensor4 dy;
        const double loss = batch_loss(y, batch_targets(ds, idx), cfg.loss, &dy);
        if (!std::isfinite(loss)) throw Error(ErrorCode::NaNDetected, "loss is not finite");
        const auto bw = nn::backward(spec, params, cache, dy);
        sgd_step(params, bw.grads, state, cfg);
        if (!params.all_finite()) throw Error(ErrorCode::NaNDetected, "parameters became non-finite");
        sum += loss * static_cast<double>(idx.size());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NaNDetected) throw;
        throw Error(ErrorCode::NaNDetected,
                    "epoch " + std::to_string(epoch) + " step " + std::to_string(rec.steps + 1) + ": " + e.what());
      }
      ++rec.steps;
    }
    rec.train_loss = sum / static_cast<double>(order.size());
    rec.valid_loss = split_loss(ds, ds.valid_begin(), ds.test_begin(), spec, params, cfg);
    if (ds.n_valid == 0 || rec.valid_loss < best_valid) {
      best_valid = rec.valid_loss;
      res.best = params;
      res.best_epoch = epoch;
    }
    res.total_steps += rec.steps;
    res.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  res.last = std::move(params);
  return res;
}

Mask anomaly_mask(const ResistivityModel& model, double background) {
  Mask m(model.values.rows(), model.values.cols(), 0);
  for (std::size_t q = 0; q < m.size(); ++q) m.data()[q] = model.values.data()[q] != background ? 1 : 0;
  return m;
}

Mask anomaly_mask(const std::vector<AnomalySpec>& bodies, const GridSpec& grid) {
  Mask m(grid.height, grid.width, 0);
  for (const auto& b : bodies)
    for (auto [i, j] : b.cells()) {
      if (i >= grid.height || j >= grid.width) throw Error(ErrorCode::OutOfBounds, "body outside the grid");
      m(i, j) = 1;
    }
  return m;
}

Field metric_weights(const Mask& mask) {
  const std::size_t h = mask.rows(), w = mask.cols();
  const double inf = std::numeric_limits<double>::infinity();
  Field d(h, w, inf);
  bool any = false;
  for (std::size_t q = 0; q < mask.size(); ++q)
    if (mask.data()[q]) {
      d.data()[q] = 0.0;
      any = true;
    }
  if (!any) return Field(h, w, 1.0);
  // Two-pass chessboard distance transform.
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double v = d(i, j);
      if (j > 0) v = std::min(v, d(i, j - 1) + 1.0);
      if (i > 0) {
        v = std::min(v, d(i - 1, j) + 1.0);
        if (j > 0) v = std::min(v, d(i - 1, j - 1) + 1.0);
        if (j + 1 < w) v = std::min(v, d(i - 1, j + 1) + 1.0);
      }
      d(i, j) = v;
    }
  for (std::size_t i = h; i-- > 0;)
    for (std::size_t j = w; j-- > 0;) {
      double v = d(i, j);
      if (j + 1 < w) v = std::min(v, d(i, j + 1) + 1.0);
      if (i + 1 < h) {
        v = std::min(v, d(i + 1, j) + 1.0);
        if (j + 1 < w) v = std::min(v, d(i + 1, j + 1) + 1.0);
        if (j > 0) v = std::min(v, d(i + 1, j - 1) + 1.0);
      }
      d(i, j) = v;
    }
  const double dmax = *std::max_element(d.data().begin(), d.data().end());
  Field out(h, w, 1.0);
  if (dmax > 0.0)
    for (std::size_t q = 0; q < out.size(); ++q) out.data()[q] = 1.0 + d.data()[q] / dmax;
  return out;
}

Field metric_weights(const ResistivityModel& model) { return metric_weights(anomaly_mask(model)); }

namespace {

void check_metric_inputs(const std::vector<Field>& preds, const std::vector<Field>& truths,
                         const std::vector<Field>& weights) {
  if (preds.empty()) throw Error(ErrorCode::InvalidArgument, "metrics need at least one sample");
  if (preds.size() != truths.size() || preds.size() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "prediction/truth/weight counts differ");
  for (std::size_t n = 0; n < preds.size(); ++n)
    if (!preds[n].same_shape(truths[n]) || !preds[n].same_shape(weights[n]))
      throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(n) + " shapes differ");
}

bool is_constant(const Field& f) {
  return std::all_of(f.data().begin(), f.data().end(), [&](double v) { return v == f.data().front(); });
}

double mean_of(const Field& f) {
  double s = 0.0;
  for (double v : f.data()) s += v;
  return s / static_cast<double>(f.size());
}

}  // namespace

std::vector<double> wmse_per_sample(const std::vector<Field>& preds, const std::vector<Field>& truths,
                                    const std::vector<Field>& weights) {
  check_metric_inputs(preds, truths, weights);
  std::vector<double> out(preds.size());
  for (std::size_t n = 0; n < preds.size(); ++n) {
    double s = 0.0;
    for (std::size_t q = 0; q < preds[n].size(); ++q) {
      const double e = weights[n].data()[q] * (preds[n].data()[q] - truths[n].data()[q]);
      s += e * e;
    }
    out[n] = s;
  }
  return out;
}

double wmse(const std::vector<Field>& preds, const std::vector<Field>& truths, const std::vector<Field>& weights) {
  const auto per = wmse_per_sample(preds, truths, weights);
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

WrResult wr(const std::vector<Field>& preds, const std::vector<Field>& truths, const std::vector<Field>& weights) {
  check_metric_inputs(preds, truths, weights);
  WrResult r;
  r.per_sample.assign(preds.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  for (std::size_t n = 0; n < preds.size(); ++n) {
    const double mp = mean_of(preds[n]), mt = mean_of(truths[n]);
    double dot = 0.0, np = 0.0, nt = 0.0;
    for (std::size_t q = 0; q < preds[n].size(); ++q) {
      const double w = weights[n].data()[q];
      const double a = w * (preds[n].data()[q] - mp);
      const double b = w * (truths[n].data()[q] - mt);
      dot += a * b;
      np += a * a;
      nt += b * b;
    }
    // A constant field has no deviation; its float mean need not reproduce the value exactly.
    if (np == 0.0 || nt == 0.0 || is_constant(preds[n]) || is_constant(truths[n])) {
      ++r.excluded;
      continue;
    }
    const double c = std::clamp(dot / (std::sqrt(np) * std::sqrt(nt)), -1.0, 1.0);
    r.per_sample[n] = c;
    sum += c;
    ++r.used;
  }
  r.mean = r.used ? sum / static_cast<double>(r.used) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<double> profile_relative_error(const Field& pred, const Field& truth, LineAxis axis, std::size_t index) {
  if (!pred.same_shape(truth)) throw Error(ErrorCode::DimensionMismatch, "prediction and truth shapes differ");
  const std::size_t limit = axis == LineAxis::Row ? pred.rows() : pred.cols();
  if (index >= limit) throw Error(ErrorCode::OutOfBounds, "profile line outside the grid");
  const std::size_t len = axis == LineAxis::Row ? pred.cols() : pred.rows();
  std::vector<double> out(len);
  for (std::size_t k = 0; k < len; ++k) {
    const auto [i, j] = axis == LineAxis::Row ? std::pair{index, k} : std::pair{k, index};
    const double t = truth(i, j);
    if (!(t > 0.0)) throw Error(ErrorCode::ZeroTruth, "truth is not positive at (" + std::to_string(i) + "," +
                                                          std::to_string(j) + ")");
    out[k] = std::abs(pred(i, j) - t) / t;
  }
  return out;
}

Predictions predict_split(const Dataset& ds, std::size_t begin, std::size_t end, const nn::NetworkSpec& spec,
                          nn::Parameters& params, bool tier_enabled, const std::optional<NoiseSpec>& noise,
                          std::uint64_t noise_seed, double* seconds) {
  if (begin > end || end > ds.size()) throw Error(ErrorCode::OutOfBounds, "split range outside the dataset");
  check_network(ds, spec, tier_enabled);
  Predictions p;
  double elapsed = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t b = begin; b < end; b += kEvalBatch) {
    idx.clear();
    for (std::size_t i = b; i < std::min(end, b + kEvalBatch); ++i) idx.push_back(i);
    const auto x = batch_inputs(ds, idx, tier_enabled, noise, noise_seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = nn::forward(spec, params, x, nn::BnMode::Eval);
    elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& s = ds.samples[idx[k]];
      Field pred(ds.grid.height, ds.grid.width), truth(ds.grid.height, ds.grid.width);
      std::copy(y.plane(k, 0), y.plane(k, 0) + pred.size(), pred.data().begin());
      std::transform(s.target.data().begin(), s.target.data().end(), truth.data().begin(),
                     [](float v) { return double(v); });
      p.preds.push_back(std::move(pred));
      p.truths.push_back(std::move(truth));
      p.weights.push_back(metric_weights(anomaly_mask(s.meta.bodies, ds.grid)));
    }
  }
  if (seconds) *seconds = end > begin ? elapsed / static_cast<double>(end - begin) : 0.0;
  return p;
}

EvalReport evaluate(const Predictions& p) {
  EvalReport r;
  r.count = p.preds.size();
  if (r.count == 0) throw Error(ErrorCode::InvalidArgument, "nothing to evaluate");
  r.per_sample_wmse = wmse_per_sample(p.preds, p.truths, p.weights);
  r.wmse = std::accumulate(r.per_sample_wmse.begin(), r.per_sample_wmse.end(), 0.0) / static_cast<double>(r.count);
  auto w = wr(p.preds, p.truths, p.weights);
  r.wr = w.mean;
  r.wr_excluded = w.excluded;
  r.per_sample_wr = std::move(w.per_sample);
  return r;
}

EvalReport evaluate_split(const Dataset& ds, std::size_t begin, std::size_t end, const nn::NetworkSpec& spec,
                          nn::Parameters& params, bool tier_enabled, const std::optional<NoiseSpec>& noise,
                          std::uint64_t noise_seed) {
  double secs = 0.0;
  auto r = evaluate(predict_split(ds, begin, end, spec, params, tier_enabled, noise, noise_seed, &secs));
  r.seconds_per_sample = secs;
  return r;
}

std::vector<AblationCombo> all_ablation_combos() {
  std::vector<AblationCombo> out;
  for (bool tier : {true, false})
    for (auto v : {LossVariant::SD, LossVariant::OS, LossVariant::OD, LossVariant::NA}) out.push_back({tier, v});
  return out;
}

std::vector<AblationRow> run_ablation(const Dataset& ds, const TrainConfig& base, const nn::UNetConfig& widths,
                                      const std::vector<AblationCombo>& combos, const AblationProgress& progress) {
  std::vector<AblationRow> rows;
  for (const auto& combo : combos) {
    TrainConfig cfg = base;
    cfg.tier_enabled = combo.tier;
    cfg.loss = loss_config(combo.variant);
    nn::UNetConfig uc = widths;
    uc.in_channels = combo.tier ? 3 : 2;
    const auto spec = nn::build_unet(uc);
    auto res = train(ds, spec, cfg, [&](const EpochRecord& r) {
      if (progress) progress(combo, r);
    });
    AblationRow row;
    row.combo = combo;
    row.seed = cfg.seed;
    row.loss_digest = hex64(fnv1a(cfg.loss.describe()));
    row.best_epoch = res.best_epoch;
    row.final_train_loss = res.curve.back().train_loss;
    if (ds.n_valid) row.valid = evaluate_split(ds, ds.valid_begin(), ds.test_begin(), spec, res.best, cfg.tier_enabled);
    if (ds.n_test) row.test = evaluate_split(ds, ds.test_begin(), ds.size(), spec, res.best, cfg.tier_enabled);
    row.params = std::move(res.best);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<NoiseRow> run_noise_eval(const Dataset& ds, const nn::NetworkSpec& spec, nn::Parameters& params,
                                     bool tier_enabled, const std::vector<double>& levels_dbw,
                                     std::uint64_t noise_seed) {
  if (ds.n_test == 0) throw Error(ErrorCode::InvalidArgument, "noise study needs a test split");
  std::vector<NoiseRow> rows;
  for (double level : levels_dbw) {
    NoiseRow row;
    row.level_dbw = level;
    std::optional<NoiseSpec> noise;
    if (std::isfinite(level)) noise = NoiseSpec{level};
    row.report = evaluate_split(ds, ds.test_begin(), ds.size(), spec, params, tier_enabled, noise, noise_seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::string s = "epoch,train_loss,valid_loss,steps\n";
  for (const auto& r : curve)
    s += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "," + format_number(r.valid_loss) + "," +
         std::to_string(r.steps) + "\n";
  return s;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s =
      "tier,loss,seed,loss_digest,best_epoch,final_train_loss,valid_wmse,valid_wr,valid_wr_excluded,test_wmse,test_wr,"
      "test_wr_excluded\n";
  for (const auto& r : rows)
    s += std::string(r.combo.tier ? "with" : "without") + "," + std::string(to_string(r.combo.variant)) + "," +
         std::to_string(r.seed) + "," + r.loss_digest + "," + std::to_string(r.best_epoch) + "," +
         format_number(r.final_train_loss) + "," + format_number(r.valid.wmse) + "," + format_number(r.valid.wr) +
         "," + std::to_string(r.valid.wr_excluded) + "," + format_number(r.test.wmse) + "," +
         format_number(r.test.wr) + "," + std::to_string(r.test.wr_excluded) + "\n";
  return s;
}

std::string noise_csv(const std::vector<NoiseRow>& rows) {
  std::string s = "level_dbw,wmse,wr,wr_excluded,count\n";
  for (const auto& r : rows)
    s += (std::isfinite(r.level_dbw) ? format_number(r.level_dbw) : std::string("clean")) + "," +
         format_number(r.report.wmse) + "," + format_number(r.report.wr) + "," +
         std::to_string(r.report.wr_excluded) + "," + std::to_string(r.report.count) + "\n";
  return s;
}

std::string eval_csv(const EvalReport& report) {
  std::string s = "sample,wmse,wr\n";
  for (std::size_t n = 0; n < report.count; ++n)
    s += std::to_string(n) + "," + format_number(report.per_sample_wmse[n]) + "," +
         format_number(report.per_sample_wr[n]) + "\n";
  s += "mean," + format_number(report.wmse) + "," + format_number(report.wr) + "\n";
  return s;
}

}  // namespace ersinv
