#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "ersinv/train.hpp"
#include "grad_check.hpp"

using namespace ersinv;

namespace {

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

// Random 16x16 samples whose target carries one rectangular body.
Dataset synthetic(std::size_t n_train, std::size_t n_valid, std::size_t n_test, std::uint64_t seed) {
  Dataset ds;
  ds.grid = GridSpec{16, 16, 1.0};
  ds.n_train = n_train;
  ds.n_valid = n_valid;
  ds.n_test = n_test;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.2f, 0.8f);
  std::uniform_int_distribution<std::size_t> pos(0, 10);
  const Field tier = tier_map(16, 16);
  for (std::size_t k = 0; k < n_train + n_valid + n_test; ++k) {
    SamplePair s;
    AnomalySpec body;
    body.height_cells = 4;
    body.width_cells = 5;
    body.row = pos(rng);
    body.col = pos(rng);
    s.meta.bodies = {body};
    s.target = Image(16, 16, 0.74f);
    for (auto [i, j] : body.cells()) s.target(i, j) = 0.1f;
    for (std::size_t c = 0; c < 2; ++c) {
      s.input[c] = Image(16, 16);
      for (std::size_t q = 0; q < 256; ++q) s.input[c].data()[q] = 0.5f * s.target.data()[q] + 0.3f * u(rng);
    }
    s.input[kTierChannel] = Image(16, 16);
    for (std::size_t q = 0; q < 256; ++q) s.input[kTierChannel].data()[q] = static_cast<float>(tier.data()[q] / 15.0);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

nn::NetworkSpec small_net(bool tier) {
  nn::UNetConfig c;
  c.in_channels = tier ? 3 : 2;
  c.widths = {2, 2, 2, 2, 2};
  c.residual_blocks = 1;
  return nn::build_unet(c);
}

Field random_field(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Field f(h, w);
  for (auto& v : f.data()) v = u(rng);
  return f;
}

// Metrics as direct sums over vectorised samples.
double wmse_oracle(const std::vector<Field>& p, const std::vector<Field>& t, const std::vector<Field>& w) {
  double total = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    std::vector<double> e;
    for (std::size_t i = 0; i < p[n].rows(); ++i)
      for (std::size_t j = 0; j < p[n].cols(); ++j) e.push_back(w[n](i, j) * (p[n](i, j) - t[n](i, j)));
    double s = 0.0;
    for (double v : e) s += v * v;
    total += s;
  }
  return total / static_cast<double>(p.size());
}

double wr_oracle(const Field& p, const Field& t, const Field& w) {
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      mp += p(i, j);
      mt += t(i, j);
    }
  mp /= static_cast<double>(p.size());
  mt /= static_cast<double>(p.size());
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double a = w(i, j) * (p(i, j) - mp), b = w(i, j) * (t(i, j) - mt);
      ab += a * b;
      aa += a * a;
      bb += b * b;
    }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("sgd closed forms") {
  nn::Parameters p;
  p.layers.resize(1);
  p.layers[0].weight = nn::Tensor4(1, 1, 1, 2, 0.5);
  p.layers[0].bias = {0.25};
  TrainConfig cfg;
  cfg.weight_decay = 0.0;

  auto g = nn::zero_gradients(p);
  OptimizerState st;
  const auto before = p;
  sgd_step(p, g, st, cfg);
  CHECK(p == before);
  for (double v : st.velocity.layers[0].weight.values()) CHECK(v == 0.0);

  cfg.weight_decay = 1e-4;
  g.layers[0].weight.fill(2.0);
  g.layers[0].bias = {3.0};
  OptimizerState one;
  auto q = before;
  sgd_step(q, g, one, cfg);
  CHECK(q.layers[0].weight(0, 0, 0, 0) == doctest::Approx(0.5 - 0.1 * (2.0 + 1e-4 * 0.5)).epsilon(1e-15));
  CHECK(q.layers[0].bias[0] == doctest::Approx(0.25 - 0.1 * 3.0).epsilon(1e-15));

  cfg.weight_decay = 0.0;
  OptimizerState two;
  auto r = before;
  sgd_step(r, g, two, cfg);
  sgd_step(r, g, two, cfg);
  CHECK(r.layers[0].weight(0, 0, 0, 1) - 0.5 == doctest::Approx(-0.1 * 2.0 * (2.0 + 0.9)).epsilon(1e-14));
  CHECK(two.steps == 2);

  auto bad = g;
  bad.layers[0].bias.push_back(1.0);
  CHECK(code_of([&] { sgd_step(r, bad, two, cfg); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("weight decay spares batchnorm and biases") {
  const auto spec = small_net(true);
  auto p = nn::init_parameters(spec, 1);
  for (auto& l : p.layers) {
    for (auto& v : l.gamma) v = 1.5;
    for (auto& v : l.beta) v = 0.5;
    for (auto& v : l.bias) v = 0.5;
  }
  const auto start = p;
  const auto g = nn::zero_gradients(p);
  OptimizerState st;
  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  for (int k = 0; k < 10; ++k) sgd_step(p, g, st, cfg);
  bool kernels_shrank = false;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    CHECK(p.layers[i].gamma == start.layers[i].gamma);
    CHECK(p.layers[i].beta == start.layers[i].beta);
    CHECK(p.layers[i].bias == start.layers[i].bias);
    for (std::size_t q = 0; q < p.layers[i].weight.size(); ++q)
      if (std::abs(p.layers[i].weight.data()[q]) < std::abs(start.layers[i].weight.data()[q])) kernels_shrank = true;
  }
  CHECK(kernels_shrank);
}

TEST_CASE("training loop arithmetic and configuration") {
  const auto ds = synthetic(12, 2, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg.epochs = 1;
  cfg.batch_size = 5;
  const auto res = train(ds, small_net(true), cfg);
  REQUIRE(res.curve.size() == 1);
  CHECK(res.curve[0].steps == 3);
  CHECK(res.total_steps == 3);
  CHECK(res.best_epoch == 1);
  CHECK(std::isfinite(res.curve[0].valid_loss));
  CHECK(code_of([&] { train(ds, small_net(false), cfg); }) == ErrorCode::ShapeMismatch);
  cfg.tier_enabled = false;
  CHECK(train(ds, small_net(false), cfg).curve.size() == 1);
}

TEST_CASE("training is bitwise repeatable under a seed") {
  const auto ds = synthetic(10, 2, 0, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 7;
  const auto spec = small_net(true);
  const auto a = train(ds, spec, cfg), b = train(ds, spec, cfg);
  REQUIRE(a.curve.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.curve[e].train_loss == b.curve[e].train_loss);
    CHECK(a.curve[e].valid_loss == b.curve[e].valid_loss);
  }
  CHECK(a.best == b.best);
  CHECK(a.last == b.last);
  cfg.seed = 8;
  CHECK(train(ds, spec, cfg).curve[0].train_loss != a.curve[0].train_loss);
}

TEST_CASE("best checkpoint follows validation loss") {
  const auto ds = synthetic(10, 3, 0, 3);
  TrainConfig cfg;
  cfg.epochs = 4;
  const auto spec = small_net(true);
  const auto res = train(ds, spec, cfg);
  std::size_t arg = 0;
  for (std::size_t e = 1; e < res.curve.size(); ++e)
    if (res.curve[e].valid_loss < res.curve[arg].valid_loss) arg = e;
  CHECK(res.best_epoch == arg + 1);
  auto best = res.best;
  CHECK(split_loss(ds, ds.valid_begin(), ds.test_begin(), spec, best, cfg) == res.curve[arg].valid_loss);

  const auto no_valid = synthetic(10, 0, 0, 3);
  const auto r2 = train(no_valid, spec, cfg);
  CHECK(r2.best_epoch == 4);
  CHECK(r2.best == r2.last);
  CHECK(std::isnan(r2.curve[0].valid_loss));
}

TEST_CASE("divergence is reported with context") {
  const auto ds = synthetic(10, 0, 0, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 1e30;
  try {
    train(ds, small_net(true), cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NaNDetected);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("metric weights") {
  Mask corner(3, 3, 0);
  corner(0, 0) = 1;
  const auto w = metric_weights(corner);
  CHECK(w(0, 0) == 1.0);
  CHECK(w(2, 2) == 2.0);
  CHECK(w(1, 2) == 2.0);
  CHECK(w(1, 1) == 1.5);
  const auto flat = metric_weights(Mask(4, 5, 0));
  for (double v : flat.data()) CHECK(v == 1.0);

  // Brute-force Chebyshev distances on random masks.
  std::mt19937_64 rng(5);
  std::bernoulli_distribution hit(0.04);
  for (int trial = 0; trial < 5; ++trial) {
    Mask m(13, 21, 0);
    for (auto& v : m.data()) v = hit(rng) ? 1 : 0;
    m(6, 10) = 1;
    Field d(13, 21);
    double dmax = 0.0;
    for (std::size_t i = 0; i < 13; ++i)
      for (std::size_t j = 0; j < 21; ++j) {
        double best = 1e9;
        for (std::size_t a = 0; a < 13; ++a)
          for (std::size_t b = 0; b < 21; ++b)
            if (m(a, b))
              best = std::min(best, std::max(std::abs(double(a) - double(i)), std::abs(double(b) - double(j))));
        d(i, j) = best;
        dmax = std::max(dmax, best);
      }
    const auto got = metric_weights(m);
    for (std::size_t q = 0; q < d.size(); ++q) CHECK(got.data()[q] == doctest::Approx(1.0 + d.data()[q] / dmax));
  }

  GridSpec g{8, 16, 1.0};
  AnomalySpec body;
  body.height_cells = 2;
  body.width_cells = 2;
  body.row = 3;
  body.col = 3;
  const auto model = place_anomaly(ResistivityModel::homogeneous(g), body);
  CHECK(metric_weights(model) == metric_weights(anomaly_mask({body}, g)));
  const auto hw = metric_weights(ResistivityModel::homogeneous(g));
  for (double v : hw.data()) CHECK(v == 1.0);
}

TEST_CASE("wmse and wr against direct sums") {
  std::mt19937_64 rng(6);
  std::vector<Field> p, t, w;
  for (int n = 0; n < 3; ++n) {
    p.push_back(random_field(32, 96, rng));
    t.push_back(random_field(32, 96, rng));
    Field wf = random_field(32, 96, rng);
    for (auto& v : wf.data()) v += 1.0;
    w.push_back(wf);
  }
  CHECK(std::abs(wmse(p, t, w) - wmse_oracle(p, t, w)) <= 1e-10);
  const auto r = wr(p, t, w);
  CHECK(r.used == 3);
  double mean = 0.0;
  for (int n = 0; n < 3; ++n) {
    const double o = wr_oracle(p[n], t[n], w[n]);
    CHECK(std::abs(r.per_sample[n] - o) <= 1e-10);
    CHECK(std::abs(r.per_sample[n]) <= 1.0);
    mean += o / 3.0;
  }
  CHECK(std::abs(r.mean - mean) <= 1e-10);

  CHECK(wmse(t, t, w) == 0.0);
  const auto self = wr(t, t, w);
  for (double v : self.per_sample) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  // Reflection about the mean.
  std::vector<Field> refl = t, ones;
  for (int n = 0; n < 3; ++n) {
    double m = 0.0;
    for (double v : t[n].data()) m += v / static_cast<double>(t[n].size());
    for (auto& v : refl[n].data()) v = 2.0 * m - v;
    ones.emplace_back(32, 96, 1.0);
  }
  const auto anti = wr(refl, t, ones);
  for (double v : anti.per_sample) CHECK(v == doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<Field> flat_p = {Field(4, 4, 0.3), random_field(4, 4, rng)};
  std::vector<Field> flat_t = {random_field(4, 4, rng), random_field(4, 4, rng)};
  std::vector<Field> flat_w = {Field(4, 4, 1.0), Field(4, 4, 1.0)};
  const auto ex = wr(flat_p, flat_t, flat_w);
  CHECK(ex.excluded == 1);
  CHECK(ex.used == 1);
  CHECK(std::isnan(ex.per_sample[0]));
  CHECK(ex.mean == ex.per_sample[1]);
  CHECK(code_of([&] { wmse(p, t, flat_w); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("profile relative error") {
  Field truth(4, 6, 100.0);
  for (std::size_t j = 0; j < 6; ++j) truth(2, j) = 10.0 + double(j);
  Field pred = truth;
  for (auto& v : pred.data()) v *= 1.004;
  for (double e : profile_relative_error(pred, truth, LineAxis::Row, 2)) CHECK(e == doctest::Approx(0.004));
  for (double e : profile_relative_error(truth, truth, LineAxis::Column, 3)) CHECK(e == 0.0);
  truth(1, 3) = 0.0;
  CHECK(code_of([&] { profile_relative_error(pred, truth, LineAxis::Column, 3); }) == ErrorCode::ZeroTruth);
  CHECK(code_of([&] { profile_relative_error(pred, truth, LineAxis::Row, 4); }) == ErrorCode::OutOfBounds);
}

TEST_CASE("ablation grid") {
  const auto combos = all_ablation_combos();
  CHECK(combos.size() == 8);
  const auto ds = synthetic(5, 2, 2, 9);
  TrainConfig cfg;
  cfg.epochs = 1;
  nn::UNetConfig widths;
  widths.widths = {2, 2, 2, 2, 2};
  widths.residual_blocks = 1;
  const auto rows = run_ablation(ds, cfg, widths);
  REQUIRE(rows.size() == 8);
  LossConfig zeroed = loss_config(LossVariant::SD);
  zeroed.alpha = 0.0;
  zeroed.beta = 0.0;
  std::set<std::string> digests;
  for (const auto& r : rows) {
    digests.insert(r.loss_digest);
    if (r.combo.variant == LossVariant::NA) CHECK(r.loss_digest == hex64(fnv1a(zeroed.describe())));
    CHECK(r.valid.count == 2);
    CHECK(r.test.count == 2);
  }
  CHECK(digests.size() == 4);
  const auto csv = ablation_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}

TEST_CASE("noise study") {
  const auto ds = synthetic(5, 0, 4, 10);
  const auto spec = small_net(true);
  auto params = nn::init_parameters(spec, 2);
  const auto clean = evaluate_split(ds, ds.test_begin(), ds.size(), spec, params, true);
  const double inf = std::numeric_limits<double>::infinity();
  const auto rows = run_noise_eval(ds, spec, params, true, {-inf, 1.0, 3.0}, 11);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].report.per_sample_wmse == clean.per_sample_wmse);
  CHECK(rows[0].report.wmse == clean.wmse);
  CHECK(rows[1].report.wmse != clean.wmse);
  // Same seed, same draws.
  const auto again = run_noise_eval(ds, spec, params, true, {3.0}, 11);
  CHECK(again[0].report.per_sample_wmse == rows[2].report.per_sample_wmse);
  CHECK(noise_csv(rows).find("\nclean,") != std::string::npos);
}

TEST_CASE("noisy inputs touch only the section channels") {
  const auto ds = synthetic(3, 0, 0, 12);
  const std::vector<std::size_t> idx{0, 2};
  const auto clean = batch_inputs(ds, idx, true);
  const auto noisy = batch_inputs(ds, idx, true, NoiseSpec{1.0}, 5);
  for (std::size_t n = 0; n < 2; ++n) {
    CHECK(std::equal(clean.plane(n, 2), clean.plane(n, 2) + 256, noisy.plane(n, 2)));
    CHECK(!std::equal(clean.plane(n, 0), clean.plane(n, 0) + 256, noisy.plane(n, 0)));
    CHECK(!std::equal(clean.plane(n, 1), clean.plane(n, 1) + 256, noisy.plane(n, 1)));
  }
  // Each sample's draw is tied to its index, not its batch position.
  const std::vector<std::size_t> solo{2};
  const auto alone = batch_inputs(ds, solo, true, NoiseSpec{1.0}, 5);
  CHECK(std::equal(alone.plane(0, 0), alone.plane(0, 0) + 256, noisy.plane(1, 0)));
  CHECK(batch_inputs(ds, idx, false).c() == 2);
}

TEST_CASE("csv formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.333333333");
  CHECK(format_number(std::nan("")) == "nan");
  std::vector<EpochRecord> curve{{1, 0.5, 0.25, 3}, {2, 0.125, 0.0625, 3}};
  const auto csv = curve_csv(curve);
  CHECK(csv.substr(0, csv.find('\n')).find("epoch") != std::string::npos);
  CHECK(csv.find("2,0.125,0.0625") != std::string::npos);
}
