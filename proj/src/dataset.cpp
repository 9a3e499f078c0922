#include "ersinv/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace ersinv {

SplitCounts split_counts(std::size_t total, const SplitRatio& ratio) {
  if (!(ratio.train > 0 && ratio.valid > 0 && ratio.test > 0))
    throw Error(ErrorCode::InvalidArgument, "split ratios must be positive");
  const double sum = ratio.train + ratio.valid + ratio.test;
  SplitCounts c;
  c.valid = static_cast<std::size_t>(std::floor(static_cast<double>(total) * ratio.valid / sum));
  c.test = static_cast<std::size_t>(std::floor(static_cast<double>(total) * ratio.test / sum));
  c.train = total - c.valid - c.test;
  return c;
}

SamplePair make_sample(ForwardSolver& solver, const SampledModel& sampled, const NormalizationSpec& norm,
                       const SampleMeta& meta) {
  const auto& grid = sampled.model.grid;
  const auto& layout = solver.layout();
  const auto wenner = ArrayConfig::largest_feasible(ArrayKind::Wenner, layout.size(), grid.height);
  const auto ws = ArrayConfig::largest_feasible(ArrayKind::WennerSchlumberger, layout.size(), grid.height);
  auto [sec_w, sec_ws] = solver.sections(sampled.model, wenner, ws);
  SamplePair pair;
  pair.input = assemble_input(sec_w.values, sec_ws.values, tier_map(grid.height, grid.width), norm);
  pair.target = normalize_model(sampled.model, norm);
  pair.meta = meta;
  pair.meta.bodies = sampled.bodies;
  return pair;
}

namespace {

nlohmann::json family_json(const ModelFamilyConfig& f) {
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& s : f.allowed_sizes) sizes.push_back({s.height, s.width});
  return {{"family", to_string(f.family)},     {"count", f.count},
          {"allowed_sizes", sizes},            {"allowed_layers", f.allowed_layers},
          {"min_separation", f.min_separation}, {"margin", f.margin}};
}

}  // namespace

GeneratedDataset generate_dataset(const GenerationConfig& cfg, const ProgressFn& progress) {
  cfg.grid.validate();
  cfg.norm.validate();
  for (const auto& f : cfg.families) f.validate();

  struct Job {
    const ModelFamilyConfig* family;
    std::uint32_t index;
  };
  std::vector<Job> jobs;
  for (const auto& f : cfg.families)
    for (std::size_t k = 0; k < f.count; ++k) jobs.push_back({&f, static_cast<std::uint32_t>(jobs.size())});
  if (jobs.empty()) throw Error(ErrorCode::InvalidArgument, "no samples requested");

  const auto layout = ElectrodeLayout::regular(cfg.grid, cfg.electrode_every);
  std::vector<SamplePair> samples(jobs.size());

  std::atomic<std::size_t> next{0}, done{0};
  std::mutex err_mu, progress_mu;
  std::exception_ptr first_error;
  std::size_t first_error_index = static_cast<std::size_t>(-1);

  auto worker = [&]() {
    ForwardSolver solver(cfg.grid, layout, cfg.forward);
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const std::uint64_t seed = mix_seed(cfg.seed, i);
        std::mt19937_64 rng(seed);
        const auto sampled = sample_model(cfg.grid, *jobs[i].family, rng);
        SampleMeta meta;
        meta.family = jobs[i].family->family;
        meta.seed = seed;
        meta.source_index = jobs[i].index;
        samples[i] = make_sample(solver, sampled, cfg.norm, meta);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
        next.store(jobs.size());
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(d, jobs.size());
      }
    }
  };

  if (cfg.threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < cfg.threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const Error& e) {
      throw Error(e.code(), "sample " + std::to_string(first_error_index) + ": " + e.what());
    }
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xFFFFFFFFULL));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto counts = split_counts(samples.size(), cfg.split);
  GeneratedDataset out;
  out.dataset.grid = cfg.grid;
  out.dataset.norm = cfg.norm;
  out.dataset.n_train = counts.train;
  out.dataset.n_valid = counts.valid;
  out.dataset.n_test = counts.test;
  out.dataset.samples.reserve(samples.size());
  for (auto i : order) out.dataset.samples.push_back(std::move(samples[i]));

  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(counts.train));
  std::vector<std::size_t> valid_idx(order.begin() + static_cast<std::ptrdiff_t>(counts.train),
                                     order.begin() + static_cast<std::ptrdiff_t>(counts.train + counts.valid));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(counts.train + counts.valid),
                                    order.end());

  nlohmann::json fams = nlohmann::json::array();
  for (const auto& f : cfg.families) fams.push_back(family_json(f));
  ForwardSolver probe(cfg.grid, layout, cfg.forward);
  const auto wenner = ArrayConfig::largest_feasible(ArrayKind::Wenner, layout.size(), cfg.grid.height);
  const auto ws = ArrayConfig::largest_feasible(ArrayKind::WennerSchlumberger, layout.size(), cfg.grid.height);
  out.manifest = {
      {"format", "ERSD"},
      {"version", kDatasetVersion},
      {"seed", cfg.seed},
      {"grid", {{"height", cfg.grid.height}, {"width", cfg.grid.width}, {"cell_size", cfg.grid.cell_size}}},
      {"families", fams},
      {"total", samples.size()},
      {"split", {{"ratio", {cfg.split.train, cfg.split.valid, cfg.split.test}},
                 {"train", train_idx},
                 {"valid", valid_idx},
                 {"test", test_idx}}},
      {"electrodes", {{"count", layout.size()}, {"spacing", layout.spacing}, {"every_cols", cfg.electrode_every}}},
      {"arrays", {{"wenner_max_level", wenner.max_level}, {"ws_max_level", ws.max_level}}},
      {"normalization", {{"mode", "log10"}, {"lo", cfg.norm.lo}, {"hi", cfg.norm.hi}}},
      {"forward", {{"background", cfg.forward.background},
                   {"pad_side", cfg.forward.mesh.pad_side},
                   {"pad_down", cfg.forward.mesh.pad_down},
                   {"pad_growth", cfg.forward.mesh.growth},
                   {"solver", cfg.forward.solver == LinearSolverKind::SparseCholesky ? "ldlt" : "cg"},
                   {"wavenumbers", probe.quadrature().wavenumbers},
                   {"weights", probe.quadrature().weights}}},
  };
  return out;
}

}  // namespace ersinv
