// ersinv: command-line driver for dataset generation, forward modelling, training and evaluation.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ersinv/dataset.hpp"
#include "ersinv/train.hpp"
#include "profile.hpp"
#include "render.hpp"

namespace fs = std::filesystem;
using namespace ersinv;
using namespace ersinv::cli;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitSolver = 3;
constexpr int kExitNaN = 4;

struct Common {
  std::string profile = "desk";
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string config;
  std::size_t threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--profile", c.profile, "named profile: desk, paper, custom or a file in $ERSINV_PROFILE_DIR");
  app->add_option("--seed", c.seed, "seed for this command (overrides the profile)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--config", c.config, "INI config layered over the profile");
  app->add_option("--threads", c.threads, "worker threads; 0 = deterministic single thread");
}

RunProfile load_profile(const Common& c, const std::string& seed_key, const Settings& extra = {}) {
  Settings s = resolve_profile(c.profile);
  if (!c.config.empty()) merge(s, read_settings(c.config));
  merge(s, extra);
  if (c.seed && !seed_key.empty()) s[seed_key] = std::to_string(*c.seed);
  return materialize(c.profile, s);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string file_digest(const fs::path& path) {
  const auto bytes = read_file(path);
  return hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

fs::path prepare_out(const Common& c) {
  fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out.string() + ": " + ec.message());
  return out;
}

// Manifest with config echo and content digests; no timestamps, so reruns are byte-identical.
void write_manifest(const fs::path& dir, const std::string& verb, const RunProfile& p,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs, json extra = {}) {
  json m;
  m["command"] = verb;
  m["config"] = p.to_json();
  json in = json::object(), out = json::object();
  for (const auto& f : inputs) in[f.string()] = file_digest(f);
  for (const auto& f : outputs) out[f.filename().string()] = file_digest(f);
  m["inputs"] = in;
  m["outputs"] = out;
  if (!extra.is_null()) m["details"] = std::move(extra);
  write_text(dir / (verb + ".manifest.json"), m.dump(2) + "\n");
}

std::string matrix_csv(const Field& f) {
  std::string s;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = 0; j < f.cols(); ++j) {
      if (j) s += ',';
      s += format_number(f(i, j));
    }
    s += '\n';
  }
  return s;
}

Field read_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw Error(ErrorCode::InvalidArgument, path.string() + ": bad number '" + cell + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(ErrorCode::DimensionMismatch, path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, path.string() + ": empty matrix");
  Field f(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) f(i, j) = rows[i][j];
  return f;
}

Field to_field(const Image& im) {
  Field f(im.rows(), im.cols());
  for (std::size_t q = 0; q < im.size(); ++q) f.data()[q] = im.data()[q];
  return f;
}

// --- network sidecar -------------------------------------------------------------

fs::path sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".json"); }

void write_network(const fs::path& checkpoint, const nn::UNetConfig& u) {
  const json j = {{"in_channels", u.in_channels},
                  {"widths", u.widths},
                  {"residual_blocks", u.residual_blocks},
                  {"digest", hex64(nn::build_unet(u).digest())}};
  write_text(sidecar(checkpoint), j.dump(2) + "\n");
}

nn::UNetConfig read_network(const fs::path& checkpoint, const nn::UNetConfig& fallback) {
  if (!fs::exists(sidecar(checkpoint))) return fallback;
  const auto bytes = read_file(sidecar(checkpoint));
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    nn::UNetConfig u;
    u.in_channels = j.at("in_channels").get<std::size_t>();
    u.widths = j.at("widths").get<std::vector<std::size_t>>();
    u.residual_blocks = j.at("residual_blocks").get<std::size_t>();
    return u;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, sidecar(checkpoint).string() + ": " + e.what());
  }
}

// --- model files ---------------------------------------------------------------

ResistivityModel read_model(const fs::path& path, const GridSpec& grid, double background) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "model file not found: " + path.string());
  if (path.extension() == ".csv") {
    const Field f = read_matrix(path);
    ResistivityModel m{GridSpec{f.rows(), f.cols(), grid.cell_size}, f};
    m.validate();
    return m;
  }
  const auto bytes = read_file(path);
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    GridSpec g = grid;
    g.height = j.value("height", g.height);
    g.width = j.value("width", g.width);
    g.cell_size = j.value("cell_size", g.cell_size);
    // Bodies go onto the canonical background first so overlap checks apply; the
    // requested background is swapped in afterwards.
    auto model = ResistivityModel::homogeneous(g, kBackgroundResistivity);
    std::vector<bool> body(g.height * g.width, false);
    for (const auto& b : j.value("bodies", json::array())) {
      AnomalySpec a;
      const std::string shape = b.value("shape", "rectangular");
      if (shape == "declining")
        a.shape = BodyShape::Declining;
      else if (shape != "rectangular")
        throw Error(ErrorCode::InvalidArgument, "body shape must be rectangular or declining");
      a.row = b.at("row").get<std::size_t>();
      a.col = b.at("col").get<std::size_t>();
      a.height_cells = b.at("height").get<std::size_t>();
      a.width_cells = b.at("width").get<std::size_t>();
      a.layers = b.value("layers", std::size_t{1});
      a.value = b.at("value").get<double>();
      model = place_anomaly(std::move(model), a);
      for (auto [i, jj] : a.cells()) body[i * g.width + jj] = true;
    }
    const double bg = j.value("background", background);
    for (std::size_t i = 0; i < g.height; ++i)
      for (std::size_t jj = 0; jj < g.width; ++jj)
        if (!body[i * g.width + jj]) model.values(i, jj) = bg;
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

// --- commands ---------------------------------------------------------------------

int cmd_gen(const Common& c, std::optional<std::size_t> samples, bool dry_run) {
  Settings extra;
  if (samples) extra["data.samples"] = std::to_string(*samples);
  auto p = load_profile(c, "data.seed", extra);
  p.generation.threads = c.threads;
  const auto out = prepare_out(c);
  std::printf("profile %s: %zux%zu grid, %zu samples, seed %llu\n", p.name.c_str(), p.grid.height, p.grid.width,
              p.samples, static_cast<unsigned long long>(p.generation.seed));
  for (const auto& f : p.generation.families)
    std::printf("  family %-3s %zu\n", to_string(f.family).c_str(), f.count);
  if (dry_run) return kExitOk;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t last_pct = 0;
  const auto gen = generate_dataset(p.generation, [&](std::size_t done, std::size_t total) {
    const std::size_t pct = done * 10 / total;
    if (pct != last_pct) {
      last_pct = pct;
      std::fprintf(stderr, "\r  %zu/%zu", done, total);
      if (done == total) std::fprintf(stderr, "\n");
    }
  });
  const double secs = seconds_since(t0);
  const auto path = out / "dataset.ersd";
  write_dataset(gen.dataset, path);
  write_manifest(out, "gen", p, {}, {path}, gen.manifest);
  std::printf("split %zu/%zu/%zu, %.1f s (%.3f s per sample), digest %s\n", gen.dataset.n_train,
              gen.dataset.n_valid, gen.dataset.n_test, secs, secs / static_cast<double>(gen.dataset.size()),
              file_digest(path).c_str());
  return kExitOk;
}

std::string readings_csv(const Section& s) {
  std::string out = "array,level,a,b,m,n,midpoint,geometric_factor,apparent_resistivity\n";
  for (const auto& m : s.measurements)
    out += to_string(s.kind) + "," + std::to_string(m.level) + "," + format_number(m.a_pos) + "," +
           format_number(m.b_pos) + "," + format_number(m.m_pos) + "," + format_number(m.n_pos) + "," +
           format_number(m.midpoint) + "," + format_number(m.geometric_factor) + "," +
           format_number(m.apparent_resistivity) + "\n";
  return out;
}

int cmd_fwd(const Common& c, const std::string& model_path) {
  const auto p = load_profile(c, "");
  const auto model = read_model(model_path, p.grid, p.generation.forward.background);
  const auto out = prepare_out(c);
  const auto layout = ElectrodeLayout::regular(model.grid, p.generation.electrode_every);
  ForwardSolver solver(model.grid, layout, p.generation.forward);
  const auto wen = ArrayConfig::largest_feasible(ArrayKind::Wenner, layout.size(), model.grid.height);
  const auto ws = ArrayConfig::largest_feasible(ArrayKind::WennerSchlumberger, layout.size(), model.grid.height);
  const auto t0 = std::chrono::steady_clock::now();
  const auto [sw, ss] = solver.sections(model, wen, ws);
  const double secs = seconds_since(t0);
  std::vector<fs::path> outputs;
  for (const auto* sec : {&sw, &ss}) {
    const std::string stem = sec->kind == ArrayKind::Wenner ? "wenner" : "wenner_schlumberger";
    write_text(out / (stem + ".csv"), matrix_csv(sec->values));
    write_text(out / (stem + "_readings.csv"), readings_csv(*sec));
    outputs.push_back(out / (stem + ".csv"));
    outputs.push_back(out / (stem + "_readings.csv"));
    outputs.push_back(render_to_file(sec->values, out, stem));
    const auto [lo, hi] = std::minmax_element(sec->values.data().begin(), sec->values.data().end());
    std::printf("%-20s levels %zu, %zu readings, apparent resistivity %s .. %s ohm-m\n", stem.c_str(),
                sec->max_level, sec->measurements.size(), format_number(*lo).c_str(), format_number(*hi).c_str());
  }
  outputs.push_back(render_to_file(model.values, out, "model"));
  for (const auto& f : outputs)
    if (f.extension() != ".csv") std::printf("  wrote %s\n", f.string().c_str());
  std::printf("forward solve %.2f s\n", secs);
  write_manifest(out, "fwd", p, {fs::path(model_path)}, outputs,
                 {{"grid", {model.grid.height, model.grid.width}}, {"wenner_max_level", wen.max_level},
                  {"ws_max_level", ws.max_level}, {"electrodes", layout.size()}});
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, std::optional<std::size_t> epochs,
              std::optional<std::string> loss) {
  Settings extra;
  if (epochs) extra["train.epochs"] = std::to_string(*epochs);
  if (loss) extra["train.loss"] = *loss;
  const auto p = load_profile(c, "train.seed", extra);
  const auto ds = read_dataset(data);
  const auto out = prepare_out(c);
  const auto spec = nn::build_unet(p.network);
  std::printf("network %zu layers, %zu parameters; %zu training samples, %zu epochs\n", spec.layers.size(),
              nn::init_parameters(spec, 0).trainable_count(), ds.n_train, p.train.epochs);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = train(ds, spec, p.train, [&](const EpochRecord& r) {
    std::printf("epoch %4zu  train %s  valid %s  %.1f s\n", r.epoch, format_number(r.train_loss).c_str(),
                format_number(r.valid_loss).c_str(), seconds_since(t0));
    std::fflush(stdout);
  });
  const auto ckpt = out / "checkpoint.ersw";
  nn::save_checkpoint(ckpt, spec, res.best);
  write_network(ckpt, p.network);
  write_text(out / "curve.csv", curve_csv(res.curve));
  write_manifest(out, "train", p, {fs::path(data)}, {ckpt, sidecar(ckpt), out / "curve.csv"},
                 {{"best_epoch", res.best_epoch}, {"total_steps", res.total_steps}});
  std::printf("best epoch %zu, checkpoint %s\n", res.best_epoch, ckpt.string().c_str());
  return kExitOk;
}

std::pair<std::size_t, std::size_t> split_range(const Dataset& ds, const std::string& split) {
  if (split == "train") return {0, ds.n_train};
  if (split == "valid") return {ds.valid_begin(), ds.test_begin()};
  if (split == "test") return {ds.test_begin(), ds.size()};
  if (split == "all") return {0, ds.size()};
  throw Error(ErrorCode::InvalidArgument, "split must be train, valid, test or all");
}

void print_report(const EvalReport& r) {
  std::printf("samples %zu  WMSE %s  WR %s  (WR excluded %zu)\n", r.count, format_number(r.wmse).c_str(),
              format_number(r.wr).c_str(), r.wr_excluded);
}

int cmd_eval(const Common& c, const std::string& data, const std::string& checkpoint, const std::string& split,
             const std::string& pred, const std::string& truth, const std::string& weights) {
  const auto p = load_profile(c, "");
  const auto out = prepare_out(c);
  EvalReport r;
  std::vector<fs::path> inputs;
  if (!pred.empty() || !truth.empty()) {
    if (pred.empty() || truth.empty()) throw Error(ErrorCode::InvalidArgument, "--pred and --truth go together");
    const Field fp = read_matrix(pred), ft = read_matrix(truth);
    const Field fw = weights.empty() ? Field(fp.rows(), fp.cols(), 1.0) : read_matrix(weights);
    r = evaluate(Predictions{{fp}, {ft}, {fw}});
    inputs = {pred, truth};
    if (!weights.empty()) inputs.push_back(weights);
  } else {
    if (data.empty() || checkpoint.empty())
      throw Error(ErrorCode::InvalidArgument, "eval needs --data and --checkpoint (or --pred and --truth)");
    const auto ds = read_dataset(data);
    const auto net = read_network(checkpoint, p.network);
    const auto spec = nn::build_unet(net);
    auto params = nn::load_checkpoint(checkpoint, spec);
    const auto [b, e] = split_range(ds, split);
    r = evaluate_split(ds, b, e, spec, params, net.in_channels == 3);
    std::printf("inference %.4f s per sample\n", r.seconds_per_sample);
    inputs = {data, checkpoint};
  }
  print_report(r);
  write_text(out / "eval.csv", eval_csv(r));
  write_manifest(out, "eval", p, inputs, {out / "eval.csv"}, {{"split", split}});
  return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& data, std::optional<std::size_t> epochs) {
  Settings extra;
  if (epochs) extra["train.epochs"] = std::to_string(*epochs);
  const auto p = load_profile(c, "train.seed", extra);
  const auto ds = read_dataset(data);
  const auto out = prepare_out(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_ablation(ds, p.train, p.network, all_ablation_combos(),
                                 [&](const AblationCombo& combo, const EpochRecord& r) {
                                   if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == p.train.epochs)
                                     std::printf("%s tier %-7s epoch %4zu  train %s  valid %s  %.0f s\n",
                                                 std::string(to_string(combo.variant)).c_str(),
                                                 combo.tier ? "on" : "off", r.epoch,
                                                 format_number(r.train_loss).c_str(),
                                                 format_number(r.valid_loss).c_str(), seconds_since(t0));
                                   std::fflush(stdout);
                                 });
  std::printf("%-8s %-4s %-14s %-14s\n", "tier", "loss", "valid WMSE", "valid WR");
  for (const auto& r : rows)
    std::printf("%-8s %-4s %-14s %-14s\n", r.combo.tier ? "with" : "without",
                std::string(to_string(r.combo.variant)).c_str(), format_number(r.valid.wmse).c_str(),
                format_number(r.valid.wr).c_str());
  write_text(out / "ablation.csv", ablation_csv(rows));
  write_manifest(out, "ablate", p, {fs::path(data)}, {out / "ablation.csv"});
  return kExitOk;
}

int cmd_noise(const Common& c, const std::string& data, const std::string& checkpoint) {
  const auto p = load_profile(c, "noise.seed");
  const auto ds = read_dataset(data);
  const auto out = prepare_out(c);
  const auto net = read_network(checkpoint, p.network);
  const auto spec = nn::build_unet(net);
  auto params = nn::load_checkpoint(checkpoint, spec);
  std::vector<double> levels{-std::numeric_limits<double>::infinity()};
  levels.insert(levels.end(), p.noise_levels.begin(), p.noise_levels.end());
  const auto rows = run_noise_eval(ds, spec, params, net.in_channels == 3, levels, p.noise_seed);
  for (const auto& r : rows) {
    std::printf("%-8s ", std::isfinite(r.level_dbw) ? (format_number(r.level_dbw) + " dBw").c_str() : "clean");
    print_report(r.report);
  }
  write_text(out / "noise.csv", noise_csv(rows));
  write_manifest(out, "noise", p, {fs::path(data), fs::path(checkpoint)}, {out / "noise.csv"});
  return kExitOk;
}

int cmd_rf(const Common& c) {
  const auto p = load_profile(c, "");
  const auto out = prepare_out(c);
  const auto spec = nn::build_unet(p.network);
  const auto rep = nn::receptive_field(spec);
  std::string csv = "layer,kind,rf,jump,start\n";
  std::printf("%5s  %-12s %8s %8s %8s\n", "layer", "kind", "rf", "jump", "start");
  for (const auto& e : rep.layers) {
    std::printf("%5zu  %-12s %8s %8s %8s\n", e.layer, std::string(nn::to_string(e.kind)).c_str(),
                format_number(e.rf).c_str(), format_number(e.jump).c_str(), format_number(e.start).c_str());
    csv += std::to_string(e.layer) + "," + std::string(nn::to_string(e.kind)) + "," + format_number(e.rf) + "," +
           format_number(e.jump) + "," + format_number(e.start) + "\n";
  }
  const double ref = 238.0;
  std::printf("receptive field %s x %s (reference %s%s)\n", format_number(rep.rf).c_str(), format_number(rep.rf).c_str(),
              format_number(ref).c_str(),
              rep.rf == ref ? ", matches" : (", differs by " + format_number(rep.rf - ref)).c_str());
  std::printf("3x3 convolutions %zu, max-pooling %zu, transposed convolutions %zu\n", spec.count_conv(3),
              spec.count(nn::LayerKind::MaxPool), spec.count(nn::LayerKind::TConv));
  write_text(out / "rf.csv", csv);
  write_manifest(out, "rf", p, {}, {out / "rf.csv"}, {{"rf", rep.rf}, {"reference", ref}});
  return kExitOk;
}

int cmd_plot(const Common& c, const std::string& input, const std::string& data, std::size_t index,
             const std::string& name) {
  const auto p = load_profile(c, "");
  const auto out = prepare_out(c);
  std::vector<fs::path> outputs;
  std::vector<fs::path> inputs;
  if (!input.empty()) {
    const Field f = read_matrix(input);
    outputs.push_back(render_to_file(f, out, name.empty() ? fs::path(input).stem().string() : name));
    inputs.push_back(input);
  } else if (!data.empty()) {
    const auto ds = read_dataset(data);
    if (index >= ds.size()) throw Error(ErrorCode::OutOfBounds, "sample index " + std::to_string(index) + " >= " + std::to_string(ds.size()));
    const auto& s = ds.samples[index];
    const std::string stem = name.empty() ? "sample" + std::to_string(index) : name;
    const char* channel[] = {"wenner", "wenner_schlumberger", "tier"};
    for (std::size_t k = 0; k < kInputChannels; ++k)
      outputs.push_back(render_to_file(to_field(s.input[k]), out, stem + "_" + channel[k]));
    outputs.push_back(render_to_file(to_field(s.target), out, stem + "_target"));
    inputs.push_back(data);
  } else {
    throw Error(ErrorCode::InvalidArgument, "plot needs --input or --data");
  }
  for (const auto& f : outputs) std::printf("wrote %s\n", f.string().c_str());
  write_manifest(out, "plot", p, inputs, outputs);
  return kExitOk;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NaNDetected: return kExitNaN;
    case ErrorCode::Singular:
    case ErrorCode::SolverDivergence:
    case ErrorCode::NonPositiveResistivity:
    case ErrorCode::NoFeasibleQuadrupole: return kExitSolver;
    default: return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ersinv: resistivity inversion laboratory"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "generate a training dataset");
  std::optional<std::size_t> samples;
  gen->add_option("--samples", samples, "number of samples (overrides data.samples)");
  bool dry_run = false;
  gen->add_flag("--dry-run", dry_run, "print the family plan without generating");

  auto* fwd = app.add_subcommand("fwd", "forward-model one resistivity model");
  std::string model_path;
  fwd->add_option("--model", model_path, "model file (.json bodies or .csv matrix)")->required();

  std::string data, checkpoint, split = "test", pred, truth, weights, input, name;
  std::optional<std::size_t> epochs;
  std::optional<std::string> loss;
  std::size_t index = 0;

  auto* trn = app.add_subcommand("train", "train the network");
  trn->add_option("--data", data, "dataset container")->required();
  trn->add_option("--epochs", epochs, "epochs (overrides train.epochs)");
  trn->add_option("--loss", loss, "SD, OS, OD or NA (overrides train.loss)");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint or a prediction/truth pair");
  evl->add_option("--data", data, "dataset container");
  evl->add_option("--checkpoint", checkpoint, "weights file");
  evl->add_option("--split", split, "train, valid, test or all");
  evl->add_option("--pred", pred, "prediction matrix CSV");
  evl->add_option("--truth", truth, "truth matrix CSV");
  evl->add_option("--weights", weights, "weight matrix CSV (default all ones)");

  auto* abl = app.add_subcommand("ablate", "tier-map and loss ablation grid");
  abl->add_option("--data", data, "dataset container")->required();
  abl->add_option("--epochs", epochs, "epochs per run (overrides train.epochs)");

  auto* noi = app.add_subcommand("noise", "evaluate under input noise");
  noi->add_option("--data", data, "dataset container")->required();
  noi->add_option("--checkpoint", checkpoint, "weights file")->required();

  auto* rf = app.add_subcommand("rf", "receptive-field report for the profile network");

  auto* plt = app.add_subcommand("plot", "render a matrix CSV or a dataset sample");
  plt->add_option("--input", input, "matrix CSV");
  plt->add_option("--data", data, "dataset container");
  plt->add_option("--index", index, "sample index in the dataset");
  plt->add_option("--name", name, "output file stem");

  for (auto* sub : {gen, fwd, trn, evl, abl, noi, rf, plt}) add_common(sub, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(common, samples, dry_run);
    if (*fwd) return cmd_fwd(common, model_path);
    if (*trn) return cmd_train(common, data, epochs, loss);
    if (*evl) return cmd_eval(common, data, checkpoint, split, pred, truth, weights);
    if (*abl) return cmd_ablate(common, data, epochs);
    if (*noi) return cmd_noise(common, data, checkpoint);
    if (*rf) return cmd_rf(common);
    if (*plt) return cmd_plot(common, input, data, index, name);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
