#include "profile.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ersinv::cli {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& want) {
  throw Error(ErrorCode::InvalidArgument, key + " = '" + value + "': expected " + want);
}

std::size_t as_size(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

double as_double(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad(key, v, "a number");
  return out;
}

bool as_bool(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, v, "true or false");
}

std::vector<double> as_list(const Settings& s, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(s.at(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size()) bad(key, s.at(key), "a comma-separated list of numbers");
    out.push_back(v);
  }
  return out;
}

}  // namespace

const Settings& default_settings() {
  static const Settings d = {
      {"grid.height", "32"},
      {"grid.width", "96"},
      {"grid.cell_size", "1"},
      {"survey.electrode_every", "4"},
      {"forward.solver", "ldlt"},
      {"forward.background", "500"},
      {"forward.pad_side", "8"},
      {"forward.pad_down", "8"},
      {"forward.pad_growth", "1.3"},
      {"forward.cg_tolerance", "1e-10"},
      {"normalization.lo", "10"},
      {"normalization.hi", "2000"},
      {"data.samples", "120"},
      {"data.seed", "1"},
      {"data.split", "10,1,1"},
      {"network.widths", "16,32,64,128,256"},
      {"network.residual_blocks", "2"},
      {"network.tier", "true"},
      {"train.learning_rate", "0.1"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "1e-4"},
      {"train.batch_size", "5"},
      {"train.epochs", "50"},
      {"train.seed", "1"},
      {"train.loss", "SD"},
      {"train.lambda", "8"},
      {"noise.levels", "1,3"},
      {"noise.seed", "99"},
  };
  return d;
}

Settings builtin_profile(const std::string& name) {
  if (name == "desk" || name == "custom") return {};
  if (name == "paper")
    return {{"grid.height", "64"},         {"grid.width", "304"},       {"data.samples", "36214"},
            {"network.widths", "64,128,256,512,1024"}, {"train.epochs", "500"}};
  throw Error(ErrorCode::InvalidArgument, "unknown profile '" + name + "'");
}

Settings parse_settings(const std::string& text, const std::string& origin) {
  Settings out;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    ++n;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::InvalidArgument, origin + ":" + std::to_string(n) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, origin + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (section.empty() || key.empty())
      throw Error(ErrorCode::InvalidArgument, origin + ":" + std::to_string(n) + ": key outside a section");
    out[section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str(), path.string());
}

void merge(Settings& base, const Settings& over) {
  for (const auto& [k, v] : over) {
    if (!default_settings().count(k)) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + k + "'");
    base[k] = v;
  }
}

Settings resolve_profile(const std::string& name) {
  Settings s = default_settings();
  if (name == "desk" || name == "paper" || name == "custom") {
    merge(s, builtin_profile(name));
    return s;
  }
  const char* dir = std::getenv("ERSINV_PROFILE_DIR");
  if (!dir) throw Error(ErrorCode::InvalidArgument, "unknown profile '" + name + "' (ERSINV_PROFILE_DIR not set)");
  const auto path = std::filesystem::path(dir) / (name + ".ini");
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::InvalidArgument, "profile '" + name + "' not found at " + path.string());
  merge(s, read_settings(path));
  return s;
}

RunProfile materialize(const std::string& name, const Settings& s) {
  RunProfile p;
  p.name = name;
  p.settings = s;

  p.grid = GridSpec{as_size(s, "grid.height"), as_size(s, "grid.width"), as_double(s, "grid.cell_size")};
  p.grid.validate();

  auto& g = p.generation;
  g.grid = p.grid;
  g.electrode_every = as_size(s, "survey.electrode_every");
  const std::string solver = s.at("forward.solver");
  if (solver == "ldlt")
    g.forward.solver = LinearSolverKind::SparseCholesky;
  else if (solver == "cg")
    g.forward.solver = LinearSolverKind::ConjugateGradient;
  else
    bad("forward.solver", solver, "ldlt or cg");
  g.forward.background = as_double(s, "forward.background");
  g.forward.mesh.pad_side = as_size(s, "forward.pad_side");
  g.forward.mesh.pad_down = as_size(s, "forward.pad_down");
  g.forward.mesh.growth = as_double(s, "forward.pad_growth");
  g.forward.cg_tolerance = as_double(s, "forward.cg_tolerance");
  g.norm = NormalizationSpec{as_double(s, "normalization.lo"), as_double(s, "normalization.hi")};
  g.norm.validate();
  p.samples = as_size(s, "data.samples");
  if (p.samples == 0) bad("data.samples", s.at("data.samples"), "at least 1");
  g.families = scaled_families(p.samples);
  g.seed = as_size(s, "data.seed");
  const auto split = as_list(s, "data.split");
  if (split.size() != 3) bad("data.split", s.at("data.split"), "three ratios train,valid,test");
  g.split = SplitRatio{split[0], split[1], split[2]};

  const auto widths = as_list(s, "network.widths");
  if (widths.size() != 5) bad("network.widths", s.at("network.widths"), "five widths");
  p.network.widths.clear();
  for (double w : widths) {
    if (!(w >= 1.0) || w != std::floor(w)) bad("network.widths", s.at("network.widths"), "positive integers");
    p.network.widths.push_back(static_cast<std::size_t>(w));
  }
  p.network.residual_blocks = as_size(s, "network.residual_blocks");
  const bool tier = as_bool(s, "network.tier");
  p.network.in_channels = tier ? 3 : 2;

  auto& t = p.train;
  t.learning_rate = as_double(s, "train.learning_rate");
  t.momentum = as_double(s, "train.momentum");
  t.weight_decay = as_double(s, "train.weight_decay");
  t.batch_size = as_size(s, "train.batch_size");
  t.epochs = as_size(s, "train.epochs");
  t.seed = as_size(s, "train.seed");
  t.loss = loss_config(parse_loss_variant(s.at("train.loss")));
  t.loss.lambda = as_double(s, "train.lambda");
  t.tier_enabled = tier;
  t.validate();

  p.noise_levels = as_list(s, "noise.levels");
  p.noise_seed = as_size(s, "noise.seed");
  return p;
}

nlohmann::json RunProfile::to_json() const {
  nlohmann::json j;
  j["profile"] = name;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : settings) cfg[k] = v;
  j["settings"] = cfg;
  return j;
}

}  // namespace ersinv::cli
