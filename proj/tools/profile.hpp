#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ersinv/dataset.hpp"
#include "ersinv/train.hpp"

namespace ersinv::cli {

// Flat "section.key" -> value text. Later layers override earlier ones.
using Settings = std::map<std::string, std::string>;

// Every recognised key with its desk default.
const Settings& default_settings();

// Built-in profile overrides: "desk" (none) and "paper".
Settings builtin_profile(const std::string& name);

// INI-style text: "[section]" headers, "key = value" lines, '#' or ';' comments.
Settings parse_settings(const std::string& text, const std::string& origin);
Settings read_settings(const std::filesystem::path& path);

// desk/paper built-ins, then $ERSINV_PROFILE_DIR/<name>.ini; "custom" starts from desk.
Settings resolve_profile(const std::string& name);

// Throws InvalidArgument for unknown keys.
void merge(Settings& base, const Settings& over);

struct RunProfile {
  std::string name;
  Settings settings;

  GridSpec grid;
  GenerationConfig generation;
  std::size_t samples = 0;
  nn::UNetConfig network;
  TrainConfig train;
  std::vector<double> noise_levels;
  std::uint64_t noise_seed = 0;

  nlohmann::json to_json() const;
};

// Typed view with validation; throws InvalidArgument on malformed values.
RunProfile materialize(const std::string& name, const Settings& s);

}  // namespace ersinv::cli
