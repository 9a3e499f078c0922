#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ersinv/common.hpp"

namespace ersinv::cli {

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

// Viridis-style ramp, t clamped to [0, 1].
void colormap(double t, std::uint8_t rgb[3]);

// Nearest-neighbour upscaling by `scale`; values mapped linearly from [lo, hi].
RgbImage render(const Field& f, double lo, double hi, std::size_t scale = 4);

// "<stem>_min<lo>_max<hi>"
std::string legend_stem(const std::string& stem, double lo, double hi);

bool png_available();

// Writes <path_without_ext>.png (or .ppm without libpng); returns the path written.
std::filesystem::path write_image(const RgbImage& im, const std::filesystem::path& path_without_ext);

// Renders `f` over its own range and writes "<dir>/<stem>_min.._max..".
std::filesystem::path render_to_file(const Field& f, const std::filesystem::path& dir, const std::string& stem);

}  // namespace ersinv::cli
