#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ersinv/features.hpp"

#ifdef ERSINV_HAVE_PNG
#include <png.h>
#endif

namespace ersinv::cli {

namespace {

constexpr std::uint8_t kRamp[9][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},  {44, 113, 142}, {33, 144, 141},
                                      {39, 173, 129}, {92, 200, 99}, {170, 220, 50}, {253, 231, 37}};

#ifdef ERSINV_HAVE_PNG
void append_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

std::vector<std::uint8_t> encode_png(const RgbImage& im) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(im.width), static_cast<png_uint_32>(im.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < im.height; ++r)
    png_write_row(png, const_cast<png_bytep>(im.pixels.data() + r * im.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}
#endif

std::vector<std::uint8_t> encode_ppm(const RgbImage& im) {
  const std::string header = "P6\n" + std::to_string(im.width) + " " + std::to_string(im.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), im.pixels.begin(), im.pixels.end());
  return out;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void colormap(double t, std::uint8_t rgb[3]) {
  t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
  const double x = t * 8.0;
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x), 7);
  const double f = x - static_cast<double>(i);
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<std::uint8_t>(std::lround(kRamp[i][c] + f * (kRamp[i + 1][c] - kRamp[i][c])));
}

RgbImage render(const Field& f, double lo, double hi, std::size_t scale) {
  if (scale == 0) throw Error(ErrorCode::InvalidArgument, "image scale must be >= 1");
  RgbImage im{f.cols() * scale, f.rows() * scale, {}};
  im.pixels.resize(im.width * im.height * 3);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t r = 0; r < im.height; ++r)
    for (std::size_t c = 0; c < im.width; ++c) colormap((f(r / scale, c / scale) - lo) / span, &im.pixels[(r * im.width + c) * 3]);
  return im;
}

std::string legend_stem(const std::string& stem, double lo, double hi) {
  return stem + "_min" + short_number(lo) + "_max" + short_number(hi);
}

bool png_available() {
#ifdef ERSINV_HAVE_PNG
  return true;
#else
  return false;
#endif
}

std::filesystem::path write_image(const RgbImage& im, const std::filesystem::path& path_without_ext) {
  std::filesystem::path path = path_without_ext;
#ifdef ERSINV_HAVE_PNG
  path += ".png";
  write_file_atomic(path, encode_png(im));
#else
  path += ".ppm";
  write_file_atomic(path, encode_ppm(im));
#endif
  return path;
}

std::filesystem::path render_to_file(const Field& f, const std::filesystem::path& dir, const std::string& stem) {
  const auto [lo, hi] = std::minmax_element(f.data().begin(), f.data().end());
  return write_image(render(f, *lo, *hi), dir / legend_stem(stem, *lo, *hi));
}

}  // namespace ersinv::cli
