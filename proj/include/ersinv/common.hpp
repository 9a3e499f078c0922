#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ersinv {

enum class ErrorCode {
  InvalidArgument,
  OutOfBounds,
  Overlap,
  Infeasible,
  Singular,
  NonPositiveResistivity,
  SolverDivergence,
  NoFeasibleQuadrupole,
  OutOfRange,
  DimensionMismatch,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ChecksumMismatch,
  ShapeMismatch,
  NonDivisibleDims,
  DegenerateBatch,
  NaNDetected,
  CacheMismatch,
  ZeroVariance,
  ZeroTruth,
  DigestMismatch,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Dense row-major 2-D array. Row 0 is the surface for every field in this project.
template <typename T>
class Array2D {
 public:
  Array2D() = default;
  Array2D(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const Array2D& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Array2D&, const Array2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Field = Array2D<double>;

// SplitMix64 finalizer; used to derive independent seeds from (master, index).
constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) noexcept {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

}  // namespace ersinv
