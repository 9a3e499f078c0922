#include "ersinv/common.hpp"

#include <cstdio>

namespace ersinv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::Overlap: return "Overlap";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NonPositiveResistivity: return "NonPositiveResistivity";
    case ErrorCode::SolverDivergence: return "SolverDivergence";
    case ErrorCode::NoFeasibleQuadrupole: return "NoFeasibleQuadrupole";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonDivisibleDims: return "NonDivisibleDims";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::NaNDetected: return "NaNDetected";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ZeroTruth: return "ZeroTruth";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ersinv
