#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

namespace cpm {

/// Points live in R^3; two-dimensional problems keep z = 0.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Integer lattice coordinates (third entry is 0 in 2D).
using LatticeIndex = std::array<int, 3>;

inline constexpr int kLatticeBits = 21;
inline constexpr int kLatticeBias = 1 << (kLatticeBits - 1);

inline std::uint64_t lattice_key(const LatticeIndex& k) {
  const auto pack = [](int v) {
    return static_cast<std::uint64_t>(v + kLatticeBias) & ((std::uint64_t{1} << kLatticeBits) - 1);
  };
  return (pack(k[0]) << (2 * kLatticeBits)) | (pack(k[1]) << kLatticeBits) | pack(k[2]);
}

inline bool lattice_less(const LatticeIndex& a, const LatticeIndex& b) {
  return a < b;
}

}  // namespace cpm
