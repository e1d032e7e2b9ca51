#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xalign/errors.hpp"
#include "xalign/numerics.hpp"

namespace xalign {

inline constexpr std::size_t kSliceCount = 6;
inline constexpr std::size_t kRegionCount = 4;
inline constexpr std::size_t kEntityCount = kRegionCount + 1;

enum class Region : std::size_t { kHead = 0, kUpper = 1, kLower = 2, kFoot = 3 };

/// Per-region affine adjustment applied after slice pooling.
///
/// Weights are row-major dim x dim. When `enabled` is false the regions are
/// the pooled slices unchanged, which is also what an identity-initialized
/// projection produces.
template <class S>
struct RegionProjectionT {
  std::size_t dim = 0;
  bool enabled = false;
  std::array<std::vector<S>, kRegionCount> weight;
  std::array<std::vector<S>, kRegionCount> bias;
};
using RegionProjection = RegionProjectionT<double>;

RegionProjection identity_projection(std::size_t dim, bool enabled = true);

// Half-open row range [first, last) of each of the six horizontal bands.
std::array<std::pair<std::size_t, std::size_t>, kSliceCount> band_bounds(std::size_t rows);

/// Mean-pools an H-row feature grid (H >= 6) into six horizontal bands.
std::vector<num::Vec64> pool_rows(std::span<const num::Vec64> grid);

/// Head = P1(mean(s1, s2)), upper = P2(mean(s2, s3)), lower = P3(mean(s4, s5)),
/// foot = P4(s6). Head and upper share slice 2.
template <class S, class V>
std::array<std::vector<S>, kRegionCount> partition_regions(std::span<const V> slices,
                                                           const RegionProjectionT<S>& proj) {
  if (slices.size() != kSliceCount) {
    throw UsageError("partition: expected 6 slices, got " + std::to_string(slices.size()));
  }
  const std::size_t d = slices.front().size();
  for (const V& s : slices) {
    if (s.size() != d) throw UsageError("partition: slice dimensions differ");
  }
  if (proj.enabled && proj.dim != d) throw UsageError("partition: projection dim mismatch");

  auto mean2 = [d](const V& a, const V& b) {
    std::vector<S> out(d);
    for (std::size_t c = 0; c < d; ++c) out[c] = (S(a[c]) + S(b[c])) * 0.5;
    return out;
  };
  auto copy = [d](const V& a) {
    std::vector<S> out(d);
    for (std::size_t c = 0; c < d; ++c) out[c] = S(a[c]);
    return out;
  };

  std::array<std::vector<S>, kRegionCount> regions{
      mean2(slices[0], slices[1]), mean2(slices[1], slices[2]),
      mean2(slices[3], slices[4]), copy(slices[5])};
  if (proj.enabled) {
    for (std::size_t r = 0; r < kRegionCount; ++r) {
      regions[r] = num::affine(std::span<const S>(proj.weight[r]),
                               std::span<const S>(regions[r]), std::span<const S>(proj.bias[r]));
    }
  }
  return regions;
}

std::array<num::Vec64, kRegionCount> partition(std::span<const num::Vec64> slices,
                                               const RegionProjection& proj);

}  // namespace xalign
