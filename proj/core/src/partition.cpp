#include "xalign/partition.hpp"

namespace xalign {

RegionProjection identity_projection(std::size_t dim, bool enabled) {
  if (dim == 0) throw UsageError("identity_projection: dim must be positive");
  RegionProjection p;
  p.dim = dim;
  p.enabled = enabled;
  for (std::size_t r = 0; r < kRegionCount; ++r) {
    p.weight[r].assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) p.weight[r][i * dim + i] = 1.0;
    p.bias[r].assign(dim, 0.0);
  }
  return p;
}

std::array<std::pair<std::size_t, std::size_t>, kSliceCount> band_bounds(std::size_t rows) {
  if (rows < kSliceCount) {
    throw UsageError("pool_rows: need at least 6 rows, got " + std::to_string(rows));
  }
  std::array<std::pair<std::size_t, std::size_t>, kSliceCount> bounds{};
  for (std::size_t r = 0; r < kSliceCount; ++r) {
    bounds[r] = {r * rows / kSliceCount, (r + 1) * rows / kSliceCount};
  }
  return bounds;
}

std::vector<num::Vec64> pool_rows(std::span<const num::Vec64> grid) {
  const auto bounds = band_bounds(grid.size());
  const std::size_t d = grid.front().dim();
  std::vector<num::Vec64> bands;
  bands.reserve(kSliceCount);
  for (const auto& [first, last] : bounds) {
    std::vector<double> acc(d, 0.0);
    for (std::size_t row = first; row < last; ++row) {
      if (grid[row].dim() != d) throw UsageError("pool_rows: row dimensions differ");
      for (std::size_t c = 0; c < d; ++c) acc[c] += grid[row][c];
    }
    const auto count = static_cast<double>(last - first);
    for (double& v : acc) v /= count;
    bands.emplace_back(std::move(acc));
  }
  return bands;
}

std::array<num::Vec64, kRegionCount> partition(std::span<const num::Vec64> slices,
                                               const RegionProjection& proj) {
  auto regions = partition_regions<double>(slices, proj);
  return {num::Vec64(std::move(regions[0])), num::Vec64(std::move(regions[1])),
          num::Vec64(std::move(regions[2])), num::Vec64(std::move(regions[3]))};
}

}  // namespace xalign
