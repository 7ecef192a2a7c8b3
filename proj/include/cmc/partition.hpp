#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmc/core.hpp"

namespace cmc {

enum class PartitionKind { grid, boxes, voronoi };

/// Axis-aligned half-open box [lower, upper); bounds may be +-infinity.
struct Box {
  Vector lower;
  Vector upper;

  bool contains(const VectorRef& x) const;
};

/// M disjoint regions covering all of R^d.
///
/// grid: per-dimension interior breakpoints; the outermost cells extend to
/// +-infinity and a point lying on a breakpoint belongs to the upper cell.
/// boxes: an explicit list of disjoint half-open boxes (adaptive refinement).
/// voronoi: nearest centroid, ties to the lowest region index.
class Partition {
 public:
  static Partition grid(std::vector<std::vector<double>> interior_breakpoints, bool collapsed_dimension = false);
  static Partition boxes(std::vector<Box> boxes);
  static Partition voronoi(Matrix centroids);

  PartitionKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t region_count() const noexcept { return region_count_; }

  /// Region index of x in [0, region_count()).
  std::size_t locate(const VectorRef& x) const;

  const std::vector<std::vector<double>>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<Box>& box_list() const noexcept { return boxes_; }
  const Matrix& centroids() const noexcept { return centroids_; }

  /// Cells per dimension (grid kind only).
  std::vector<std::size_t> grid_shape() const;

  /// Set when a builder collapsed a zero-range dimension to a single cell.
  bool has_collapsed_dimension() const noexcept { return collapsed_; }

  /// The grid's cells as explicit boxes, in region-index order.
  std::vector<Box> as_boxes() const;

  bool operator==(const Partition& other) const;

 private:
  Partition() = default;

  PartitionKind kind_ = PartitionKind::grid;
  std::size_t dim_ = 0;
  std::size_t region_count_ = 0;
  std::vector<std::vector<double>> breakpoints_;
  std::vector<Box> boxes_;
  Matrix centroids_;
  bool collapsed_ = false;
};

/// Index sets J_m; empty regions are kept with no members.
struct Assignment {
  std::vector<std::vector<std::size_t>> index_sets;

  std::size_t region_count() const noexcept { return index_sets.size(); }
  std::vector<std::size_t> counts() const;
};

Assignment assign(const Partition& p, const WeightedSampleSet& s);

/// P2: equally spaced interior breakpoints between the per-dimension min and max.
Partition build_uniform_grid(const WeightedSampleSet& s, std::span<const std::size_t> cells_per_dim);

/// P1: interior breakpoints drawn uniformly inside (min, max), then sorted.
Partition build_random_grid(const WeightedSampleSet& s, std::span<const std::size_t> cells_per_dim,
                            std::uint64_t seed);

/// P3: Lloyd's k-means with k-means++ seeding. Weighted sets are first
/// multinomially resampled (N draws) and clustered unweighted.
Partition build_voronoi_kmeans(const WeightedSampleSet& s, std::size_t regions, std::uint64_t seed,
                               std::size_t max_iters = 100, bool resample_weighted = true);

/// 1-D quantile partition with floor(N/M) or ceil(N/M) samples per cell
/// (the first N mod M cells take the extra sample). Unweighted sets only.
Partition build_equal_count_partition(const WeightedSampleSet& s, std::size_t regions);

/// Splits `regions` into per-dimension cell counts whose product is `regions`:
/// prime factors, largest first, each go to the dimension with the widest
/// sample range per current cell.
std::vector<std::size_t> grid_shape_for(const WeightedSampleSet& s, std::size_t regions);

enum class PartitionStrategy { random_grid, uniform_grid, voronoi, equal_count };

PartitionStrategy parse_partition_strategy(const std::string& name);
std::string to_string(PartitionStrategy strategy);

/// Builds an M-region partition with the given strategy; grids use grid_shape_for.
Partition build_partition(const WeightedSampleSet& s, PartitionStrategy strategy, std::size_t regions,
                          std::uint64_t seed);

/// Within-cluster sum of squared distances to the nearest centroid.
double kmeans_sse(const Matrix& points, const Matrix& centroids);

enum class CostMode { deterministic, stochastic };

struct RefineStop {
  std::optional<std::size_t> max_regions;
  std::optional<double> loss_threshold;
};

struct RefineResult {
  Partition partition;
  /// Loss l(h) before the first split and after every split.
  std::vector<double> loss_history;
  /// Set when no region with two or more distinct samples was left to split.
  bool stopped_unsplittable = false;
};

/// Greedy refinement: split the region with the largest cost c_m(h) at the
/// weighted median of its samples along the axis with the widest sample
/// spread, until the region cap is reached or the loss drops below the
/// threshold (or reaches zero).
RefineResult adaptive_refine(const WeightedSampleSet& s, const Integrand& h, const Partition& initial,
                             const RefineStop& stop, CostMode mode);

/// JSON: {"kind", "dim", "breakpoints" | "boxes" | "centroids"}.
std::string partition_to_json(const Partition& p);
Partition partition_from_json(const std::string& text);

}  // namespace cmc
