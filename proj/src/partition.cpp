#include "cmc/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "cmc/error.hpp"
#include "cmc/loss.hpp"
#include "cmc/random.hpp"

namespace cmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Range {
  double lo;
  double hi;
};

std::vector<Range> coordinate_ranges(const Matrix& pts) {
  std::vector<Range> out(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index k = 0; k < pts.rows(); ++k) {
    out[static_cast<std::size_t>(k)] = {pts.row(k).minCoeff(), pts.row(k).maxCoeff()};
  }
  return out;
}

void check_shape(const WeightedSampleSet& s, std::span<const std::size_t> cells) {
  if (cells.size() != s.dim()) throw std::invalid_argument("cells_per_dim must have one entry per dimension");
  for (auto c : cells) {
    if (c == 0) throw std::invalid_argument("cells_per_dim entries must be positive");
  }
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i - 1] < v[i])) return false;
  }
  return true;
}

// Lexicographic column comparison used to count distinct points.
std::size_t count_distinct_columns(const Matrix& pts) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pts.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < pts.rows(); ++k) {
      if (pts(k, a) != pts(k, b)) return pts(k, a) < pts(k, b);
    }
    return false;
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (less(idx[i - 1], idx[i])) ++distinct;
  }
  return distinct;
}

std::size_t nearest_centroid(const VectorRef& x, const Matrix& centroids, double* best_d2 = nullptr) {
  std::size_t best = 0;
  double best_d = kInf;
  for (Eigen::Index m = 0; m < centroids.cols(); ++m) {
    const double d2 = (centroids.col(m) - x).squaredNorm();
    if (d2 < best_d) {
      best_d = d2;
      best = static_cast<std::size_t>(m);
    }
  }
  if (best_d2) *best_d2 = best_d;
  return best;
}

Matrix kmeanspp_seed(const Matrix& pts, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(pts.cols());
  Matrix centroids(pts.rows(), static_cast<Eigen::Index>(k));
  const auto first = static_cast<Eigen::Index>(std::min<std::size_t>(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n))));
  centroids.col(0) = pts.col(first);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (pts.col(static_cast<Eigen::Index>(i)) - centroids.col(0)).squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    const auto cum = cumulative_sum(d2);
    if (!(cum.back() > 0.0)) throw std::invalid_argument("fewer distinct points than requested regions");
    const auto pick = static_cast<Eigen::Index>(inverse_cdf_pick(cum, rng.uniform()));
    centroids.col(static_cast<Eigen::Index>(c)) = pts.col(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (pts.col(static_cast<Eigen::Index>(i)) - centroids.col(static_cast<Eigen::Index>(c))).squaredNorm());
    }
  }
  return centroids;
}

// Index of the point farthest from its nearest centroid.
Eigen::Index farthest_point(const Matrix& pts, const Matrix& centroids) {
  Eigen::Index arg = 0;
  double worst = -1.0;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    double d2 = 0.0;
    nearest_centroid(pts.col(i), centroids, &d2);
    if (d2 > worst) {
      worst = d2;
      arg = i;
    }
  }
  return arg;
}

std::vector<std::size_t> prime_factors_descending(std::size_t n) {
  std::vector<std::size_t> f;
  for (std::size_t p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  std::sort(f.rbegin(), f.rend());
  return f;
}

nlohmann::json bound_to_json(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

double bound_from_json(const nlohmann::json& j, double inf_value) {
  if (j.is_null()) return inf_value;
  return j.get<double>();
}

}  // namespace

bool Box::contains(const VectorRef& x) const {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!(lower[k] <= x[k] && x[k] < upper[k])) return false;
  }
  return true;
}

Partition Partition::grid(std::vector<std::vector<double>> interior_breakpoints, bool collapsed_dimension) {
  if (interior_breakpoints.empty()) throw std::invalid_argument("grid needs at least one dimension");
  Partition p;
  p.kind_ = PartitionKind::grid;
  p.dim_ = interior_breakpoints.size();
  p.region_count_ = 1;
  for (const auto& bp : interior_breakpoints) {
    if (!strictly_increasing(bp)) throw std::invalid_argument("grid breakpoints must be strictly increasing");
    for (double b : bp) {
      if (!std::isfinite(b)) throw std::invalid_argument("grid breakpoints must be finite");
    }
    p.region_count_ *= bp.size() + 1;
  }
  p.breakpoints_ = std::move(interior_breakpoints);
  p.collapsed_ = collapsed_dimension;
  return p;
}

Partition Partition::boxes(std::vector<Box> boxes) {
  if (boxes.empty()) throw std::invalid_argument("box partition needs at least one box");
  Partition p;
  p.kind_ = PartitionKind::boxes;
  p.dim_ = static_cast<std::size_t>(boxes.front().lower.size());
  for (const auto& b : boxes) {
    if (static_cast<std::size_t>(b.lower.size()) != p.dim_ || static_cast<std::size_t>(b.upper.size()) != p.dim_) {
      throw std::invalid_argument("box dimension mismatch");
    }
  }
  p.region_count_ = boxes.size();
  p.boxes_ = std::move(boxes);
  return p;
}

Partition Partition::voronoi(Matrix centroids) {
  if (centroids.cols() < 1 || centroids.rows() < 1) throw std::invalid_argument("voronoi needs centroids");
  if (count_distinct_columns(centroids) != static_cast<std::size_t>(centroids.cols())) {
    throw std::invalid_argument("voronoi centroids must be pairwise distinct");
  }
  Partition p;
  p.kind_ = PartitionKind::voronoi;
  p.dim_ = static_cast<std::size_t>(centroids.rows());
  p.region_count_ = static_cast<std::size_t>(centroids.cols());
  p.centroids_ = std::move(centroids);
  return p;
}

std::size_t Partition::locate(const VectorRef& x) const {
  switch (kind_) {
    case PartitionKind::grid: {
      std::size_t index = 0;
      std::size_t stride = 1;
      for (std::size_t k = 0; k < dim_; ++k) {
        const auto& bp = breakpoints_[k];
        const auto cell = static_cast<std::size_t>(std::upper_bound(bp.begin(), bp.end(), x[static_cast<Eigen::Index>(k)]) - bp.begin());
        index += cell * stride;
        stride *= bp.size() + 1;
      }
      return index;
    }
    case PartitionKind::boxes:
      for (std::size_t m = 0; m < boxes_.size(); ++m) {
        if (boxes_[m].contains(x)) return m;
      }
      throw std::logic_error("box partition does not cover point");
    case PartitionKind::voronoi:
      return nearest_centroid(x, centroids_);
  }
  throw std::logic_error("unknown partition kind");
}

std::vector<std::size_t> Partition::grid_shape() const {
  if (kind_ != PartitionKind::grid) throw std::logic_error("grid_shape on non-grid partition");
  std::vector<std::size_t> shape;
  for (const auto& bp : breakpoints_) shape.push_back(bp.size() + 1);
  return shape;
}

std::vector<Box> Partition::as_boxes() const {
  if (kind_ == PartitionKind::boxes) return boxes_;
  if (kind_ != PartitionKind::grid) throw std::invalid_argument("only grid partitions convert to boxes");
  const auto shape = grid_shape();
  std::vector<Box> out;
  out.reserve(region_count_);
  for (std::size_t idx = 0; idx < region_count_; ++idx) {
    Box b{Vector(static_cast<Eigen::Index>(dim_)), Vector(static_cast<Eigen::Index>(dim_))};
    std::size_t rem = idx;
    for (std::size_t k = 0; k < dim_; ++k) {
      const std::size_t cell = rem % shape[k];
      rem /= shape[k];
      const auto& bp = breakpoints_[k];
      b.lower[static_cast<Eigen::Index>(k)] = cell == 0 ? -kInf : bp[cell - 1];
      b.upper[static_cast<Eigen::Index>(k)] = cell == bp.size() ? kInf : bp[cell];
    }
    out.push_back(std::move(b));
  }
  return out;
}

bool Partition::operator==(const Partition& other) const {
  if (kind_ != other.kind_ || dim_ != other.dim_ || region_count_ != other.region_count_) return false;
  if (breakpoints_ != other.breakpoints_) return false;
  if (boxes_.size() != other.boxes_.size()) return false;
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    if (boxes_[i].lower != other.boxes_[i].lower || boxes_[i].upper != other.boxes_[i].upper) return false;
  }
  return centroids_.rows() == other.centroids_.rows() && centroids_.cols() == other.centroids_.cols() &&
         centroids_ == other.centroids_;
}

std::vector<std::size_t> Assignment::counts() const {
  std::vector<std::size_t> c;
  c.reserve(index_sets.size());
  for (const auto& j : index_sets) c.push_back(j.size());
  return c;
}

Assignment assign(const Partition& p, const WeightedSampleSet& s) {
  if (p.dim() != s.dim()) throw std::invalid_argument("partition and samples differ in dimension");
  Assignment a;
  a.index_sets.resize(p.region_count());
  for (std::size_t i = 0; i < s.size(); ++i) a.index_sets[p.locate(s.point(i))].push_back(i);
  return a;
}

Partition build_uniform_grid(const WeightedSampleSet& s, std::span<const std::size_t> cells_per_dim) {
  check_shape(s, cells_per_dim);
  const auto ranges = coordinate_ranges(s.points());
  std::vector<std::vector<double>> bps(s.dim());
  bool collapsed = false;
  for (std::size_t k = 0; k < s.dim(); ++k) {
    const std::size_t cells = cells_per_dim[k];
    if (cells == 1) continue;
    const auto [lo, hi] = ranges[k];
    std::vector<double> bp;
    for (std::size_t j = 1; j < cells; ++j) {
      bp.push_back(lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(cells));
    }
    if (!(lo < hi) || !strictly_increasing(bp) || !(lo < bp.front()) || !(bp.back() < hi)) {
      collapsed = true;
      continue;
    }
    bps[k] = std::move(bp);
  }
  return Partition::grid(std::move(bps), collapsed);
}

Partition build_random_grid(const WeightedSampleSet& s, std::span<const std::size_t> cells_per_dim,
                            std::uint64_t seed) {
  check_shape(s, cells_per_dim);
  Rng rng(seed);
  const auto ranges = coordinate_ranges(s.points());
  std::vector<std::vector<double>> bps(s.dim());
  bool collapsed = false;
  for (std::size_t k = 0; k < s.dim(); ++k) {
    const std::size_t cells = cells_per_dim[k];
    if (cells == 1) continue;
    const auto [lo, hi] = ranges[k];
    if (!(lo < hi)) {
      collapsed = true;
      continue;
    }
    std::vector<double> bp;
    std::size_t attempts = 0;
    while (bp.size() + 1 < cells) {
      const double b = lo + (hi - lo) * rng.uniform_open();
      if (b > lo && b < hi && std::find(bp.begin(), bp.end(), b) == bp.end()) bp.push_back(b);
      if (++attempts > 1000 * cells) break;
    }
    std::sort(bp.begin(), bp.end());
    if (bp.size() + 1 < cells) collapsed = true;
    bps[k] = std::move(bp);
  }
  return Partition::grid(std::move(bps), collapsed);
}

Partition build_voronoi_kmeans(const WeightedSampleSet& s, std::size_t regions, std::uint64_t seed,
                               std::size_t max_iters, bool resample_weighted) {
  if (regions == 0) throw std::invalid_argument("k-means needs at least one region");
  if (regions > count_distinct_columns(s.points())) {
    throw std::invalid_argument("M exceeds the number of distinct points");
  }
  Rng rng(seed);
  Matrix pts = s.points();
  if (s.has_unnorm_weights() && resample_weighted) {
    const auto idx = multinomial_resample(s.norm_weights(), s.size(), rng);
    Matrix resampled(pts.rows(), pts.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) resampled.col(static_cast<Eigen::Index>(i)) = pts.col(static_cast<Eigen::Index>(idx[i]));
    // Resampling can leave fewer distinct points than regions; cluster the
    // original cloud in that case.
    if (count_distinct_columns(resampled) >= regions) pts = std::move(resampled);
  }

  Matrix centroids = kmeanspp_seed(pts, regions, rng);
  const auto n = static_cast<std::size_t>(pts.cols());
  std::vector<std::size_t> label(n, regions);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto m = nearest_centroid(pts.col(static_cast<Eigen::Index>(i)), centroids);
      if (m != label[i]) {
        label[i] = m;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(pts.rows(), static_cast<Eigen::Index>(regions));
    std::vector<std::size_t> count(regions, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(static_cast<Eigen::Index>(label[i])) += pts.col(static_cast<Eigen::Index>(i));
      ++count[label[i]];
    }
    for (std::size_t m = 0; m < regions; ++m) {
      const auto mi = static_cast<Eigen::Index>(m);
      if (count[m] > 0) {
        centroids.col(mi) = sums.col(mi) / static_cast<double>(count[m]);
      } else {
        centroids.col(mi) = pts.col(farthest_point(pts, centroids));
      }
    }
  }
  // Distinct disjoint clusters can still share a mean; move duplicates.
  for (std::size_t guard = 0; guard < regions && count_distinct_columns(centroids) < regions; ++guard) {
    for (Eigen::Index a = 1; a < centroids.cols(); ++a) {
      for (Eigen::Index b = 0; b < a; ++b) {
        if (centroids.col(a) == centroids.col(b)) {
          Matrix others = centroids;
          others.col(a) = centroids.col(b);
          centroids.col(a) = pts.col(farthest_point(pts, others));
        }
      }
    }
  }
  return Partition::voronoi(std::move(centroids));
}

Partition build_equal_count_partition(const WeightedSampleSet& s, std::size_t regions) {
  if (s.dim() != 1) throw std::invalid_argument("equal-count partition implemented for d=1 only");
  if (s.has_unnorm_weights()) throw std::invalid_argument("equal-count partition requires unweighted samples");
  if (regions == 0 || regions > s.size()) throw std::invalid_argument("equal-count partition needs 1 <= M <= N");
  std::vector<double> xs(s.points().data(), s.points().data() + s.size());
  std::sort(xs.begin(), xs.end());
  const std::size_t base = s.size() / regions;
  const std::size_t extra = s.size() % regions;
  std::vector<double> bp;
  std::size_t filled = 0;
  for (std::size_t m = 0; m + 1 < regions; ++m) {
    filled += base + (m < extra ? 1 : 0);
    const double a = xs[filled - 1];
    const double b = xs[filled];
    if (!(a < b)) throw std::invalid_argument("tied values at an equal-count boundary");
    double mid = a + 0.5 * (b - a);
    if (!(mid > a)) mid = b;
    bp.push_back(mid);
  }
  return Partition::grid({std::move(bp)});
}

std::vector<std::size_t> grid_shape_for(const WeightedSampleSet& s, std::size_t regions) {
  if (regions == 0) throw std::invalid_argument("region count must be positive");
  const auto ranges = coordinate_ranges(s.points());
  std::vector<std::size_t> shape(s.dim(), 1);
  for (auto f : prime_factors_descending(regions)) {
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t k = 0; k < s.dim(); ++k) {
      const double score = (ranges[k].hi - ranges[k].lo) / static_cast<double>(shape[k]);
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    shape[best] *= f;
  }
  return shape;
}

PartitionStrategy parse_partition_strategy(const std::string& name) {
  if (name == "P1" || name == "random_grid") return PartitionStrategy::random_grid;
  if (name == "P2" || name == "uniform_grid") return PartitionStrategy::uniform_grid;
  if (name == "P3" || name == "voronoi" || name == "kmeans") return PartitionStrategy::voronoi;
  if (name == "equal_count" || name == "quantile") return PartitionStrategy::equal_count;
  throw ConfigError("unknown partition strategy '" + name + "'");
}

std::string to_string(PartitionStrategy strategy) {
  switch (strategy) {
    case PartitionStrategy::random_grid: return "P1";
    case PartitionStrategy::uniform_grid: return "P2";
    case PartitionStrategy::voronoi: return "P3";
    case PartitionStrategy::equal_count: return "equal_count";
  }
  return "unknown";
}

Partition build_partition(const WeightedSampleSet& s, PartitionStrategy strategy, std::size_t regions,
                          std::uint64_t seed) {
  switch (strategy) {
    case PartitionStrategy::random_grid: {
      const auto shape = grid_shape_for(s, regions);
      return build_random_grid(s, shape, seed);
    }
    case PartitionStrategy::uniform_grid: {
      const auto shape = grid_shape_for(s, regions);
      return build_uniform_grid(s, shape);
    }
    case PartitionStrategy::voronoi:
      return build_voronoi_kmeans(s, regions, seed);
    case PartitionStrategy::equal_count:
      return build_equal_count_partition(s, regions);
  }
  throw std::logic_error("unknown partition strategy");
}

double kmeans_sse(const Matrix& points, const Matrix& centroids) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    double d2 = 0.0;
    nearest_centroid(points.col(i), centroids, &d2);
    sse += d2;
  }
  return sse;
}

namespace {

// Splits box `m` in two; returns false when its samples are all identical.
bool split_region(const WeightedSampleSet& s, const std::vector<std::size_t>& members, std::vector<Box>& boxes,
                  std::size_t m) {
  if (members.size() < 2) return false;
  Eigen::Index axis = -1;
  double widest = 0.0;
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(s.dim()); ++k) {
    double lo = kInf;
    double hi = -kInf;
    for (auto i : members) {
      lo = std::min(lo, s.point(i)[k]);
      hi = std::max(hi, s.point(i)[k]);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = k;
    }
  }
  if (axis < 0) return false;

  std::vector<std::size_t> order = members;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.point(a)[axis] < s.point(b)[axis]; });
  double mass = 0.0;
  for (auto i : order) mass += s.norm_weight(i);
  const bool use_counts = !(mass > 0.0);
  const double total = use_counts ? static_cast<double>(order.size()) : mass;
  double acc = 0.0;
  std::size_t k = 0;
  for (; k < order.size(); ++k) {
    acc += use_counts ? 1.0 : s.norm_weight(order[k]);
    if (acc >= 0.5 * total) break;
  }
  k = std::min(k, order.size() - 1);
  const double min_v = s.point(order.front())[axis];
  double cut = s.point(order[k])[axis];
  if (!(cut > min_v)) {
    for (auto i : order) {
      if (s.point(i)[axis] > min_v) {
        cut = s.point(i)[axis];
        break;
      }
    }
  }
  Box left = boxes[m];
  Box right = boxes[m];
  left.upper[axis] = cut;
  right.lower[axis] = cut;
  boxes[m] = std::move(left);
  boxes.push_back(std::move(right));
  return true;
}

}  // namespace

RefineResult adaptive_refine(const WeightedSampleSet& s, const Integrand& h, const Partition& initial,
                             const RefineStop& stop, CostMode mode) {
  if (!stop.max_regions && !stop.loss_threshold) {
    throw std::invalid_argument("adaptive_refine needs a region cap or a loss threshold");
  }
  if (initial.kind() == PartitionKind::voronoi) {
    throw std::invalid_argument("adaptive_refine splits boxes; start from a grid partition");
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) scale += s.norm_weight(i) * std::abs(h(s.point(i)));
  const double zero_loss = std::pow(1e-12 * std::max(scale, 1e-300), 2);

  std::vector<Box> boxes = initial.as_boxes();
  RefineResult result{Partition::boxes(boxes), {}, false};
  for (;;) {
    Partition current = Partition::boxes(boxes);
    const Assignment a = assign(current, s);
    const RegionCosts costs = mode == CostMode::deterministic ? region_costs_deterministic(s, a, h)
                                                              : region_costs_stochastic(s, a, h);
    if (mode == CostMode::stochastic && !result.loss_history.empty()) {
      const double prev = result.loss_history.back();
      if (costs.total > prev + 1e-12 * std::max(1.0, prev)) {
        throw std::logic_error("stochastic loss increased after a split");
      }
    }
    result.loss_history.push_back(costs.total);
    result.partition = current;

    if (stop.max_regions && boxes.size() >= *stop.max_regions) break;
    if (costs.total <= zero_loss) break;
    if (stop.loss_threshold && costs.total < *stop.loss_threshold) break;

    std::vector<std::size_t> order(costs.costs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return costs.costs[x] > costs.costs[y]; });
    bool split = false;
    for (auto m : order) {
      if (split_region(s, a.index_sets[m], boxes, m)) {
        split = true;
        break;
      }
    }
    if (!split) {
      result.stopped_unsplittable = true;
      break;
    }
  }
  return result;
}

std::string partition_to_json(const Partition& p) {
  nlohmann::json j;
  j["dim"] = p.dim();
  switch (p.kind()) {
    case PartitionKind::grid:
      j["kind"] = "grid";
      j["breakpoints"] = p.breakpoints();
      break;
    case PartitionKind::boxes: {
      j["kind"] = "boxes";
      auto arr = nlohmann::json::array();
      for (const auto& b : p.box_list()) {
        nlohmann::json lo = nlohmann::json::array();
        nlohmann::json hi = nlohmann::json::array();
        for (Eigen::Index k = 0; k < b.lower.size(); ++k) {
          lo.push_back(bound_to_json(b.lower[k]));
          hi.push_back(bound_to_json(b.upper[k]));
        }
        arr.push_back({{"lower", lo}, {"upper", hi}});
      }
      j["boxes"] = arr;
      break;
    }
    case PartitionKind::voronoi: {
      j["kind"] = "voronoi";
      auto arr = nlohmann::json::array();
      for (Eigen::Index m = 0; m < p.centroids().cols(); ++m) {
        arr.push_back(std::vector<double>(p.centroids().col(m).data(), p.centroids().col(m).data() + p.centroids().rows()));
      }
      j["centroids"] = arr;
      break;
    }
  }
  return j.dump();
}

Partition partition_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("partition JSON: ") + e.what());
  }
  const auto kind = j.at("kind").get<std::string>();
  const auto dim = j.at("dim").get<std::size_t>();
  if (kind == "grid") {
    auto bps = j.at("breakpoints").get<std::vector<std::vector<double>>>();
    if (bps.size() != dim) throw ConfigError("partition JSON: breakpoint lists do not match dim");
    return Partition::grid(std::move(bps));
  }
  if (kind == "boxes") {
    std::vector<Box> boxes;
    for (const auto& jb : j.at("boxes")) {
      Box b{Vector(static_cast<Eigen::Index>(dim)), Vector(static_cast<Eigen::Index>(dim))};
      for (std::size_t k = 0; k < dim; ++k) {
        b.lower[static_cast<Eigen::Index>(k)] = bound_from_json(jb.at("lower").at(k), -kInf);
        b.upper[static_cast<Eigen::Index>(k)] = bound_from_json(jb.at("upper").at(k), kInf);
      }
      boxes.push_back(std::move(b));
    }
    return Partition::boxes(std::move(boxes));
  }
  if (kind == "voronoi") {
    const auto cs = j.at("centroids").get<std::vector<std::vector<double>>>();
    Matrix c(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(cs.size()));
    for (std::size_t m = 0; m < cs.size(); ++m) {
      if (cs[m].size() != dim) throw ConfigError("partition JSON: centroid dimension mismatch");
      for (std::size_t k = 0; k < dim; ++k) c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = cs[m][k];
    }
    return Partition::voronoi(std::move(c));
  }
  throw ConfigError("partition JSON: unknown kind '" + kind + "'");
}

}  // namespace cmc
