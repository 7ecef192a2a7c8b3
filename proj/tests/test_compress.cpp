#include <doctest.h>

#include <cmath>
#include <vector>

#include "cmc/compress.hpp"
#include "cmc/error.hpp"
#include "cmc/partition.hpp"
#include "cmc/random.hpp"

using namespace cmc;

namespace {

WeightedSampleSet line(std::vector<double> xs) { return WeightedSampleSet::unweighted(points_from_scalars(xs)); }

Assignment one_region(std::size_t n) {
  Assignment a;
  a.index_sets.emplace_back();
  for (std::size_t i = 0; i < n; ++i) a.index_sets[0].push_back(i);
  return a;
}

WeightedSampleSet random_weighted(std::size_t n, std::size_t d, Rng& rng) {
  Matrix pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  std::vector<double> w(n);
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    for (Eigen::Index k = 0; k < pts.rows(); ++k) pts(k, i) = rng.normal() * 2.0;
    w[static_cast<std::size_t>(i)] = std::exp(3.0 * rng.normal());
  }
  return WeightedSampleSet::weighted(pts, w);
}

double identity(const VectorRef& x) { return x[0]; }

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("cmc_weights") {
  const auto s = WeightedSampleSet::weighted(points_from_scalars(std::vector<double>{1, 2, 3, 4}), {1, 2, 3, 4});
  Assignment a{{{0, 1}, {2, 3}}};
  const auto w = cmc_weights(s, a);
  CHECK(w[0] == doctest::Approx(0.3));
  CHECK(w[1] == doctest::Approx(0.7));

  const auto u = line({1, 2, 3, 4});
  const auto uw = cmc_weights(u, Assignment{{{0}, {1, 2, 3}}});
  CHECK(uw[0] == 0.25);
  CHECK(uw[1] == 0.75);
  CHECK(cmc_weights(u, one_region(4))[0] == 1.0);
}

TEST_CASE("within_region_weights") {
  const auto s = WeightedSampleSet::weighted(points_from_scalars(std::vector<double>{0, 1}), {0.1, 0.3});
  const auto w = within_region_weights(s, one_region(2), 0);
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.75));
  for (double v : within_region_weights(line({1, 2, 3, 4}), one_region(4), 0)) CHECK(v == 0.25);
  CHECK_THROWS_WITH(within_region_weights(line({1, 2}), Assignment{{{0, 1}, {}}}, 1), "empty region");
}

TEST_CASE("compress modes on small sets") {
  const auto c = compress(line({1, 3}), one_region(2), DeterministicRule{});
  CHECK(c.particle(0)[0] == 2.0);
  CHECK(c.weight(0) == 1.0);

  const auto h = compress(line({1, 2, 3}), one_region(3), HSpecificRule{[](const VectorRef& x) { return x[0] * x[0]; }});
  CHECK(h.particle(0)[0] == doctest::Approx(14.0 / 3.0));
  CHECK(cmc_estimate(h, identity) == doctest::Approx(14.0 / 3.0));

  const auto s = WeightedSampleSet::weighted(points_from_scalars(std::vector<double>{5, 9}), {0, 1});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(compress(s, one_region(2), StochasticRule{seed}).particle(0)[0] == 9.0);
  }
}

TEST_CASE("empty regions are dropped") {
  const auto c = compress(line({1, 2, 3}), Assignment{{{0}, {}, {1, 2}}}, DeterministicRule{});
  CHECK(c.size() == 2);
  CHECK(c.weight(0) + c.weight(1) == doctest::Approx(1.0));
}

TEST_CASE("cmc_estimate of the constant function is one") {
  Rng rng(4);
  const auto s = random_weighted(100, 2, rng);
  const Partition p = build_partition(s, PartitionStrategy::uniform_grid, 6, 0);
  const auto c = compress(s, assign(p, s), DeterministicRule{});
  CHECK(cmc_estimate(c, [](const VectorRef&) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-loss theorem for h-specific summaries") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = random_weighted(50 + static_cast<std::size_t>(rng.uniform() * 200), 2, rng);
    const Partition p = build_partition(s, PartitionStrategy::random_grid, 2 + rep % 7, rng.next());
    const Integrand h = [](const VectorRef& x) { return std::sin(x[0]) * x[1] * x[1] + std::exp(0.3 * x[0]); };
    const auto c = compress(s, assign(p, s), HSpecificRule{h});
    CHECK(close(cmc_estimate(c, identity), mc_estimate(s, h), 1e-12));
  }
}

TEST_CASE("Z recovery") {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = random_weighted(100, 3, rng);
    const Partition p = build_partition(s, PartitionStrategy::random_grid, 1 + rep % 9, rng.next());
    const auto c = compress(s, assign(p, s), DeterministicRule{});
    CHECK(reconstruct_Z(c) == doctest::Approx(marginal_likelihood(s)).epsilon(1e-12));
  }
  const auto s = random_weighted(20, 1, rng);
  CHECK(reconstruct_Z(compress(s, one_region(20), DeterministicRule{})) ==
        doctest::Approx(marginal_likelihood(s)).epsilon(1e-12));
  CHECK_THROWS_WITH(reconstruct_Z(compress(line({1, 2}), one_region(2), DeterministicRule{})), "unweighted source");
}

TEST_CASE("deterministic compression is exact for affine h") {
  Rng rng(13);
  const auto s = random_weighted(300, 2, rng);
  const auto c = compress(s, assign(build_partition(s, PartitionStrategy::voronoi, 7, 3), s), DeterministicRule{});
  const Integrand h = [](const VectorRef& x) { return 2.0 * x[0] - 0.7 * x[1] + 4.0; };
  CHECK(close(cmc_estimate(c, h), mc_estimate(s, h), 1e-12));
}

TEST_CASE("proper partition reproduces the set") {
  Rng rng(14);
  std::vector<double> xs(40), w(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = rng.normal();
    w[i] = rng.uniform() + 0.1;
  }
  const auto s = WeightedSampleSet::weighted(points_from_scalars(xs), w);
  Assignment a;
  for (std::size_t i = 0; i < 40; ++i) a.index_sets.push_back({i});
  const auto c = compress(s, a, DeterministicRule{});
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(c.particle(i)[0] == xs[i]);
    CHECK(c.weight(i) == doctest::Approx(s.norm_weight(i)).epsilon(1e-14));
  }
  const Integrand g = [](const VectorRef& x) { return std::cos(x[0]); };
  CHECK(close(cmc_estimate(c, g), mc_estimate(s, g), 1e-12));
}

TEST_CASE("stochastic summaries are conditionally unbiased") {
  Rng rng(15);
  const auto s = random_weighted(60, 1, rng);
  const Assignment a = assign(build_partition(s, PartitionStrategy::uniform_grid, 4, 0), s);
  const Integrand h = [](const VectorRef& x) { return x[0] * x[0]; };
  const double truth = mc_estimate(s, h);
  const int reps = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const double v = cmc_estimate(compress(s, a, StochasticRule{derive_seed(99, r)}), h);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - truth) < 4.0 * se);
}

TEST_CASE("kde_compress covariances") {
  const auto c = kde_compress(line({-1, 1}), one_region(2), KernelKind::full, 0.1);
  CHECK(c.particle(0)[0] == 0.0);
  CHECK(c.covariance(0)(0, 0) == doctest::Approx(1.1));

  const auto single = kde_compress(line({-1, 1}), Assignment{{{0}, {1}}}, KernelKind::full, 0.1);
  CHECK(single.covariance(0)(0, 0) == doctest::Approx(0.1));
  CHECK(single.covariance(1)(0, 0) == doctest::Approx(0.1));

  const auto diag = kde_compress(line({0, 2, 4, 6}), Assignment{{{0, 1}, {2, 3}}}, KernelKind::shared_diagonal, 0.1);
  CHECK(diag.covariance(0)(0, 0) == doctest::Approx(5.0 + 0.1));
  CHECK(diag.covariance(1)(0, 0) == doctest::Approx(5.0 + 0.1));
}

TEST_CASE("kde covariances are symmetric with eigenvalues at least delta") {
  Rng rng(16);
  const auto s = random_weighted(200, 3, rng);
  const auto c = kde_compress(s, assign(build_partition(s, PartitionStrategy::uniform_grid, 8, 0), s), KernelKind::full, 0.1);
  for (const auto& cov : c.covariances()) {
    CHECK(cov.isApprox(cov.transpose(), 0.0));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(cov).eigenvalues().minCoeff() >= 0.1 - 1e-12);
  }
}

TEST_CASE("kde_sample") {
  const auto tight = kde_compress(line({3, 3}), one_region(2), KernelKind::full, 1e-8);
  const auto draws = kde_sample(tight, 100, 1);
  for (std::size_t i = 0; i < draws.size(); ++i) CHECK(std::abs(draws.point(i)[0] - 3.0) < 1e-2);

  CompressedSet two(points_from_scalars(std::vector<double>{-50, 50}), {0.3, 0.7}, 1.0, CompressionMode::deterministic,
                    std::nullopt, {Matrix::Identity(1, 1), Matrix::Identity(1, 1)}, KernelKind::full);
  const std::size_t n = 100000;
  const auto big = kde_sample(two, n, 7);
  std::size_t left = 0;
  for (std::size_t i = 0; i < n; ++i) left += big.point(i)[0] < 0.0;
  const double band = 3.0 * std::sqrt(n * 0.3 * 0.7);
  CHECK(std::abs(static_cast<double>(left) - 0.3 * n) < band);

  CHECK(kde_sample(two, 50, 9).points() == kde_sample(two, 50, 9).points());
}

TEST_CASE("least-squares weights") {
  // Square system: M = R + 1 with distinct particles.
  Rng rng(17);
  std::vector<double> xs(500);
  for (double& x : xs) x = rng.normal();
  const auto s = line(xs);
  const Matrix particles = points_from_scalars(std::vector<double>{-1.5, -0.5, 0.5, 1.5});
  const auto r = ls_weights(particles, s, MomentFamily::powers(3));
  CHECK_FALSE(r.rank_deficient);
  CHECK(r.residual_norm < 1e-9);
  double sum = 0.0;
  for (double w : r.weights) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  // Over-determined: LS fits at least as well as the stratification weights.
  const auto c = compress(s, assign(build_partition(s, PartitionStrategy::uniform_grid, 5, 0), s), DeterministicRule{});
  const MomentFamily fam = MomentFamily::powers(7);
  const auto ls = ls_weights(c.particles(), s, fam);
  auto residual = [&](std::span<const double> a) {
    double acc = 0.0;
    double row0 = -1.0;
    for (double v : a) row0 += v;
    acc += row0 * row0;
    for (std::size_t k = 0; k < fam.size(); ++k) {
      double est = -mc_estimate(s, fam.function(k));
      for (std::size_t m = 0; m < c.size(); ++m) est += a[m] * fam.function(k)(c.particle(m));
      acc += est * est;
    }
    return std::sqrt(acc);
  };
  CHECK(residual(ls.weights) <= residual(c.weights()) + 1e-9);
}

TEST_CASE("least-squares weights reproduce an exact solution") {
  // Two regions, h_1 = x: the deterministic weights solve [1; x] exactly.
  const auto s = line({0, 1, 4, 5});
  const auto c = compress(s, Assignment{{{0, 1}, {2, 3}}}, DeterministicRule{});
  const auto ls = ls_weights(c.particles(), s, MomentFamily::powers(1));
  CHECK(ls.weights[0] == doctest::Approx(0.5));
  CHECK(ls.weights[1] == doctest::Approx(0.5));
}

TEST_CASE("bootstrap_compress") {
  const auto s = WeightedSampleSet::weighted(points_from_scalars(std::vector<double>{1, 2, 3, 4, 5}), {0, 5, 0, 0, 0});
  const auto c = bootstrap_compress(s, 4, 3);
  CHECK(c.size() == 4);
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(c.particle(m)[0] == 2.0);
    CHECK(c.weight(m) == 0.25);
  }
  CHECK(c.aggregated_weight() == doctest::Approx(5.0));
  CHECK_THROWS_AS(bootstrap_compress(s, 6, 3), std::invalid_argument);
  const auto u = bootstrap_compress(line({1, 2, 3}), 3, 1);
  for (std::size_t m = 0; m < 3; ++m) CHECK(u.weight(m) == doctest::Approx(1.0 / 3.0));
  CHECK(u.aggregated_weight() == 3.0);
}

TEST_CASE("payload scalar counts") {
  Matrix p = Matrix::Zero(2, 10);
  std::vector<double> w(10, 0.1);
  const CompressedSet plain(p, w, 1.0, CompressionMode::deterministic);
  CHECK(payload_scalars(plain, false) == 30);
  CHECK(payload_scalars(plain, true) == 31);
  const CompressedSet full(p, w, 1.0, CompressionMode::deterministic, std::nullopt,
                           std::vector<Matrix>(10, Matrix::Identity(2, 2)), KernelKind::full);
  CHECK(payload_scalars(full, false) == 60);
  const CompressedSet diag(p, w, 1.0, CompressionMode::deterministic, std::nullopt,
                           std::vector<Matrix>(10, Matrix::Identity(2, 2)), KernelKind::shared_diagonal);
  CHECK(payload_scalars(diag, false) == 50);
}

TEST_CASE("compressed set json round trip") {
  Rng rng(18);
  const auto s = random_weighted(80, 2, rng);
  const auto c = kde_compress(s, assign(build_partition(s, PartitionStrategy::uniform_grid, 4, 0), s), KernelKind::full);
  const auto back = compressed_from_json(compressed_to_json(c));
  CHECK(back.particles() == c.particles());
  CHECK(std::equal(back.weights().begin(), back.weights().end(), c.weights().begin()));
  CHECK(back.covariances().size() == c.covariances().size());
  CHECK(back.covariance(2) == c.covariance(2));
  CHECK(back.aggregated_weight() == c.aggregated_weight());
  CHECK(back.mode() == c.mode());
}
