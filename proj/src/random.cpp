#include "cmc/random.hpp"

#include <algorithm>
#include <stdexcept>

namespace cmc {

std::vector<double> cumulative_sum(std::span<const double> weights) {
  std::vector<double> cum(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cum[i] = acc;
  }
  return cum;
}

std::size_t inverse_cdf_pick(std::span<const double> cumulative, double u) {
  if (cumulative.empty() || !(cumulative.back() > 0.0)) {
    throw std::invalid_argument("inverse_cdf_pick: no positive mass");
  }
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) --it;  // u * total rounding onto the last entry
  return static_cast<std::size_t>(it - cumulative.begin());
}

std::vector<std::size_t> multinomial_resample(std::span<const double> weights, std::size_t n, Rng& rng) {
  const auto cum = cumulative_sum(weights);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = inverse_cdf_pick(cum, rng.uniform());
  return idx;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, std::size_t n, Rng& rng) {
  const auto cum = cumulative_sum(weights);
  std::vector<std::size_t> idx(n);
  const double offset = rng.uniform();
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = inverse_cdf_pick(cum, (static_cast<double>(k) + offset) / static_cast<double>(n));
  }
  return idx;
}

}  // namespace cmc
