#include "cmc/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

RadialVelocityModel::RadialVelocityModel(std::size_t planets, std::vector<double> times,
                                         std::vector<double> observations, double noise_sd)
    : planets_(planets), times_(std::move(times)), observations_(std::move(observations)), noise_sd_(noise_sd) {
  if (times_.empty() || times_.size() != observations_.size()) {
    throw std::invalid_argument("one observation per time instant required");
  }
  if (!(noise_sd_ > 0.0)) throw std::invalid_argument("noise scale must be positive");
}

std::vector<RadialVelocityModel::Bounds> RadialVelocityModel::prior_bounds() const {
  std::vector<Bounds> b{{-20.0, 20.0}};
  for (std::size_t i = 0; i < planets_; ++i) {
    b.push_back({0.0, 20.0});
    b.push_back({0.0, 365.0});
    b.push_back({0.0, 1.0});
    b.push_back({-std::numbers::pi, std::numbers::pi});
  }
  return b;
}

double RadialVelocityModel::log_prior(const VectorRef& x) const {
  const auto bounds = prior_bounds();
  if (static_cast<std::size_t>(x.size()) != bounds.size()) throw std::invalid_argument("parameter dimension mismatch");
  double lp = 0.0;
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    const double v = x[static_cast<Eigen::Index>(k)];
    if (!(v >= bounds[k].lo && v <= bounds[k].hi)) return kNegInf;
    lp -= std::log(bounds[k].hi - bounds[k].lo);
  }
  // Periods are strictly positive.
  for (std::size_t i = 0; i < planets_; ++i) {
    if (!(x[static_cast<Eigen::Index>(2 + 4 * i)] > 0.0)) return kNegInf;
  }
  return lp;
}

std::vector<double> RadialVelocityModel::velocity(const VectorRef& x, std::size_t planets,
                                                  const std::vector<double>& times) {
  std::vector<double> v(times.size(), x[0]);
  for (std::size_t i = 0; i < planets; ++i) {
    const auto base = static_cast<Eigen::Index>(1 + 4 * i);
    const double k = x[base];
    const double period = x[base + 1];
    const double e = x[base + 2];
    const double w = x[base + 3];
    for (std::size_t j = 0; j < times.size(); ++j) {
      v[j] += k * (std::cos(2.0 * std::numbers::pi / period * times[j] + w) + e * std::cos(w));
    }
  }
  return v;
}

double RadialVelocityModel::log_likelihood(const VectorRef& x) const {
  const auto v = velocity(x, planets_, times_);
  double ss = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double r = (observations_[j] - v[j]) / noise_sd_;
    ss += r * r;
  }
  const auto n = static_cast<double>(v.size());
  return -0.5 * ss - n * std::log(noise_sd_) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double RadialVelocityModel::log_target(const VectorRef& x) const {
  const double lp = log_prior(x);
  if (!std::isfinite(lp)) return kNegInf;
  return lp + log_likelihood(x);
}

Vector RadialVelocityModel::sample_prior(Rng& rng) const {
  const auto bounds = prior_bounds();
  Vector x(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    x[static_cast<Eigen::Index>(k)] = bounds[k].lo + (bounds[k].hi - bounds[k].lo) * rng.uniform_open();
  }
  return x;
}

std::vector<double> RadialVelocityModel::simulate(const VectorRef& x, std::size_t planets,
                                                  const std::vector<double>& times, double noise_sd, Rng& rng) {
  auto y = velocity(x, planets, times);
  for (double& v : y) v += noise_sd * rng.normal();
  return y;
}

SensorNetworkTarget::SensorNetworkTarget(Matrix sensors, std::vector<double> noise_sd, Vector observations,
                                         double box_half_width)
    : sensors_(std::move(sensors)),
      noise_sd_(std::move(noise_sd)),
      observations_(std::move(observations)),
      half_width_(box_half_width) {
  if (sensors_.rows() != 2 || sensors_.cols() < 1) throw std::invalid_argument("sensors must be 2-D points");
  if (noise_sd_.size() != static_cast<std::size_t>(sensors_.cols()) || observations_.size() != sensors_.cols()) {
    throw std::invalid_argument("one noise scale and one observation per sensor required");
  }
  if (!(half_width_ > 0.0)) throw std::invalid_argument("prior box must have positive width");
}

SensorNetworkTarget SensorNetworkTarget::standard(const Vector& truth, std::uint64_t seed) {
  Matrix sensors(2, 3);
  sensors << 3.0, 10.0, 0.0, -8.0, 0.0, 10.0;
  std::vector<double> sd(3, 6.0);
  Rng rng(seed);
  Vector y(3);
  for (Eigen::Index j = 0; j < 3; ++j) y[j] = 20.0 * std::log((truth - sensors.col(j)).norm()) + sd[0] * rng.normal();
  return SensorNetworkTarget(std::move(sensors), std::move(sd), std::move(y), 30.0);
}

double SensorNetworkTarget::log_target(const VectorRef& x) const {
  if (std::abs(x[0]) > half_width_ || std::abs(x[1]) > half_width_) return kNegInf;
  double lp = 0.0;
  for (Eigen::Index j = 0; j < sensors_.cols(); ++j) {
    const double dist = (x - sensors_.col(j)).norm();
    if (!(dist > 0.0)) return kNegInf;
    const double r = observations_[j] - 20.0 * std::log(dist);
    const double s = noise_sd_[static_cast<std::size_t>(j)];
    lp -= 0.5 * r * r / (s * s);
  }
  return lp;
}

}  // namespace cmc
