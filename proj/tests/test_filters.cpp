#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "cmc/filters.hpp"

using namespace cmc;

namespace {

LinearGaussianModel random_walk(double a, double q, double r) {
  GaussianPrior prior{Vector::Zero(1), Matrix::Identity(1, 1)};
  return LinearGaussianModel(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, q), Matrix::Identity(1, 1),
                             Matrix::Constant(1, 1, r), prior, Vector::Constant(1, 0.5));
}

}  // namespace

TEST_CASE("scalar model without noise stays at one") {
  ScalarAbsLogModel::Params p;
  p.transition_sd = 0.0;
  p.observation_sd = 0.0;
  p.x0 = 1.0;
  const Trajectory tr = simulate(ScalarAbsLogModel(p), 20, 3);
  for (Eigen::Index t = 0; t < 20; ++t) {
    CHECK(tr.states(0, t) == 1.0);
    CHECK(tr.observations(0, t) == 0.0);
  }
}

TEST_CASE("bearings-only transition matrix") {
  Vector x(4);
  x << 0, 0, 1, 1;
  CHECK((BearingsOnlyModel::phi() * x - Vector::Ones(4)).norm() == 0.0);
  const Matrix g = BearingsOnlyModel::gamma();
  CHECK(g(0, 0) == 0.5);
  CHECK(g(2, 0) == 1.0);
}

TEST_CASE("bearing likelihood wraps the residual") {
  const BearingsOnlyModel model;
  Vector x(4);
  x << -1e-9, -1.0, 0, 0;  // bearing just below pi
  Vector y(1);
  y << -std::numbers::pi + 1e-4;
  Vector near(1);
  near << std::atan2(x[0], x[1]);
  CHECK(std::abs(model.log_likelihood(x, y) - model.log_likelihood(x, near)) < 1.0);
}

TEST_CASE("coordinated-turn transition tends to constant velocity") {
  Matrix cv = Matrix::Identity(5, 5);
  cv(0, 2) = 1.0;
  cv(1, 3) = 1.0;
  CHECK((CoordinatedTurnModel::transition(0.0) - cv).norm() == 0.0);
  CHECK((CoordinatedTurnModel::transition(1e-9) - cv).norm() < 1e-8);
  // The series branch and the closed form agree across the switch point.
  CHECK((CoordinatedTurnModel::transition(0.999e-6) - CoordinatedTurnModel::transition(1.001e-6)).norm() < 1e-8);
  const Matrix f = CoordinatedTurnModel::transition(0.139);
  CHECK(f(0, 2) == doctest::Approx(std::sin(0.139) / 0.139));
  CHECK(f(1, 2) == doctest::Approx((std::cos(0.139) - 1.0) / 0.139));
  CHECK(f(4, 4) == 1.0);
}

TEST_CASE("sensor readings") {
  Vector x(5);
  x << 3.0, 4.0, 1.0, 0.0, 0.1;
  const Vector origin = Vector::Zero(2);
  CHECK(sensor_reading({SensorKind::range, origin, 0.1}, x) == doctest::Approx(5.0));
  CHECK(sensor_reading({SensorKind::bearing, origin, 0.1}, x) == doctest::Approx(std::atan2(3.0, 4.0)));
  CHECK(sensor_reading({SensorKind::signal_strength, origin, 0.1}, x) == doctest::Approx(1.0 / (25.0 + 1e-4)));
  CHECK(sensor_reading({SensorKind::radial_velocity, origin, 0.1}, x) == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("random sensors come in four equal blocks") {
  Rng rng(1);
  const auto s = CoordinatedTurnModel::random_sensors(8, rng);
  REQUIRE(s.size() == 8);
  CHECK(s[0].kind == SensorKind::bearing);
  CHECK(s[2].kind == SensorKind::signal_strength);
  CHECK(s[4].kind == SensorKind::range);
  CHECK(s[7].kind == SensorKind::radial_velocity);
  for (const auto& sensor : s) CHECK(sensor.position.cwiseAbs().maxCoeff() <= 3.0);
}

TEST_CASE("bootstrap filter on a noiseless identity model tracks the truth") {
  GaussianPrior prior{Vector::Constant(1, 0.5), Matrix::Zero(1, 1)};
  const LinearGaussianModel model(Matrix::Identity(1, 1), Matrix::Zero(1, 1), Matrix::Identity(1, 1),
                                  Matrix::Identity(1, 1), prior, Vector::Constant(1, 0.5));
  const Trajectory tr = simulate(model, 10, 2);
  const FilterResult r = bpf(model, tr.observations, 50, 3);
  CHECK(mse(r, tr.states) < 1e-28);
  CHECK(r.total_evaluations() == 500);
}

TEST_CASE("particle filters agree with the Kalman filter") {
  const LinearGaussianModel model = random_walk(0.9, 0.5, 1.0);
  const Trajectory tr = simulate(model, 25, 7);
  const KalmanResult k = kalman_filter(model, tr.observations);
  FilterOptions tight;
  tight.delta = 1e-9;
  const FilterResult b = bpf(model, tr.observations, 20000, 8);
  const FilterResult g = gpf(model, tr.observations, 20000, 8, tight);
  for (Eigen::Index t = 0; t < 25; ++t) {
    const double sd = std::sqrt(k.covariances[static_cast<std::size_t>(t)](0, 0));
    CHECK(std::abs(b.estimates(0, t) - k.means(0, t)) < 0.05 * sd);
    CHECK(std::abs(g.estimates(0, t) - k.means(0, t)) < 0.05 * sd);
  }
}

TEST_CASE("I-GPF with one region is the GPF") {
  const BearingsOnlyModel model;
  const Trajectory tr = simulate(model, 15, 4);
  const FilterResult a = igpf(model, tr.observations, 300, 1, 5);
  const FilterResult b = gpf(model, tr.observations, 300, 5);
  CHECK(a.estimates == b.estimates);
}

TEST_CASE("evaluation counters") {
  const ScalarAbsLogModel model;
  const Trajectory tr = simulate(model, 30, 1);
  CHECK(bpf(model, tr.observations, 200, 2).total_evaluations() == 200 * 30);
  CHECK(igpf(model, tr.observations, 200, 10, 2).total_evaluations() == 200 * 30);
  FilterOptions quantile;
  quantile.partition = PartitionStrategy::equal_count;
  const FilterResult c = cpf(model, tr.observations, 200, 40, 2, quantile);
  for (auto e : c.evaluations) CHECK(e == 40);
  // P2 leaves empty tail cells, so it never evaluates more than M times.
  for (auto e : cpf(model, tr.observations, 200, 40, 2).evaluations) CHECK(e <= 40);
}

TEST_CASE("C-PF with one particle per region evaluates every particle") {
  const ScalarAbsLogModel model;
  const Trajectory tr = simulate(model, 10, 1);
  FilterOptions quantile;
  quantile.partition = PartitionStrategy::equal_count;
  const FilterResult c = cpf(model, tr.observations, 100, 100, 3, quantile);
  CHECK(c.total_evaluations() == 1000);
  CHECK(std::isfinite(mse(c, tr.states)));
}

TEST_CASE("scalar model regression at a fixed seed") {
  const ScalarAbsLogModel model;
  const Trajectory tr = simulate(model, 100, 2024);
  const double a = mse(bpf(model, tr.observations, 1000, 99), tr.states);
  const double b = mse(bpf(model, tr.observations, 1000, 99), tr.states);
  CHECK(a == b);
  CHECK(std::isfinite(a));
}

TEST_CASE("mse") {
  FilterResult r;
  r.estimates = Matrix::Constant(2, 3, 1.0);
  CHECK(mse(r, Matrix::Constant(2, 3, 1.0)) == 0.0);
  CHECK(mse(r, Matrix::Constant(2, 3, 1.5)) == doctest::Approx(0.25));
}

TEST_CASE("processor grid and sensor assignment") {
  const Matrix p4 = processor_grid(4);
  CHECK(p4.cols() == 4);
  CHECK(p4(0, 0) == -1.5);
  CHECK(p4(1, 3) == 1.5);
  const Matrix p8 = processor_grid(8);
  CHECK(p8(0, 3) == 2.25);
  CHECK(p8(1, 4) == 1.5);
  std::vector<Sensor> sensors{{SensorKind::range, (Vector(2) << -2.0, -2.0).finished(), 1.0},
                              {SensorKind::range, (Vector(2) << 2.0, 2.0).finished(), 1.0}};
  const auto a = assign_sensors(sensors, p4);
  CHECK(a[0] == std::vector<std::size_t>{0});
  CHECK(a[3] == std::vector<std::size_t>{1});
}

TEST_CASE("distributed filter runs both fusion rules deterministically") {
  Rng rng(3);
  const CoordinatedTurnModel model(CoordinatedTurnModel::random_sensors(8, rng));
  const Trajectory tr = simulate(model, 4, 5);
  DpfOptions o;
  o.particles_per_node = 60;
  for (auto method : {DpfMethod::single_gaussian, DpfMethod::cmc}) {
    o.method = method;
    const FilterResult a = dpf(model, tr.observations, o, 11);
    const FilterResult b = dpf(model, tr.observations, o, 11);
    CHECK(a.estimates == b.estimates);
    CHECK(a.estimates.allFinite());
    // The turn rate is known and never moves.
    for (Eigen::Index t = 0; t < 4; ++t) CHECK(a.estimates(4, t) == doctest::Approx(0.139));
  }
}
