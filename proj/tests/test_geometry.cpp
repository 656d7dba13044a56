#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "relu_lab/arrangements.hpp"
#include "relu_lab/dataset.hpp"
#include "relu_lab/geometry.hpp"

using namespace relu_lab;

TEST_CASE("extreme point with slack cone constraints") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  const ExtremePointResult r =
      extreme_point(X, ActivationMask::from_string("11"), Eigen::Vector2d(1, 1), Sense::max);
  CHECK(r.value == doctest::Approx(std::sqrt(2.0)).epsilon(1e-7));
  CHECK(r.u.isApprox(Eigen::Vector2d(1, 1) / std::sqrt(2.0), 1e-6));
}

TEST_CASE("extreme point of the zero objective") {
  const Eigen::MatrixXd X = builtin_dataset("notebook")->X;
  const ExtremePointResult r =
      extreme_point(X, ActivationMask::from_string("110"), Eigen::Vector3d::Zero(), Sense::max);
  CHECK(r.value == 0.0);
  CHECK(r.u.norm() <= 1.0);
}

TEST_CASE("extreme points match the angular oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::MatrixXd X = oracle::gaussian(rng, 4, 2);
    const Eigen::VectorXd lam = oracle::gaussian(rng, 4, 1).col(0);
    for (const auto& m : enumerate_masks(X).masks) {
      for (Sense s : {Sense::max, Sense::min}) {
        const double sign = s == Sense::max ? 1.0 : -1.0;
        const ExtremePointResult r = extreme_point(X, m, lam, s);
        const double expect = oracle::masked_extreme_by_angles(X, m.str(), lam, sign);
        CHECK(sign * r.value == doctest::Approx(expect).epsilon(1e-6).scale(1.0));
        CHECK(r.u.norm() <= 1.0 + 1e-7);
        const Eigen::VectorXd h = (2.0 * m.diag().array() - 1.0).matrix().cwiseProduct(X * r.u);
        CHECK(h.minCoeff() >= -1e-7);
      }
    }
  }
}

TEST_CASE("masked polar gauge matches the angular oracle") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::MatrixXd X = oracle::gaussian(rng, 5, 2);
    const Eigen::VectorXd lam = oracle::gaussian(rng, 5, 1).col(0);
    const auto masks = enumerate_masks(X).masks;
    const PolarGaugeReport g = polar_gauge(X, masks, lam);
    CHECK(g.gauge == doctest::Approx(oracle::gauge_by_angles(X, lam)).epsilon(1e-6));
    CHECK(g.per_mask.size() == masks.size());
    REQUIRE(g.argmax_mask >= 0);
    CHECK(g.per_mask[static_cast<std::size_t>(g.argmax_mask)].magnitude() == doctest::Approx(g.gauge));
  }
}

TEST_CASE("notebook lambda gauges") {
  const Dataset ds = *builtin_dataset("notebook");
  const auto masks = enumerate_masks(ds.X).masks;
  const Eigen::Vector3d lam(0.84944458, -0.3827491, -0.0513976);
  const double linear = polar_gauge(ds.X, masks, lam, GaugeObjective::linear).gauge;
  CHECK(linear == doctest::Approx(1.0).epsilon(1e-4));
  const double masked = polar_gauge(ds.X, masks, lam, GaugeObjective::masked).gauge;
  CHECK(masked == doctest::Approx(oracle::gauge_by_angles(ds.X, lam)).epsilon(1e-6));
  CHECK(masked <= linear + 1e-9);
}

TEST_CASE("gauge is positively homogeneous") {
  const Dataset ds = *builtin_dataset("notebook");
  const auto masks = enumerate_masks(ds.X).masks;
  const Eigen::Vector3d lam(0.3, -0.7, 0.2);
  const double g1 = polar_gauge(ds.X, masks, lam).gauge;
  CHECK(polar_gauge(ds.X, masks, 2.0 * lam).gauge == doctest::Approx(2.0 * g1).epsilon(1e-7));
  CHECK(polar_gauge(ds.X, masks, Eigen::Vector3d::Zero()).gauge == 0.0);
}

TEST_CASE("stationary direction at a fixed point") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd lam = ds.binary_labels() / 4.0;
  const StationaryResult r = stationary_direction(ds.X, lam, Eigen::Vector2d(1, 0));
  CHECK(r.iterations == 1);
  CHECK(r.residual == doctest::Approx(0.0));
  CHECK(r.u.isApprox(Eigen::Vector2d(1, 0)));
}

TEST_CASE("stationary direction on the orthogonal separable appendix data") {
  const Dataset ds = *builtin_dataset("appendix-ortho");
  const Eigen::VectorXd y = ds.binary_labels();
  const Eigen::VectorXd lam = y / y.norm();
  const Eigen::VectorXd u0 = ds.X.row(0).transpose() / ds.X.row(0).norm();
  const StationaryResult r = stationary_direction(ds.X, lam, u0);
  CHECK(r.residual <= 1e-10);
  const Eigen::VectorXd ref = ds.X.transpose() * r.mask.diag().cwiseProduct(lam);
  CHECK(r.u.dot(ref) / ref.norm() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("stationary direction reaches the dense-sweep maximizer") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd lam = ds.binary_labels() / 4.0;
  const StationaryResult r = stationary_direction(ds.X, lam, Eigen::Vector2d(1, -1) / std::sqrt(2.0));
  double best = -1.0;
  Eigen::Vector2d arg;
  for (int i = 0; i < 100000; ++i) {
    const double t = 2 * std::numbers::pi * i / 100000;
    const Eigen::Vector2d u(std::cos(t), std::sin(t));
    const double v = lam.dot((ds.X * u).cwiseMax(0.0));
    if (v > best) {
      best = v;
      arg = u;
    }
  }
  CHECK(r.u.isApprox(Eigen::Vector2d(1, 0), 1e-9));
  CHECK((r.u - arg).norm() <= 1e-4);
}

TEST_CASE("stationary limits on random data have small residual") {
  std::mt19937_64 rng(41);
  int converged = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd X = oracle::gaussian(rng, 4, 2);
    const Eigen::VectorXd lam = oracle::gaussian(rng, 4, 1).col(0);
    const Eigen::VectorXd u0 = oracle::gaussian(rng, 2, 1).col(0).normalized();
    try {
      const StationaryResult r = stationary_direction(X, lam, u0);
      CHECK(r.residual <= 1e-8);
      CHECK(stationary_residual(X, lam, r.u) <= 1e-8);
      ++converged;
    } catch (const GeometryError&) {
      // zero start update or a mask cycle
    }
  }
  CHECK(converged >= 10);
}

TEST_CASE("stationary residual of a vanishing reference") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  CHECK(std::isinf(stationary_residual(X, Eigen::Vector2d(1, 1), Eigen::Vector2d(-1, -1))));
  CHECK_THROWS_AS(stationary_direction(X, Eigen::Vector2d(1, 1), Eigen::Vector2d(-1, -1)), GeometryError);
}

TEST_CASE("rectified ellipsoid samples") {
  const EllipsoidTrace t = rectified_ellipsoid_samples(Eigen::MatrixXd::Identity(2, 2), 4);
  Eigen::MatrixXd expect(4, 2);
  expect << 1, 0, 0, 1, 0, 0, 0, 0;
  CHECK((t.points - expect).cwiseAbs().maxCoeff() <= 1e-15);
  const EllipsoidTrace a = rectified_ellipsoid_samples(builtin_dataset("appendix-ortho")->X, 1024);
  CHECK(a.points.rows() == 1024);
  CHECK(a.points.minCoeff() >= 0.0);
  CHECK_THROWS_AS(rectified_ellipsoid_samples(Eigen::MatrixXd::Identity(3, 3), 8), GeometryError);
  CHECK_THROWS_AS(rectified_ellipsoid_samples(Eigen::MatrixXd::Identity(2, 2), 2), GeometryError);
}
