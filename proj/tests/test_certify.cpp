#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "relu_lab/arrangements.hpp"
#include "relu_lab/certify.hpp"
#include "relu_lab/convex.hpp"
#include "relu_lab/dataset.hpp"
#include "relu_lab/flow.hpp"

using namespace relu_lab;

namespace {

struct Solved {
  Dataset ds;
  std::vector<ActivationMask> masks;
  ConvexProblem prob;
  PrimalSolve primal;

  explicit Solved(const std::string& name)
      : ds(*builtin_dataset(name)),
        masks(enumerate_masks(ds.X).masks),
        prob(build_primal(ds.X, ds.binary_labels(), masks)),
        primal(solve_primal(prob)) {}
};

// max over unit u of |X^{-1} (Xu)_+| for an invertible 2x2 X.
double spike_oracle(const Eigen::Matrix2d& X) {
  const double det = X(0, 0) * X(1, 1) - X(0, 1) * X(1, 0);
  Eigen::Matrix2d inv;
  inv << X(1, 1), -X(0, 1), -X(1, 0), X(0, 0);
  inv /= det;
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double t = 2 * std::numbers::pi * i / 100000;
    worst = std::max(worst, (inv * (X * Eigen::Vector2d(std::cos(t), std::sin(t))).cwiseMax(0.0)).norm());
  }
  return worst;
}

Eigen::MatrixXd ortho_separable(std::mt19937_64& rng, const Eigen::VectorXd& y, int d) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0), radius(0.5, 2.0);
  Eigen::MatrixXd X(y.size(), d);
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    Eigen::VectorXd noise(d - 1);
    for (int k = 0; k < d - 1; ++k) noise(k) = unif(rng);
    noise *= 0.9 / std::max(1.0, noise.norm());
    X(n, 0) = y(n);
    X.row(n).tail(d - 1) = noise.transpose();
    X.row(n) *= radius(rng);
  }
  return X;
}

}  // namespace

TEST_CASE("KKT extraction at the notebook optimum") {
  const Solved s("notebook");
  const NetworkParams net = network_from_convex(s.prob, s.primal.solution);
  const KKTExtraction ext = extract_kkt(s.ds.X, s.ds.binary_labels(), net, s.primal.dual.lambda);
  CHECK(ext.max_direction_residual() <= 1e-6);
  CHECK(ext.max_norm_residual() <= 1e-6);
  CHECK(ext.complementary_slackness.maxCoeff() <= 1e-6);
}

TEST_CASE("off-boundary neurons keep their strict mask") {
  const Dataset ds = *builtin_dataset("notebook");
  NetworkParams net{Eigen::MatrixXd(2, 1), Eigen::VectorXd(1)};
  net.W1 << 1, -1;
  net.w2 << 1;
  const KKTExtraction ext = extract_kkt(ds.X, ds.binary_labels(), net, Eigen::Vector3d(1, 0, 0));
  REQUIRE(ext.neurons.size() == 1);
  CHECK(ext.neurons[0].boundary.empty());
  CHECK(ext.neurons[0].completed_mask == ext.neurons[0].strict_mask);
  CHECK(ext.neurons[0].strict_mask.str() == "100");
}

TEST_CASE("boundary completion picks the best subset") {
  const Dataset ds = *builtin_dataset("notebook");
  NetworkParams net{Eigen::MatrixXd(2, 1), Eigen::VectorXd(1)};
  net.W1 << 1, 0;  // x2 and x3 satisfy x'u <= 0; x2 sits on the boundary
  net.w2 << 1;
  const KKTExtraction ext = extract_kkt(ds.X, ds.binary_labels(), net, Eigen::Vector3d(1, -1, 0));
  REQUIRE(ext.neurons[0].boundary.size() == 1);
  CHECK(ext.neurons[0].completed_mask.str() == "100");
  CHECK(ext.neurons[0].direction_residual == doctest::Approx(0.0));
}

TEST_CASE("non-stationary networks report positive residuals") {
  std::mt19937_64 rng(47);
  const Dataset ds = *builtin_dataset("notebook");
  const NetworkParams net{oracle::gaussian(rng, 2, 3), oracle::gaussian(rng, 3, 1).col(0)};
  const KKTExtraction ext = extract_kkt(ds.X, ds.binary_labels(), net, Eigen::Vector3d(0.3, -0.2, -0.1));
  CHECK(ext.max_direction_residual() > 1e-3);
}

TEST_CASE("dual feasibility certificates") {
  const Dataset ds = *builtin_dataset("notebook");
  const auto masks = enumerate_masks(ds.X).masks;
  const Certificate zero = dual_feasible(ds.X, masks, Eigen::Vector3d::Zero());
  CHECK(zero.verdict);
  CHECK(zero.value == 0.0);
  const Eigen::Vector3d lam(0.84944458, -0.3827491, -0.0513976);
  const Certificate lin = dual_feasible(ds.X, masks, lam, 1e-4, GaugeObjective::linear);
  CHECK(lin.verdict);
  const Certificate big = dual_feasible(ds.X, masks, 10.0 * lam, 1e-4, GaugeObjective::linear);
  CHECK_FALSE(big.verdict);
  CHECK(big.value == doctest::Approx(10.0 * lin.value).epsilon(1e-7));
  CHECK(big.slacks.size() == masks.size());

  Eigen::MatrixXd L(3, 2);
  L.col(0) = lam;
  L.col(1) = 10.0 * lam;
  const auto per_class = dual_feasible_classes(ds.X, masks, L);
  REQUIRE(per_class.size() == 2);
  CHECK(per_class[0].verdict);
  CHECK_FALSE(per_class[1].verdict);
}

TEST_CASE("orthogonal coverage") {
  const Dataset ds = *builtin_dataset("appendix-ortho");
  const Eigen::VectorXd y = ds.binary_labels();
  FlowConfig cfg;
  cfg.m = 10;
  cfg.step = 0.1;
  cfg.iters = 20000;
  const FlowTrace tr = run_flow(ds, cfg);
  const NetworkParams& net = tr.final_record().params;
  const auto masks = enumerate_masks(ds.X).masks;
  const DualRecovery dr = recover_dual(ds.X, y, net, network_masks(ds.X, net), masks);
  CHECK(ortho_coverage(extract_kkt(ds.X, y, net, dr.lambda), y).verdict);

  // only positive-output neurons on mixed labels
  NetworkParams pos{Eigen::MatrixXd(2, 1), Eigen::VectorXd(1)};
  pos.W1 << 1, 0;
  pos.w2 << 1;
  const Certificate c = ortho_coverage(extract_kkt(ds.X, y, pos, dr.lambda), y);
  CHECK_FALSE(c.verdict);
  CHECK(c.slacks[1] == 1.0);

  Eigen::MatrixXd X1(1, 2);
  X1 << 1, 0;
  const Eigen::VectorXd y1 = Eigen::VectorXd::Ones(1);
  const Certificate single = ortho_coverage(extract_kkt(X1, y1, pos, Eigen::VectorXd::Ones(1)), y1);
  CHECK(single.verdict);
}

TEST_CASE("spike-free checks") {
  CHECK(spike_free(Eigen::MatrixXd::Identity(2, 2)).verdict);
  const Eigen::Matrix2d A = builtin_dataset("appendix-ortho")->X;
  const Certificate ca = spike_free(A);
  CHECK_FALSE(ca.verdict);
  CHECK(ca.value == doctest::Approx(spike_oracle(A)).epsilon(1e-5));
  const Eigen::Matrix2d B = builtin_dataset("appendix-nonspikefree")->X;
  const Certificate cb = spike_free(B);
  CHECK(cb.value == doctest::Approx(spike_oracle(B)).epsilon(1e-5));
  CHECK(cb.verdict == (spike_oracle(B) <= 1.0 + 1e-9));
  CHECK(spike_free(Eigen::MatrixXd::Identity(3, 3), 2000).verdict);
}

TEST_CASE("spike-free value on random planar data") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Matrix2d X = oracle::gaussian(rng, 2, 2);
    CHECK(spike_free(X, 8192).value == doctest::Approx(spike_oracle(X)).epsilon(1e-5));
  }
}

TEST_CASE("local extremum classification") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd y = ds.binary_labels();
  const LocalExtremumResult r = local_extremum(ds.X, y, Eigen::Vector2d(1, 0));
  CHECK(r.kind == ExtremumKind::local_max);
  CHECK(r.covers_positive);
  CHECK(local_extremum(ds.X, -y, Eigen::Vector2d(1, 0)).kind == ExtremumKind::local_min);
  // u = [1,1]/sqrt2 is orthogonal to g = [1,-1]
  CHECK(local_extremum(ds.X, y, Eigen::Vector2d(1, 1).normalized()).kind == ExtremumKind::neither);
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 0, 1, 0;
  CHECK_THROWS_AS(local_extremum(bad, Eigen::Vector2d(1, -1), Eigen::Vector2d(1, 0)), CertifyError);
}

TEST_CASE("convex KKT residuals at the joint optimum") {
  const Solved s("notebook");
  const ConvexKKTReport rep = convex_kkt_residuals(s.prob, s.primal.solution, s.primal.dual);
  CHECK(rep.max_family() <= 1e-5);
  CHECK(convex_kkt_certificate(rep, 1e-4).verdict);
}

TEST_CASE("convex KKT residuals at the origin") {
  const Solved s("notebook");
  const ConvexSolution zero = make_solution(s.prob, Eigen::VectorXd::Zero(s.prob.program.num_vars()));
  DualVariable dv;
  dv.lambda = Eigen::Vector3d::Zero();
  for (int j = 0; j < s.prob.p(); ++j) {
    dv.z.push_back(Eigen::VectorXd::Zero(3));
    dv.z_prime.push_back(Eigen::VectorXd::Zero(3));
  }
  const ConvexKKTReport rep = convex_kkt_residuals(s.prob, zero, dv);
  CHECK(rep.stationarity_u == 0.0);
  CHECK(rep.stationarity_u_prime == 0.0);
  CHECK(rep.primal_infeasibility == doctest::Approx(1.0));
  CHECK_FALSE(convex_kkt_certificate(rep, 1e-4).verdict);
}

TEST_CASE("a scaled primal breaks margin slackness") {
  const Solved s("notebook");
  const ConvexSolution doubled = make_solution(s.prob, 2.0 * s.primal.solution.flat());
  const ConvexKKTReport rep = convex_kkt_residuals(s.prob, doubled, s.primal.dual);
  CHECK(rep.margin_slackness > 0.5);
  CHECK(rep.primal_infeasibility == 0.0);
}

TEST_CASE("lifting a nonconvex KKT point") {
  const Solved s("appendix-ortho");
  const NetworkParams net = network_from_convex(s.prob, s.primal.solution);
  const Eigen::VectorXd lam = s.primal.dual.lambda;
  const KKTExtraction ext = extract_kkt(s.ds.X, s.ds.binary_labels(), net, lam);
  const LiftedKKT lifted = lift_kkt_point(s.prob, net, ext, lam);
  CHECK(lifted.solution.objective == doctest::Approx(s.primal.solution.objective).epsilon(1e-6));
  CHECK(convex_kkt_residuals(s.prob, lifted.solution, lifted.dual).max_family() <= 1e-5);
}

TEST_CASE("coverage implies dual feasibility on orthogonal separable data") {
  std::mt19937_64 rng(59);
  int covered = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int N = 3 + trial % 3, d = 2 + trial % 2;
    Eigen::VectorXd y = oracle::random_labels(rng, N);
    y(0) = 1.0;
    y(1) = -1.0;
    const Eigen::MatrixXd X = ortho_separable(rng, y, d);
    REQUIRE(is_orthogonal_separable(X, y).separable);
    const Dataset ds = make_dataset("r", X, (y.array() > 0).select(Eigen::VectorXi::Ones(N), -Eigen::VectorXi::Ones(N)));
    FlowConfig cfg;
    cfg.m = 10;
    cfg.step = 0.2;
    cfg.iters = 5000;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const NetworkParams net = run_flow(ds, cfg).final_record().params;
    const auto masks = enumerate_masks(X).masks;
    const DualRecovery dr = recover_dual(X, y, net, network_masks(X, net), masks);
    if (ortho_coverage(extract_kkt(X, y, net, dr.lambda), y).verdict) {
      ++covered;
      CHECK(dual_feasible(X, masks, dr.lambda, 1e-4).verdict);
    }
  }
  CHECK(covered >= 5);
}
