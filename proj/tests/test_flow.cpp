#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "relu_lab/arrangements.hpp"
#include "relu_lab/dataset.hpp"
#include "relu_lab/flow.hpp"

using namespace relu_lab;

namespace {

// Outputs y .* f = [3.549, 4.362, 6.381] on the notebook data.
NetworkParams notebook_iter10_like() {
  NetworkParams net{Eigen::MatrixXd(2, 3), Eigen::VectorXd(3)};
  net.W1 << 3.549, 0, -2.019, 0, 4.362, 0;
  net.w2 << 1, -1, -1;
  return net;
}

FlowConfig notebook_config() {
  FlowConfig cfg;
  cfg.m = 8;
  cfg.step = 1.0;
  cfg.iters = 10000;
  cfg.checkpoints = {10, 100, 1000, 10000};
  return cfg;
}

}  // namespace

TEST_CASE("balanced initialization") {
  FlowConfig cfg;
  cfg.m = 10;
  cfg.seed = 4;
  const NetworkParams a = init_balanced(cfg, 3);
  for (int i = 0; i < cfg.m; ++i) {
    CHECK(std::abs(a.W1.col(i).norm() - std::abs(a.w2(i))) <= 1e-18);
    CHECK(std::abs(a.w2(i)) == doctest::Approx(cfg.init_scale));
  }
  const NetworkParams b = init_balanced(cfg, 3);
  CHECK(a.W1 == b.W1);
  CHECK(a.w2 == b.w2);
  cfg.seed = 5;
  CHECK(init_balanced(cfg, 3).W1 != a.W1);
}

TEST_CASE("initial loss is N log 2") {
  const Dataset ds = *builtin_dataset("notebook");
  FlowConfig cfg;
  cfg.m = 10;
  const NetworkParams net = init_balanced(cfg, 2);
  CHECK(logistic_loss(ds.X, ds.binary_labels(), net) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-6));
  CHECK(logistic_loss(ds.X, ds.binary_labels(), net) ==
        doctest::Approx(oracle::loss(ds.X, ds.binary_labels(), net.W1, net.w2)).epsilon(1e-14));
}

TEST_CASE("lambda tilde") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd y = ds.binary_labels();
  const NetworkParams zero{Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2)};
  CHECK(lambda_tilde(ds.X, y, zero).isApprox(y / 2.0));
  NetworkParams big = notebook_iter10_like();
  big.W1 *= 100.0;
  CHECK(lambda_tilde(ds.X, y, big).cwiseAbs().maxCoeff() <= 1e-150);
  const Eigen::VectorXd lt = lambda_tilde(ds.X, y, notebook_iter10_like());
  for (int n = 0; n < 3; ++n) CHECK(lt(n) * y(n) > 0.0);
  CHECK(lt(0) == doctest::Approx(1.0 / (1.0 + std::exp(3.549))));
}

TEST_CASE("notebook lambda recovered with the linear gauge") {
  const Dataset ds = *builtin_dataset("notebook");
  const auto masks = enumerate_masks(ds.X).masks;
  const NetworkParams net = notebook_iter10_like();
  const DualRecovery r =
      recover_dual(ds.X, ds.binary_labels(), net, network_masks(ds.X, net), masks, GaugeObjective::linear);
  CHECK(r.lambda(0) == doctest::Approx(0.84944458).epsilon(5e-4));
  CHECK(r.lambda(1) == doctest::Approx(-0.3827491).epsilon(5e-4));
  CHECK(r.lambda(2) == doctest::Approx(-0.0513976).epsilon(5e-3));
  CHECK(r.gauge_all == doctest::Approx(1.0).epsilon(1e-6));
  const DualRecovery m = recover_dual(ds.X, ds.binary_labels(), net, network_masks(ds.X, net), masks);
  CHECK(m.gauge_all == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(m.lambda.normalized().isApprox(r.lambda.normalized(), 1e-9));
}

TEST_CASE("recover dual of the zero network") {
  const Dataset ds = *builtin_dataset("notebook");
  const auto masks = enumerate_masks(ds.X).masks;
  const NetworkParams zero{Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2)};
  const Eigen::VectorXd y = ds.binary_labels();
  const DualRecovery r = recover_dual(ds.X, y, zero, network_masks(ds.X, zero), masks);
  CHECK(r.lambda.normalized().isApprox(y.normalized()));
  CHECK(r.gauge_all == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("g vector") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd lam = ds.binary_labels() / 4.0;
  CHECK(g_vector(ds.X, SignPattern::from_string("+--"), lam).isApprox(Eigen::Vector2d(0.25, 0)));
  CHECK(g_vector(ds.X, SignPattern::from_string("000"), lam).norm() == 0.0);
  const auto s = SignPattern::from_string("++-");
  CHECK(g_vector(ds.X, s, 2.0 * lam).isApprox(2.0 * g_vector(ds.X, s, lam)));
}

TEST_CASE("g_min and g_max against the sweep oracle") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd y = ds.binary_labels();
  const GMinMax gm = g_min_max(ds.X, y, enumerate_sign_patterns(ds.X).patterns);
  CHECK(gm.g_min == doctest::Approx(0.25));
  CHECK(gm.g_max == doctest::Approx(std::sqrt(0.5)));
  CHECK(gm.argmin.positive_support().str() == "100");
  CHECK(gm.argmax.positive_support().str() == "111");

  double lo = 1e300, hi = 0.0;
  for (const auto& u : oracle::sweep_directions(ds.X)) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    const Eigen::VectorXd h = ds.X * u;
    for (int n = 0; n < 3; ++n) {
      if (h(n) > 1e-12) g += y(n) / 4.0 * ds.X.row(n).transpose();
    }
    if (g.norm() > 1e-12) lo = std::min(lo, g.norm());
    hi = std::max(hi, g.norm());
  }
  CHECK(gm.g_min == doctest::Approx(lo));
  CHECK(gm.g_max == doctest::Approx(hi));
  CHECK(gm.g_min > 0.0);
}

TEST_CASE("step follows the negative loss gradient") {
  std::mt19937_64 rng(43);
  const Eigen::MatrixXd X = oracle::gaussian(rng, 5, 3);
  const Eigen::VectorXd y = oracle::random_labels(rng, 5);
  NetworkParams net{oracle::gaussian(rng, 3, 4), oracle::gaussian(rng, 4, 1).col(0)};
  const double eta = 0.1;
  const NetworkParams next = step(X, y, net, eta);
  const double h = 1e-6;
  auto L = [&](const Eigen::MatrixXd& W1, const Eigen::VectorXd& w2) { return oracle::loss(X, y, W1, w2); };
  for (int i = 0; i < net.width(); ++i) {
    Eigen::VectorXd p = net.w2, m = net.w2;
    p(i) += h;
    m(i) -= h;
    const double fd = (L(net.W1, p) - L(net.W1, m)) / (2 * h);
    CHECK((net.w2(i) - next.w2(i)) / eta == doctest::Approx(fd).epsilon(1e-6));
    for (int k = 0; k < 3; ++k) {
      Eigen::MatrixXd P = net.W1, M = net.W1;
      P(k, i) += h;
      M(k, i) -= h;
      const double fdw = (L(P, net.w2) - L(M, net.w2)) / (2 * h);
      CHECK((net.W1(k, i) - next.W1(k, i)) / eta == doctest::Approx(fdw).epsilon(1e-6).scale(1e-8));
    }
  }
}

TEST_CASE("injected zero lambda leaves the parameters unchanged") {
  const Dataset ds = *builtin_dataset("notebook");
  const NetworkParams net = notebook_iter10_like();
  const NetworkParams next = step(ds.X, ds.binary_labels(), net, 1.0, Eigen::VectorXd::Zero(3));
  CHECK(next.W1 == net.W1);
  CHECK(next.w2 == net.w2);
}

TEST_CASE("one-step balance drift is quadratic in the step") {
  const Dataset ds = *builtin_dataset("notebook");
  FlowConfig cfg;
  cfg.m = 6;
  cfg.init_scale = 0.1;
  const NetworkParams net = init_balanced(cfg, 2);
  auto drift = [&](double eta) {
    const NetworkParams n1 = step(ds.X, ds.binary_labels(), net, eta);
    double worst = 0.0;
    for (int i = 0; i < n1.width(); ++i) {
      worst = std::max(worst, std::abs(n1.W1.col(i).squaredNorm() - n1.w2(i) * n1.w2(i)));
    }
    return worst;
  };
  CHECK(drift(0.02) / drift(0.01) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("zero parameters are a fixed point") {
  const Dataset ds = *builtin_dataset("notebook");
  const NetworkParams zero{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(3)};
  FlowConfig cfg;
  cfg.iters = 50;
  const FlowTrace tr = simulate(ds.X, ds.binary_labels(), zero, cfg);
  CHECK(tr.final_record().params.W1.norm() == 0.0);
  CHECK(tr.final_record().params.w2.norm() == 0.0);
}

TEST_CASE("alignment") {
  const Dataset ds = *builtin_dataset("notebook");
  const Eigen::VectorXd y = ds.binary_labels();
  CHECK(*alignment(ds.X, Eigen::Vector2d(1, 0), y) == doctest::Approx(1.0));
  // u = [1,1]/sqrt2: D = 110, X'D y = [1,-1] is orthogonal to u
  CHECK(*alignment(ds.X, Eigen::Vector2d(1, 1).normalized(), y) == doctest::Approx(0.0));
  CHECK_FALSE(alignment(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)));
}

TEST_CASE("time bounds") {
  const TimeBounds tb = time_bounds(0.1, 0.25, 0.2);
  CHECK(tb.T_shift(0.9) == tb.T_star);
  CHECK(time_bounds(0.1, 0.25, 0.9).T_star == doctest::Approx(0.0).scale(1e-12));
  using ld = long double;
  const ld s = std::sqrt(1.0L - 0.1L / 8.0L);
  const ld expect = (std::log((s + 0.9L) / (s - 0.9L)) - std::log((s + 0.2L) / (s - 0.2L))) / (2.0L * 0.25L * s);
  CHECK(tb.T_star == doctest::Approx(static_cast<double>(expect)).epsilon(1e-14));
  CHECK(tb.T_star > 0.0);
  CHECK(tb.T_shift(0.5) < tb.T_star);
  CHECK_THROWS_AS(time_bounds(0.0, 0.25, 0.2), FlowError);
  CHECK_THROWS_AS(time_bounds(0.1, 0.0, 0.2), FlowError);
}

TEST_CASE("network masks") {
  const Dataset ds = *builtin_dataset("notebook");
  NetworkParams net = notebook_iter10_like();
  net.w2(2) = 0.0;
  const auto ms = network_masks(ds.X, net);
  REQUIRE(ms.size() == 2);
  CHECK(ms[0].str() == "011");
  CHECK(ms[1].str() == "100");
}

TEST_CASE("notebook gradient descent run") {
  const Dataset ds = *builtin_dataset("notebook");
  const FlowTrace tr = run_flow(ds, notebook_config());
  REQUIRE(tr.records.size() == 5);
  CHECK(tr.final_record().loss <= 1e-5);
  CHECK_FALSE(tr.sign_flip);
  double prev = 1e300;
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    REQUIRE(tr.records[k].margin.has_value());
    CHECK(*tr.records[k].margin < prev);
    prev = *tr.records[k].margin;
  }
  CHECK(prev >= 2.0);
  CHECK(prev <= 2.1);
  const FlowTrace again = run_flow(ds, notebook_config());
  CHECK(again.final_record().params.W1 == tr.final_record().params.W1);
}

TEST_CASE("flow with zero iterations") {
  FlowConfig cfg;
  cfg.iters = 0;
  const FlowTrace tr = run_flow(*builtin_dataset("notebook"), cfg);
  CHECK(tr.records.size() == 1);
  CHECK(tr.records[0].iteration == 0);
}

TEST_CASE("orthogonal separable run aligns") {
  FlowConfig cfg;
  cfg.m = 10;
  cfg.step = 0.1;
  cfg.iters = 20000;
  cfg.align_every = 10;
  const FlowTrace tr = run_flow(*builtin_dataset("appendix-ortho"), cfg);
  CHECK(tr.best_alignment >= 0.95);
  REQUIRE(tr.first_aligned.has_value());
  double best = -1.0;
  for (std::size_t i = 0; i < tr.final_record().neurons.size(); ++i) {
    const auto& a = tr.final_record().neurons[i].alignment;
    if (tr.sign_condition[i] && a) best = std::max(best, *a);
  }
  CHECK(best >= 0.95);
}

TEST_CASE("seed retry") {
  FlowConfig cfg = notebook_config();
  const RetriedFlow rf = run_flow_retry(*builtin_dataset("notebook"), cfg, 1e-4, 5);
  CHECK(rf.reached);
  CHECK(rf.trials >= 1);
  CHECK(rf.trace.final_record().loss <= 1e-4);
  FlowConfig short_cfg;
  short_cfg.iters = 1;
  const RetriedFlow none = run_flow_retry(*builtin_dataset("notebook"), short_cfg, 1e-12, 3);
  CHECK_FALSE(none.reached);
  CHECK(none.trials == 3);
  CHECK(none.seed == 2);
}

TEST_CASE("configuration validation") {
  FlowConfig cfg;
  cfg.m = 0;
  CHECK_THROWS_AS(cfg.validate(), FlowError);
  cfg = FlowConfig{};
  cfg.iters = 10;
  cfg.checkpoints = {5, 3};
  CHECK_THROWS_AS(cfg.validate(), FlowError);
  cfg.checkpoints = {20};
  CHECK_THROWS_AS(cfg.validate(), FlowError);
  cfg.checkpoints = {};
  cfg.step = -1;
  CHECK_THROWS_AS(cfg.validate(), FlowError);
}
