#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "relu_lab/arrangements.hpp"
#include "relu_lab/convex.hpp"
#include "relu_lab/dataset.hpp"

using namespace relu_lab;

namespace {

struct Notebook {
  Dataset ds = *builtin_dataset("notebook");
  std::vector<ActivationMask> masks = enumerate_masks(ds.X).masks;
  ConvexProblem prob = build_primal(ds.X, ds.binary_labels(), masks);
};

int mask_index(const std::vector<ActivationMask>& masks, const std::string& s) {
  for (std::size_t j = 0; j < masks.size(); ++j) {
    if (masks[j].str() == s) return static_cast<int>(j);
  }
  return -1;
}

NetworkParams notebook_optimal_network() {
  NetworkParams net{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
  net.W1 << 1, 0, 0, 1;
  net.w2 << 1, -1;
  return net;
}

}  // namespace

TEST_CASE("notebook primal program shape") {
  Notebook nb;
  CHECK(nb.prob.p() == 6);
  CHECK(nb.prob.group_count() == 12);
  CHECK(nb.prob.program.num_vars() == 24);
  CHECK(nb.prob.program.num_rows() == 3 + 36);
  CHECK(nb.prob.program.norm_groups.size() == 12);
  for (const auto& g : nb.prob.program.norm_groups) CHECK(g.size() == 2);
}

TEST_CASE("program shapes follow the counting formulas") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const int N = 3 + trial, d = 2 + trial % 2;
    const Eigen::MatrixXd X = oracle::gaussian(rng, N, d);
    const Eigen::VectorXd y = oracle::random_labels(rng, N);
    const auto masks = enumerate_masks(X).masks;
    const int p = static_cast<int>(masks.size());
    const ConvexProblem prob = build_primal(X, y, masks);
    CHECK(prob.program.num_vars() == 2 * p * d);
    CHECK(prob.program.num_rows() == N + 2 * p * N);
    const ConeProgram dual = build_dual_socp(X, y, masks);
    CHECK(dual.num_vars() == N + 2 * p * N);
    CHECK(dual.num_rows() == 2 * p * (d + 1) + 2 * p * N + N);
  }
}

TEST_CASE("single mask on the identity") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  const ConvexProblem prob = build_primal(X, Eigen::Vector2d(1, 1), {ActivationMask::from_string("11")});
  const PrimalSolve ps = solve_primal(prob);
  CHECK(ps.solution.objective == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  CHECK(ps.solution.u_prime(0).isApprox(Eigen::Vector2d(1, 1), 1e-6));
  const DualSolve dv = solve_dual(X, Eigen::Vector2d(1, 1), {ActivationMask::from_string("11")});
  CHECK(dv.objective == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("notebook primal and dual optimum") {
  Notebook nb;
  const PrimalSolve ps = solve_primal(nb.prob);
  CHECK(ps.report.status == SolveStatus::optimal);
  CHECK(ps.solution.objective == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(ps.solution.margin_slack >= -1e-7);
  CHECK(ps.solution.cone_slack >= -1e-7);
  const DualSolve dv = solve_dual(nb.ds.X, nb.ds.binary_labels(), nb.masks);
  CHECK(dv.report.status == SolveStatus::optimal);
  CHECK(dv.objective == doctest::Approx(ps.solution.objective).epsilon(1e-6));
  CHECK(dv.dual.lambda.isApprox(Eigen::Vector3d(1, -1, 0), 1e-5));
  // f = sum_j D_j X (u'_j - u_j) meets every margin
  const Eigen::VectorXd f = convex_output(nb.prob, ps.solution);
  CHECK(nb.ds.binary_labels().cwiseProduct(f).minCoeff() >= 1.0 - 1e-7);
}

TEST_CASE("dual value matches the two-sample brute force") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::MatrixXd X = oracle::gaussian(rng, 2, 2);
    const Eigen::VectorXd y = oracle::random_labels(rng, 2);
    const auto masks = enumerate_masks(X).masks;
    const DualSolve dv = solve_dual(X, y, masks);
    const PrimalSolve ps = solve_primal(build_primal(X, y, masks));
    const double brute = oracle::dual_value_2x2(X, y);
    CHECK(dv.objective == doctest::Approx(brute).epsilon(1e-5));
    CHECK(ps.solution.objective == doctest::Approx(brute).epsilon(1e-5));
  }
}

TEST_CASE("dual objective is never negative") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd X = oracle::gaussian(rng, 4, 2);
    const Eigen::VectorXd y = oracle::random_labels(rng, 4);
    CHECK(solve_dual(X, y, enumerate_masks(X).masks).objective >= -1e-8);
  }
}

TEST_CASE("network from a mask-matched notebook optimum") {
  Notebook nb;
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(24);
  flat.segment(nb.prob.offset(mask_index(nb.masks, "100"), true), 2) = Eigen::Vector2d(1, 0);
  flat.segment(nb.prob.offset(mask_index(nb.masks, "011"), false), 2) = Eigen::Vector2d(0, 1);
  const ConvexSolution sol = make_solution(nb.prob, flat);
  CHECK(sol.objective == doctest::Approx(2.0));
  const NetworkParams net = network_from_convex(nb.prob, sol);
  REQUIRE(net.width() == 2);
  bool pos = false, neg = false;
  for (int i = 0; i < 2; ++i) {
    if (net.w2(i) > 0) pos = net.W1.col(i).isApprox(Eigen::Vector2d(1, 0)) && net.w2(i) == doctest::Approx(1.0);
    if (net.w2(i) < 0) neg = net.W1.col(i).isApprox(Eigen::Vector2d(0, 1)) && net.w2(i) == doctest::Approx(-1.0);
  }
  CHECK(pos);
  CHECK(neg);
}

TEST_CASE("network from the solved notebook optimum reproduces the convex output") {
  Notebook nb;
  const PrimalSolve ps = solve_primal(nb.prob);
  const NetworkParams net = network_from_convex(nb.prob, ps.solution);
  CHECK(net.output(nb.ds.X).isApprox(convex_output(nb.prob, ps.solution), 1e-6));
  CHECK(net.w2.squaredNorm() == doctest::Approx(ps.solution.objective).epsilon(1e-6));
}

TEST_CASE("empty and infeasible solutions are rejected") {
  Notebook nb;
  const ConvexSolution zero = make_solution(nb.prob, Eigen::VectorXd::Zero(24));
  CHECK_THROWS_AS(network_from_convex(nb.prob, zero), ConvexError);
}

TEST_CASE("appendix orthogonal separable optimum") {
  const Dataset ds = *builtin_dataset("appendix-ortho");
  const auto masks = enumerate_masks(ds.X).masks;
  const ConvexProblem prob = build_primal(ds.X, ds.binary_labels(), masks);
  const PrimalSolve ps = solve_primal(prob);
  const NetworkParams net = network_from_convex(prob, ps.solution);
  CHECK(net.width() == 2);
  CHECK(ds.binary_labels().cwiseProduct(net.output(ds.X)).minCoeff() >= 1.0 - 1e-6);
}

TEST_CASE("round trip on mask-distinct solutions") {
  Notebook nb;
  const PrimalSolve ps = solve_primal(nb.prob);
  const NetworkParams net = network_from_convex(nb.prob, ps.solution);
  std::vector<std::optional<ActivationMask>> overrides;
  for (int j = 0; j < nb.prob.p(); ++j) {
    for (bool positive : {true, false}) {
      const auto& u = positive ? ps.solution.u_prime(j) : ps.solution.u(j);
      if (u.norm() > nonzero_threshold(ps.solution.objective)) overrides.emplace_back(nb.masks[static_cast<std::size_t>(j)]);
    }
  }
  REQUIRE(static_cast<int>(overrides.size()) == net.width());
  const ConvexSolution back = convex_from_network(nb.prob, net, overrides);
  for (int g = 0; g < nb.prob.group_count(); ++g) {
    const auto& a = ps.solution.groups[static_cast<std::size_t>(g)];
    const auto& b = back.groups[static_cast<std::size_t>(g)];
    CHECK((a.norm() > nonzero_threshold(ps.solution.objective) ? (a - b).norm() : b.norm()) <= 1e-12);
  }
}

TEST_CASE("neurons sharing a mask are merged") {
  Notebook nb;
  NetworkParams net{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
  net.W1 << 1, 2, -0.5, -0.2;  // both in mask 100
  net.w2 << 1, 0.5;
  const ConvexSolution sol = convex_from_network(nb.prob, net);
  const Eigen::VectorXd merged = sol.u_prime(mask_index(nb.masks, "100"));
  CHECK(merged.isApprox(net.W1.col(0) * 1.0 + net.W1.col(1) * 0.5));
  CHECK(sol.objective <= net.W1.col(0).norm() + 0.5 * net.W1.col(1).norm() + 1e-12);
  CHECK(convex_output(nb.prob, sol).isApprox(net.output(nb.ds.X)));
}

TEST_CASE("zero network gives the zero solution") {
  Notebook nb;
  const NetworkParams net{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(3)};
  const ConvexSolution sol = convex_from_network(nb.prob, net);
  CHECK(sol.objective == 0.0);
  CHECK(sol.flat().norm() == 0.0);
}

TEST_CASE("boundary neurons complete toward the smallest listed mask") {
  Notebook nb;
  // u = [1,1]: x3'u = 0 so both 110 and 111 are consistent.
  CHECK(nb.masks[static_cast<std::size_t>(match_mask(nb.ds.X, nb.masks, Eigen::Vector2d(1, 1)))].str() == "110");
  CHECK(match_mask(nb.ds.X, {ActivationMask::from_string("000")}, Eigen::Vector2d(1, 0)) == -1);
}

TEST_CASE("margin objective") {
  const Dataset ds = *builtin_dataset("notebook");
  const NetworkParams net = notebook_optimal_network();
  const auto mo = margin_objective(ds.X, ds.binary_labels(), net);
  REQUIRE(mo.has_value());
  CHECK(mo->min_margin == doctest::Approx(1.0));
  CHECK(mo->value == doctest::Approx(2.0));

  NetworkParams scaled = net;
  scaled.W1 *= 3.0;
  scaled.w2 *= 0.5;
  const auto ms = margin_objective(ds.X, ds.binary_labels(), scaled);
  REQUIRE(ms.has_value());
  CHECK(ms->value == doctest::Approx(2.0));
  for (int i = 0; i < ms->balanced.width(); ++i) {
    CHECK(ms->balanced.W1.col(i).norm() == doctest::Approx(std::abs(ms->balanced.w2(i))));
  }

  NetworkParams wrong = net;
  wrong.w2 *= -1.0;
  CHECK_FALSE(margin_objective(ds.X, ds.binary_labels(), wrong).has_value());
}

TEST_CASE("multiclass decomposition") {
  const Dataset nb = *builtin_dataset("notebook");
  const auto masks = enumerate_masks(nb.X).masks;
  const ClassSolve bin = solve_class(nb, 0, masks);

  Eigen::VectorXi l(3);
  l << 1, 2, 2;
  const Dataset mc = make_dataset("mc", nb.X, l, 2);
  const MulticlassSolve all = solve_all_classes(mc, masks);
  REQUIRE(all.classes.size() == 2);
  CHECK(all.objective == doctest::Approx(2.0 * bin.primal.solution.objective).epsilon(1e-6));
  // y_2 = -y_1: roles of u_j and u'_j swap
  const auto& c1 = all.classes[0].primal.solution;
  const auto& c2 = all.classes[1].primal.solution;
  CHECK(convex_output(all.classes[1].problem, c2).isApprox(-convex_output(all.classes[0].problem, c1), 1e-5));

  const Dataset k1 = make_dataset("k1", nb.X, Eigen::VectorXi::Ones(3), 1);
  const MulticlassSolve single = solve_all_classes(k1, masks);
  const ClassSolve direct = solve_class(k1, 0, masks);
  CHECK(single.objective == doctest::Approx(direct.primal.solution.objective));
}

TEST_CASE("optimal face verification on the notebook") {
  Notebook nb;
  const PrimalSolve ps = solve_primal(nb.prob);
  const OptimalFaceReport rep = verify_optimal_face(nb.prob, ps.solution, ps.solution.objective);
  CHECK(rep.verified);
  int active = 0;
  for (const auto& f : rep.functionals) {
    if (!f.active) continue;
    ++active;
    CHECK(f.gap() <= 1e-3);
  }
  CHECK(active == 4);
}
