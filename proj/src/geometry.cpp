#include "relu_lab/geometry.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "relu_lab/parallel.hpp"

namespace relu_lab {

double MaskGauge::magnitude() const { return std::max(std::abs(max_value), std::abs(min_value)); }

ExtremePointResult extreme_point(const Eigen::MatrixXd& X, const ActivationMask& mask,
                                 const Eigen::VectorXd& lambda, Sense sense,
                                 GaugeObjective objective, double tol) {
  const Eigen::Index N = X.rows(), d = X.cols();
  if (mask.size() != N || lambda.size() != N) throw GeometryError("mask or dual vector has wrong length");
  const Eigen::VectorXd Dl =
      objective == GaugeObjective::masked ? Eigen::VectorXd(mask.diag().cwiseProduct(lambda)) : lambda;
  const Eigen::VectorXd g = X.transpose() * Dl;
  const double s = sense == Sense::max ? 1.0 : -1.0;

  ConeProgram prog;
  prog.c = -s * g;
  prog.A = Eigen::MatrixXd::Zero(N + d + 1, d);
  prog.b = Eigen::VectorXd::Zero(N + d + 1);
  for (Eigen::Index n = 0; n < N; ++n) prog.A.row(n) = -(mask[static_cast<int>(n)] ? 1.0 : -1.0) * X.row(n);
  prog.b(N) = 1.0;
  prog.A.bottomRows(d) = -Eigen::MatrixXd::Identity(d, d);
  prog.cones = {{ConeKind::nonnegative, static_cast<int>(N)}, {ConeKind::second_order, static_cast<int>(d + 1)}};

  ExtremePointResult out;
  out.mask = mask;
  if (g.norm() == 0.0) {
    out.u = Eigen::VectorXd::Zero(d);
    out.report.status = SolveStatus::optimal;
    for (Eigen::Index n = 0; n < N; ++n) out.active.push_back(static_cast<int>(n));
    return out;
  }
  SolveOptions so;
  so.tol = tol;
  SolveResult res = solve(prog, so);
  if (res.report.status != SolveStatus::optimal) {
    throw GeometryError("extreme-point solve for mask " + mask.str() + " did not converge (" +
                        to_string(res.report.status) + ", primal res " +
                        std::to_string(res.report.primal_residual) + ", dual res " +
                        std::to_string(res.report.dual_residual) + ")");
  }
  out.u = res.x;
  out.value = g.dot(res.x);
  out.report = res.report;
  const Eigen::VectorXd v = X * res.x;
  for (Eigen::Index n = 0; n < N; ++n) {
    if (std::abs(v(n)) <= 1e-6 * std::max(1.0, X.row(n).norm())) out.active.push_back(static_cast<int>(n));
  }
  return out;
}

PolarGaugeReport polar_gauge(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
                             const Eigen::VectorXd& lambda, GaugeObjective objective, double tol) {
  if (masks.empty()) throw GeometryError("polar gauge needs at least one mask");
  PolarGaugeReport rep;
  rep.per_mask = parallel_map<MaskGauge>(masks.size(), [&](std::size_t j) {
    const auto hi = extreme_point(X, masks[j], lambda, Sense::max, objective, tol);
    const auto lo = extreme_point(X, masks[j], lambda, Sense::min, objective, tol);
    return MaskGauge{masks[j], hi.value, lo.value};
  });
  for (std::size_t j = 0; j < rep.per_mask.size(); ++j) {
    const double m = rep.per_mask[j].magnitude();
    if (rep.argmax_mask < 0 || m > rep.gauge) {
      rep.gauge = m;
      rep.argmax_mask = static_cast<int>(j);
    }
  }
  return rep;
}

namespace {

Eigen::VectorXd reference_vector(const Eigen::MatrixXd& X, const Eigen::VectorXd& lambda,
                                 const ActivationMask& mask) {
  return X.transpose() * mask.diag().cwiseProduct(lambda);
}

}  // namespace

double stationary_residual(const Eigen::MatrixXd& X, const Eigen::VectorXd& lambda,
                           const Eigen::VectorXd& u) {
  const Eigen::VectorXd g = reference_vector(X, lambda, mask_of(X, u));
  const double ng = g.norm();
  if (ng == 0.0) return std::numeric_limits<double>::infinity();
  return (u - g / ng).norm();
}

StationaryResult stationary_direction(const Eigen::MatrixXd& X, const Eigen::VectorXd& lambda,
                                      const Eigen::VectorXd& u0, int max_iters, double tol) {
  if (u0.size() != X.cols()) throw GeometryError("start vector has wrong dimension");
  if (std::abs(u0.norm() - 1.0) > 1e-9) throw GeometryError("start vector must be a unit vector");
  Eigen::VectorXd u = u0;
  std::map<std::vector<std::uint8_t>, int> seen;
  for (int k = 1; k <= max_iters; ++k) {
    const ActivationMask m = mask_of(X, u);
    Eigen::VectorXd g = reference_vector(X, lambda, m);
    if (g.norm() == 0.0) {
      throw GeometryError("zero update vector for mask " + m.str() + " at iteration " + std::to_string(k));
    }
    auto [it, fresh] = seen.emplace(m.bits, k);
    if (!fresh && it->second < k - 1) {
      throw GeometryError("mask cycle detected at iteration " + std::to_string(k) + " (mask " + m.str() + ")");
    }
    it->second = k;
    const Eigen::VectorXd next = g / g.norm();
    const double step = (next - u).norm();
    u = next;
    if (step <= tol) {
      return {u, stationary_residual(X, lambda, u), k, mask_of(X, u)};
    }
  }
  throw GeometryError("fixed-point iteration did not converge in " + std::to_string(max_iters) +
                      " iterations");
}

EllipsoidTrace rectified_ellipsoid_samples(const Eigen::MatrixXd& X, int M) {
  if (X.cols() != 2) throw GeometryError("ellipsoid samples require d = 2");
  if (M < 3) throw GeometryError("ellipsoid samples require M >= 3");
  EllipsoidTrace tr;
  tr.theta.resize(M);
  tr.points.resize(M, X.rows());
  for (int i = 0; i < M; ++i) {
    const double t = 2.0 * std::numbers::pi * i / M;
    tr.theta(i) = t;
    tr.points.row(i) = (X * Eigen::Vector2d(std::cos(t), std::sin(t))).cwiseMax(0.0).transpose();
  }
  return tr;
}

}  // namespace relu_lab
