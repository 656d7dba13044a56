#include "relu_lab/certify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "relu_lab/dataset.hpp"
#include "relu_lab/flow.hpp"
#include "relu_lab/linalg.hpp"
#include "relu_lab/parallel.hpp"

namespace relu_lab {

std::string to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::dual_feasible: return "dual-feasible";
    case CertificateKind::ortho_coverage: return "ortho-coverage";
    case CertificateKind::spike_free: return "spike-free";
    case CertificateKind::local_max: return "local-max";
    case CertificateKind::local_min: return "local-min";
    case CertificateKind::convex_kkt: return "convex-kkt";
  }
  return "unknown";
}

std::string to_string(ExtremumKind k) {
  switch (k) {
    case ExtremumKind::local_max: return "local-max";
    case ExtremumKind::local_min: return "local-min";
    case ExtremumKind::neither: return "neither";
  }
  return "unknown";
}

double KKTExtraction::max_direction_residual() const {
  double r = 0.0;
  for (const auto& n : neurons) r = std::max(r, n.direction_residual);
  return r;
}

double KKTExtraction::max_norm_residual() const {
  double r = 0.0;
  for (const auto& n : neurons) r = std::max(r, n.norm_residual);
  return r;
}

KKTExtraction extract_kkt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                          const Eigen::VectorXd& lambda, double tol_boundary) {
  if (lambda.size() != X.rows() || y.size() != X.rows()) throw CertifyError("dual vector has wrong length");
  KKTExtraction ext;
  for (int i = 0; i < net.width(); ++i) {
    const double a = net.w2(i);
    if (a == 0.0) continue;
    const Eigen::VectorXd w1 = net.W1.col(i);
    const Eigen::VectorXd v = X * w1;
    const double nw = w1.norm();
    NeuronKKT nk;
    nk.index = i;
    nk.sign = a > 0.0 ? 1 : -1;
    nk.strict_mask = mask_of(X, w1);
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      if (std::abs(v(n)) <= tol_boundary * nw * X.row(n).norm()) nk.boundary.push_back(static_cast<int>(n));
    }
    const Eigen::VectorXd target = w1 / a;
    auto residual = [&](const ActivationMask& m) {
      return (target - X.transpose() * m.diag().cwiseProduct(lambda)).norm();
    };
    ActivationMask best = nk.strict_mask;
    for (int n : nk.boundary) best.bits[static_cast<std::size_t>(n)] = 0;
    double best_r = residual(best);
    const auto nb = static_cast<int>(nk.boundary.size());
    if (nb <= kMaxEnumeratedBoundary) {
      for (long code = 1; code < (1L << nb); ++code) {
        ActivationMask m = best;
        for (int k = 0; k < nb; ++k) {
          m.bits[static_cast<std::size_t>(nk.boundary[static_cast<std::size_t>(k)])] = (code >> (nb - 1 - k)) & 1;
        }
        const double r = residual(m);
        if (r < best_r) {
          best_r = r;
          best = m;
        }
      }
    } else {
      nk.enumerated = false;
      for (int n : nk.boundary) {
        ActivationMask m = best;
        m.bits[static_cast<std::size_t>(n)] = 1;
        const double r = residual(m);
        if (r < best_r) {
          best_r = r;
          best = m;
        }
      }
    }
    nk.completed_mask = best;
    nk.direction_residual = best_r;
    nk.norm_residual = std::abs((X.transpose() * best.diag().cwiseProduct(lambda)).norm() - 1.0);
    ext.neurons.push_back(std::move(nk));
  }
  if (ext.neurons.empty()) throw CertifyError("every neuron has zero output weight");
  const Eigen::VectorXd f = net.output(X);
  ext.complementary_slackness = (lambda.array() * (y.cwiseProduct(f).array() - 1.0)).abs().matrix();
  return ext;
}

Certificate dual_feasible(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
                          const Eigen::VectorXd& lambda, double tol, GaugeObjective objective) {
  const PolarGaugeReport rep = polar_gauge(X, masks, lambda, objective);
  Certificate c;
  c.kind = CertificateKind::dual_feasible;
  c.tolerance = tol;
  c.value = rep.gauge;
  c.verdict = rep.gauge <= 1.0 + tol;
  for (const auto& pm : rep.per_mask) c.slacks.push_back(pm.magnitude() - 1.0);
  c.note = "gauge " + std::to_string(rep.gauge) + " attained on mask " +
           rep.per_mask[static_cast<std::size_t>(rep.argmax_mask)].mask.str();
  return c;
}

std::vector<Certificate> dual_feasible_classes(const Eigen::MatrixXd& X,
                                               const std::vector<ActivationMask>& masks,
                                               const Eigen::MatrixXd& Lambda, double tol) {
  std::vector<Certificate> out;
  for (Eigen::Index k = 0; k < Lambda.cols(); ++k) out.push_back(dual_feasible(X, masks, Lambda.col(k), tol));
  return out;
}

Certificate ortho_coverage(const KKTExtraction& ext, const Eigen::VectorXd& y) {
  if (ext.neurons.empty()) throw CertifyError("extraction is empty");
  Certificate c;
  c.kind = CertificateKind::ortho_coverage;
  int best_pos = static_cast<int>((y.array() > 0.0).count());
  int best_neg = static_cast<int>((y.array() < 0.0).count());
  for (const auto& nk : ext.neurons) {
    int uncovered = 0;
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      const bool want = nk.sign > 0 ? y(n) > 0.0 : y(n) < 0.0;
      if (want && !nk.completed_mask[static_cast<int>(n)]) ++uncovered;
    }
    (nk.sign > 0 ? best_pos : best_neg) = std::min(nk.sign > 0 ? best_pos : best_neg, uncovered);
  }
  c.slacks = {static_cast<double>(best_pos), static_cast<double>(best_neg)};
  c.verdict = best_pos == 0 && best_neg == 0;
  return c;
}

Certificate spike_free(const Eigen::MatrixXd& X, int grid, double tol, std::uint64_t seed) {
  if (grid < 1) throw CertifyError("grid must be positive");
  const Eigen::MatrixXd Xp = pseudo_inverse(X);
  const Eigen::Index d = X.cols();
  std::vector<Eigen::VectorXd> dirs;
  if (d == 2) {
    for (int i = 0; i < grid; ++i) {
      const double t = 2.0 * std::numbers::pi * i / grid;
      dirs.emplace_back(Eigen::Vector2d(std::cos(t), std::sin(t)));
    }
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      if (X.row(n).squaredNorm() == 0.0) continue;
      const double phi = std::atan2(X(n, 1), X(n, 0));
      for (double t : {phi + std::numbers::pi / 2, phi - std::numbers::pi / 2}) {
        dirs.emplace_back(Eigen::Vector2d(std::cos(t), std::sin(t)));
      }
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < grid; ++i) {
      Eigen::VectorXd g(d);
      do {
        for (Eigen::Index k = 0; k < d; ++k) g(k) = normal(rng);
      } while (g.norm() == 0.0);
      dirs.push_back(g / g.norm());
    }
  }
  double worst = 0.0;
  long passing = 0;
  for (const auto& u : dirs) {
    const Eigen::VectorXd v = (X * u).cwiseMax(0.0);
    const Eigen::VectorXd z = Xp * v;
    if ((X * z - v).norm() > tol * std::max(v.norm(), 1e-300) && v.norm() > 0.0) continue;
    ++passing;
    worst = std::max(worst, z.norm());
  }
  Certificate c;
  c.kind = CertificateKind::spike_free;
  c.approximate = true;
  c.tolerance = tol;
  c.value = worst;
  c.slacks = {worst - 1.0};
  c.verdict = worst <= 1.0 + tol;
  c.note = std::to_string(passing) + " of " + std::to_string(dirs.size()) + " directions in range";
  return c;
}

LocalExtremumResult local_extremum(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& u, double tol) {
  const auto verdict = is_orthogonal_separable(X, y);
  if (!verdict.separable) throw CertifyError("dataset is not orthogonal separable");
  const auto a = alignment(X, u, y);
  if (!a) throw CertifyError("g(u, y) vanishes");
  LocalExtremumResult out;
  out.alignment = *a;
  if (*a >= 1.0 - tol) out.kind = ExtremumKind::local_max;
  else if (*a <= -(1.0 - tol)) out.kind = ExtremumKind::local_min;
  const Eigen::VectorXd v = X * u;
  out.covers_positive = true;
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    if (y(n) > 0.0 && !(v(n) > 0.0)) out.covers_positive = false;
  }
  return out;
}

double ConvexKKTReport::max_family() const {
  return std::max({stationarity_u, stationarity_u_prime, margin_slackness, cone_slackness_u,
                   cone_slackness_u_prime});
}

ConvexKKTReport convex_kkt_residuals(const ConvexProblem& prob, const ConvexSolution& sol,
                                     const DualVariable& dual) {
  const int N = prob.N(), p = prob.p();
  if (dual.lambda.size() != N) throw CertifyError("dual vector has wrong length");
  auto z_of = [&](const std::vector<Eigen::VectorXd>& zs, int j) {
    return zs.empty() ? Eigen::VectorXd(Eigen::VectorXd::Zero(N)) : zs[static_cast<std::size_t>(j)];
  };
  ConvexKKTReport rep;
  const double thr = nonzero_threshold(sol.objective);
  auto inclusion = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& u) {
    const double nu = u.norm();
    return nu > thr ? (v - u / nu).norm() : std::max(0.0, v.norm() - 1.0);
  };
  for (int j = 0; j < p; ++j) {
    const Eigen::VectorXd D = prob.masks[static_cast<std::size_t>(j)].diag();
    const Eigen::VectorXd S = 2.0 * D.array() - 1.0;
    const Eigen::VectorXd XtDl = prob.X.transpose() * D.cwiseProduct(dual.lambda);
    const Eigen::VectorXd z = z_of(dual.z, j), zp = z_of(dual.z_prime, j);
    const Eigen::VectorXd vz = prob.X.transpose() * S.cwiseProduct(z);
    const Eigen::VectorXd vzp = prob.X.transpose() * S.cwiseProduct(zp);
    rep.stationarity_u = std::max(rep.stationarity_u, inclusion(-XtDl + vz, sol.u(j)));
    rep.stationarity_u_prime = std::max(rep.stationarity_u_prime, inclusion(XtDl + vzp, sol.u_prime(j)));
    const Eigen::VectorXd cu = S.cwiseProduct(prob.X * sol.u(j));
    const Eigen::VectorXd cup = S.cwiseProduct(prob.X * sol.u_prime(j));
    rep.cone_slackness_u = std::max(rep.cone_slackness_u, z.cwiseProduct(cu).cwiseAbs().maxCoeff());
    rep.cone_slackness_u_prime =
        std::max(rep.cone_slackness_u_prime, zp.cwiseProduct(cup).cwiseAbs().maxCoeff());
    rep.dual_sign_violation = std::max({rep.dual_sign_violation, -z.minCoeff(), -zp.minCoeff()});
  }
  const Eigen::VectorXd f = convex_output(prob, sol);
  rep.margin_slackness =
      (dual.lambda.array() * (prob.y.cwiseProduct(f).array() - 1.0)).abs().maxCoeff();
  rep.primal_infeasibility = std::max({0.0, -sol.margin_slack, -sol.cone_slack});
  rep.dual_sign_violation = std::max(rep.dual_sign_violation, -prob.y.cwiseProduct(dual.lambda).minCoeff());
  return rep;
}

Certificate convex_kkt_certificate(const ConvexKKTReport& rep, double tol) {
  Certificate c;
  c.kind = CertificateKind::convex_kkt;
  c.tolerance = tol;
  c.slacks = {rep.stationarity_u, rep.stationarity_u_prime, rep.margin_slackness,
              rep.cone_slackness_u, rep.cone_slackness_u_prime, rep.primal_infeasibility,
              rep.dual_sign_violation};
  c.value = *std::max_element(c.slacks.begin(), c.slacks.end());
  c.verdict = c.value <= tol;
  return c;
}

namespace {

// min |a + X'S z| over z >= 0.
Eigen::VectorXd fit_cone_multiplier(const Eigen::MatrixXd& X, const Eigen::VectorXd& S,
                                    const Eigen::VectorXd& a) {
  const Eigen::Index N = X.rows(), d = X.cols();
  ConeProgram cp;
  cp.c = Eigen::VectorXd::Zero(d + N);
  std::vector<int> g(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) g[static_cast<std::size_t>(k)] = static_cast<int>(k);
  cp.norm_groups = {g};
  cp.A = Eigen::MatrixXd::Zero(d + N, d + N);
  cp.b = Eigen::VectorXd::Zero(d + N);
  cp.A.topLeftCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
  cp.A.topRightCorner(d, N) = -X.transpose() * S.asDiagonal();
  cp.b.head(d) = a;
  cp.A.bottomRightCorner(N, N) = -Eigen::MatrixXd::Identity(N, N);
  cp.cones = {{ConeKind::zero, static_cast<int>(d)}, {ConeKind::nonnegative, static_cast<int>(N)}};
  SolveOptions so;
  so.tol = 1e-10;
  const SolveResult res = solve(cp, so);
  return res.x.tail(N).cwiseMax(0.0);
}

}  // namespace

LiftedKKT lift_kkt_point(const ConvexProblem& prob, const NetworkParams& net,
                         const KKTExtraction& ext, const Eigen::VectorXd& lambda) {
  std::vector<std::optional<ActivationMask>> overrides(static_cast<std::size_t>(net.width()));
  for (const auto& nk : ext.neurons) overrides[static_cast<std::size_t>(nk.index)] = nk.completed_mask;
  LiftedKKT out;
  out.solution = convex_from_network(prob, net, overrides);
  out.dual.lambda = lambda;
  const int N = prob.N();
  const double thr = nonzero_threshold(out.solution.objective);
  for (int j = 0; j < prob.p(); ++j) {
    const Eigen::VectorXd D = prob.masks[static_cast<std::size_t>(j)].diag();
    const Eigen::VectorXd S = 2.0 * D.array() - 1.0;
    const Eigen::VectorXd XtDl = prob.X.transpose() * D.cwiseProduct(lambda);
    out.dual.z.push_back(out.solution.u(j).norm() > thr ? Eigen::VectorXd(Eigen::VectorXd::Zero(N))
                                                         : fit_cone_multiplier(prob.X, S, -XtDl));
    out.dual.z_prime.push_back(out.solution.u_prime(j).norm() > thr
                                   ? Eigen::VectorXd(Eigen::VectorXd::Zero(N))
                                   : fit_cone_multiplier(prob.X, S, XtDl));
  }
  return out;
}

}  // namespace relu_lab
