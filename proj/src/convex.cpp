#include "relu_lab/convex.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <set>

#include "relu_lab/parallel.hpp"

namespace relu_lab {

Eigen::VectorXd NetworkParams::output(const Eigen::MatrixXd& X) const {
  if (W1.cols() == 0) return Eigen::VectorXd::Zero(X.rows());
  return (X * W1).cwiseMax(0.0) * w2;
}

namespace {

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<ActivationMask>& masks) {
  if (masks.empty()) throw ConvexError("empty mask list");
  if (y.size() != X.rows()) throw ConvexError("label vector length differs from sample count");
  for (const auto& m : masks) {
    if (m.size() != X.rows()) throw ConvexError("mask " + m.str() + " has wrong length");
  }
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    if (y(n) != 1.0 && y(n) != -1.0) throw ConvexError("labels must be +1/-1");
  }
}

}  // namespace

ConvexProblem build_primal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const std::vector<ActivationMask>& masks) {
  check_inputs(X, y, masks);
  ConvexProblem prob{X, y, masks, {}};
  const int N = prob.N(), d = prob.d(), p = prob.p();
  const int nvar = 2 * p * d, nrow = N + 2 * p * N;
  ConeProgram& cp = prob.program;
  cp.c = Eigen::VectorXd::Zero(nvar);
  cp.A = Eigen::MatrixXd::Zero(nrow, nvar);
  cp.b = Eigen::VectorXd::Zero(nrow);
  for (int n = 0; n < N; ++n) {
    for (int j = 0; j < p; ++j) {
      if (!masks[static_cast<std::size_t>(j)][n]) continue;
      cp.A.block(n, prob.offset(j, false), 1, d) += y(n) * X.row(n);
      cp.A.block(n, prob.offset(j, true), 1, d) -= y(n) * X.row(n);
    }
    cp.b(n) = -1.0;
  }
  int r = N;
  for (int j = 0; j < p; ++j) {
    for (int pos = 0; pos < 2; ++pos) {
      for (int n = 0; n < N; ++n, ++r) {
        const double s = masks[static_cast<std::size_t>(j)][n] ? 1.0 : -1.0;
        cp.A.block(r, prob.offset(j, pos == 1), 1, d) = -s * X.row(n);
      }
    }
  }
  cp.cones = {{ConeKind::nonnegative, nrow}};
  for (int g = 0; g < 2 * p; ++g) {
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) idx[static_cast<std::size_t>(k)] = g * d + k;
    cp.norm_groups.push_back(std::move(idx));
  }
  return prob;
}

ConeProgram build_dual_socp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::vector<ActivationMask>& masks) {
  check_inputs(X, y, masks);
  const int N = static_cast<int>(X.rows()), d = static_cast<int>(X.cols());
  const int p = static_cast<int>(masks.size());
  const int nvar = N + 2 * p * N;
  const int nsoc = 2 * p * (d + 1);
  const int nrow = nsoc + 2 * p * N + N;
  ConeProgram cp;
  cp.c = -y;
  cp.c.conservativeResize(nvar);
  cp.c.tail(nvar - N).setZero();
  cp.A = Eigen::MatrixXd::Zero(nrow, nvar);
  cp.b = Eigen::VectorXd::Zero(nrow);
  int r = 0;
  for (int j = 0; j < p; ++j) {
    const Eigen::VectorXd D = masks[static_cast<std::size_t>(j)].diag();
    const Eigen::MatrixXd XtD = X.transpose() * D.asDiagonal();
    const Eigen::MatrixXd XtS = X.transpose() * (2.0 * D.array() - 1.0).matrix().asDiagonal();
    const int zp = N + 2 * j * N, zm = N + (2 * j + 1) * N;
    // (1; X'D lambda - X'S z+)
    cp.b(r) = 1.0;
    cp.A.block(r + 1, 0, d, N) = -XtD;
    cp.A.block(r + 1, zp, d, N) = XtS;
    cp.cones.push_back({ConeKind::second_order, d + 1});
    r += d + 1;
    // (1; -X'D lambda - X'S z-)
    cp.b(r) = 1.0;
    cp.A.block(r + 1, 0, d, N) = XtD;
    cp.A.block(r + 1, zm, d, N) = XtS;
    cp.cones.push_back({ConeKind::second_order, d + 1});
    r += d + 1;
  }
  for (int k = 0; k < 2 * p * N; ++k, ++r) cp.A(r, N + k) = -1.0;
  for (int n = 0; n < N; ++n, ++r) cp.A(r, n) = -y(n);
  cp.cones.push_back({ConeKind::nonnegative, 2 * p * N + N});
  return cp;
}

Eigen::VectorXd ConvexSolution::flat() const {
  Eigen::Index total = 0;
  for (const auto& g : groups) total += g.size();
  Eigen::VectorXd out(total);
  Eigen::Index k = 0;
  for (const auto& g : groups) {
    out.segment(k, g.size()) = g;
    k += g.size();
  }
  return out;
}

Eigen::VectorXd convex_output(const ConvexProblem& prob, const ConvexSolution& sol) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(prob.N());
  for (int j = 0; j < prob.p(); ++j) {
    const Eigen::VectorXd D = prob.masks[static_cast<std::size_t>(j)].diag();
    f += D.cwiseProduct(prob.X * (sol.u_prime(j) - sol.u(j)));
  }
  return f;
}

ConvexSolution make_solution(const ConvexProblem& prob, const Eigen::VectorXd& flat) {
  const int d = prob.d();
  if (flat.size() != prob.group_count() * d) throw ConvexError("solution vector has wrong length");
  ConvexSolution sol;
  for (int g = 0; g < prob.group_count(); ++g) {
    sol.groups.push_back(flat.segment(g * d, d));
    sol.objective += sol.groups.back().norm();
  }
  const Eigen::VectorXd f = convex_output(prob, sol);
  sol.margin_slack = (prob.y.cwiseProduct(f).array() - 1.0).minCoeff();
  const Eigen::VectorXd s = prob.program.b - prob.program.A * flat;
  sol.cone_slack = prob.N() < s.size() ? s.tail(s.size() - prob.N()).minCoeff() : 0.0;
  return sol;
}

PrimalSolve solve_primal(const ConvexProblem& prob, const SolveOptions& opts) {
  SolveResult res = solve(prob.program, opts);
  PrimalSolve out;
  out.report = res.report;
  out.solution = make_solution(prob, res.x);
  const int N = prob.N();
  out.dual.lambda = prob.y.cwiseProduct(res.mu.head(N));
  for (int j = 0; j < prob.p(); ++j) {
    out.dual.z.push_back(res.mu.segment(N + 2 * j * N, N));
    out.dual.z_prime.push_back(res.mu.segment(N + (2 * j + 1) * N, N));
  }
  return out;
}

DualSolve solve_dual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<ActivationMask>& masks, const SolveOptions& opts) {
  const ConeProgram cp = build_dual_socp(X, y, masks);
  SolveResult res = solve(cp, opts);
  const int N = static_cast<int>(X.rows());
  DualSolve out;
  out.report = res.report;
  out.objective = -res.report.objective;
  out.dual.lambda = res.x.head(N);
  for (std::size_t j = 0; j < masks.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out.dual.z.push_back(res.x.segment(N + 2 * jj * N, N));
    out.dual.z_prime.push_back(res.x.segment(N + (2 * jj + 1) * N, N));
  }
  return out;
}

double nonzero_threshold(double objective) { return 1e-6 * (1.0 + objective); }

NetworkParams network_from_convex(const ConvexProblem& prob, const ConvexSolution& sol, double tol) {
  if (sol.margin_slack < -tol || sol.cone_slack < -tol) {
    throw ConvexError("solution is infeasible (margin slack " + std::to_string(sol.margin_slack) +
                      ", cone slack " + std::to_string(sol.cone_slack) + ")");
  }
  const double thr = nonzero_threshold(sol.objective);
  std::vector<Eigen::VectorXd> cols;
  std::vector<double> outs;
  for (int j = 0; j < prob.p(); ++j) {
    for (bool positive : {true, false}) {
      const Eigen::VectorXd& u = positive ? sol.u_prime(j) : sol.u(j);
      const double nu = u.norm();
      if (nu <= thr) continue;
      const double r = std::sqrt(nu);
      cols.push_back(u / r);
      outs.push_back(positive ? r : -r);
    }
  }
  if (cols.empty()) throw ConvexError("solution has no nonzero group; network would be empty");
  NetworkParams net;
  net.W1.resize(prob.d(), static_cast<Eigen::Index>(cols.size()));
  net.w2.resize(static_cast<Eigen::Index>(outs.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    net.W1.col(static_cast<Eigen::Index>(i)) = cols[i];
    net.w2(static_cast<Eigen::Index>(i)) = outs[i];
  }
  return net;
}

int match_mask(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
               const Eigen::VectorXd& w1) {
  const Eigen::VectorXd v = X * w1;
  const double nw = w1.norm();
  for (std::size_t j = 0; j < masks.size(); ++j) {
    bool ok = true;
    for (Eigen::Index n = 0; n < v.size() && ok; ++n) {
      const bool boundary = std::abs(v(n)) <= 1e-12 * X.row(n).norm() * nw;
      if (!boundary && masks[j][static_cast<int>(n)] != (v(n) > 0.0)) ok = false;
    }
    if (ok) return static_cast<int>(j);
  }
  return -1;
}

ConvexSolution convex_from_network(const ConvexProblem& prob, const NetworkParams& net,
                                   const std::vector<std::optional<ActivationMask>>& overrides) {
  const int d = prob.d();
  if (net.W1.rows() != d || net.W1.cols() != net.w2.size()) throw ConvexError("network shape mismatch");
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(prob.group_count() * d);
  for (int i = 0; i < net.width(); ++i) {
    const Eigen::VectorXd w1 = net.W1.col(i);
    const double a = net.w2(i);
    if (a == 0.0 || w1.norm() == 0.0) continue;
    int j = -1;
    if (static_cast<std::size_t>(i) < overrides.size() && overrides[static_cast<std::size_t>(i)]) {
      const auto& want = *overrides[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < prob.masks.size(); ++k) {
        if (prob.masks[k] == want) j = static_cast<int>(k);
      }
      if (j < 0) throw ConvexError("override mask " + want.str() + " is not in the mask list");
    } else {
      j = match_mask(prob.X, prob.masks, w1);
    }
    if (j < 0) {
      throw ConvexError("neuron " + std::to_string(i) + " has mask " + mask_of(prob.X, w1).str() +
                        " which is not realizable in the supplied list");
    }
    if (a > 0.0) flat.segment(prob.offset(j, true), d) += w1 * a;
    else flat.segment(prob.offset(j, false), d) -= w1 * a;
  }
  return make_solution(prob, flat);
}

std::optional<MarginResult> margin_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const NetworkParams& net) {
  if (net.width() == 0) return std::nullopt;
  const Eigen::VectorXd f = net.output(X);
  const double c = y.cwiseProduct(f).minCoeff();
  if (!(c > 0.0)) return std::nullopt;
  MarginResult out;
  out.min_margin = c;
  std::vector<int> keep;
  for (int i = 0; i < net.width(); ++i) {
    if (net.w2(i) != 0.0 && net.W1.col(i).norm() != 0.0) keep.push_back(i);
  }
  out.balanced.W1.resize(X.cols(), static_cast<Eigen::Index>(keep.size()));
  out.balanced.w2.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd w1 = net.W1.col(keep[k]) / c;
    const double w2 = net.w2(keep[k]);
    const double s = std::sqrt(w1.norm() / std::abs(w2));
    out.balanced.W1.col(kk) = w1 / s;
    out.balanced.w2(kk) = w2 * s;
  }
  out.value = out.balanced.w2.squaredNorm();
  return out;
}

ClassSolve solve_class(const Dataset& ds, int k, const std::vector<ActivationMask>& masks,
                       const SolveOptions& opts) {
  const Eigen::VectorXd y = class_labels(ds, k);
  ClassSolve out{build_primal(ds.X, y, masks), {}, {}};
  out.primal = solve_primal(out.problem, opts);
  out.dual = solve_dual(ds.X, y, masks, opts);
  return out;
}

MulticlassSolve solve_all_classes(const Dataset& ds, const std::vector<ActivationMask>& masks,
                                  const SolveOptions& opts) {
  MulticlassSolve out;
  const int K = class_count(ds);
  out.classes.resize(static_cast<std::size_t>(K));
  parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
    out.classes[k] = solve_class(ds, static_cast<int>(k), masks, opts);
  });
  for (const auto& c : out.classes) out.objective += c.primal.solution.objective;
  return out;
}

std::string group_name(const ConvexProblem& prob, int g) {
  const int j = g / 2;
  return std::string(g % 2 ? "u'[" : "u[") + prob.masks[static_cast<std::size_t>(j)].str() + "]";
}

OptimalFaceReport verify_optimal_face(const ConvexProblem& prob, const ConvexSolution& sol,
                                      double p_star, double tol, const FaceBoundOptions& opts) {
  const int G = prob.group_count();
  const int d = prob.d();
  if (static_cast<int>(sol.groups.size()) != G) throw ConvexError("solution has wrong group count");
  const double thr = nonzero_threshold(sol.objective);

  std::set<std::vector<int>> clusters;
  std::vector<char> covered(static_cast<std::size_t>(G), 0);
  for (int g = 0; g < G; ++g) {
    const Eigen::VectorXd& v = sol.groups[static_cast<std::size_t>(g)];
    if (v.norm() <= thr) continue;
    const Eigen::VectorXd h = prob.X * v / v.norm();
    std::vector<int> members;
    for (int k = g % 2; k < G; k += 2) {
      const Eigen::VectorXd sign = 2.0 * prob.masks[static_cast<std::size_t>(k / 2)].diag().array() - 1.0;
      if ((sign.cwiseProduct(h).array() >= -1e-6).all()) members.push_back(k);
    }
    if (std::find(members.begin(), members.end(), g) == members.end()) members.push_back(g);
    std::sort(members.begin(), members.end());
    clusters.insert(members);
  }

  OptimalFaceReport rep;
  rep.tolerance = tol;
  for (const auto& members : clusters) {
    std::string name;
    for (int g : members) {
      covered[static_cast<std::size_t>(g)] = 1;
      name += (name.empty() ? "" : "+") + group_name(prob, g);
    }
    for (int c = 0; c < d; ++c) {
      FaceFunctional f{name + ":" + std::to_string(c), members, c, true};
      for (int g : members) f.value += sol.groups[static_cast<std::size_t>(g)](c);
      rep.functionals.push_back(std::move(f));
    }
  }
  for (int g = 0; g < G; ++g) {
    if (covered[static_cast<std::size_t>(g)]) continue;
    for (int c = 0; c < d; ++c) {
      FaceFunctional f{group_name(prob, g) + ":" + std::to_string(c), {g}, c, false};
      f.value = sol.groups[static_cast<std::size_t>(g)](c);
      rep.functionals.push_back(std::move(f));
    }
  }

  const int n = static_cast<int>(prob.program.c.size());
  auto bounds = parallel_map<FaceBounds>(rep.functionals.size(), [&](std::size_t i) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int g : rep.functionals[i].groups) a(g * d + rep.functionals[i].coordinate) = 1.0;
    return optimal_face_bounds(prob.program, p_star, a, opts);
  });
  rep.verified = true;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    auto& f = rep.functionals[i];
    f.lower = bounds[i].lower;
    f.upper = bounds[i].upper;
    rep.inner_solves += bounds[i].inner_solves;
    const bool ok = f.active ? f.gap() <= tol : (f.lower >= -tol && f.upper <= tol);
    rep.verified = rep.verified && ok;
  }
  return rep;
}

}  // namespace relu_lab
