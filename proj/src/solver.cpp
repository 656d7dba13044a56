#include "relu_lab/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "relu_lab/linalg.hpp"

namespace relu_lab {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::infeasible_suspected: return "infeasible-suspected";
  }
  return "unknown";
}

std::string to_string(LpVerdict v) {
  switch (v) {
    case LpVerdict::feasible: return "feasible";
    case LpVerdict::infeasible: return "infeasible";
    case LpVerdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

void ConeProgram::validate() const {
  const Eigen::Index n = c.size();
  if (A.cols() != n) throw SolverError("constraint matrix column count differs from objective size");
  if (A.rows() != b.size()) throw SolverError("constraint matrix row count differs from offset size");
  long covered = 0;
  for (const auto& blk : cones) {
    if (blk.size < 1) throw SolverError("empty cone block");
    covered += blk.size;
  }
  if (covered != b.size()) throw SolverError("cone blocks do not tile the constraint rows");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto& g : norm_groups) {
    if (g.empty()) throw SolverError("empty norm group");
    for (int i : g) {
      if (i < 0 || i >= n) throw SolverError("norm group index out of range");
      if (seen[static_cast<std::size_t>(i)]) throw SolverError("variable appears in two norm groups");
      seen[static_cast<std::size_t>(i)] = 1;
    }
  }
  if (!c.allFinite() || !A.allFinite() || !b.allFinite()) throw SolverError("non-finite program data");
}

Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double tau) {
  const double nv = v.norm();
  if (nv <= tau) return Eigen::VectorXd::Zero(v.size());
  return (1.0 - tau / nv) * v;
}

Eigen::VectorXd project_soc(const Eigen::VectorXd& tv) {
  const double t = tv(0);
  const Eigen::Index k = tv.size() - 1;
  const double nx = k > 0 ? tv.tail(k).norm() : 0.0;
  if (nx <= t) return tv;
  if (nx <= -t) return Eigen::VectorXd::Zero(tv.size());
  const double a = 0.5 * (t + nx);
  Eigen::VectorXd out(tv.size());
  out(0) = a;
  if (k > 0) out.tail(k) = (a / nx) * tv.tail(k);
  return out;
}

double operator_norm_estimate(const Eigen::MatrixXd& A, int iters) {
  if (A.size() == 0) return 0.0;
  Eigen::VectorXd v(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.3 + std::cos(1.7 * static_cast<double>(i));
  v.normalize();
  double est = 0.0;
  for (int k = 0; k < iters; ++k) {
    Eigen::VectorXd w = A.transpose() * (A * v);
    const double nw = w.norm();
    if (nw == 0.0) return (A * v).norm();
    est = std::sqrt(nw);
    v = w / nw;
  }
  return std::max(est, (A * v).norm());
}

namespace {

std::vector<int> group_index(const ConeProgram& prog) {
  std::vector<int> g(static_cast<std::size_t>(prog.num_vars()), -1);
  for (std::size_t k = 0; k < prog.norm_groups.size(); ++k) {
    for (int i : prog.norm_groups[k]) g[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return g;
}

// Projection onto the dual cone: zero-cone multipliers are free.
void project_dual(const ConeProgram& prog, Eigen::VectorXd& mu) {
  Eigen::Index r = 0;
  for (const auto& blk : prog.cones) {
    switch (blk.kind) {
      case ConeKind::zero: break;
      case ConeKind::nonnegative:
        mu.segment(r, blk.size) = mu.segment(r, blk.size).cwiseMax(0.0);
        break;
      case ConeKind::second_order:
        mu.segment(r, blk.size) = project_soc(mu.segment(r, blk.size));
        break;
    }
    r += blk.size;
  }
}

Eigen::VectorXd cone_violation(const ConeProgram& prog, const Eigen::VectorXd& s) {
  Eigen::VectorXd v(s.size());
  Eigen::Index r = 0;
  for (const auto& blk : prog.cones) {
    auto seg = s.segment(r, blk.size);
    switch (blk.kind) {
      case ConeKind::zero: v.segment(r, blk.size) = seg; break;
      case ConeKind::nonnegative: v.segment(r, blk.size) = seg.cwiseMin(0.0); break;
      case ConeKind::second_order: v.segment(r, blk.size) = seg - project_soc(seg); break;
    }
    r += blk.size;
  }
  return v;
}

struct Measures {
  double primal_obj, dual_obj;
  double rp2, rd2;
  double rp_rel, rd_rel, gap_rel;
  double worst() const { return std::max({rp_rel, rd_rel, gap_rel}); }
};

struct Evaluator {
  const ConeProgram& prog;
  std::vector<int> group_of;
  double b_inf, c_inf;

  explicit Evaluator(const ConeProgram& p)
      : prog(p),
        group_of(group_index(p)),
        b_inf(p.b.size() ? p.b.lpNorm<Eigen::Infinity>() : 0.0),
        c_inf(p.c.size() ? p.c.lpNorm<Eigen::Infinity>() : 0.0) {}

  double group_norm_sum(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (const auto& g : prog.norm_groups) {
      double q = 0.0;
      for (int i : g) q += x(i) * x(i);
      s += std::sqrt(q);
    }
    return s;
  }

  // Returns (2-norm, inf-norm) of the dual constraint violation.
  std::pair<double, double> dual_violation(const Eigen::VectorXd& r) const {
    double s2 = 0.0, sinf = 0.0;
    for (const auto& g : prog.norm_groups) {
      double q = 0.0;
      for (int i : g) q += r(i) * r(i);
      const double e = std::max(0.0, std::sqrt(q) - 1.0);
      s2 += e * e;
      sinf = std::max(sinf, e);
    }
    for (std::size_t i = 0; i < group_of.size(); ++i) {
      if (group_of[i] < 0) {
        const double e = std::abs(r(static_cast<Eigen::Index>(i)));
        s2 += e * e;
        sinf = std::max(sinf, e);
      }
    }
    return {std::sqrt(s2), sinf};
  }

  Measures measure(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::VectorXd& Ax,
                   const Eigen::VectorXd& ATmu) const {
    Measures m{};
    m.primal_obj = prog.c.dot(x) + group_norm_sum(x);
    m.dual_obj = prog.b.size() ? -prog.b.dot(mu) : 0.0;
    if (prog.b.size()) {
      const Eigen::VectorXd viol = cone_violation(prog, prog.b - Ax);
      m.rp2 = viol.norm();
      m.rp_rel = viol.lpNorm<Eigen::Infinity>() / (1.0 + b_inf);
    }
    const auto [d2, dinf] = dual_violation(prog.c + ATmu);
    m.rd2 = d2;
    m.rd_rel = dinf / (1.0 + c_inf);
    m.gap_rel = std::abs(m.primal_obj - m.dual_obj) /
                (1.0 + std::abs(m.primal_obj) + std::abs(m.dual_obj));
    return m;
  }
};

double kkt_error(const Measures& m, double omega) {
  const double g = m.primal_obj - m.dual_obj;
  return std::sqrt(omega * omega * m.rp2 * m.rp2 + m.rd2 * m.rd2 / (omega * omega) + g * g);
}

}  // namespace

double primal_objective(const ConeProgram& prog, const Eigen::VectorXd& x) {
  return prog.c.dot(x) + Evaluator(prog).group_norm_sum(x);
}

double dual_objective(const ConeProgram& prog, const Eigen::VectorXd& mu) {
  return prog.b.size() ? -prog.b.dot(mu) : 0.0;
}

Residuals evaluate_residuals(const ConeProgram& prog, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& mu) {
  const Evaluator ev(prog);
  const Eigen::VectorXd Ax = prog.A * x;
  const Eigen::VectorXd ATmu = prog.A.transpose() * mu;
  const Measures m = ev.measure(x, mu, Ax, ATmu);
  return {m.rp_rel, m.rd_rel, m.gap_rel};
}

SolveResult solve(const ConeProgram& prog, const SolveOptions& opts) {
  prog.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = prog.c.size();
  const Eigen::Index m = prog.b.size();
  const Evaluator ev(prog);

  Eigen::VectorXd x = opts.x0 ? *opts.x0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mu = opts.mu0 ? *opts.mu0 : Eigen::VectorXd::Zero(m);
  if (x.size() != n || mu.size() != m) throw SolverError("warm start has wrong dimension");
  project_dual(prog, mu);

  const double normA = operator_norm_estimate(prog.A);
  const double eta = normA > 0.0 ? 0.9 / normA : 1.0;
  double omega = 1.0;
  {
    const double nc = prog.c.norm(), nb = prog.b.norm();
    if (nc > 1e-10 && nb > 1e-10) omega = std::clamp(nc / nb, 1e-3, 1e3);
  }

  Eigen::VectorXd Ax = prog.A * x;
  Eigen::VectorXd ATmu = prog.A.transpose() * mu;

  Eigen::VectorXd x_sum = Eigen::VectorXd::Zero(n), mu_sum = Eigen::VectorXd::Zero(m);
  long avg_count = 0;
  Eigen::VectorXd x_restart = x, mu_restart = mu;
  double kkt_restart = kkt_error(ev.measure(x, mu, Ax, ATmu), omega);
  double kkt_prev_candidate = std::numeric_limits<double>::infinity();
  long last_restart = 0;

  SolveResult best;
  best.x = x;
  best.mu = mu;
  Measures best_m = ev.measure(x, mu, Ax, ATmu);
  double best_worst = best_m.worst();

  Eigen::VectorXd v(n), x_new(n), mu_new(m), Ax_new(m);
  long it = 0;
  bool converged = false;
  for (it = 1; it <= opts.max_iters && !converged; ++it) {
    const double tau = eta / omega, sigma = eta * omega;
    v = x - tau * (prog.c + ATmu);
    x_new = v;
    for (const auto& g : prog.norm_groups) {
      double q = 0.0;
      for (int i : g) q += v(i) * v(i);
      const double nv = std::sqrt(q);
      const double scale = nv <= tau ? 0.0 : 1.0 - tau / nv;
      for (int i : g) x_new(i) = scale * v(i);
    }
    Ax_new = prog.A * x_new;
    mu_new = mu + sigma * (2.0 * Ax_new - Ax - prog.b);
    project_dual(prog, mu_new);
    x.swap(x_new);
    mu.swap(mu_new);
    Ax.swap(Ax_new);
    ATmu.noalias() = prog.A.transpose() * mu;
    x_sum += x;
    mu_sum += mu;
    ++avg_count;

    if (it % opts.check_every != 0 && it != opts.max_iters) continue;

    const Measures cur = ev.measure(x, mu, Ax, ATmu);
    const Eigen::VectorXd x_avg = x_sum / static_cast<double>(avg_count);
    const Eigen::VectorXd mu_avg = mu_sum / static_cast<double>(avg_count);
    const Eigen::VectorXd Ax_avg = prog.A * x_avg;
    const Eigen::VectorXd ATmu_avg = prog.A.transpose() * mu_avg;
    const Measures avg = ev.measure(x_avg, mu_avg, Ax_avg, ATmu_avg);
    const double kkt_cur = kkt_error(cur, omega), kkt_avg = kkt_error(avg, omega);
    const bool use_avg = kkt_avg < kkt_cur;
    const Measures& cand = use_avg ? avg : cur;
    const double kkt_cand = use_avg ? kkt_avg : kkt_cur;

    if (opts.record_trace) {
      best.trace.push_back({it, cand.primal_obj, cand.rp_rel, cand.rd_rel, cand.gap_rel});
    }
    if (cand.worst() < best_worst) {
      best_worst = cand.worst();
      best_m = cand;
      best.x = use_avg ? x_avg : x;
      best.mu = use_avg ? mu_avg : mu;
    }
    if (best_worst <= opts.tol) {
      converged = true;
      break;
    }

    const bool restart = kkt_cand <= 0.2 * kkt_restart ||
                         (kkt_cand <= 0.8 * kkt_restart && kkt_cand > kkt_prev_candidate) ||
                         (it - last_restart) >= static_cast<long>(0.36 * static_cast<double>(it));
    kkt_prev_candidate = kkt_cand;
    if (restart) {
      if (use_avg) {
        x = x_avg;
        mu = mu_avg;
        Ax = Ax_avg;
        ATmu = ATmu_avg;
      }
      const double dx = (x - x_restart).norm(), dmu = (mu - mu_restart).norm();
      if (dx > 1e-10 && dmu > 1e-10) {
        omega = std::exp(0.5 * std::log(dmu / dx) + 0.5 * std::log(omega));
        omega = std::clamp(omega, 1e-4, 1e4);
      }
      x_restart = x;
      mu_restart = mu;
      kkt_restart = kkt_error(ev.measure(x, mu, Ax, ATmu), omega);
      kkt_prev_candidate = std::numeric_limits<double>::infinity();
      x_sum.setZero();
      mu_sum.setZero();
      avg_count = 0;
      last_restart = it;
    }
  }

  SolveReport& rep = best.report;
  rep.iterations = std::min(it, opts.max_iters);
  rep.objective = best_m.primal_obj;
  rep.dual_objective = best_m.dual_obj;
  rep.primal_residual = best_m.rp_rel;
  rep.dual_residual = best_m.rd_rel;
  rep.gap = best_m.gap_rel;
  if (converged) {
    rep.status = SolveStatus::optimal;
  } else if (best_m.rp_rel > 1e-3 &&
             std::abs(best_m.dual_obj) > 1e6 * (1.0 + std::abs(best_m.primal_obj))) {
    rep.status = SolveStatus::infeasible_suspected;
  } else {
    rep.status = SolveStatus::max_iters;
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iteration,objective,primal_res,dual_res,gap\n";
  out.precision(12);
  for (const auto& r : trace) {
    out << r.iteration << ',' << r.objective << ',' << r.primal_residual << ','
        << r.dual_residual << ',' << r.gap << '\n';
  }
}

// ---------------------------------------------------------------------------

bool satisfies_rows(const Eigen::MatrixXd& rows, const std::vector<Relation>& relations,
                    const Eigen::VectorXd& w, double tol) {
  const Eigen::VectorXd v = rows * w;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    switch (relations[static_cast<std::size_t>(r)]) {
      case Relation::ge_zero:
        if (v(r) < -tol) return false;
        break;
      case Relation::le_minus_one:
        if (v(r) > -1.0 + tol) return false;
        break;
      case Relation::eq_zero:
        if (std::abs(v(r)) > tol) return false;
        break;
    }
  }
  return true;
}

namespace {

// Snap near-active homogeneous rows to exact equality, then rescale so every
// margin row holds.
std::optional<Eigen::VectorXd> polish_witness(const Eigen::MatrixXd& rows,
                                              const std::vector<Relation>& rel,
                                              const Eigen::VectorXd& w0, double tol) {
  const Eigen::Index R = rows.rows();
  Eigen::VectorXd w = w0;
  std::vector<char> active(static_cast<std::size_t>(R), 0);
  for (Eigen::Index r = 0; r < R; ++r) {
    if (rel[static_cast<std::size_t>(r)] == Relation::eq_zero) active[static_cast<std::size_t>(r)] = 1;
  }
  for (int round = 0; round < 4; ++round) {
    const double scale = std::max(1.0, w.norm());
    const Eigen::VectorXd v = rows * w;
    for (Eigen::Index r = 0; r < R; ++r) {
      const double nr = rows.row(r).norm();
      if (rel[static_cast<std::size_t>(r)] == Relation::ge_zero && v(r) <= 1e-6 * nr * scale) {
        active[static_cast<std::size_t>(r)] = 1;
      }
    }
    std::vector<Eigen::Index> idx;
    for (Eigen::Index r = 0; r < R; ++r) {
      if (active[static_cast<std::size_t>(r)]) idx.push_back(r);
    }
    if (!idx.empty()) {
      Eigen::MatrixXd Aact(static_cast<Eigen::Index>(idx.size()), rows.cols());
      for (std::size_t k = 0; k < idx.size(); ++k) Aact.row(static_cast<Eigen::Index>(k)) = rows.row(idx[k]);
      const Eigen::MatrixXd Nb = nullspace_basis(Aact);
      w = Nb * (Nb.transpose() * w);
    }
    double need = 0.0;
    bool ok = true;
    const Eigen::VectorXd v2 = rows * w;
    for (Eigen::Index r = 0; r < R; ++r) {
      if (rel[static_cast<std::size_t>(r)] == Relation::le_minus_one) {
        if (!(v2(r) < 0.0)) {
          ok = false;
          break;
        }
        need = std::max(need, 1.0 / -v2(r));
      }
    }
    if (!ok) return std::nullopt;
    if (need > 0.0) w *= need;
    if (satisfies_rows(rows, rel, w, tol)) return w;
  }
  return std::nullopt;
}

}  // namespace

LpFeasibility lp_feasible(const Eigen::MatrixXd& rows, const std::vector<Relation>& relations,
                          const LpOptions& opts) {
  if (static_cast<std::size_t>(rows.rows()) != relations.size()) {
    throw SolverError("row count differs from relation count");
  }
  if (!rows.allFinite()) throw SolverError("non-finite LP coefficients");
  const Eigen::Index dim = rows.cols();
  LpFeasibility out;
  out.witness = Eigen::VectorXd::Zero(dim);
  if (satisfies_rows(rows, relations, out.witness, opts.witness_tol)) {
    out.verdict = LpVerdict::feasible;
    return out;
  }

  std::vector<Eigen::Index> eq, ge, le;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double nr = rows.row(r).norm();
    switch (relations[static_cast<std::size_t>(r)]) {
      case Relation::eq_zero:
        if (nr > 0.0) eq.push_back(r);
        break;
      case Relation::ge_zero:
        if (nr > 0.0) ge.push_back(r);
        break;
      case Relation::le_minus_one:
        if (nr == 0.0) {
          out.verdict = LpVerdict::infeasible;
          out.phase1_value = 1.0;
          return out;
        }
        le.push_back(r);
        break;
    }
  }

  // Phase 1 on unit-normalized rows: min sum s  s.t.  a'w - s <= -1, s >= 0.
  const auto ne = static_cast<Eigen::Index>(eq.size()), ng = static_cast<Eigen::Index>(ge.size()),
             nl = static_cast<Eigen::Index>(le.size());
  ConeProgram p1;
  p1.c = Eigen::VectorXd::Zero(dim + nl);
  p1.c.tail(nl).setOnes();
  p1.A = Eigen::MatrixXd::Zero(ne + ng + 2 * nl, dim + nl);
  p1.b = Eigen::VectorXd::Zero(ne + ng + 2 * nl);
  Eigen::Index r = 0;
  for (auto i : eq) p1.A.row(r++).head(dim) = rows.row(i) / rows.row(i).norm();
  for (auto i : ge) p1.A.row(r++).head(dim) = -rows.row(i) / rows.row(i).norm();
  for (Eigen::Index k = 0; k < nl; ++k, ++r) {
    const auto i = le[static_cast<std::size_t>(k)];
    p1.A.row(r).head(dim) = rows.row(i) / rows.row(i).norm();
    p1.A(r, dim + k) = -1.0;
    p1.b(r) = -1.0;
  }
  for (Eigen::Index k = 0; k < nl; ++k, ++r) p1.A(r, dim + k) = -1.0;
  if (ne > 0) p1.cones.push_back({ConeKind::zero, static_cast<int>(ne)});
  if (ng + 2 * nl > 0) p1.cones.push_back({ConeKind::nonnegative, static_cast<int>(ng + 2 * nl)});

  SolveOptions so;
  so.tol = opts.solve_tol;
  so.max_iters = opts.max_iters;
  SolveResult res = solve(p1, so);
  out.report = res.report;
  out.phase1_value = res.report.dual_objective;

  if (auto w = polish_witness(rows, relations, res.x.head(dim), opts.witness_tol)) {
    out.verdict = LpVerdict::feasible;
    out.witness = *w;
    return out;
  }
  if (res.report.status == SolveStatus::optimal &&
      res.report.dual_objective > opts.infeasible_threshold) {
    out.verdict = LpVerdict::infeasible;
    return out;
  }
  out.verdict = LpVerdict::inconclusive;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Lower bound on min a'x over the budgeted feasible set.
double face_lower_bound(const ConeProgram& prog, double p_star, const Eigen::VectorXd& a,
                        const FaceBoundOptions& opts, int& solves) {
  const double budget = p_star + opts.slack;
  double nu0 = 0.0;
  for (const auto& g : prog.norm_groups) {
    double q = 0.0;
    for (int i : g) q += a(i) * a(i);
    nu0 = std::max(nu0, std::sqrt(q));
  }
  if (nu0 == 0.0) return 0.0;

  ConeProgram inner = prog;
  std::optional<Eigen::VectorXd> wx, wmu;

  auto eval = [&](double t) {
    const double nu = nu0 * std::exp(t);
    inner.c = a / nu;
    SolveOptions so;
    so.tol = opts.inner_tol;
    so.max_iters = opts.inner_max_iters;
    so.x0 = wx;
    so.mu0 = wmu;
    SolveResult r = solve(inner, so);
    ++solves;
    wx = r.x;
    wmu = r.mu;
    const Eigen::VectorXd red = inner.c + prog.A.transpose() * r.mu;
    double excess = 0.0;
    for (const auto& g : prog.norm_groups) {
      double q = 0.0;
      for (int i : g) q += red(i) * red(i);
      excess += std::max(0.0, std::sqrt(q) - 1.0);
    }
    const double certified = -prog.b.dot(r.mu) - budget * excess;
    return nu * (certified - budget);
  };

  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.0, hi = std::log(opts.nu_span);
  double best = -budget * nu0 * static_cast<double>(prog.norm_groups.size());
  double t1 = hi - phi * (hi - lo), t2 = lo + phi * (hi - lo);
  double f1 = eval(t1), f2 = eval(t2);
  best = std::max({best, f1, f2});
  for (int k = 0; k < opts.search_iters; ++k) {
    if (f1 < f2) {
      lo = t1;
      t1 = t2;
      f1 = f2;
      t2 = lo + phi * (hi - lo);
      f2 = eval(t2);
      best = std::max(best, f2);
    } else {
      hi = t2;
      t2 = t1;
      f2 = f1;
      t1 = hi - phi * (hi - lo);
      f1 = eval(t1);
      best = std::max(best, f1);
    }
  }
  return best;
}

}  // namespace

FaceBounds optimal_face_bounds(const ConeProgram& prog, double p_star,
                               const Eigen::VectorXd& functional, const FaceBoundOptions& opts) {
  prog.validate();
  if (functional.size() != prog.c.size()) throw SolverError("functional has wrong dimension");
  if (prog.c.lpNorm<Eigen::Infinity>() != 0.0) {
    throw SolverError("face bounds need a pure group-norm objective");
  }
  const auto group_of = group_index(prog);
  for (int g : group_of) {
    if (g < 0) throw SolverError("face bounds need every variable in a norm group");
  }
  FaceBounds fb;
  fb.lower = face_lower_bound(prog, p_star, functional, opts, fb.inner_solves);
  fb.upper = -face_lower_bound(prog, p_star, -functional, opts, fb.inner_solves);
  return fb;
}

}  // namespace relu_lab
