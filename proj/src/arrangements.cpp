#include "relu_lab/arrangements.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "relu_lab/parallel.hpp"
#include "relu_lab/solver.hpp"

namespace relu_lab {

std::string ActivationMask::str() const {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

Eigen::VectorXd ActivationMask::diag() const {
  Eigen::VectorXd v(size());
  for (int n = 0; n < size(); ++n) v(n) = (*this)[n] ? 1.0 : 0.0;
  return v;
}

int ActivationMask::count() const {
  return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

bool ActivationMask::dominates(const ActivationMask& other) const {
  if (other.size() != size()) return false;
  for (int n = 0; n < size(); ++n) {
    if (other[n] && !(*this)[n]) return false;
  }
  return true;
}

ActivationMask ActivationMask::from_string(const std::string& s) {
  ActivationMask m;
  for (char ch : s) {
    if (ch != '0' && ch != '1') throw ArrangementError("mask string must contain only 0/1: '" + s + "'");
    m.bits.push_back(ch == '1' ? 1 : 0);
  }
  return m;
}

ActivationMask ActivationMask::constant(int n, bool value) {
  return ActivationMask{std::vector<std::uint8_t>(static_cast<std::size_t>(n), value ? 1 : 0)};
}

std::string SignPattern::str() const {
  std::string s;
  for (auto v : signs) s.push_back(v > 0 ? '+' : (v < 0 ? '-' : '0'));
  return s;
}

bool SignPattern::has_zero() const {
  return std::find(signs.begin(), signs.end(), std::int8_t{0}) != signs.end();
}

ActivationMask SignPattern::positive_support() const {
  ActivationMask m;
  for (auto v : signs) m.bits.push_back(v > 0 ? 1 : 0);
  return m;
}

SignPattern SignPattern::from_string(const std::string& s) {
  SignPattern p;
  for (char ch : s) {
    if (ch == '+') p.signs.push_back(1);
    else if (ch == '-') p.signs.push_back(-1);
    else if (ch == '0') p.signs.push_back(0);
    else throw ArrangementError("sign pattern string must contain only -,0,+");
  }
  return p;
}

EnumerationMethod parse_method(const std::string& s) {
  if (s == "exhaustive") return EnumerationMethod::exhaustive;
  if (s == "sweep2d") return EnumerationMethod::sweep2d;
  throw ArrangementError("unknown enumeration method '" + s + "'");
}

ActivationMask mask_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& u) {
  const Eigen::VectorXd v = X * u;
  ActivationMask m;
  for (Eigen::Index n = 0; n < v.size(); ++n) m.bits.push_back(v(n) > 0.0 ? 1 : 0);
  return m;
}

ActivationMask closed_mask_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& u) {
  const Eigen::VectorXd v = X * u;
  ActivationMask m;
  for (Eigen::Index n = 0; n < v.size(); ++n) m.bits.push_back(v(n) >= 0.0 ? 1 : 0);
  return m;
}

SignPattern sign_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& u) {
  const Eigen::VectorXd v = X * u;
  SignPattern p;
  for (Eigen::Index n = 0; n < v.size(); ++n) p.signs.push_back(v(n) > 0.0 ? 1 : (v(n) < 0.0 ? -1 : 0));
  return p;
}

bool verify_mask_witness(const Eigen::MatrixXd& X, const ActivationMask& mask,
                         const Eigen::VectorXd& w, double tol) {
  if (mask.size() != X.rows()) return false;
  const Eigen::VectorXd v = X * w;
  const double nw = w.norm();
  for (int n = 0; n < mask.size(); ++n) {
    const double t = tol * X.row(n).norm() * nw;
    if (mask[n] ? v(n) < -t : v(n) >= -t) return false;
  }
  return true;
}

bool verify_sign_witness(const Eigen::MatrixXd& X, const SignPattern& sigma,
                         const Eigen::VectorXd& w, double tol) {
  if (sigma.size() != X.rows()) return false;
  const Eigen::VectorXd v = X * w;
  const double nw = w.norm();
  for (int n = 0; n < sigma.size(); ++n) {
    const double t = tol * X.row(n).norm() * nw;
    const int s = sigma.signs[static_cast<std::size_t>(n)];
    if (s > 0 && !(v(n) > t)) return false;
    if (s < 0 && !(v(n) < -t)) return false;
    if (s == 0 && std::abs(v(n)) > t) return false;
  }
  return true;
}

double cover_bound(int N, int r) {
  if (N < 2 || r < 1) throw ArrangementError("cover bound needs N >= 2 and r >= 1");
  const double rr = r;
  return 2.0 * rr * std::pow(std::numbers::e * (N - 1) / rr, rr);
}

std::string format_mask_matrix(const std::vector<ActivationMask>& masks) {
  std::ostringstream out;
  if (masks.empty()) return "[]\n";
  const int N = masks.front().size();
  out << '[';
  for (int n = 0; n < N; ++n) {
    out << (n ? " [" : "[");
    for (std::size_t j = 0; j < masks.size(); ++j) out << (j ? " " : "") << (masks[j][n] ? 1 : 0);
    out << ']';
    if (n + 1 < N) out << '\n';
  }
  out << "]\n";
  return out.str();
}

namespace {

// Depth-first search over prefixes of candidate patterns; each node holds
// the LP rows of its prefix and a witness for them.
struct PrefixSearch {
  const Eigen::MatrixXd& X;
  std::vector<int> alphabet;
  // Row a and relation for sample n taking symbol s.
  void (*row_for)(const Eigen::MatrixXd&, int n, int s, Eigen::VectorXd& a, Relation& rel);

  struct Node {
    std::vector<int> prefix;
    Eigen::MatrixXd rows;
    std::vector<Relation> rels;
    Eigen::VectorXd witness;
  };

  struct Leaves {
    std::vector<std::vector<int>> patterns;
    std::vector<Eigen::VectorXd> witnesses;
    long lp_calls = 0;
  };

  bool extend(const Node& parent, int s, Node& child, long& lp_calls) const {
    const int n = static_cast<int>(parent.prefix.size());
    Eigen::VectorXd a;
    Relation rel;
    row_for(X, n, s, a, rel);
    child.prefix = parent.prefix;
    child.prefix.push_back(s);
    child.rows.resize(parent.rows.rows() + 1, X.cols());
    if (parent.rows.rows()) child.rows.topRows(parent.rows.rows()) = parent.rows;
    child.rows.row(parent.rows.rows()) = a.transpose();
    child.rels = parent.rels;
    child.rels.push_back(rel);
    if (satisfies_rows(child.rows, child.rels, parent.witness, 1e-9)) {
      child.witness = parent.witness;
      return true;
    }
    ++lp_calls;
    LpFeasibility res = lp_feasible(child.rows, child.rels);
    if (res.verdict == LpVerdict::inconclusive) {
      LpOptions strict;
      strict.solve_tol = 1e-11;
      strict.max_iters = 2000000;
      ++lp_calls;
      res = lp_feasible(child.rows, child.rels, strict);
    }
    if (res.verdict == LpVerdict::inconclusive) {
      throw ArrangementError("realizability test inconclusive for prefix of length " +
                             std::to_string(child.prefix.size()) + " (phase-1 value " +
                             std::to_string(res.phase1_value) + ")");
    }
    if (res.verdict == LpVerdict::infeasible) return false;
    child.witness = res.witness;
    return true;
  }

  void descend(const Node& node, Leaves& out) const {
    if (static_cast<Eigen::Index>(node.prefix.size()) == X.rows()) {
      out.patterns.push_back(node.prefix);
      out.witnesses.push_back(node.witness);
      return;
    }
    for (int s : alphabet) {
      Node child;
      if (extend(node, s, child, out.lp_calls)) descend(child, out);
    }
  }

  Leaves run() const {
    const int N = static_cast<int>(X.rows());
    Node root{{}, Eigen::MatrixXd(0, X.cols()), {}, Eigen::VectorXd::Zero(X.cols())};
    std::vector<Node> frontier{root};
    long lp_calls = 0;
    const int split = std::min(N, 3);
    for (int depth = 0; depth < split; ++depth) {
      std::vector<Node> next;
      for (const auto& node : frontier) {
        for (int s : alphabet) {
          Node child;
          if (extend(node, s, child, lp_calls)) next.push_back(std::move(child));
        }
      }
      frontier = std::move(next);
    }
    auto parts = parallel_map<Leaves>(frontier.size(), [&](std::size_t i) {
      Leaves l;
      descend(frontier[i], l);
      return l;
    });
    Leaves all;
    all.lp_calls = lp_calls;
    for (auto& p : parts) {
      for (std::size_t k = 0; k < p.patterns.size(); ++k) {
        all.patterns.push_back(std::move(p.patterns[k]));
        all.witnesses.push_back(std::move(p.witnesses[k]));
      }
      all.lp_calls += p.lp_calls;
    }
    return all;
  }
};

void mask_row(const Eigen::MatrixXd& X, int n, int s, Eigen::VectorXd& a, Relation& rel) {
  a = X.row(n).transpose();
  rel = s ? Relation::ge_zero : Relation::le_minus_one;
}

void sign_row(const Eigen::MatrixXd& X, int n, int s, Eigen::VectorXd& a, Relation& rel) {
  a = X.row(n).transpose();
  if (s == 0) {
    rel = Relation::eq_zero;
  } else {
    if (s > 0) a = -a;
    rel = Relation::le_minus_one;
  }
}

// Candidate directions for d = 2: every hyperplane normal crossing plus the
// midpoint of every arc between consecutive crossings.
struct SweepPoint {
  Eigen::VectorXd w;
  std::vector<char> on_boundary;
};

std::vector<SweepPoint> sweep_points(const Eigen::MatrixXd& X) {
  if (X.cols() != 2) throw ArrangementError("sweep2d requires d = 2, got d = " + std::to_string(X.cols()));
  const double pi = std::numbers::pi;
  const auto wrap = [pi](double t) {
    while (t < -pi) t += 2 * pi;
    while (t >= pi) t -= 2 * pi;
    return t;
  };
  std::vector<double> angles;
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    if (X.row(n).squaredNorm() == 0.0) continue;
    const double phi = std::atan2(X(n, 1), X(n, 0));
    angles.push_back(wrap(phi + pi / 2));
    angles.push_back(wrap(phi - pi / 2));
  }
  std::sort(angles.begin(), angles.end());
  std::vector<double> uniq;
  for (double t : angles) {
    if (uniq.empty() || t - uniq.back() > 1e-12) uniq.push_back(t);
  }
  if (uniq.size() > 1 && uniq.front() + 2 * pi - uniq.back() <= 1e-12) uniq.pop_back();

  std::vector<SweepPoint> pts;
  auto add = [&](double t, bool critical) {
    SweepPoint p;
    p.w = Eigen::Vector2d(std::cos(t), std::sin(t));
    p.on_boundary.assign(static_cast<std::size_t>(X.rows()), 0);
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      const double nx = X.row(n).norm();
      if (nx == 0.0 || (critical && std::abs(X.row(n).dot(p.w)) <= 1e-10 * nx)) {
        p.on_boundary[static_cast<std::size_t>(n)] = 1;
      }
    }
    pts.push_back(std::move(p));
  };
  for (std::size_t k = 0; k < uniq.size(); ++k) {
    add(uniq[k], true);
    const double next = (k + 1 < uniq.size()) ? uniq[k + 1] : uniq.front() + 2 * pi;
    add(0.5 * (uniq[k] + next), false);
  }
  if (uniq.empty()) add(0.0, false);
  SweepPoint origin;
  origin.w = Eigen::Vector2d::Zero();
  origin.on_boundary.assign(static_cast<std::size_t>(X.rows()), 1);
  pts.push_back(std::move(origin));
  return pts;
}

template <class Pattern>
void sort_unique(std::vector<Pattern>& pats, std::vector<Eigen::VectorXd>& wit) {
  std::vector<std::size_t> idx(pats.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return pats[a] < pats[b]; });
  std::vector<Pattern> p2;
  std::vector<Eigen::VectorXd> w2;
  for (auto i : idx) {
    if (!p2.empty() && p2.back() == pats[i]) continue;
    p2.push_back(pats[i]);
    w2.push_back(wit[i]);
  }
  pats = std::move(p2);
  wit = std::move(w2);
}

}  // namespace

MaskSet enumerate_masks(const Eigen::MatrixXd& X, EnumerationMethod method) {
  if (X.rows() < 1 || X.cols() < 1) throw ArrangementError("empty data matrix");
  MaskSet out;
  if (method == EnumerationMethod::sweep2d) {
    for (const auto& p : sweep_points(X)) {
      ActivationMask m;
      const Eigen::VectorXd v = X * p.w;
      for (Eigen::Index n = 0; n < X.rows(); ++n) {
        m.bits.push_back(p.on_boundary[static_cast<std::size_t>(n)] || v(n) > 0.0 ? 1 : 0);
      }
      out.masks.push_back(std::move(m));
      out.witnesses.push_back(p.w);
    }
    sort_unique(out.masks, out.witnesses);
    return out;
  }
  if (X.rows() > kMaxExhaustiveSamples) {
    throw ArrangementError("exhaustive enumeration limited to N <= " +
                           std::to_string(kMaxExhaustiveSamples) + ", got N = " +
                           std::to_string(X.rows()));
  }
  PrefixSearch search{X, {0, 1}, &mask_row};
  auto leaves = search.run();
  out.lp_calls = leaves.lp_calls;
  for (std::size_t k = 0; k < leaves.patterns.size(); ++k) {
    ActivationMask m;
    for (int s : leaves.patterns[k]) m.bits.push_back(static_cast<std::uint8_t>(s));
    out.masks.push_back(std::move(m));
    out.witnesses.push_back(std::move(leaves.witnesses[k]));
  }
  return out;
}

SignPatternSet enumerate_sign_patterns(const Eigen::MatrixXd& X, EnumerationMethod method) {
  if (X.rows() < 1 || X.cols() < 1) throw ArrangementError("empty data matrix");
  SignPatternSet out;
  if (method == EnumerationMethod::sweep2d) {
    for (const auto& p : sweep_points(X)) {
      SignPattern s;
      const Eigen::VectorXd v = X * p.w;
      for (Eigen::Index n = 0; n < X.rows(); ++n) {
        s.signs.push_back(p.on_boundary[static_cast<std::size_t>(n)] ? 0 : (v(n) > 0.0 ? 1 : -1));
      }
      out.patterns.push_back(std::move(s));
      out.witnesses.push_back(p.w);
    }
    sort_unique(out.patterns, out.witnesses);
    return out;
  }
  if (X.rows() > kMaxSignPatternSamples) {
    throw ArrangementError("sign-pattern enumeration limited to N <= " +
                           std::to_string(kMaxSignPatternSamples) + ", got N = " +
                           std::to_string(X.rows()));
  }
  PrefixSearch search{X, {-1, 0, 1}, &sign_row};
  auto leaves = search.run();
  out.lp_calls = leaves.lp_calls;
  for (std::size_t k = 0; k < leaves.patterns.size(); ++k) {
    SignPattern s;
    for (int v : leaves.patterns[k]) s.signs.push_back(static_cast<std::int8_t>(v));
    out.patterns.push_back(std::move(s));
    out.witnesses.push_back(std::move(leaves.witnesses[k]));
  }
  return out;
}

}  // namespace relu_lab
