#include "relu_lab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include "relu_lab/linalg.hpp"
#include "relu_lab/parallel.hpp"

namespace relu_lab {

void FlowConfig::validate() const {
  if (m < 1) throw FlowError("neuron count must be at least 1");
  if (!(init_scale > 0.0)) throw FlowError("init scale must be positive");
  if (!(step > 0.0)) throw FlowError("step size must be positive");
  if (iters < 0) throw FlowError("iteration count must be nonnegative");
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (checkpoints[k] < 1 || checkpoints[k] > iters) {
      throw FlowError("checkpoint " + std::to_string(checkpoints[k]) + " outside [1, iters]");
    }
    if (k && checkpoints[k] <= checkpoints[k - 1]) throw FlowError("checkpoints must be increasing");
  }
}

NetworkParams init_balanced(const FlowConfig& cfg, int d) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  NetworkParams net{Eigen::MatrixXd(d, cfg.m), Eigen::VectorXd(cfg.m)};
  for (int i = 0; i < cfg.m; ++i) {
    Eigen::VectorXd g(d);
    do {
      for (int k = 0; k < d; ++k) g(k) = normal(rng);
    } while (g.norm() == 0.0);
    net.W1.col(i) = cfg.init_scale * g / g.norm();
    net.w2(i) = coin(rng) ? cfg.init_scale : -cfg.init_scale;
  }
  return net;
}

Eigen::VectorXd lambda_tilde(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const NetworkParams& net) {
  const Eigen::VectorXd q = y.cwiseProduct(net.output(X));
  Eigen::VectorXd lt(q.size());
  for (Eigen::Index n = 0; n < q.size(); ++n) lt(n) = y(n) / (1.0 + std::exp(q(n)));
  return lt;
}

double logistic_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net) {
  const Eigen::VectorXd q = y.cwiseProduct(net.output(X));
  double l = 0.0;
  for (Eigen::Index n = 0; n < q.size(); ++n) l += q(n) > -30.0 ? std::log1p(std::exp(-q(n))) : -q(n);
  return l;
}

Eigen::VectorXd g_vector(const Eigen::MatrixXd& X, const SignPattern& sigma, const Eigen::VectorXd& lambda) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(X.cols());
  for (int n = 0; n < sigma.size(); ++n) {
    if (sigma.signs[static_cast<std::size_t>(n)] > 0) g += lambda(n) * X.row(n).transpose();
  }
  return g;
}

Eigen::VectorXd g_vector(const Eigen::MatrixXd& X, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  return g_vector(X, sign_of(X, u), lambda);
}

GMinMax g_min_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<SignPattern>& patterns) {
  const Eigen::VectorXd lam = y / 4.0;
  GMinMax out;
  bool any = false;
  out.g_max = -1.0;
  for (const auto& s : patterns) {
    const double v = g_vector(X, s, lam).norm();
    if (v > out.g_max) {
      out.g_max = v;
      out.argmax = s;
    }
    if (v > 1e-12 && (!any || v < out.g_min)) {
      out.g_min = v;
      out.argmin = s;
      any = true;
    }
  }
  if (!any) throw FlowError("g vanishes for every sign pattern");
  return out;
}

NetworkParams step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                   double eta, const std::optional<Eigen::VectorXd>& injected) {
  const Eigen::VectorXd lt = injected ? *injected : lambda_tilde(X, y, net);
  const Eigen::MatrixXd H = X * net.W1;
  const Eigen::MatrixXd active = (H.array() > 0.0).cast<double>().matrix();
  NetworkParams next = net;
  const Eigen::MatrixXd G = X.transpose() * active.cwiseProduct(lt.replicate(1, H.cols()));
  next.W1 += eta * G * net.w2.asDiagonal();
  next.w2 += eta * H.cwiseMax(0.0).transpose() * lt;
  return next;
}

std::optional<double> alignment(const Eigen::MatrixXd& X, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd ref = X.transpose() * mask_of(X, u).diag().cwiseProduct(lambda);
  if (ref.norm() == 0.0 || u.norm() == 0.0) return std::nullopt;
  return cosine(u, ref);
}

namespace {

FlowRecord make_record(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                       long t) {
  FlowRecord rec;
  rec.iteration = t;
  rec.loss = logistic_loss(X, y, net);
  rec.lambda_tilde = lambda_tilde(X, y, net);
  rec.params = net;
  for (int i = 0; i < net.width(); ++i) {
    NeuronState ns;
    const Eigen::VectorXd w1 = net.W1.col(i);
    const double nw = w1.norm();
    ns.r = std::log(nw);
    ns.u = nw > 0.0 ? Eigen::VectorXd(w1 / nw) : Eigen::VectorXd::Zero(w1.size());
    ns.s = net.w2(i) > 0.0 ? 1 : (net.w2(i) < 0.0 ? -1 : 0);
    ns.mask = mask_of(X, w1).str();
    if (nw > 0.0 && ns.s != 0) ns.alignment = alignment(X, ns.u, ns.s * y);
    rec.neurons.push_back(std::move(ns));
  }
  if (auto mo = margin_objective(X, y, net)) rec.margin = mo->value;
  return rec;
}

}  // namespace

FlowTrace simulate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& init,
                   const FlowConfig& cfg) {
  if (init.W1.rows() != X.cols()) throw FlowError("initial parameters have wrong input dimension");
  FlowTrace tr;
  NetworkParams net = init;
  const int m = net.width();
  for (int i = 0; i < m; ++i) {
    const double proj = y.dot((X * net.W1.col(i)).cwiseMax(0.0));
    const int s = net.w2(i) > 0.0 ? 1 : (net.w2(i) < 0.0 ? -1 : 0);
    tr.initial_signs.push_back(s);
    tr.sign_condition.push_back((proj > 0.0 ? 1 : (proj < 0.0 ? -1 : 0)) == s && s != 0);
  }
  tr.records.push_back(make_record(X, y, net, 0));

  std::vector<std::string> sigma(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) sigma[static_cast<std::size_t>(i)] = sign_of(X, net.W1.col(i)).str();
  std::deque<SignEvent> events;
  std::size_t next_cp = 0;

  auto track_alignment = [&](long t) {
    for (int i = 0; i < m; ++i) {
      if (!tr.sign_condition[static_cast<std::size_t>(i)]) continue;
      const Eigen::VectorXd w1 = net.W1.col(i);
      if (w1.norm() == 0.0 || net.w2(i) == 0.0) continue;
      const double s = net.w2(i) > 0.0 ? 1.0 : -1.0;
      if (auto a = alignment(X, w1 / w1.norm(), s * y)) {
        tr.best_alignment = std::max(tr.best_alignment, *a);
        if (!tr.first_aligned && *a >= 1.0 - cfg.delta) tr.first_aligned = t;
      }
    }
  };

  for (long t = 1; t <= cfg.iters; ++t) {
    NetworkParams next = step(X, y, net, cfg.step);
    if (!next.W1.allFinite() || !next.w2.allFinite()) {
      tr.aborted = true;
      break;
    }
    net = std::move(next);
    tr.iterations_run = t;
    for (int i = 0; i < m; ++i) {
      const double drift = std::abs(net.W1.col(i).squaredNorm() - net.w2(i) * net.w2(i));
      tr.max_balance_drift = std::max(tr.max_balance_drift, drift);
      const int s = net.w2(i) > 0.0 ? 1 : (net.w2(i) < 0.0 ? -1 : 0);
      if (s != tr.initial_signs[static_cast<std::size_t>(i)]) tr.sign_flip = true;
      std::string now = sign_of(X, net.W1.col(i)).str();
      auto& prev = sigma[static_cast<std::size_t>(i)];
      if (now != prev) {
        ++tr.total_events;
        events.push_back({t, i, prev, now});
        if (events.size() > cfg.event_cap) events.pop_front();
        prev = std::move(now);
      }
    }
    if (cfg.align_every > 0 && t % cfg.align_every == 0) track_alignment(t);
    if (next_cp < cfg.checkpoints.size() && cfg.checkpoints[next_cp] == t) {
      FlowRecord rec = make_record(X, y, net, t);
      if (!std::isfinite(rec.loss)) {
        tr.aborted = true;
        break;
      }
      tr.records.push_back(std::move(rec));
      ++next_cp;
    }
  }
  if (cfg.align_every > 0) track_alignment(tr.iterations_run);
  tr.events.assign(events.begin(), events.end());
  return tr;
}

FlowTrace run_flow(const Dataset& ds, const FlowConfig& cfg, int k) {
  cfg.validate();
  const Eigen::VectorXd y = class_labels(ds, k);
  return simulate(ds.X, y, init_balanced(cfg, ds.d()), cfg);
}

std::vector<FlowTrace> run_flow_classes(const Dataset& ds, const FlowConfig& cfg) {
  cfg.validate();
  const int K = class_count(ds);
  return parallel_map<FlowTrace>(static_cast<std::size_t>(K),
                                 [&](std::size_t k) { return run_flow(ds, cfg, static_cast<int>(k)); });
}

RetriedFlow run_flow_retry(const Dataset& ds, FlowConfig cfg, double loss_target, int max_trials,
                           int k) {
  if (max_trials < 1) throw FlowError("max_trials must be at least 1");
  RetriedFlow out;
  const std::uint64_t base = cfg.seed;
  for (int t = 0; t < max_trials; ++t) {
    cfg.seed = base + static_cast<std::uint64_t>(t);
    out.trace = run_flow(ds, cfg, k);
    out.seed = cfg.seed;
    out.trials = t + 1;
    if (!out.trace.aborted && out.trace.final_record().loss <= loss_target) {
      out.reached = true;
      break;
    }
  }
  return out;
}

namespace {

double shift_log(double s, double c) {
  const double num = s + c, den = s - c;
  if (!(num > 0.0) || !(den > 0.0)) throw FlowError("time bound log argument is nonpositive");
  return std::log(num / den);
}

}  // namespace

double TimeBounds::T_shift(double c) const {
  const double s = std::sqrt(1.0 - delta / 8.0);
  return (shift_log(s, c) - shift_log(s, v0u0)) / (2.0 * g0 * s);
}

TimeBounds time_bounds(double delta, double g0, double v0u0) {
  if (!(delta > 0.0 && delta < 1.0)) throw FlowError("delta must lie in (0, 1)");
  if (!(g0 > 0.0)) throw FlowError("g0 must be positive");
  const double s = std::sqrt(1.0 - delta / 8.0);
  if (!(std::abs(v0u0) < s)) throw FlowError("initial alignment outside the admissible interval");
  TimeBounds tb{delta, g0, v0u0, 0.0};
  tb.T_star = tb.T_shift(1.0 - delta);
  return tb;
}

std::vector<ActivationMask> network_masks(const Eigen::MatrixXd& X, const NetworkParams& net) {
  std::vector<ActivationMask> out;
  for (int i = 0; i < net.width(); ++i) {
    if (net.w2(i) == 0.0) continue;
    out.push_back(mask_of(X, net.W1.col(i)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

DualRecovery recover_dual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                          const std::vector<ActivationMask>& masks_network,
                          const std::vector<ActivationMask>& masks_all, GaugeObjective objective) {
  DualRecovery out;
  out.lambda_tilde = lambda_tilde(X, y, net);
  const double nl = out.lambda_tilde.norm();
  if (nl == 0.0) throw FlowError("lambda~ vanishes");
  const Eigen::VectorXd unit = out.lambda_tilde / nl;
  const auto& scope = masks_network.empty() ? masks_all : masks_network;
  out.gauge_network = polar_gauge(X, scope, unit, objective).gauge;
  if (out.gauge_network == 0.0) throw FlowError("gauge over network masks vanishes");
  out.lambda = unit / out.gauge_network;
  out.gauge_all = polar_gauge(X, masks_all, out.lambda, objective).gauge;
  return out;
}

}  // namespace relu_lab
