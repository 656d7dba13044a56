#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relu_lab/arrangements.hpp"
#include "relu_lab/convex.hpp"
#include "relu_lab/dataset.hpp"
#include "relu_lab/geometry.hpp"

namespace relu_lab {

class FlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FlowConfig {
  int m = 8;
  double init_scale = 1e-4;
  double step = 1.0;
  long iters = 10000;
  std::vector<long> checkpoints;
  std::uint64_t seed = 0;
  /// Alignment target 1 - delta tracked every align_every steps (0 = off).
  double delta = 0.05;
  long align_every = 0;
  std::size_t event_cap = 100000;

  void validate() const;
};

/// w1_i = eps g_i/|g_i| with g_i standard normal, w2_i = +-eps.
NetworkParams init_balanced(const FlowConfig& cfg, int d);

/// lambda~_n = y_n / (1 + exp(q_n)) with q = y .* f.
Eigen::VectorXd lambda_tilde(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const NetworkParams& net);
double logistic_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net);

/// sum over n with sigma_n > 0 of lambda_n x_n.
Eigen::VectorXd g_vector(const Eigen::MatrixXd& X, const SignPattern& sigma, const Eigen::VectorXd& lambda);
Eigen::VectorXd g_vector(const Eigen::MatrixXd& X, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda);

struct GMinMax {
  double g_min = 0.0;
  double g_max = 0.0;
  SignPattern argmin;
  SignPattern argmax;
};

/// Extremes of |g(sigma, y/4)| over the patterns, ignoring vanishing g for g_min.
GMinMax g_min_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const std::vector<SignPattern>& patterns);

/// One forward-Euler step; lambda~ is computed from net unless injected.
NetworkParams step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                   double eta, const std::optional<Eigen::VectorXd>& injected = std::nullopt);

/// cos of the angle between u and X'D(u)lambda; empty when the reference vanishes.
std::optional<double> alignment(const Eigen::MatrixXd& X, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& lambda);

struct NeuronState {
  double r = 0.0;  // log |w1_i|
  Eigen::VectorXd u;
  int s = 0;  // sign of w2_i
  std::string mask;
  std::optional<double> alignment;  // against s * y
};

struct FlowRecord {
  long iteration = 0;
  double loss = 0.0;
  Eigen::VectorXd lambda_tilde;
  std::vector<NeuronState> neurons;
  std::optional<double> margin;
  NetworkParams params;
};

struct SignEvent {
  long iteration;
  int neuron;
  std::string before;
  std::string after;
};

struct FlowTrace {
  std::vector<FlowRecord> records;
  std::vector<SignEvent> events;  // most recent events, capped
  long total_events = 0;
  std::vector<char> sign_condition;  // sign(w2_i) matches sign(u_i'X'D(u_i)y) at initialization
  std::vector<int> initial_signs;
  double max_balance_drift = 0.0;
  bool sign_flip = false;
  std::optional<long> first_aligned;  // first step some conditioned neuron hit 1 - delta
  double best_alignment = -1.0;       // over conditioned neurons and tracked steps
  bool aborted = false;
  long iterations_run = 0;

  const FlowRecord& final_record() const { return records.back(); }
};

/// Runs cfg.iters steps from the given parameters.
FlowTrace simulate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& init,
                   const FlowConfig& cfg);

/// Balanced initialization followed by simulate() for class k.
FlowTrace run_flow(const Dataset& ds, const FlowConfig& cfg, int k = 0);
std::vector<FlowTrace> run_flow_classes(const Dataset& ds, const FlowConfig& cfg);

struct RetriedFlow {
  FlowTrace trace;
  std::uint64_t seed = 0;
  int trials = 0;
  bool reached = false;
};

/// Reruns with seeds cfg.seed, cfg.seed + 1, ... until the final loss is at
/// most loss_target or max_trials runs are spent.
RetriedFlow run_flow_retry(const Dataset& ds, FlowConfig cfg, double loss_target, int max_trials,
                           int k = 0);

struct TimeBounds {
  double delta = 0.0;
  double g0 = 0.0;
  double v0u0 = 0.0;
  double T_star = 0.0;
  double T_shift(double c) const;
};

TimeBounds time_bounds(double delta, double g0, double v0u0);

/// Distinct strict masks of the neurons with nonzero output weight.
std::vector<ActivationMask> network_masks(const Eigen::MatrixXd& X, const NetworkParams& net);

struct DualRecovery {
  Eigen::VectorXd lambda_tilde;
  Eigen::VectorXd lambda;
  double gauge_network = 0.0;  // of the unit-norm lambda~, over network masks
  double gauge_all = 0.0;      // of the rescaled lambda, over all masks
};

DualRecovery recover_dual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                          const std::vector<ActivationMask>& masks_network,
                          const std::vector<ActivationMask>& masks_all,
                          GaugeObjective objective = GaugeObjective::masked);

}  // namespace relu_lab
