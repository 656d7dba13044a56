#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relu_lab/arrangements.hpp"
#include "relu_lab/dataset.hpp"
#include "relu_lab/solver.hpp"

namespace relu_lab {

class ConvexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-layer ReLU network f(x) = (x'W1)_+ w2; column i of W1 is neuron i.
struct NetworkParams {
  Eigen::MatrixXd W1;
  Eigen::VectorXd w2;

  int width() const { return static_cast<int>(w2.size()); }
  Eigen::VectorXd output(const Eigen::MatrixXd& X) const;
};

/// Primal program over 2p groups of size d.  Group 2j is u_j (negative
/// output), group 2j+1 is u'_j (positive output).  Rows: N margin rows, then
/// for every mask N cone rows for u_j followed by N cone rows for u'_j.
struct ConvexProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<ActivationMask> masks;
  ConeProgram program;

  int N() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  int p() const { return static_cast<int>(masks.size()); }
  int group_count() const { return 2 * p(); }
  /// First variable of u_j (positive == false) or u'_j (positive == true).
  int offset(int j, bool positive) const { return (2 * j + (positive ? 1 : 0)) * d(); }
};

ConvexProblem build_primal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const std::vector<ActivationMask>& masks);

/// Variables: lambda (N), then for every mask z+_j (N) and z-_j (N).
/// Minimizes -y'lambda, so the SOCP value is minus the reported objective.
ConeProgram build_dual_socp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::vector<ActivationMask>& masks);

struct ConvexSolution {
  std::vector<Eigen::VectorXd> groups;  // indexed like ConvexProblem groups
  double objective = 0.0;
  double margin_slack = 0.0;  // min_n y_n f_n - 1
  double cone_slack = 0.0;    // min over cone rows

  const Eigen::VectorXd& u(int j) const { return groups[static_cast<std::size_t>(2 * j)]; }
  const Eigen::VectorXd& u_prime(int j) const { return groups[static_cast<std::size_t>(2 * j + 1)]; }
  Eigen::VectorXd flat() const;
};

struct DualVariable {
  Eigen::VectorXd lambda;
  std::vector<Eigen::VectorXd> z;        // multiplier of u_j cone rows
  std::vector<Eigen::VectorXd> z_prime;  // multiplier of u'_j cone rows
};

ConvexSolution make_solution(const ConvexProblem& prob, const Eigen::VectorXd& flat);

/// f = sum_j D_j X (u'_j - u_j).
Eigen::VectorXd convex_output(const ConvexProblem& prob, const ConvexSolution& sol);

struct PrimalSolve {
  ConvexSolution solution;
  DualVariable dual;
  SolveReport report;
};

struct DualSolve {
  DualVariable dual;
  double objective = 0.0;
  SolveReport report;
};

PrimalSolve solve_primal(const ConvexProblem& prob, const SolveOptions& opts = {});
DualSolve solve_dual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<ActivationMask>& masks, const SolveOptions& opts = {});

/// Groups with |u| above this count as active neurons.
double nonzero_threshold(double objective);

NetworkParams network_from_convex(const ConvexProblem& prob, const ConvexSolution& sol,
                                  double tol = 1e-6);

/// Maps neurons onto masks (strict mask with boundary bits completed toward
/// the lexicographically smallest listed mask) and sums neurons sharing a
/// mask.  overrides, when given, fixes the mask of each neuron.
ConvexSolution convex_from_network(const ConvexProblem& prob, const NetworkParams& net,
                                   const std::vector<std::optional<ActivationMask>>& overrides = {});

/// Index of the mask assigned to a neuron direction w1, or -1.
int match_mask(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
               const Eigen::VectorXd& w1);

struct MarginResult {
  NetworkParams balanced;
  double min_margin = 0.0;  // c = min_n y_n f_n before rescaling
  double value = 0.0;
};

/// Rescales a separating network to unit margin, balances each neuron and
/// returns sum w2^2.  Empty when min_n y_n f_n <= 0.
std::optional<MarginResult> margin_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const NetworkParams& net);

struct ClassSolve {
  ConvexProblem problem;
  PrimalSolve primal;
  DualSolve dual;
};

ClassSolve solve_class(const Dataset& ds, int k, const std::vector<ActivationMask>& masks,
                       const SolveOptions& opts = {});

struct MulticlassSolve {
  std::vector<ClassSolve> classes;
  double objective = 0.0;
};

MulticlassSolve solve_all_classes(const Dataset& ds, const std::vector<ActivationMask>& masks,
                                  const SolveOptions& opts = {});

/// "u[011]" or "u'[011]".
std::string group_name(const ConvexProblem& prob, int g);

struct FaceFunctional {
  std::string name;
  std::vector<int> groups;  // coordinate is summed over these groups
  int coordinate = 0;
  bool active = false;
  double value = 0.0;  // at the computed solution
  double lower = 0.0;
  double upper = 0.0;
  double gap() const { return upper - lower; }
};

struct OptimalFaceReport {
  std::vector<FaceFunctional> functionals;
  double tolerance = 0.0;
  bool verified = false;
  int inner_solves = 0;
};

/// Bounds every coordinate of the optimal set.  Each nonzero group and the
/// same-sign groups whose closed cone contains its direction form an active
/// cluster, bounded through the cluster sum; all other groups are bounded
/// one by one.  verified: active gaps <= tol and inactive bounds in [-tol, tol].
OptimalFaceReport verify_optimal_face(const ConvexProblem& prob, const ConvexSolution& sol,
                                      double p_star, double tol = 1e-3,
                                      const FaceBoundOptions& opts = {});

}  // namespace relu_lab
