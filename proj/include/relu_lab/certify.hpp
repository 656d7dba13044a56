#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relu_lab/arrangements.hpp"
#include "relu_lab/convex.hpp"
#include "relu_lab/geometry.hpp"

namespace relu_lab {

class CertifyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeuronKKT {
  int index = 0;
  int sign = 0;  // sign of w2_i
  ActivationMask strict_mask;
  ActivationMask completed_mask;  // D-hat
  std::vector<int> boundary;
  bool enumerated = true;
  double direction_residual = 0.0;  // |w1/w2 - X'D-hat lambda|
  double norm_residual = 0.0;       // ||X'D-hat lambda| - 1|
};

struct KKTExtraction {
  std::vector<NeuronKKT> neurons;
  Eigen::VectorXd complementary_slackness;  // |lambda_n (y_n f_n - 1)|
  double max_direction_residual() const;
  double max_norm_residual() const;
};

constexpr double kBoundaryTolerance = 1e-7;
constexpr int kMaxEnumeratedBoundary = 12;

KKTExtraction extract_kkt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const NetworkParams& net,
                          const Eigen::VectorXd& lambda, double tol_boundary = kBoundaryTolerance);

enum class CertificateKind { dual_feasible, ortho_coverage, spike_free, local_max, local_min, convex_kkt };
std::string to_string(CertificateKind k);

struct Certificate {
  CertificateKind kind = CertificateKind::dual_feasible;
  bool verdict = false;
  std::vector<double> slacks;
  double tolerance = 0.0;
  double value = 0.0;
  bool approximate = false;
  std::string note;
};

/// verdict: polar gauge over the masks <= 1 + tol.  Slacks are per-mask
/// magnitude minus one.
Certificate dual_feasible(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
                          const Eigen::VectorXd& lambda, double tol = 1e-6,
                          GaugeObjective objective = GaugeObjective::masked);

std::vector<Certificate> dual_feasible_classes(const Eigen::MatrixXd& X,
                                               const std::vector<ActivationMask>& masks,
                                               const Eigen::MatrixXd& Lambda, double tol = 1e-6);

/// Some positive neuron's D-hat covers every y = +1 sample and some negative
/// neuron's D-hat covers every y = -1 sample.  Slacks: uncovered counts of
/// the best neuron on each side.
Certificate ortho_coverage(const KKTExtraction& ext, const Eigen::VectorXd& y);

/// Sampling check of max |X^+ (Xu)_+| <= 1 over unit u with (Xu)_+ in range(X).
/// d = 2 sweeps grid angles plus every hyperplane crossing; larger d samples
/// grid random directions from the seed.
Certificate spike_free(const Eigen::MatrixXd& X, int grid = 4096, double tol = 1e-9,
                       std::uint64_t seed = 0);

enum class ExtremumKind { local_max, local_min, neither };
std::string to_string(ExtremumKind k);

struct LocalExtremumResult {
  ExtremumKind kind = ExtremumKind::neither;
  double alignment = 0.0;
  bool covers_positive = false;  // <u, x_n> > 0 for every y_n = +1
};

/// Requires an orthogonal separable dataset and g(u, y) != 0.
LocalExtremumResult local_extremum(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& u, double tol = 1e-9);

struct ConvexKKTReport {
  double stationarity_u = 0.0;        // -X'D_j lambda + X'S_j z_j in d|u_j|
  double stationarity_u_prime = 0.0;  // X'D_j lambda + X'S_j z'_j in d|u'_j|
  double margin_slackness = 0.0;      // lambda_n (y_n f_n - 1)
  double cone_slackness_u = 0.0;
  double cone_slackness_u_prime = 0.0;
  double primal_infeasibility = 0.0;
  double dual_sign_violation = 0.0;  // negative parts of y .* lambda, z, z'
  double max_family() const;
};

ConvexKKTReport convex_kkt_residuals(const ConvexProblem& prob, const ConvexSolution& sol,
                                     const DualVariable& dual);

Certificate convex_kkt_certificate(const ConvexKKTReport& rep, double tol);

/// Convex variables and multipliers built from a nonconvex KKT point: groups
/// come from convex_from_network with the extracted D-hat masks, z vanishes
/// on nonzero groups and is fitted on zero groups.
struct LiftedKKT {
  ConvexSolution solution;
  DualVariable dual;
};

LiftedKKT lift_kkt_point(const ConvexProblem& prob, const NetworkParams& net,
                         const KKTExtraction& ext, const Eigen::VectorXd& lambda);

}  // namespace relu_lab
