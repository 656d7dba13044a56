#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "relu_lab/arrangements.hpp"
#include "relu_lab/solver.hpp"

namespace relu_lab {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Sense { max, min };

/// masked maximizes lambda' D_j X u over the cone of D_j; linear drops D_j
/// and maximizes lambda' X u over the same cone.
enum class GaugeObjective { masked, linear };

struct ExtremePointResult {
  Eigen::VectorXd u;
  double value = 0.0;
  ActivationMask mask;
  std::vector<int> active;  // rows n with (2D_j - I) X u = 0
  SolveReport report;
};

/// Optimizes lambda' D_j X u (sense max or min) over |u| <= 1, (2D_j - I)Xu >= 0.
ExtremePointResult extreme_point(const Eigen::MatrixXd& X, const ActivationMask& mask,
                                 const Eigen::VectorXd& lambda, Sense sense,
                                 GaugeObjective objective = GaugeObjective::masked,
                                 double tol = 1e-8);

struct MaskGauge {
  ActivationMask mask;
  double max_value;
  double min_value;
  double magnitude() const;
};

struct PolarGaugeReport {
  double gauge = 0.0;
  std::vector<MaskGauge> per_mask;
  int argmax_mask = -1;
};

/// gauge = max over masks of max(|max value|, |min value|).
PolarGaugeReport polar_gauge(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
                             const Eigen::VectorXd& lambda,
                             GaugeObjective objective = GaugeObjective::masked,
                             double tol = 1e-8);

struct StationaryResult {
  Eigen::VectorXd u;
  double residual = 0.0;
  int iterations = 0;
  ActivationMask mask;
};

/// Fixed point of u <- X'D(u)lambda / |X'D(u)lambda| with D(u) strict.
/// Throws GeometryError on a vanishing update or on a mask cycle.
StationaryResult stationary_direction(const Eigen::MatrixXd& X, const Eigen::VectorXd& lambda,
                                      const Eigen::VectorXd& u0, int max_iters = 1000,
                                      double tol = 1e-10);

/// |u - X'D(u)lambda / |X'D(u)lambda||, or +inf when the reference vector vanishes.
double stationary_residual(const Eigen::MatrixXd& X, const Eigen::VectorXd& lambda,
                           const Eigen::VectorXd& u);

struct EllipsoidTrace {
  Eigen::VectorXd theta;
  Eigen::MatrixXd points;  // row i is (X u_i)_+
};

/// (X [cos t, sin t]')_+ for t = 2 pi i / M.  Requires d = 2 and M >= 3.
EllipsoidTrace rectified_ellipsoid_samples(const Eigen::MatrixXd& X, int M);

}  // namespace relu_lab
