#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace relu_lab {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ConeKind { zero, nonnegative, second_order };

/// A run of consecutive constraint rows.  For second_order blocks the first
/// row is the scalar t and the remaining rows the vector part: t >= |v|.
struct ConeBlock {
  ConeKind kind;
  int size;
};

/// minimize c'x + sum_g |x_g|_2  subject to  b - A x in K.
struct ConeProgram {
  Eigen::VectorXd c;
  std::vector<std::vector<int>> norm_groups;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<ConeBlock> cones;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_rows() const { return static_cast<int>(b.size()); }

  /// Throws SolverError on inconsistent dimensions, overlapping groups or
  /// cone blocks that do not tile the rows.
  void validate() const;
};

enum class SolveStatus { optimal, max_iters, infeasible_suspected };
std::string to_string(SolveStatus s);

struct TraceRow {
  long iteration;
  double objective;
  double primal_residual;
  double dual_residual;
  double gap;
};

struct SolveOptions {
  double tol = 1e-8;
  long max_iters = 200000;
  int check_every = 50;
  bool record_trace = false;
  std::optional<Eigen::VectorXd> x0;
  std::optional<Eigen::VectorXd> mu0;
};

struct SolveReport {
  SolveStatus status = SolveStatus::max_iters;
  double objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  long iterations = 0;
  double wall_seconds = 0.0;
};

struct SolveResult {
  Eigen::VectorXd x;
  /// Multipliers of b - Ax in K; they lie in the dual cone.
  Eigen::VectorXd mu;
  SolveReport report;
  std::vector<TraceRow> trace;
};

/// Restarted primal-dual hybrid gradient.  Deterministic for fixed inputs.
SolveResult solve(const ConeProgram& prog, const SolveOptions& opts = {});

double primal_objective(const ConeProgram& prog, const Eigen::VectorXd& x);
double dual_objective(const ConeProgram& prog, const Eigen::VectorXd& mu);

struct Residuals {
  double primal;  // relative distance of b - Ax to K
  double dual;    // relative violation of the dual norm constraints
  double gap;     // relative duality gap
};

Residuals evaluate_residuals(const ConeProgram& prog, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& mu);

/// prox of tau*|.|_2 at v.
Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double tau);
/// Euclidean projection onto {(t, v) : t >= |v|}.
Eigen::VectorXd project_soc(const Eigen::VectorXd& tv);

/// Largest singular value of A estimated by power iteration.
double operator_norm_estimate(const Eigen::MatrixXd& A, int iters = 50);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

// ---------------------------------------------------------------------------
// LP feasibility

enum class Relation { ge_zero, le_minus_one, eq_zero };

enum class LpVerdict { feasible, infeasible, inconclusive };
std::string to_string(LpVerdict v);

struct LpOptions {
  double witness_tol = 1e-9;
  double infeasible_threshold = 1e-6;
  double solve_tol = 1e-9;
  long max_iters = 200000;
};

struct LpFeasibility {
  LpVerdict verdict = LpVerdict::inconclusive;
  Eigen::VectorXd witness;
  double phase1_value = 0.0;
  SolveReport report;
};

/// Decides whether some w satisfies every row a_r'w (relation_r).
LpFeasibility lp_feasible(const Eigen::MatrixXd& rows, const std::vector<Relation>& relations,
                          const LpOptions& opts = {});

/// Checks a candidate witness against the rows to absolute tolerance tol.
bool satisfies_rows(const Eigen::MatrixXd& rows, const std::vector<Relation>& relations,
                    const Eigen::VectorXd& w, double tol);

// ---------------------------------------------------------------------------
// Optimal face bounds

struct FaceBoundOptions {
  double slack = 1e-7;
  double inner_tol = 1e-11;
  long inner_max_iters = 400000;
  int search_iters = 48;
  double nu_span = 1e9;
};

struct FaceBounds {
  double lower = 0.0;
  double upper = 0.0;
  int inner_solves = 0;
};

/// Outer bounds on min/max of functional'x over feasible points whose
/// objective is at most p_star + slack.  Requires c == 0 and every variable
/// in a norm group.  Each bound comes from a Lagrangian relaxation of the
/// objective budget, so lower <= true minimum and upper >= true maximum.
FaceBounds optimal_face_bounds(const ConeProgram& prog, double p_star,
                               const Eigen::VectorXd& functional,
                               const FaceBoundOptions& opts = {});

}  // namespace relu_lab
