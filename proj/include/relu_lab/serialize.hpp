#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "relu_lab/certify.hpp"
#include "relu_lab/convex.hpp"
#include "relu_lab/flow.hpp"
#include "relu_lab/solver.hpp"

namespace relu_lab {

using json = nlohmann::json;

json to_json(const Eigen::VectorXd& v);
json to_json(const Eigen::MatrixXd& M);
Eigen::VectorXd vector_from_json(const json& j);
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const SolveReport& r);

/// {"objective", "groups": [{"mask", "sign", "u"}], "lambda"}; only groups
/// above the nonzero threshold are listed.
json solution_json(const ConvexProblem& prob, const ConvexSolution& sol, const Eigen::VectorXd& lambda);

json to_json(const Certificate& c);
json to_json(const std::vector<Certificate>& cs);

/// {"W1": d rows of m entries, "w2": [m]}.
json to_json(const NetworkParams& net);
NetworkParams network_from_json(const json& j);
NetworkParams load_network_file(const std::string& path);

/// Columns: iter, loss, margin, neuron_id, r, u1..ud, s, mask, alignment.
void write_flow_csv(std::ostream& out, const FlowTrace& trace);

}  // namespace relu_lab
