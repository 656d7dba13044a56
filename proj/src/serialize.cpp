#include "relu_lab/serialize.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

namespace relu_lab {

json to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

json to_json(const Eigen::MatrixXd& M) {
  json j = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) j.push_back(to_json(Eigen::VectorXd(M.row(r).transpose())));
  return j;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw std::runtime_error("expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::runtime_error("expected a nonempty array of rows");
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd M(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(j.at(r));
    if (row.size() != cols) throw std::runtime_error("ragged matrix rows");
    M.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return M;
}

json to_json(const SolveReport& r) {
  return {{"status", to_string(r.status)},     {"objective", r.objective},
          {"dual_objective", r.dual_objective}, {"primal_residual", r.primal_residual},
          {"dual_residual", r.dual_residual},   {"gap", r.gap},
          {"iterations", r.iterations}};
}

json solution_json(const ConvexProblem& prob, const ConvexSolution& sol, const Eigen::VectorXd& lambda) {
  json groups = json::array();
  const double thr = nonzero_threshold(sol.objective);
  for (int j = 0; j < prob.p(); ++j) {
    for (bool positive : {true, false}) {
      const Eigen::VectorXd& u = positive ? sol.u_prime(j) : sol.u(j);
      if (u.norm() <= thr) continue;
      groups.push_back({{"mask", prob.masks[static_cast<std::size_t>(j)].str()},
                        {"sign", positive ? "+" : "-"},
                        {"u", to_json(u)}});
    }
  }
  return {{"objective", sol.objective}, {"groups", groups}, {"lambda", to_json(lambda)}};
}

json to_json(const Certificate& c) {
  json j = {{"kind", to_string(c.kind)},
            {"verdict", c.verdict},
            {"slacks", c.slacks},
            {"tolerance", c.tolerance},
            {"value", c.value}};
  if (c.approximate) j["approximate"] = true;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

json to_json(const std::vector<Certificate>& cs) {
  json j = json::array();
  for (const auto& c : cs) j.push_back(to_json(c));
  return j;
}

json to_json(const NetworkParams& net) { return {{"W1", to_json(net.W1)}, {"w2", to_json(net.w2)}}; }

NetworkParams network_from_json(const json& j) {
  try {
    NetworkParams net{matrix_from_json(j.at("W1")), vector_from_json(j.at("w2"))};
    if (net.W1.cols() != net.w2.size()) throw std::runtime_error("W1 column count differs from w2 length");
    if (!net.W1.allFinite() || !net.w2.allFinite()) throw std::runtime_error("non-finite network weights");
    return net;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("network parse failure: ") + e.what());
  }
}

NetworkParams load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return network_from_json(json::parse(ss.str()));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("network parse failure: ") + e.what());
  }
}

void write_flow_csv(std::ostream& out, const FlowTrace& trace) {
  if (trace.records.empty()) return;
  const auto d = trace.records.front().params.W1.rows();
  out << "iter,loss,margin,neuron_id,r";
  for (Eigen::Index k = 0; k < d; ++k) out << ",u" << (k + 1);
  out << ",s,mask,alignment\n";
  out.precision(10);
  for (const auto& rec : trace.records) {
    for (std::size_t i = 0; i < rec.neurons.size(); ++i) {
      const auto& ns = rec.neurons[i];
      out << rec.iteration << ',' << rec.loss << ',';
      if (rec.margin) out << *rec.margin;
      out << ',' << i << ',' << ns.r;
      for (Eigen::Index k = 0; k < ns.u.size(); ++k) out << ',' << ns.u(k);
      out << ',' << ns.s << ',' << ns.mask << ',';
      if (ns.alignment) out << *ns.alignment;
      out << '\n';
    }
  }
}

}  // namespace relu_lab
