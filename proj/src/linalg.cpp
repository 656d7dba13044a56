#include "relu_lab/linalg.hpp"

#include <limits>

namespace relu_lab {

namespace {

double threshold(const Eigen::VectorXd& sv, double rel_tol) {
  return sv.size() == 0 ? 0.0 : rel_tol * sv(0);
}

}  // namespace

int matrix_rank(const Eigen::MatrixXd& A, double rel_tol) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double t = threshold(sv, rel_tol);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) r += sv(i) > t ? 1 : 0;
  return r;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel_tol) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(A.cols(), A.rows());
  if (A.size() == 0) return out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv(0) == 0.0) return out;
  const double t = threshold(sv, rel_tol);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > t) out += svd.matrixV().col(i) * (1.0 / sv(i)) * svd.matrixU().col(i).transpose();
  }
  return out;
}

Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& A, double rel_tol) {
  const Eigen::Index n = A.cols();
  if (A.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double t = sv(0) == 0.0 ? std::numeric_limits<double>::infinity() : threshold(sv, rel_tol);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) r += (sv(0) > 0.0 && sv(i) > t) ? 1 : 0;
  return svd.matrixV().rightCols(n - r);
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace relu_lab
