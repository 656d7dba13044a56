#pragma once

#include <Eigen/Dense>

namespace relu_lab {

/// Singular values below rel_tol * sigma_max count as zero.
constexpr double kRankTolerance = 1e-10;

int matrix_rank(const Eigen::MatrixXd& A, double rel_tol = kRankTolerance);

/// Moore-Penrose pseudoinverse via SVD with the same threshold as matrix_rank.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel_tol = kRankTolerance);

/// Orthonormal basis of the nullspace of A (columns); empty when A has full column rank.
Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& A, double rel_tol = kRankTolerance);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace relu_lab
