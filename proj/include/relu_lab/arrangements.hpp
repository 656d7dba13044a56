#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace relu_lab {

class ArrangementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kMaxExhaustiveSamples = 22;
constexpr int kMaxSignPatternSamples = 13;

/// Diagonal of D_j as a bit vector; orders lexicographically by its string.
struct ActivationMask {
  std::vector<std::uint8_t> bits;

  int size() const { return static_cast<int>(bits.size()); }
  bool operator[](int n) const { return bits[static_cast<std::size_t>(n)] != 0; }
  std::string str() const;
  Eigen::VectorXd diag() const;
  int count() const;
  bool dominates(const ActivationMask& other) const;

  static ActivationMask from_string(const std::string& s);
  static ActivationMask constant(int n, bool value);

  friend bool operator==(const ActivationMask& a, const ActivationMask& b) { return a.bits == b.bits; }
  friend bool operator<(const ActivationMask& a, const ActivationMask& b) { return a.bits < b.bits; }
};

/// Entries in {-1, 0, +1}; str() writes them as '-', '0', '+'.
struct SignPattern {
  std::vector<std::int8_t> signs;

  int size() const { return static_cast<int>(signs.size()); }
  std::string str() const;
  bool has_zero() const;
  ActivationMask positive_support() const;

  static SignPattern from_string(const std::string& s);

  friend bool operator==(const SignPattern& a, const SignPattern& b) { return a.signs == b.signs; }
  friend bool operator<(const SignPattern& a, const SignPattern& b) { return a.signs < b.signs; }
};

enum class EnumerationMethod { exhaustive, sweep2d };

EnumerationMethod parse_method(const std::string& s);

struct MaskSet {
  std::vector<ActivationMask> masks;
  std::vector<Eigen::VectorXd> witnesses;
  long lp_calls = 0;
};

struct SignPatternSet {
  std::vector<SignPattern> patterns;
  std::vector<Eigen::VectorXd> witnesses;
  long lp_calls = 0;
};

/// All realizable I(Xw >= 0), deduplicated and in lexicographic order.
MaskSet enumerate_masks(const Eigen::MatrixXd& X, EnumerationMethod method = EnumerationMethod::exhaustive);

/// All realizable sign(Xw), in lexicographic order with - < 0 < +.
SignPatternSet enumerate_sign_patterns(const Eigen::MatrixXd& X,
                                       EnumerationMethod method = EnumerationMethod::exhaustive);

/// Strict mask I(Xu > 0).
ActivationMask mask_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& u);
/// Closed mask I(Xu >= 0).
ActivationMask closed_mask_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& u);
SignPattern sign_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& u);

/// Checks that w realizes the mask: set bits have x'w >= -tol*|x||w|, clear
/// bits x'w < -tol*|x||w|.
bool verify_mask_witness(const Eigen::MatrixXd& X, const ActivationMask& mask,
                         const Eigen::VectorXd& w, double tol = 1e-9);
bool verify_sign_witness(const Eigen::MatrixXd& X, const SignPattern& sigma,
                         const Eigen::VectorXd& w, double tol = 1e-9);

/// 2r(e(N-1)/r)^r.
double cover_bound(int N, int r);

/// Notebook layout: row n lists bit n of every mask.
std::string format_mask_matrix(const std::vector<ActivationMask>& masks);

}  // namespace relu_lab
