#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace relu_lab {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training data: rows of X are samples.  With K == 0 the labels are binary
/// (+1/-1); with K >= 1 they are class indices in 1..K.
struct Dataset {
  std::string name;
  Eigen::MatrixXd X;
  Eigen::VectorXi labels;
  int K = 0;

  int N() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  bool is_binary() const { return K == 0; }

  /// Binary labels as reals.  Throws for multiclass datasets.
  Eigen::VectorXd binary_labels() const;
};

/// Validates and assembles a dataset; throws DatasetError on any violation.
Dataset make_dataset(std::string name, Eigen::MatrixXd X, Eigen::VectorXi labels, int K = 0);

/// Parses the JSON dataset schema: {"name", "X", "y", "K"(optional)}.
Dataset parse_dataset(const std::string& json_text);
Dataset load_dataset_file(const std::string& path);

/// Names: "notebook", "appendix-ortho", "appendix-nonspikefree".
std::vector<std::string> builtin_dataset_names();
std::optional<Dataset> builtin_dataset(const std::string& name);

/// Built-in name first, then a JSON file path.
Dataset load_dataset(const std::string& source);

/// Entry (n,k) is +1 iff labels[n] == k+1, else -1.
struct EncodedLabels {
  Eigen::MatrixXd Y;
  Eigen::VectorXd column(int k) const { return Y.col(k); }
};

EncodedLabels encode_labels(const Eigen::VectorXi& labels, int K);

/// Per-class binary labels: the binary vector itself for K == 0, column k of
/// the encoded matrix otherwise.
Eigen::VectorXd class_labels(const Dataset& ds, int k);
int class_count(const Dataset& ds);

enum class SeparabilityViolation { none, zero_row, same_label_nonpositive, cross_label_positive };

struct SeparabilityVerdict {
  bool separable = true;
  SeparabilityViolation violation = SeparabilityViolation::none;
  // 0-based sample indices of the first violating pair (n == n' for zero_row).
  std::optional<std::pair<int, int>> pair;
  double inner_product = 0.0;
};

/// Same-label pairs need x_n.x_n' > 0, cross-label pairs x_n.x_n' <= 0.
/// Diagonal pairs are not scanned; a zero row fails the verdict instead.
SeparabilityVerdict is_orthogonal_separable(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
SeparabilityVerdict is_orthogonal_separable(const Dataset& ds);
SeparabilityVerdict is_orthogonal_separable_multiclass(const Eigen::MatrixXd& X,
                                                      const Eigen::VectorXi& labels);
SeparabilityVerdict is_orthogonal_separable_multiclass(const Dataset& ds);

double x_max(const Eigen::MatrixXd& X);

std::string to_string(SeparabilityViolation v);

}  // namespace relu_lab
