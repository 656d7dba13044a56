#include "relu_lab/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace relu_lab {

using json = nlohmann::json;

Eigen::VectorXd Dataset::binary_labels() const {
  if (!is_binary()) throw DatasetError("dataset '" + name + "' has multiclass labels");
  return labels.cast<double>();
}

Dataset make_dataset(std::string name, Eigen::MatrixXd X, Eigen::VectorXi labels, int K) {
  if (X.rows() < 1 || X.cols() < 1) throw DatasetError("data matrix must be at least 1x1");
  if (labels.size() != X.rows()) {
    throw DatasetError("dimension mismatch: " + std::to_string(X.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels");
  }
  if (!X.allFinite()) throw DatasetError("data matrix has non-finite entries");
  if (K < 0) throw DatasetError("class count must be nonnegative");
  for (Eigen::Index n = 0; n < labels.size(); ++n) {
    const int l = labels(n);
    const bool ok = (K == 0) ? (l == 1 || l == -1) : (l >= 1 && l <= K);
    if (!ok) {
      throw DatasetError("label out of range at sample " + std::to_string(n) + ": " +
                         std::to_string(l));
    }
  }
  return Dataset{std::move(name), std::move(X), std::move(labels), K};
}

Dataset parse_dataset(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DatasetError(std::string("dataset parse failure: ") + e.what());
  }
  if (!j.is_object() || !j.contains("X") || !j.contains("y")) {
    throw DatasetError("dataset parse failure: expected object with \"X\" and \"y\"");
  }
  try {
    const auto& rows = j.at("X");
    if (!rows.is_array() || rows.empty()) throw DatasetError("\"X\" must be a nonempty array");
    const auto N = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(rows.at(0).size());
    Eigen::MatrixXd X(N, d);
    for (Eigen::Index n = 0; n < N; ++n) {
      const auto& row = rows.at(n);
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
        throw DatasetError("dimension mismatch: row " + std::to_string(n) + " has wrong length");
      }
      for (Eigen::Index k = 0; k < d; ++k) {
        if (!row.at(k).is_number()) throw DatasetError("non-numeric entry in \"X\"");
        X(n, k) = row.at(k).get<double>();
      }
    }
    const auto& ys = j.at("y");
    if (!ys.is_array()) throw DatasetError("\"y\" must be an array");
    Eigen::VectorXi labels(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t n = 0; n < ys.size(); ++n) {
      if (!ys.at(n).is_number_integer()) throw DatasetError("labels must be integers");
      labels(static_cast<Eigen::Index>(n)) = ys.at(n).get<int>();
    }
    const int K = j.value("K", 0);
    return make_dataset(j.value("name", std::string("unnamed")), std::move(X), std::move(labels), K);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("dataset parse failure: ") + e.what());
  }
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::vector<std::string> builtin_dataset_names() {
  return {"notebook", "appendix-ortho", "appendix-nonspikefree"};
}

std::optional<Dataset> builtin_dataset(const std::string& name) {
  Eigen::MatrixXd X;
  Eigen::VectorXi y;
  if (name == "notebook") {
    X.resize(3, 2);
    X << 1, 0, 0, 1, -1, 1;
    y.resize(3);
    y << 1, -1, -1;
  } else if (name == "appendix-ortho") {
    X.resize(2, 2);
    X << 1.65, -0.47, -0.47, 1.35;
    y.resize(2);
    y << 1, -1;
  } else if (name == "appendix-nonspikefree") {
    X.resize(2, 2);
    X << 1.65, 0.47, 0.47, 1.35;
    y.resize(2);
    y << 1, 1;
  } else {
    return std::nullopt;
  }
  return make_dataset(name, std::move(X), std::move(y), 0);
}

Dataset load_dataset(const std::string& source) {
  if (auto ds = builtin_dataset(source)) return *ds;
  return load_dataset_file(source);
}

EncodedLabels encode_labels(const Eigen::VectorXi& labels, int K) {
  if (K < 1) throw DatasetError("class count must be at least 1");
  EncodedLabels enc{Eigen::MatrixXd::Constant(labels.size(), K, -1.0)};
  for (Eigen::Index n = 0; n < labels.size(); ++n) {
    const int l = labels(n);
    if (l < 1 || l > K) {
      throw DatasetError("label " + std::to_string(l) + " exceeds class count " + std::to_string(K));
    }
    enc.Y(n, l - 1) = 1.0;
  }
  return enc;
}

int class_count(const Dataset& ds) { return ds.is_binary() ? 1 : ds.K; }

Eigen::VectorXd class_labels(const Dataset& ds, int k) {
  if (ds.is_binary()) {
    if (k != 0) throw DatasetError("binary dataset has a single class subproblem");
    return ds.binary_labels();
  }
  if (k < 0 || k >= ds.K) throw DatasetError("class index out of range");
  return encode_labels(ds.labels, ds.K).column(k);
}

namespace {

template <class SameGroup>
SeparabilityVerdict scan_pairs(const Eigen::MatrixXd& X, SameGroup same) {
  SeparabilityVerdict v;
  const Eigen::Index N = X.rows();
  for (Eigen::Index n = 0; n < N; ++n) {
    if (X.row(n).squaredNorm() == 0.0) {
      return {false, SeparabilityViolation::zero_row, std::pair<int, int>(n, n), 0.0};
    }
  }
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = n + 1; m < N; ++m) {
      const double ip = X.row(n).dot(X.row(m));
      if (same(n, m)) {
        if (!(ip > 0.0)) {
          return {false, SeparabilityViolation::same_label_nonpositive, std::pair<int, int>(n, m), ip};
        }
      } else if (ip > 0.0) {
        return {false, SeparabilityViolation::cross_label_positive, std::pair<int, int>(n, m), ip};
      }
    }
  }
  return v;
}

}  // namespace

SeparabilityVerdict is_orthogonal_separable(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return scan_pairs(X, [&](Eigen::Index a, Eigen::Index b) { return y(a) == y(b); });
}

SeparabilityVerdict is_orthogonal_separable(const Dataset& ds) {
  return is_orthogonal_separable(ds.X, ds.binary_labels());
}

SeparabilityVerdict is_orthogonal_separable_multiclass(const Eigen::MatrixXd& X,
                                                      const Eigen::VectorXi& labels) {
  return scan_pairs(X, [&](Eigen::Index a, Eigen::Index b) { return labels(a) == labels(b); });
}

SeparabilityVerdict is_orthogonal_separable_multiclass(const Dataset& ds) {
  return is_orthogonal_separable_multiclass(ds.X, ds.labels);
}

double x_max(const Eigen::MatrixXd& X) { return X.rowwise().norm().maxCoeff(); }

std::string to_string(SeparabilityViolation v) {
  switch (v) {
    case SeparabilityViolation::none: return "none";
    case SeparabilityViolation::zero_row: return "zero-row";
    case SeparabilityViolation::same_label_nonpositive: return "same-label inner product <= 0";
    case SeparabilityViolation::cross_label_positive: return "cross-label inner product > 0";
  }
  return "unknown";
}

}  // namespace relu_lab
