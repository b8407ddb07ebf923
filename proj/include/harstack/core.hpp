#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace harstack {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Zero-based contiguous class id.
using ClassLabel = int;
using Labels = std::vector<ClassLabel>;

using RngSeed = std::uint64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

class NotFoundError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "not_found"; }
};

class ParseError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "parse"; }
};

/// Contract shared by every fitted model: rows of non-negative class
/// probabilities summing to one. Implementations are immutable after fitting.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Matrix predict_proba(const Matrix& X) const = 0;
  virtual int n_classes() const = 0;
  virtual Index n_features() const = 0;

 protected:
  void check_features(const Matrix& X) const;
};

/// Fits a fresh model on (X, y). n_classes fixes the probability width even
/// when some class is absent from y.
using TrainFn = std::function<std::unique_ptr<Classifier>(const Matrix& X, const Labels& y, int n_classes, RngSeed seed)>;

struct Learner {
  std::string name;
  TrainFn fit;
};

/// Argmax per row; ties go to the lowest class id.
Labels argmax_rows(const Matrix& probabilities);

Labels predict_labels(const Classifier& model, const Matrix& X);

/// Row-wise softmax, shifted by the row max for stability.
Matrix softmax_rows(const Matrix& scores);

/// Number of classes implied by the labels (max + 1). Throws on negative ids.
int infer_n_classes(std::span<const ClassLabel> y);

std::vector<std::size_t> class_counts(std::span<const ClassLabel> y, int n_classes);

/// Copies the listed rows of X, in order.
Matrix take_rows(const Matrix& X, std::span<const std::size_t> rows);
Labels take_labels(std::span<const ClassLabel> y, std::span<const std::size_t> rows);

double accuracy(std::span<const ClassLabel> y_true, std::span<const ClassLabel> y_pred);

}  // namespace harstack
