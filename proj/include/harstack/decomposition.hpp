#pragma once

#include "harstack/core.hpp"

#include <vector>

namespace harstack {

/// Fitted principal component basis. Rows of `components` are orthonormal,
/// ordered by decreasing explained variance; the largest-magnitude entry of
/// every row is positive.
struct PcaModel {
  Vector mean;
  Matrix components;  // k x d
  Vector explained_variance;
  double total_variance = 0.0;

  Index n_components() const { return components.rows(); }
  Index n_features() const { return components.cols(); }
};

/// Top-k principal axes of the mean-centred data; variances use the (n - 1)
/// denominator.
PcaModel fit_pca(const Matrix& X, Index k);

/// (X - mean) projected onto the components: rows(X) x k.
Matrix pca_transform(const PcaModel& model, const Matrix& Z);

/// Maps projected coordinates back into feature space.
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& projected);

/// Cumulative explained-variance ratios.
std::vector<double> proportion_of_variance(const PcaModel& model);

}  // namespace harstack
