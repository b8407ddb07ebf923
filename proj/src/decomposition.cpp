#include "harstack/decomposition.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace harstack {

PcaModel fit_pca(const Matrix& X, Index k) {
  const Index n = X.rows();
  const Index d = X.cols();
  if (n < 2) throw ValidationError("PCA needs at least 2 rows");
  if (k < 1 || k > std::min(n - 1, d)) {
    throw ValidationError("component count " + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(n - 1, d)) + "]");
  }
  if (!X.allFinite()) throw ValidationError("PCA input contains non-finite values");

  PcaModel model;
  model.mean = X.colwise().mean().transpose();
  Eigen::MatrixXd centred = X.rowwise() - model.mean.transpose();
  const double dof = static_cast<double>(n - 1);
  model.total_variance = centred.squaredNorm() / dof;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const auto& V = svd.matrixV();

  model.components.resize(k, d);
  model.explained_variance.resize(k);
  for (Index c = 0; c < k; ++c) {
    Vector axis = V.col(c);
    Index peak = 0;
    axis.cwiseAbs().maxCoeff(&peak);
    if (axis(peak) < 0) axis = -axis;
    model.components.row(c) = axis.transpose();
    model.explained_variance(c) = s(c) * s(c) / dof;
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& Z) {
  if (Z.cols() != model.n_features()) {
    throw ShapeError("PCA expects " + std::to_string(model.n_features()) + " features, got " +
                     std::to_string(Z.cols()));
  }
  return (Z.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& projected) {
  if (projected.cols() != model.n_components()) {
    throw ShapeError("expected " + std::to_string(model.n_components()) + " projected coordinates");
  }
  Matrix out = projected * model.components;
  out.rowwise() += model.mean.transpose();
  return out;
}

std::vector<double> proportion_of_variance(const PcaModel& model) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(model.n_components()));
  double running = 0.0;
  for (Index c = 0; c < model.n_components(); ++c) {
    running += model.explained_variance(c);
    out.push_back(model.total_variance > 0.0 ? running / model.total_variance : 1.0);
  }
  return out;
}

}  // namespace harstack
