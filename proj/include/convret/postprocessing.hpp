#pragma once

#include "convret/common.hpp"

namespace convret {

/// sign(x) |x|^alpha element-wise, then l2 normalization (zero stays zero).
Vector power_normalize(const Eigen::Ref<const Vector>& v, double alpha);

/// Rotation normalization: PCA rotation of aggregated vectors with optional
/// regularized whitening and dimension reduction.
struct RnModel {
  Vector mean;         // D
  Matrix rotation;     // D x D_out, orthonormal columns
  Vector eigenvalues;  // D_out
  bool whiten = true;
  double epsilon = 1e-6;  // relative to the largest eigenvalue

  Eigen::Index input_dim() const { return rotation.rows(); }
  Eigen::Index output_dim() const { return rotation.cols(); }
};

/// Requires train.rows() > d_out and d_out <= train.cols().
RnModel fit_rn(const RowMatrix& train, Eigen::Index d_out, bool whiten, double epsilon = 1e-6);

/// Rotated (and whitened) coordinates before the final l2 normalization.
Vector rn_transform(const RnModel& m, const Eigen::Ref<const Vector>& v);

/// rn_transform followed by l2 normalization.
Vector apply_rn(const RnModel& m, const Eigen::Ref<const Vector>& v);

}  // namespace convret
