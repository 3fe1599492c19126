#pragma once

#include "convret/common.hpp"

namespace convret {

/// PCA rotation of local descriptors (no whitening).
struct PcaModel {
  Vector mean;        // d_in
  Matrix basis;       // d_in x d_out, orthonormal columns, descending eigenvalue order
  Vector eigenvalues; // d_out, non-negative

  Eigen::Index input_dim() const { return basis.rows(); }
  Eigen::Index output_dim() const { return basis.cols(); }
};

/// Fits the top d_out principal directions of `train` (1/n covariance).
///
/// Requires train.rows() > d_out and 1 <= d_out <= train.cols(). If the data
/// has rank below d_out a warning is emitted and the trailing eigenvalues are
/// reported as zero.
PcaModel fit_pca(const DescriptorSet& train, Eigen::Index d_out);

/// Rows basis^T (x - mean), optionally l2-normalized (all-zero rows stay zero).
DescriptorSet apply_pca(const PcaModel& m, const DescriptorSet& x, bool l2);

}  // namespace convret
