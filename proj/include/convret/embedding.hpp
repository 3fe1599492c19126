#pragma once

#include "convret/codebooks.hpp"
#include "convret/common.hpp"

namespace convret {

/// Learned post-processing of raw triangulation embeddings: centering, then
/// projection onto the eigenvectors left after dropping the top `dropped()`.
struct TembProjection {
  Vector mean;        // d*|C|
  Matrix drop_basis;  // d*|C| x e, top-e eigenvectors (removed directions)
  Matrix keep_basis;  // d*|C| x (d*|C| - e), remaining eigenvectors, descending

  Eigen::Index raw_dim() const { return mean.size(); }
  Eigen::Index dropped() const { return drop_basis.cols(); }
  Eigen::Index output_dim() const { return keep_basis.cols(); }
};

/// Concatenated unit residuals (x - c_j) / |x - c_j| in centroid order.
/// A block whose centroid coincides with x is left zero.
Vector embed_temb_raw(const Codebook& c, const Eigen::Ref<const Vector>& x);
RowMatrix embed_temb_raw_rows(const Codebook& c, const DescriptorSet& x);

/// Fits the centering mean and eigenbasis on raw embeddings (one per row).
/// With e == 0 the kept basis is the identity.
TembProjection fit_temb_projection(const RowMatrix& raw, Eigen::Index e);

/// Same fit from precomputed raw-embedding mean and (1/n) covariance.
TembProjection temb_projection_from_moments(Vector mean, const Matrix& covariance, Eigen::Index e);

/// keep_basis^T (raw - mean), l2-normalized; zero stays zero.
Vector embed_temb(const TembProjection& p, const Eigen::Ref<const Vector>& raw);
RowMatrix embed_temb_rows(const TembProjection& p, const RowMatrix& raw);

/// Residual to the nearest centroid in that centroid's block, zero elsewhere; l2-normalized.
Vector embed_vlad(const Codebook& c, const Eigen::Ref<const Vector>& x);
RowMatrix embed_vlad_rows(const Codebook& c, const DescriptorSet& x);

/// Fisher vector of one descriptor: [mean-gradient blocks | variance-gradient blocks], l2-normalized.
/// Set `normalize` to false to get the raw gradient blocks.
Vector embed_fv(const DiagonalGmm& g, const Eigen::Ref<const Vector>& x, bool normalize = true);
RowMatrix embed_fv_rows(const DiagonalGmm& g, const DescriptorSet& x);

}  // namespace convret
