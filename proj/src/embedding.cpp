#include "convret/embedding.hpp"

#include "convret/linalg.hpp"
#include "convret/log.hpp"

#include <cmath>

namespace convret {

namespace {

template <typename Fn>
RowMatrix embed_rows(const DescriptorSet& x, Eigen::Index out_dim, Fn&& fn) {
  RowMatrix out(x.rows(), out_dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = fn(x.row(i).transpose()).transpose();
  return out;
}

}  // namespace

Vector embed_temb_raw(const Codebook& c, const Eigen::Ref<const Vector>& x) {
  if (x.size() != c.dim()) throw PreconditionError("embed_temb_raw: dimension mismatch");
  const Eigen::Index d = c.dim();
  Vector out(d * c.size());
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    Vector r = x - c.centroids.row(j).transpose();
    const double norm = r.norm();
    if (norm > 0.0) {
      out.segment(j * d, d) = r / norm;
    } else {
      warn("embed_temb_raw: descriptor coincides with centroid " + std::to_string(j) + "; block set to zero");
      out.segment(j * d, d).setZero();
    }
  }
  return out;
}

RowMatrix embed_temb_raw_rows(const Codebook& c, const DescriptorSet& x) {
  return embed_rows(x, c.dim() * c.size(), [&](const Vector& row) { return embed_temb_raw(c, row); });
}

TembProjection fit_temb_projection(const RowMatrix& raw, Eigen::Index e) {
  const Eigen::Index dim = raw.cols();
  if (e < 0 || e >= dim)
    throw PreconditionError("fit_temb_projection: drop count " + std::to_string(e) + " must be in [0, " +
                            std::to_string(dim) + ")");
  if (raw.rows() <= e)
    throw PreconditionError("fit_temb_projection: need more than e=" + std::to_string(e) + " training embeddings");

  Vector mean = column_mean(raw);
  if (e == 0) return temb_projection_from_moments(std::move(mean), Matrix(), 0);
  const Matrix cov = covariance(raw, mean);
  return temb_projection_from_moments(std::move(mean), cov, e);
}

TembProjection temb_projection_from_moments(Vector mean, const Matrix& covariance, Eigen::Index e) {
  const Eigen::Index dim = mean.size();
  if (e < 0 || e >= dim)
    throw PreconditionError("fit_temb_projection: drop count " + std::to_string(e) + " must be in [0, " +
                            std::to_string(dim) + ")");
  TembProjection p;
  p.mean = std::move(mean);
  if (e == 0) {
    p.drop_basis = Matrix(dim, 0);
    p.keep_basis = Matrix::Identity(dim, dim);
    return p;
  }
  if (covariance.rows() != dim || covariance.cols() != dim)
    throw PreconditionError("fit_temb_projection: covariance shape mismatch");
  const auto eig = symmetric_eigen(covariance);
  p.drop_basis = eig.vectors.leftCols(e);
  p.keep_basis = eig.vectors.rightCols(dim - e);
  return p;
}

Vector embed_temb(const TembProjection& p, const Eigen::Ref<const Vector>& raw) {
  if (raw.size() != p.raw_dim()) throw PreconditionError("embed_temb: raw embedding dimension mismatch");
  Vector out = p.keep_basis.transpose() * (raw - p.mean);
  l2_normalize(out);
  return out;
}

RowMatrix embed_temb_rows(const TembProjection& p, const RowMatrix& raw) {
  if (raw.cols() != p.raw_dim()) throw PreconditionError("embed_temb: raw embedding dimension mismatch");
  RowMatrix out = (raw.rowwise() - p.mean.transpose()) * p.keep_basis;
  l2_normalize_rows(out);
  return out;
}

Vector embed_vlad(const Codebook& c, const Eigen::Ref<const Vector>& x) {
  const Eigen::Index nn = assign_nearest(c, x);
  const Eigen::Index d = c.dim();
  Vector out = Vector::Zero(d * c.size());
  out.segment(nn * d, d) = x - c.centroids.row(nn).transpose();
  l2_normalize(out);
  return out;
}

RowMatrix embed_vlad_rows(const Codebook& c, const DescriptorSet& x) {
  return embed_rows(x, c.dim() * c.size(), [&](const Vector& row) { return embed_vlad(c, row); });
}

Vector embed_fv(const DiagonalGmm& g, const Eigen::Ref<const Vector>& x, bool normalize) {
  const Vector gamma = gmm_posteriors(g, x);
  const Eigen::Index d = g.dim();
  const Eigen::Index k = g.size();
  Vector out(2 * d * k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double w = g.weights[j];
    for (Eigen::Index t = 0; t < d; ++t) {
      const double z = (x[t] - g.means(j, t)) / std::sqrt(g.variances(j, t));
      out[j * d + t] = gamma[j] * z / std::sqrt(w);
      out[k * d + j * d + t] = gamma[j] * (z * z - 1.0) / std::sqrt(2.0 * w);
    }
  }
  if (normalize) l2_normalize(out);
  return out;
}

RowMatrix embed_fv_rows(const DiagonalGmm& g, const DescriptorSet& x) {
  return embed_rows(x, 2 * g.dim() * g.size(), [&](const Vector& row) { return embed_fv(g, row); });
}

}  // namespace convret
