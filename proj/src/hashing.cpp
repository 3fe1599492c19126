#include "convret/hashing.hpp"

#include "convret/linalg.hpp"
#include "convret/rng.hpp"

#include <Eigen/SVD>

namespace convret {

namespace {

Matrix random_rotation(Eigen::Index l, std::uint64_t seed) {
  Rng rng(seed);
  Matrix g(l, l);
  for (Eigen::Index j = 0; j < l; ++j)
    for (Eigen::Index i = 0; i < l; ++i) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(l, l);
  // Make the factorization unique: diag(R) > 0.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < l; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

Matrix signs(const Matrix& x) {
  return x.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

}  // namespace

ItqResult fit_itq_traced(const RowMatrix& train, std::uint32_t bits, const ItqOptions& options) {
  const auto l = static_cast<Eigen::Index>(bits);
  if (l < 1 || l > train.cols())
    throw PreconditionError("fit_itq: need 1 <= L <= D (L=" + std::to_string(l) +
                            ", D=" + std::to_string(train.cols()) + ")");
  if (train.rows() <= l)
    throw PreconditionError("fit_itq: need more than L=" + std::to_string(l) + " training vectors, got " +
                            std::to_string(train.rows()));

  ItqResult result;
  ItqModel& m = result.model;
  m.mean = column_mean(train);
  m.pca = symmetric_eigen(covariance(train, m.mean)).vectors.leftCols(l);
  const Matrix v = (train.rowwise() - m.mean.transpose()) * m.pca;

  Matrix r = options.init == ItqInit::kIdentity ? Matrix::Identity(l, l) : random_rotation(l, options.seed);
  Matrix b;
  for (int iter = 0; iter < options.iterations; ++iter) {
    b = signs(v * r);
    // Orthogonal Procrustes: maximize tr(B^T V R) => R = U W^T for V^T B = U S W^T.
    Eigen::BDCSVD<Matrix> svd(v.transpose() * b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    result.loss.push_back((b - v * r).norm());
    result.orthogonality_error.push_back((r.transpose() * r - Matrix::Identity(l, l)).cwiseAbs().maxCoeff());
  }
  m.rotation = std::move(r);
  result.codes = options.iterations > 0 ? std::move(b) : signs(v * m.rotation);
  return result;
}

ItqModel fit_itq(const RowMatrix& train, std::uint32_t bits, const ItqOptions& options) {
  return fit_itq_traced(train, bits, options).model;
}

Vector itq_project(const ItqModel& m, const Eigen::Ref<const Vector>& v) {
  if (v.size() != m.input_dim()) throw PreconditionError("encode_itq: dimension mismatch");
  return m.rotation.transpose() * (m.pca.transpose() * (v - m.mean));
}

BinaryCode pack_signs(const Eigen::Ref<const Vector>& values) {
  BinaryCode code(words_for_bits(static_cast<std::uint32_t>(values.size())), 0);
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values[i] >= 0.0) code[static_cast<std::size_t>(i / 64)] |= std::uint64_t{1} << (i % 64);
  return code;
}

BinaryCode encode_itq(const ItqModel& m, const Eigen::Ref<const Vector>& v) { return pack_signs(itq_project(m, v)); }

}  // namespace convret
