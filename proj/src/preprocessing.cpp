#include "convret/preprocessing.hpp"

#include "convret/linalg.hpp"
#include "convret/log.hpp"

namespace convret {

namespace {
// Eigenvalues below this fraction of the largest are treated as rank deficiency.
constexpr double kRankTolerance = 1e-12;
}  // namespace

PcaModel fit_pca(const DescriptorSet& train, Eigen::Index d_out) {
  if (d_out < 1 || d_out > train.cols())
    throw PreconditionError("fit_pca: need 1 <= d_out <= input dim (d_out=" + std::to_string(d_out) +
                            ", d_in=" + std::to_string(train.cols()) + ")");
  if (train.rows() <= d_out)
    throw PreconditionError("fit_pca: insufficient samples (" + std::to_string(train.rows()) +
                            ") for d_out=" + std::to_string(d_out));

  PcaModel m;
  m.mean = column_mean(train);
  const auto eig = symmetric_eigen(covariance(train, m.mean));
  m.basis = eig.vectors.leftCols(d_out);
  m.eigenvalues = eig.values.head(d_out);

  const double largest = std::max(eig.values[0], 0.0);
  Eigen::Index deficient = 0;
  for (Eigen::Index i = 0; i < d_out; ++i) {
    if (m.eigenvalues[i] <= kRankTolerance * largest) {
      m.eigenvalues[i] = 0.0;
      ++deficient;
    }
  }
  if (deficient > 0)
    warn("fit_pca: training data rank is below d_out; " + std::to_string(deficient) +
         " trailing eigenvalues set to zero");
  return m;
}

DescriptorSet apply_pca(const PcaModel& m, const DescriptorSet& x, bool l2) {
  if (x.cols() != m.input_dim())
    throw PreconditionError("apply_pca: descriptor dim " + std::to_string(x.cols()) + " != model input dim " +
                            std::to_string(m.input_dim()));
  DescriptorSet out = (x.rowwise() - m.mean.transpose()) * m.basis;
  if (l2) l2_normalize_rows(out);
  return out;
}

}  // namespace convret
