#include "convret/postprocessing.hpp"

#include "convret/linalg.hpp"

#include <cmath>

namespace convret {

Vector power_normalize(const Eigen::Ref<const Vector>& v, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError("power_normalize: alpha must be in [0, 1]");
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (x == 0.0) {
      out[i] = 0.0;
    } else {
      const double mag = alpha == 0.0 ? 1.0 : std::pow(std::abs(x), alpha);
      out[i] = x > 0.0 ? mag : -mag;
    }
  }
  l2_normalize(out);
  return out;
}

RnModel fit_rn(const RowMatrix& train, Eigen::Index d_out, bool whiten, double epsilon) {
  if (d_out < 1 || d_out > train.cols())
    throw PreconditionError("fit_rn: need 1 <= D_out <= D (D_out=" + std::to_string(d_out) +
                            ", D=" + std::to_string(train.cols()) + ")");
  if (train.rows() <= d_out)
    throw PreconditionError("fit_rn: insufficient samples (" + std::to_string(train.rows()) +
                            ") for D_out=" + std::to_string(d_out));
  RnModel m;
  m.mean = column_mean(train);
  const auto eig = symmetric_eigen(covariance(train, m.mean));
  m.rotation = eig.vectors.leftCols(d_out);
  m.eigenvalues = eig.values.head(d_out).cwiseMax(0.0);
  m.whiten = whiten;
  m.epsilon = epsilon;
  return m;
}

Vector rn_transform(const RnModel& m, const Eigen::Ref<const Vector>& v) {
  if (v.size() != m.input_dim()) throw PreconditionError("apply_rn: dimension mismatch");
  Vector out = m.rotation.transpose() * (v - m.mean);
  if (m.whiten) {
    const double largest = m.eigenvalues.size() > 0 ? m.eigenvalues.maxCoeff() : 0.0;
    const double reg = m.epsilon * largest;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double denom = std::sqrt(m.eigenvalues[i] + reg);
      out[i] = denom > 0.0 ? out[i] / denom : 0.0;
    }
  }
  return out;
}

Vector apply_rn(const RnModel& m, const Eigen::Ref<const Vector>& v) {
  Vector out = rn_transform(m, v);
  l2_normalize(out);
  return out;
}

}  // namespace convret
