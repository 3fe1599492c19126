#include "convret/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace convret {

void fix_sign(Eigen::Ref<Vector> v) {
  Eigen::Index best = 0;
  double best_abs = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > best_abs) {
      best_abs = std::abs(v[i]);
      best = i;
    }
  }
  if (v.size() > 0 && v[best] < 0) v = -v;
}

SymmetricEigen symmetric_eigen(const Matrix& symmetric) {
  if (symmetric.rows() != symmetric.cols()) throw PreconditionError("symmetric_eigen: matrix is not square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
  if (solver.info() != Eigen::Success) throw DataError("symmetric_eigen: eigendecomposition failed");

  // Solver returns ascending order; walk it backwards with a stable sort on value.
  const Eigen::Index n = symmetric.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return solver.eigenvalues()[a] > solver.eigenvalues()[b];
  });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto src = order[static_cast<std::size_t>(j)];
    out.values[j] = solver.eigenvalues()[src];
    out.vectors.col(j) = solver.eigenvectors().col(src);
    fix_sign(out.vectors.col(j));
  }
  return out;
}

Vector column_mean(const RowMatrix& x) {
  if (x.rows() == 0) return Vector::Zero(x.cols());
  return x.colwise().mean().transpose();
}

Matrix covariance(const RowMatrix& x, const Vector& mean) {
  const RowMatrix centered = x.rowwise() - mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  // Exact symmetry for the solver.
  return (cov + cov.transpose()) * 0.5;
}

void l2_normalize(Eigen::Ref<Vector> v) {
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
}

void l2_normalize_rows(RowMatrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }
}

Matrix to_float_precision(const Matrix& m) { return m.cast<float>().cast<double>(); }
Vector to_float_precision(const Vector& v) { return v.cast<float>().cast<double>(); }

double order_free_sum(std::span<double> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum;
}

}  // namespace convret
