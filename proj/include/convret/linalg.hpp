#pragma once

#include "convret/common.hpp"

#include <span>

namespace convret {

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Each eigenvector is sign-fixed so that its largest-magnitude entry is
/// positive (first such entry on exact ties). Equal eigenvalues keep the
/// order the solver produced them in, so the basis is reproducible on one
/// platform.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;  // columns
};

SymmetricEigen symmetric_eigen(const Matrix& symmetric);

/// Column mean of the rows of x.
Vector column_mean(const RowMatrix& x);

/// Population (1/n) covariance of the rows of x around mean.
Matrix covariance(const RowMatrix& x, const Vector& mean);

/// Flips v so that its largest-magnitude entry is positive.
void fix_sign(Eigen::Ref<Vector> v);

/// Scales v to unit l2 norm; zero vectors are returned unchanged.
void l2_normalize(Eigen::Ref<Vector> v);
void l2_normalize_rows(RowMatrix& x);

/// Rounds every entry to the nearest float. Models are kept at float
/// precision so that MAT1 round-trips reproduce them bit-exactly.
Matrix to_float_precision(const Matrix& m);
Vector to_float_precision(const Vector& v);

/// Sum of the terms after sorting them ascending; the result depends only on
/// the multiset of terms, not on their order. Reorders `terms`.
double order_free_sum(std::span<double> terms);

}  // namespace convret
