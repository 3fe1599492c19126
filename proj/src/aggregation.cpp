#include "convret/aggregation.hpp"

#include "convret/linalg.hpp"

#include <cmath>
#include <vector>

namespace convret {

namespace {

constexpr double kSigmaFloor = 1e-12;

// Gram matrix with each entry computed from the two rows alone, mirrored so
// that K(i, j) and K(j, i) are the same double.
Matrix gram(const RowMatrix& v, bool clamp) {
  const Eigen::Index n = v.rows();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double dot = 0.0;
      for (Eigen::Index t = 0; t < v.cols(); ++t) dot += v(i, t) * v(j, t);
      if (clamp && dot < 0.0) dot = 0.0;
      k(i, j) = dot;
      k(j, i) = dot;
    }
  }
  return k;
}

Vector similarities(const Matrix& k, const Vector& lambda) {
  const Eigen::Index n = k.rows();
  Vector sigma(n);
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) terms[static_cast<std::size_t>(j)] = k(i, j) * lambda[j];
    sigma[i] = lambda[i] * order_free_sum(terms);
  }
  return sigma;
}

// Order-free column sums, so pooling is exactly invariant to row order.
Vector column_sums(const RowMatrix& v) {
  Vector out(v.cols());
  std::vector<double> terms(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index t = 0; t < v.cols(); ++t) {
    for (Eigen::Index i = 0; i < v.rows(); ++i) terms[static_cast<std::size_t>(i)] = v(i, t);
    out[t] = order_free_sum(terms);
  }
  return out;
}

}  // namespace

Vector aggregate_pool(const RowMatrix& v, AggregationMode mode) {
  if (v.rows() == 0) throw PreconditionError("aggregate_pool: empty descriptor set");
  switch (mode) {
    case AggregationMode::kSum:
      return column_sums(v);
    case AggregationMode::kAvg:
      return column_sums(v) / static_cast<double>(v.rows());
    case AggregationMode::kMax:
      return v.colwise().maxCoeff().transpose();
    case AggregationMode::kDemocratic:
      break;
  }
  throw PreconditionError("aggregate_pool: democratic mode needs aggregate_democratic");
}

Vector democratic_similarities(const RowMatrix& v, const Vector& lambda, bool clamp_negative_gram) {
  if (lambda.size() != v.rows()) throw PreconditionError("democratic_similarities: weight count mismatch");
  return similarities(gram(v, clamp_negative_gram), lambda);
}

Vector democratic_weights(const RowMatrix& v, const AggregationConfig& cfg) {
  if (v.rows() == 0) throw PreconditionError("democratic_weights: empty descriptor set");
  if (cfg.sinkhorn_iterations < 1) throw PreconditionError("democratic_weights: iterations must be >= 1");
  if (!(cfg.sinkhorn_exponent > 0.0 && cfg.sinkhorn_exponent <= 1.0))
    throw PreconditionError("democratic_weights: exponent must be in (0, 1]");
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (std::abs(v.row(i).norm() - 1.0) > cfg.unit_tolerance)
      throw PreconditionError("democratic_weights: row " + std::to_string(i) +
                              " is not l2-normalized (democratic pooling needs unit rows)");
  }

  const Eigen::Index n = v.rows();
  Vector lambda = Vector::Ones(n);
  if (n == 1) return lambda;

  const Matrix k = gram(v, cfg.clamp_negative_gram);
  for (int iter = 0; iter < cfg.sinkhorn_iterations; ++iter) {
    const Vector sigma = similarities(k, lambda);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sigma[i] < kSigmaFloor) continue;
      lambda[i] /= std::pow(sigma[i], cfg.sinkhorn_exponent);
    }
  }
  return lambda;
}

Vector aggregate_democratic(const RowMatrix& v, const AggregationConfig& cfg) {
  const Vector lambda = democratic_weights(v, cfg);
  Vector out(v.cols());
  std::vector<double> terms(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index t = 0; t < v.cols(); ++t) {
    for (Eigen::Index i = 0; i < v.rows(); ++i) terms[static_cast<std::size_t>(i)] = lambda[i] * v(i, t);
    out[t] = order_free_sum(terms);
  }
  return out;
}

Vector aggregate(const RowMatrix& v, const AggregationConfig& cfg) {
  if (cfg.mode == AggregationMode::kDemocratic) return aggregate_democratic(v, cfg);
  return aggregate_pool(v, cfg.mode);
}

}  // namespace convret
