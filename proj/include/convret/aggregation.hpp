#pragma once

#include "convret/common.hpp"

namespace convret {

enum class AggregationMode { kSum, kAvg, kMax, kDemocratic };

struct AggregationConfig {
  AggregationMode mode = AggregationMode::kDemocratic;
  int sinkhorn_iterations = 10;
  double sinkhorn_exponent = 0.5;
  bool clamp_negative_gram = true;
  /// Rows must have unit norm within this tolerance for democratic pooling.
  double unit_tolerance = 1e-5;
};

/// Column-wise sum, mean or max over the rows of v. Democratic mode is rejected here.
Vector aggregate_pool(const RowMatrix& v, AggregationMode mode);

/// Sinkhorn-style weights lambda that equalize each row's similarity to the aggregate.
Vector democratic_weights(const RowMatrix& v, const AggregationConfig& cfg = {});

/// sigma_i = lambda_i * sum_j K+_ij lambda_j for the (optionally clamped) Gram matrix of v.
Vector democratic_similarities(const RowMatrix& v, const Vector& lambda, bool clamp_negative_gram = true);

/// sum_i lambda_i v_i.
Vector aggregate_democratic(const RowMatrix& v, const AggregationConfig& cfg = {});

/// Dispatches on cfg.mode.
Vector aggregate(const RowMatrix& v, const AggregationConfig& cfg);

}  // namespace convret
