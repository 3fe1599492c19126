#pragma once

#include "convret/common.hpp"

#include <cstdint>
#include <vector>

namespace convret {

/// k-means centroids, one per row.
struct Codebook {
  RowMatrix centroids;

  Eigen::Index size() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }
};

struct KmeansOptions {
  int max_iterations = 25;
};

struct KmeansResult {
  Codebook codebook;
  /// Distortion (sum of squared distances to the assigned centroid) after each assignment step.
  std::vector<double> distortion;
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are re-seeded
/// with the point farthest from its assigned centroid. Deterministic for a fixed seed.
KmeansResult fit_kmeans_traced(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed,
                               const KmeansOptions& options = {});
Codebook fit_kmeans(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed);

/// 0-based index of the nearest centroid (Euclidean); ties go to the lowest index.
Eigen::Index assign_nearest(const Codebook& c, const Eigen::Ref<const Vector>& x);

/// Diagonal-covariance Gaussian mixture.
struct DiagonalGmm {
  Vector weights;       // k, sum to 1
  RowMatrix means;      // k x d
  RowMatrix variances;  // k x d, each >= variance floor

  Eigen::Index size() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct GmmOptions {
  int max_iterations = 50;
  double tolerance = 1e-6;  // on mean per-sample log-likelihood
  double variance_floor = 1e-4;
  double min_weight = 1e-8;
};

struct GmmResult {
  DiagonalGmm gmm;
  /// Mean per-sample log-likelihood before each M-step, and of the returned model last.
  std::vector<double> log_likelihood;
  int reseeds = 0;
};

/// EM initialized from fit_kmeans with the same seed.
GmmResult fit_gmm_traced(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed,
                         const GmmOptions& options = {});
DiagonalGmm fit_gmm(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed);

/// Soft assignments gamma_j(x), summing to 1.
Vector gmm_posteriors(const DiagonalGmm& g, const Eigen::Ref<const Vector>& x);

}  // namespace convret
