#include "convret/codebooks.hpp"

#include "convret/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace convret {

namespace {

double squared_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  return (a - b).squaredNorm();
}

// Nearest centroid and its squared distance; ties to the lowest index.
std::pair<Eigen::Index, double> nearest(const RowMatrix& centroids, const Eigen::Ref<const Vector>& x) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    const double d = squared_distance(centroids.row(j).transpose(), x);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return {best, best_d};
}

RowMatrix kmeans_plus_plus(const DescriptorSet& train, Eigen::Index k, Rng& rng) {
  const Eigen::Index n = train.rows();
  RowMatrix centroids(k, train.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);

  Eigen::Index first = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
  centroids.row(0) = train.row(first);
  chosen[static_cast<std::size_t>(first)] = true;

  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    d2[static_cast<std::size_t>(i)] = squared_distance(train.row(i).transpose(), centroids.row(0).transpose());

  for (Eigen::Index c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc > target && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
      // Rounding can leave target == total; take the last positive-weight point.
      if (pick < 0)
        for (Eigen::Index i = n - 1; i >= 0 && pick < 0; --i)
          if (d2[static_cast<std::size_t>(i)] > 0.0) pick = i;
    } else {
      // All remaining points coincide with a centroid.
      for (Eigen::Index i = 0; i < n && pick < 0; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) pick = i;
    }
    centroids.row(c) = train.row(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(train.row(i).transpose(), centroids.row(c).transpose()));
    }
  }
  return centroids;
}

}  // namespace

KmeansResult fit_kmeans_traced(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed,
                               const KmeansOptions& options) {
  if (k < 1) throw PreconditionError("fit_kmeans: k must be >= 1");
  if (train.rows() < k)
    throw PreconditionError("fit_kmeans: n (" + std::to_string(train.rows()) + ") < k (" + std::to_string(k) + ")");

  Rng rng(seed);
  KmeansResult result;
  RowMatrix centroids = kmeans_plus_plus(train, k, rng);

  const Eigen::Index n = train.rows();
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    double distortion = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto [j, d] = nearest(centroids, train.row(i).transpose());
      auto& a = assign[static_cast<std::size_t>(i)];
      if (a != j) changed = true;
      a = j;
      dist[static_cast<std::size_t>(i)] = d;
      distortion += d;
    }
    result.distortion.push_back(distortion);
    result.iterations = iter + 1;
    if (!changed) break;

    RowMatrix sums = RowMatrix::Zero(k, train.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = assign[static_cast<std::size_t>(i)];
      sums.row(j) += train.row(i);
      ++counts[static_cast<std::size_t>(j)];
    }
    std::vector<bool> used_for_reseed(static_cast<std::size_t>(n), false);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (used_for_reseed[static_cast<std::size_t>(i)]) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      used_for_reseed[static_cast<std::size_t>(far)] = true;
      centroids.row(j) = train.row(far);
    }
  }
  result.codebook.centroids = std::move(centroids);
  return result;
}

Codebook fit_kmeans(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed) {
  return fit_kmeans_traced(train, k, seed).codebook;
}

Eigen::Index assign_nearest(const Codebook& c, const Eigen::Ref<const Vector>& x) {
  if (x.size() != c.dim()) throw PreconditionError("assign_nearest: dimension mismatch");
  if (c.size() == 0) throw PreconditionError("assign_nearest: empty codebook");
  return nearest(c.centroids, x).first;
}

namespace {

// Per-component log(w_j * N(x | mu_j, sigma_j^2)).
void component_log_densities(const DiagonalGmm& g, const Eigen::Ref<const Vector>& x, Vector& out) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  const Eigen::Index k = g.size();
  out.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < g.dim(); ++d) {
      const double var = g.variances(j, d);
      const double diff = x[d] - g.means(j, d);
      acc += kLog2Pi + std::log(var) + diff * diff / var;
    }
    out[j] = std::log(g.weights[j]) - 0.5 * acc;
  }
}

// Normalizes log densities into posteriors in place; returns log-sum-exp.
double to_posteriors(Vector& logp) {
  const double peak = logp.maxCoeff();
  double total = 0.0;
  for (Eigen::Index j = 0; j < logp.size(); ++j) {
    logp[j] = std::exp(logp[j] - peak);
    total += logp[j];
  }
  logp /= total;
  return peak + std::log(total);
}

}  // namespace

GmmResult fit_gmm_traced(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed, const GmmOptions& options) {
  if (k < 1) throw PreconditionError("fit_gmm: k must be >= 1");
  if (train.rows() < k)
    throw PreconditionError("fit_gmm: n (" + std::to_string(train.rows()) + ") < k (" + std::to_string(k) + ")");

  const Eigen::Index n = train.rows();
  const Eigen::Index dim = train.cols();
  const Codebook init = fit_kmeans(train, k, seed);

  GmmResult result;
  DiagonalGmm& g = result.gmm;
  g.means = init.centroids;
  g.variances = RowMatrix::Zero(k, dim);
  g.weights = Vector::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = assign_nearest(init, train.row(i).transpose());
    g.weights[j] += 1.0;
    g.variances.row(j) += (train.row(i) - g.means.row(j)).array().square().matrix();
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    g.variances.row(j) /= std::max(g.weights[j], 1.0);
    g.weights[j] /= static_cast<double>(n);
  }
  g.variances = g.variances.cwiseMax(options.variance_floor);

  RowMatrix gamma(n, k);
  Vector logp;
  bool just_reseeded = false;
  for (int iter = 0;; ++iter) {
    double ll = 0.0;
    Eigen::Index worst = 0;
    double worst_ll = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      component_log_densities(g, train.row(i).transpose(), logp);
      const double li = to_posteriors(logp);
      gamma.row(i) = logp.transpose();
      ll += li;
      if (li < worst_ll) {
        worst_ll = li;
        worst = i;
      }
    }
    ll /= static_cast<double>(n);
    const bool converged = !result.log_likelihood.empty() &&
                           ll - result.log_likelihood.back() < options.tolerance && !just_reseeded;
    result.log_likelihood.push_back(ll);
    if (iter == options.max_iterations || converged) break;

    // M-step.
    just_reseeded = false;
    const Vector mass = gamma.colwise().sum().transpose();
    for (Eigen::Index j = 0; j < k; ++j) {
      g.weights[j] = mass[j] / static_cast<double>(n);
      if (mass[j] <= 0.0) continue;
      g.means.row(j) = (gamma.col(j).transpose() * train) / mass[j];
      RowMatrix centered = train.rowwise() - g.means.row(j);
      g.variances.row(j) = ((gamma.col(j).transpose() * centered.array().square().matrix()) / mass[j])
                               .cwiseMax(options.variance_floor);
    }

    for (Eigen::Index j = 0; j < k; ++j) {
      if (g.weights[j] >= options.min_weight) continue;
      if (result.reseeds > 0)
        throw DataError("fit_gmm: component " + std::to_string(j) + " degenerate after re-seeding");
      ++result.reseeds;
      just_reseeded = true;
      g.means.row(j) = train.row(worst);
      const Vector global_mean = train.colwise().mean().transpose();
      g.variances.row(j) =
          ((train.rowwise() - global_mean.transpose()).array().square().colwise().mean()).matrix().cwiseMax(
              options.variance_floor);
      g.weights[j] = 1.0 / static_cast<double>(k);
      g.weights /= g.weights.sum();
    }
  }
  return result;
}

DiagonalGmm fit_gmm(const DescriptorSet& train, Eigen::Index k, std::uint64_t seed) {
  return fit_gmm_traced(train, k, seed).gmm;
}

Vector gmm_posteriors(const DiagonalGmm& g, const Eigen::Ref<const Vector>& x) {
  if (x.size() != g.dim()) throw PreconditionError("gmm_posteriors: dimension mismatch");
  Vector logp;
  component_log_densities(g, x, logp);
  to_posteriors(logp);
  return logp;
}

}  // namespace convret
