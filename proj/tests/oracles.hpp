#pragma once

// Reference implementations used only by the tests. They share no code with
// the library beyond the Eigen containers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

struct Eigenpairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns
};

// Cyclic Jacobi rotations on a symmetric matrix.
inline Eigenpairs jacobi_eigen(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  Eigenpairs out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

// Plain loops: mean and 1/n covariance of the rows.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, Eigen::VectorXd* mean_out = nullptr) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) mean[j] += x(i, j);
  mean /= static_cast<double>(n);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) c(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
  c /= static_cast<double>(n);
  if (mean_out) *mean_out = mean;
  return c;
}

// |a| and |b| agree up to sign.
inline double sign_free_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff());
}

enum class Label { kPositive, kNegative, kJunk };

// Closed form of the trapezoidal walk: the k-th hit at cleaned rank r adds
// (1/P) * ((k-1)/(r-1) + k/r) / 2, with the first term read as 1 when r = 1.
inline double average_precision(const std::vector<Label>& ranking, std::size_t positives) {
  std::vector<Label> cleaned;
  for (auto l : ranking)
    if (l != Label::kJunk) cleaned.push_back(l);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 1; r <= cleaned.size(); ++r) {
    if (cleaned[r - 1] != Label::kPositive) continue;
    ++hits;
    const double before = r == 1 ? 1.0 : static_cast<double>(hits - 1) / static_cast<double>(r - 1);
    const double at = static_cast<double>(hits) / static_cast<double>(r);
    ap += (before + at) / 2.0 / static_cast<double>(positives);
  }
  return ap;
}

inline unsigned hamming_bits(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b,
                             unsigned bits) {
  unsigned d = 0;
  for (unsigned i = 0; i < bits; ++i) {
    const bool x = (a[i / 64] >> (i % 64)) & 1u;
    const bool y = (b[i / 64] >> (i % 64)) & 1u;
    d += x != y;
  }
  return d;
}

// Diagonal Gaussian density evaluated term by term.
inline double gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& var) {
  const double pi = 3.14159265358979323846;
  double p = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    p *= std::exp(-(x[i] - mean[i]) * (x[i] - mean[i]) / (2.0 * var[i])) / std::sqrt(2.0 * pi * var[i]);
  return p;
}

}  // namespace oracle
