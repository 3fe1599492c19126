#include "convret/aggregation.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace convret;

namespace {

RowMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

RowMatrix random_unit_nonneg(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix v(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) v(i, j) = u(rng);
    v.row(i).normalize();
  }
  return v;
}

double dispersion(const Vector& s) { return s.maxCoeff() / s.minCoeff(); }

}  // namespace

TEST_CASE("sum, average and max pooling") {
  const auto v = rows({{1, 0}, {0, 1}});
  CHECK(aggregate_pool(v, AggregationMode::kSum) == Eigen::Vector2d(1, 1));
  CHECK(aggregate_pool(v, AggregationMode::kAvg) == Eigen::Vector2d(0.5, 0.5));
  CHECK(aggregate_pool(rows({{1, -2}, {0, 3}}), AggregationMode::kMax) == Eigen::Vector2d(1, 3));
  CHECK_THROWS_AS(aggregate_pool(RowMatrix(0, 2), AggregationMode::kSum), PreconditionError);
  CHECK_THROWS_AS(aggregate_pool(v, AggregationMode::kDemocratic), PreconditionError);
}

TEST_CASE("democratic weights for orthonormal rows are all ones") {
  const RowMatrix v = RowMatrix::Identity(4, 4);
  AggregationConfig one;
  one.sinkhorn_iterations = 1;
  CHECK(democratic_weights(v, one) == Vector::Ones(4));
  CHECK(democratic_weights(v) == Vector::Ones(4));
  CHECK(aggregate_democratic(v) == aggregate_pool(v, AggregationMode::kSum));
}

TEST_CASE("two identical rows reach 1/sqrt(2) after one iteration") {
  const auto v = rows({{0.6, 0.8}, {0.6, 0.8}});
  AggregationConfig one;
  one.sinkhorn_iterations = 1;
  const Vector l1 = democratic_weights(v, one);
  CHECK(l1[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(l1[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  const Vector l10 = democratic_weights(v);
  CHECK((l10 - l1).cwiseAbs().maxCoeff() < 1e-12);
  const Vector s = democratic_similarities(v, l10);
  CHECK(s[0] == doctest::Approx(1.0));
  const Vector agg = aggregate_democratic(v);
  CHECK(agg[0] == doctest::Approx(std::sqrt(2.0) * 0.6));
  CHECK(agg[1] == doctest::Approx(std::sqrt(2.0) * 0.8));
}

TEST_CASE("democratic weights reduce similarity dispersion") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = random_unit_nonneg(16, 8, rng);
    const Vector lambda = democratic_weights(v);
    CHECK((lambda.array() > 0).all());
    CHECK(dispersion(democratic_similarities(v, lambda)) < dispersion(democratic_similarities(v, Vector::Ones(16))));
  }
}

TEST_CASE("democratic aggregation is invariant to row order") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix v(12, 5);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) v(i, j) = g(rng);
    v.row(i).normalize();
  }
  const Vector ref = aggregate_democratic(v);
  std::vector<Eigen::Index> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    RowMatrix p(12, 5);
    for (Eigen::Index i = 0; i < 12; ++i) p.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
    CHECK(aggregate_democratic(p) == ref);
    CHECK(aggregate_pool(p, AggregationMode::kSum) == aggregate_pool(v, AggregationMode::kSum));
  }
}

TEST_CASE("democratic preconditions and edge cases") {
  CHECK_THROWS_AS(democratic_weights(rows({{1, 1}})), PreconditionError);
  CHECK(democratic_weights(rows({{0.6, 0.8}})) == Vector::Ones(1));
  AggregationConfig bad;
  bad.sinkhorn_iterations = 0;
  CHECK_THROWS_AS(democratic_weights(rows({{1, 0}}), bad), PreconditionError);
  bad = {};
  bad.sinkhorn_exponent = 0.0;
  CHECK_THROWS_AS(democratic_weights(rows({{1, 0}}), bad), PreconditionError);

  // Opposite rows: clamping keeps sigma_i = lambda_i^2 so lambda stays 1.
  const auto opposite = rows({{1, 0}, {-1, 0}});
  CHECK(democratic_weights(opposite) == Vector::Ones(2));
  AggregationConfig raw;
  raw.clamp_negative_gram = false;
  const Vector l = democratic_weights(opposite, raw);
  CHECK((l.array() > 0).all());
}

TEST_CASE("dispatcher") {
  const auto v = rows({{1, 0}, {0, 1}});
  AggregationConfig cfg;
  cfg.mode = AggregationMode::kAvg;
  CHECK(aggregate(v, cfg) == Eigen::Vector2d(0.5, 0.5));
  cfg.mode = AggregationMode::kDemocratic;
  CHECK(aggregate(v, cfg) == Eigen::Vector2d(1, 1));
}
