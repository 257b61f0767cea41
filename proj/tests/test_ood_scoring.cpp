// Copyright 2026 The eihf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "eihf/error.hpp"
#include "eihf/ood_scoring.hpp"
#include "support.hpp"

using namespace eihf;
using eihf::testing::random_matrix;
using eihf::testing::TempDir;

namespace {

ClassStats fixed_stats(Matrix mu, Eigen::MatrixXd sigma) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(mu.rows()), 1);
  return ClassStats(std::move(mu), std::move(sigma), 0.0, std::move(sizes));
}

FeatureMatrix labeled(const Matrix& values, std::vector<std::int64_t> ids) {
  return FeatureMatrix(values, LabelVector(std::move(ids)));
}

// Pooled population covariance by explicit loops, then shrinkage.
Eigen::MatrixXd oracle_sigma(const Matrix& z, const std::vector<std::int64_t>& y, std::size_t classes, double lambda) {
  const auto d = z.cols();
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes), d);
  std::vector<double> counts(classes, 0.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    means.row(y[i]) += z.row(i);
    counts[y[i]] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c) means.row(static_cast<Eigen::Index>(c)) /= counts[c];
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) {
        s(a, b) += (z(i, a) - means(y[i], a)) * (z(i, b) - means(y[i], b));
      }
    }
  }
  s /= static_cast<double>(z.rows());
  const double shrink = s.trace() / static_cast<double>(d);
  return (1.0 - lambda) * s + lambda * shrink * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("mahalanobis: hand solves") {
  const auto unit = fixed_stats(Matrix::Zero(1, 2), Eigen::MatrixXd::Identity(2, 2));
  const std::vector<double> z{3.0, 4.0};
  CHECK(unit.distance(z, 0) == doctest::Approx(25.0).epsilon(1e-15));
  CHECK(mahalanobis_score(z, unit) == doctest::Approx(-25.0).epsilon(1e-15));

  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 4.0;
  diag(1, 1) = 1.0;
  const auto stretched = fixed_stats(Matrix::Zero(1, 2), diag);
  const std::vector<double> z2{2.0, 0.0};
  CHECK(mahalanobis_score(z2, stretched) == doctest::Approx(-1.0).epsilon(1e-15));

  Matrix mu(2, 2);
  mu << 1.0, 2.0, -3.0, 0.5;
  const auto two = fixed_stats(mu, diag);
  const std::vector<double> at_mu{-3.0, 0.5};
  CHECK(mahalanobis_score(at_mu, two) == 0.0);
}

TEST_CASE("mahalanobis: identity covariance equals squared euclidean") {
  SplitMix64 rng(5);
  const Matrix mu = random_matrix(rng, 3, 6);
  const auto stats = fixed_stats(mu, Eigen::MatrixXd::Identity(6, 6));
  const Matrix queries = random_matrix(rng, 20, 6, 2.0);
  const auto scores = mahalanobis_scores(FeatureMatrix(queries), stats);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    double best = INFINITY;
    for (Eigen::Index c = 0; c < 3; ++c) best = std::min(best, (queries.row(i) - mu.row(c)).squaredNorm());
    CHECK(std::abs(scores.scores[i] + best) <= 1e-9 * std::max(1.0, best));
  }
}

TEST_CASE("fit_class_stats: matches loop oracle and is permutation invariant") {
  SplitMix64 rng(17);
  const Matrix z = random_matrix(rng, 60, 4);
  std::vector<std::int64_t> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = static_cast<std::int64_t>(i % 3);
  const auto stats = fit_class_stats(labeled(z, y), 0.05);
  CHECK((stats.sigma_hat() - oracle_sigma(z, y, 3, 0.05)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(stats.class_sizes() == std::vector<std::size_t>{20, 20, 20});
  CHECK(stats.lambda() == 0.05);

  std::vector<std::size_t> order(60);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::swap(order[3], order[40]);
  Matrix zp(60, 4);
  std::vector<std::int64_t> yp(60);
  for (std::size_t i = 0; i < 60; ++i) {
    zp.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(order[i]));
    yp[i] = y[order[i]];
  }
  const auto permuted = fit_class_stats(labeled(zp, yp), 0.05);
  CHECK((permuted.mu() - stats.mu()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((permuted.sigma_hat() - stats.sigma_hat()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_class_stats: sampling and degenerate inputs") {
  SplitMix64 rng(23);
  const Matrix z = random_matrix(rng, 10000, 3);
  const auto single = fit_class_stats(labeled(z, std::vector<std::int64_t>(10000, 0)), 0.0);
  CHECK((single.sigma_hat() - Eigen::MatrixXd::Identity(3, 3)).norm() < 0.1);

  Matrix two(2, 2);
  two << 0.0, 0.0, 2.0, 0.0;
  try {
    fit_class_stats(labeled(two, {0, 1}), 1.0);
    FAIL("factored a zero covariance");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("shrinkage") != std::string::npos);
  }

  Matrix noisy(4000, 2);
  std::vector<std::int64_t> ids(4000);
  for (Eigen::Index i = 0; i < 4000; ++i) {
    ids[i] = i % 2;
    noisy(i, 0) = (ids[i] == 1 ? 2.0 : 0.0) + rng.normal();
    noisy(i, 1) = rng.normal();
  }
  const auto stats = fit_class_stats(labeled(noisy, ids), 1.0);
  CHECK(std::abs(stats.mu()(1, 0) - 2.0) < 0.1);
  CHECK((stats.sigma_hat() - Eigen::MatrixXd::Identity(2, 2)).norm() < 0.1);

  CHECK_THROWS_AS(fit_class_stats(FeatureMatrix(two, LabelVector({0, 0}, 2)), 0.05), Error);
  CHECK_THROWS_AS(fit_class_stats(FeatureMatrix(two), 0.05), Error);
  CHECK_THROWS_AS(fit_class_stats(labeled(noisy, ids), 1.5), Error);
}

TEST_CASE("msp and energy") {
  CHECK(msp_score(std::vector<double>{0.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(msp_score(std::vector<double>{2.0, 0.0}) == doctest::Approx(std::exp(2.0) / (std::exp(2.0) + 1.0)).epsilon(1e-15));
  CHECK(msp_score(std::vector<double>{2.0, 0.0}) == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(msp_score(std::vector<double>{1002.0, 1000.0}) == doctest::Approx(msp_score(std::vector<double>{2.0, 0.0})).epsilon(1e-15));

  CHECK(energy_score(std::vector<double>{0.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (double t : {0.5, 1.0, 3.0}) CHECK(energy_score(std::vector<double>{1.7}, t) == doctest::Approx(1.7).epsilon(1e-15));
  const std::vector<double> logits{0.3, -1.2, 2.5};
  const std::vector<double> shifted{10.3, 8.8, 12.5};
  CHECK(energy_score(shifted, 2.0) - energy_score(logits, 2.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(std::isfinite(energy_score(std::vector<double>{1e4, 1e4 - 1.0})));
  CHECK_THROWS_AS(energy_score(logits, 0.0), Error);
}

TEST_CASE("knn") {
  Matrix bank(2, 1);
  bank << 0.0, 10.0;
  const FeatureMatrix b(bank);
  CHECK(knn_score(std::vector<double>{1.0}, b, KnnOptions{1, false}) == -1.0);
  CHECK(knn_score(std::vector<double>{10.0}, b, KnnOptions{1, false}) == 0.0);
  CHECK(knn_score(std::vector<double>{1.0}, b, KnnOptions{2, false}) == -9.0);
  CHECK_THROWS_AS(knn_score(std::vector<double>{1.0}, b, KnnOptions{3, false}), Error);

  // Brute-force oracle on unit-normalized vectors.
  SplitMix64 rng(29);
  const Matrix pool = random_matrix(rng, 40, 5);
  const Matrix q = random_matrix(rng, 6, 5);
  const auto scores = knn_scores(FeatureMatrix(q), FeatureMatrix(pool), KnnOptions{7, true});
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < pool.rows(); ++j) d.push_back((q.row(i).normalized() - pool.row(j).normalized()).norm());
    std::sort(d.begin(), d.end());
    CHECK(scores.scores[i] == doctest::Approx(-d[6]).epsilon(1e-12));
  }
}

TEST_CASE("stats bundle round-trip") {
  TempDir dir("stats");
  SplitMix64 rng(31);
  const Matrix z = random_matrix(rng, 30, 3);
  std::vector<std::int64_t> y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = static_cast<std::int64_t>(i % 2);
  TransformSpec t;
  t.variant = TransformVariant::kEihf;
  t.params.alpha_hf = 12.5;
  const auto stats = fit_class_stats(labeled(z, y), 0.1).with_transform(t);
  save_class_stats(stats, dir / "s.ftbc");
  const auto back = load_class_stats(dir / "s.ftbc");
  CHECK(back.mu() == stats.mu());
  CHECK(back.sigma_hat() == stats.sigma_hat());
  CHECK(back.lambda() == 0.1);
  CHECK(back.class_sizes() == stats.class_sizes());
  REQUIRE(back.transform().has_value());
  CHECK(*back.transform() == t);
  const std::vector<double> probe{0.1, 0.2, 0.3};
  CHECK(mahalanobis_score(probe, back) == mahalanobis_score(probe, stats));

  std::ofstream(dir / "junk.ftbc") << "not a bundle";
  CHECK_THROWS_AS(load_class_stats(dir / "junk.ftbc"), Error);
}
