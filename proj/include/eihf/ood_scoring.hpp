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

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "eihf/frequency.hpp"
#include "eihf/tensor.hpp"

namespace eihf {

enum class ScoreConvention { kLargerIsId, kLargerIsOod };

/// Detector outputs. Every scorer in this library emits kLargerIsId.
struct ScoreSet {
  std::vector<double> scores;
  ScoreConvention convention = ScoreConvention::kLargerIsId;

  std::size_t size() const { return scores.size(); }
  /// Same ranking expressed as larger = ID.
  ScoreSet as_larger_is_id() const;
};

/// Class means plus a shrunk, tied covariance held in factored form.
class ClassStats {
 public:
  static constexpr double kDefaultShrinkage = 0.05;

  /// Re-assembles stats from stored parts and refactorizes sigma_hat.
  ClassStats(Matrix mu, Eigen::MatrixXd sigma_hat, double lambda, std::vector<std::size_t> class_sizes,
             std::vector<Eigen::MatrixXd> per_class_cov = {});

  std::size_t class_count() const { return static_cast<std::size_t>(mu_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(mu_.cols()); }
  const Matrix& mu() const { return mu_; }
  const Eigen::MatrixXd& sigma_hat() const { return sigma_hat_; }
  double lambda() const { return lambda_; }
  const std::vector<std::size_t>& class_sizes() const { return class_sizes_; }
  bool has_per_class_cov() const { return !per_class_cov_.empty(); }
  const std::vector<Eigen::MatrixXd>& per_class_cov() const { return per_class_cov_; }

  /// Cholesky factor L with sigma_hat = L L^T.
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }

  /// (z - mu_c)^T sigma_hat^{-1} (z - mu_c) through triangular solves.
  double distance(std::span<const double> z, std::size_t c) const;

  /// Input transform the features were produced under, if recorded.
  const std::optional<TransformSpec>& transform() const { return transform_; }
  ClassStats with_transform(std::optional<TransformSpec> transform) const;

 private:
  Matrix mu_;
  Eigen::MatrixXd sigma_hat_;
  double lambda_;
  std::vector<std::size_t> class_sizes_;
  std::vector<Eigen::MatrixXd> per_class_cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::optional<TransformSpec> transform_;
};

/// Per-class means, population (1/N) pooled within-class covariance, then
/// sigma <- (1 - lambda) sigma + lambda * (tr(sigma) / D) I. Fails if the
/// result does not factor.
ClassStats fit_class_stats(const FeatureMatrix& features, double lambda = ClassStats::kDefaultShrinkage);

/// -min_c d_c(z).
double mahalanobis_score(std::span<const double> z, const ClassStats& stats);
ScoreSet mahalanobis_scores(const FeatureMatrix& features, const ClassStats& stats);

/// Max softmax probability.
double msp_score(std::span<const double> logits);
ScoreSet msp_scores(const FeatureMatrix& logits);

/// T * log sum_i exp(logit_i / T).
double energy_score(std::span<const double> logits, double temperature = 1.0);
ScoreSet energy_scores(const FeatureMatrix& logits, double temperature = 1.0);

struct KnnOptions {
  std::size_t k = 50;
  bool normalize = true;
};

/// -(distance to the k-th nearest bank row).
double knn_score(std::span<const double> z, const FeatureMatrix& bank, const KnnOptions& options);
ScoreSet knn_scores(const FeatureMatrix& queries, const FeatureMatrix& bank, const KnnOptions& options);

// Stats bundle: an FTB container ("FTBC" | u32 entry count | per entry:
// u16 name length, name, u64 record length, FTB record).
void save_class_stats(const ClassStats& stats, const std::filesystem::path& path);
ClassStats load_class_stats(const std::filesystem::path& path);

}  // namespace eihf
