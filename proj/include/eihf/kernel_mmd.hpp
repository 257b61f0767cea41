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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eihf/frequency.hpp"
#include "eihf/tensor.hpp"

namespace eihf {

enum class MmdEstimator { kBiased, kUnbiased };

std::string_view to_string(MmdEstimator estimator);
MmdEstimator parse_mmd_estimator(std::string_view name);

struct KernelParams {
  double sigma_k = 1.0;
  MmdEstimator estimator = MmdEstimator::kUnbiased;
};

/// Median pairwise Euclidean distance over distinct rows (self-pairs
/// excluded); falls back to the mean distance when the median is zero.
double median_bandwidth(const FeatureMatrix& features);

/// exp(-||x - y||^2 / (2 sigma^2)).
double rbf_kernel(std::span<const double> x, std::span<const double> y, double sigma_k);

/// Empirical squared MMD. Biased: V-statistic with diagonals. Unbiased:
/// diagonal-free within-set means, same cross term.
double mmd2(const FeatureMatrix& x, const FeatureMatrix& y, const KernelParams& params);

struct BandProfile {
  std::vector<double> values;  // values[b] is band b + 1, low to high
  double sigma_k = 0.0;
  MmdEstimator estimator = MmdEstimator::kUnbiased;
  std::size_t bands = 0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;

  /// 1-based band of the largest value.
  std::size_t argmax_band() const;
};

using ImageEncoder = std::function<Vector(const ImageTensor&)>;

struct ProfileOptions {
  std::optional<double> sigma_k;  // unset: median bandwidth on full-image pooled features
  MmdEstimator estimator = MmdEstimator::kUnbiased;
};

/// Encodes T_b(x) for every band and both sets, then computes mmd2 per band
/// with one bandwidth shared by all bands.
BandProfile bandwise_profile(const ImageEncoder& encode, std::span<const ImageTensor> id_images,
                             std::span<const ImageTensor> ood_images, const BandMaskSet& masks,
                             const ProfileOptions& options);

/// Same profile from precomputed per-band features. Without an explicit
/// sigma, the full-image features set the bandwidth.
BandProfile profile_from_features(std::span<const FeatureMatrix> id_bands, std::span<const FeatureMatrix> ood_bands,
                                  const ProfileOptions& options, const FeatureMatrix* id_full = nullptr,
                                  const FeatureMatrix* ood_full = nullptr);

/// Row-wise concatenation of two feature matrices (labels dropped).
FeatureMatrix pool_rows(const FeatureMatrix& a, const FeatureMatrix& b);

}  // namespace eihf
