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

#include "eihf/kernel_mmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eihf/error.hpp"
#include "eihf/parallel.hpp"

namespace eihf {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      carry_ += (sum_ - t) + v;
    } else {
      carry_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

const double* row_ptr(const FeatureMatrix& m, std::size_t i) { return m.values().data() + i * m.cols(); }

// Sum of k(a_i, a_j) over i < j.
double within_offdiag_sum(const FeatureMatrix& a, double inv_two_sigma2) {
  const std::size_t n = a.rows();
  const std::size_t d = a.cols();
  std::vector<double> partial(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    CompensatedSum s;
    for (std::size_t j = i + 1; j < n; ++j) s.add(std::exp(-squared_distance(row_ptr(a, i), row_ptr(a, j), d) * inv_two_sigma2));
    partial[i] = s.value();
  });
  CompensatedSum total;
  for (double p : partial) total.add(p);
  return total.value();
}

double cross_sum(const FeatureMatrix& a, const FeatureMatrix& b, double inv_two_sigma2) {
  const std::size_t n = a.rows();
  const std::size_t m = b.rows();
  const std::size_t d = a.cols();
  std::vector<double> partial(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    CompensatedSum s;
    for (std::size_t j = 0; j < m; ++j) s.add(std::exp(-squared_distance(row_ptr(a, i), row_ptr(b, j), d) * inv_two_sigma2));
    partial[i] = s.value();
  });
  CompensatedSum total;
  for (double p : partial) total.add(p);
  return total.value();
}

// Canonical argument order so that mmd2(X, Y) and mmd2(Y, X) run the exact
// same floating-point operations.
bool canonical_order(const FeatureMatrix& x, const FeatureMatrix& y) {
  if (x.rows() != y.rows()) return x.rows() < y.rows();
  const auto& a = x.values();
  const auto& b = y.values();
  return !std::lexicographical_compare(b.data(), b.data() + b.size(), a.data(), a.data() + a.size());
}

}  // namespace

std::string_view to_string(MmdEstimator estimator) {
  return estimator == MmdEstimator::kBiased ? "biased" : "unbiased";
}

MmdEstimator parse_mmd_estimator(std::string_view name) {
  if (name == "biased") return MmdEstimator::kBiased;
  if (name == "unbiased") return MmdEstimator::kUnbiased;
  fail(ErrorKind::kParameter, "unknown estimator '" + std::string(name) + "'");
}

double median_bandwidth(const FeatureMatrix& features) {
  const std::size_t n = features.rows();
  require(n >= 2, ErrorKind::kParameter, "median bandwidth: need at least 2 rows");
  const std::size_t d = features.cols();
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist.push_back(std::sqrt(squared_distance(row_ptr(features, i), row_ptr(features, j), d)));
    }
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  if (median > 0.0) return median;
  CompensatedSum total;
  for (double v : dist) total.add(v);
  const double mean = total.value() / static_cast<double>(dist.size());
  require(mean > 0.0, ErrorKind::kValidation, "median bandwidth: degenerate point set (all points identical)");
  return mean;
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double sigma_k) {
  require(x.size() == y.size(), ErrorKind::kParameter,
          "rbf: dimension mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  require(sigma_k > 0.0, ErrorKind::kParameter, "rbf: bandwidth must be > 0");
  return std::exp(-squared_distance(x.data(), y.data(), x.size()) / (2.0 * sigma_k * sigma_k));
}

double mmd2(const FeatureMatrix& x_in, const FeatureMatrix& y_in, const KernelParams& params) {
  require(params.sigma_k > 0.0 && std::isfinite(params.sigma_k), ErrorKind::kParameter, "mmd2: bandwidth must be > 0");
  require(x_in.cols() == y_in.cols(), ErrorKind::kParameter,
          "mmd2: feature dims differ (" + std::to_string(x_in.cols()) + " vs " + std::to_string(y_in.cols()) + ")");
  const bool keep = canonical_order(x_in, y_in);
  const FeatureMatrix& x = keep ? x_in : y_in;
  const FeatureMatrix& y = keep ? y_in : x_in;
  const auto n = static_cast<double>(x.rows());
  const auto m = static_cast<double>(y.rows());
  const double inv = 1.0 / (2.0 * params.sigma_k * params.sigma_k);

  const double xx = within_offdiag_sum(x, inv);
  const double yy = within_offdiag_sum(y, inv);
  const double xy = cross_sum(x, y, inv) / (n * m);

  if (params.estimator == MmdEstimator::kBiased) {
    const double mean_xx = (2.0 * xx + n) / (n * n);
    const double mean_yy = (2.0 * yy + m) / (m * m);
    return mean_xx + mean_yy - 2.0 * xy;
  }
  require(x.rows() >= 2 && y.rows() >= 2, ErrorKind::kParameter,
          "mmd2: unbiased estimator needs at least 2 samples per set");
  const double mean_xx = 2.0 * xx / (n * (n - 1.0));
  const double mean_yy = 2.0 * yy / (m * (m - 1.0));
  return mean_xx + mean_yy - 2.0 * xy;
}

std::size_t BandProfile::argmax_band() const {
  require(!values.empty(), ErrorKind::kParameter, "profile is empty");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin()) + 1;
}

FeatureMatrix pool_rows(const FeatureMatrix& a, const FeatureMatrix& b) {
  require(a.cols() == b.cols(), ErrorKind::kParameter, "pool: feature dims differ");
  Matrix m(static_cast<Eigen::Index>(a.rows() + b.rows()), static_cast<Eigen::Index>(a.cols()));
  m << a.values(), b.values();
  return FeatureMatrix(std::move(m));
}

namespace {

FeatureMatrix encode_all(const ImageEncoder& encode, std::span<const ImageTensor> images) {
  std::vector<Vector> rows(images.size());
  parallel_for(images.size(), [&](std::size_t i) { rows[i] = encode(images[i]); });
  return stack_rows(rows);
}

}  // namespace

BandProfile profile_from_features(std::span<const FeatureMatrix> id_bands, std::span<const FeatureMatrix> ood_bands,
                                  const ProfileOptions& options, const FeatureMatrix* id_full,
                                  const FeatureMatrix* ood_full) {
  require(!id_bands.empty() && id_bands.size() == ood_bands.size(), ErrorKind::kParameter,
          "profile: need the same non-zero number of ID and OOD band feature sets");
  double sigma = 0.0;
  if (options.sigma_k) {
    sigma = *options.sigma_k;
  } else {
    require(id_full != nullptr && ood_full != nullptr, ErrorKind::kParameter,
            "profile: median bandwidth needs full-image features");
    sigma = median_bandwidth(pool_rows(*id_full, *ood_full));
  }
  require(sigma > 0.0, ErrorKind::kParameter, "profile: bandwidth must be > 0");

  BandProfile profile;
  profile.sigma_k = sigma;
  profile.estimator = options.estimator;
  profile.bands = id_bands.size();
  profile.n_id = id_bands.front().rows();
  profile.n_ood = ood_bands.front().rows();
  for (std::size_t b = 0; b < id_bands.size(); ++b) {
    require(id_bands[b].rows() == profile.n_id && ood_bands[b].rows() == profile.n_ood, ErrorKind::kParameter,
            "profile: every band must use the same ID/OOD samples");
    profile.values.push_back(mmd2(id_bands[b], ood_bands[b], KernelParams{sigma, options.estimator}));
  }
  return profile;
}

BandProfile bandwise_profile(const ImageEncoder& encode, std::span<const ImageTensor> id_images,
                             std::span<const ImageTensor> ood_images, const BandMaskSet& masks,
                             const ProfileOptions& options) {
  require(!id_images.empty() && !ood_images.empty(), ErrorKind::kParameter, "profile: empty sample set");
  const std::size_t bands = masks.bands;

  auto encode_bands = [&](std::span<const ImageTensor> images) {
    std::vector<std::vector<Vector>> per_band(bands, std::vector<Vector>(images.size()));
    parallel_for(images.size(), [&](std::size_t i) {
      const auto limited = band_decompose(images[i], masks);
      for (std::size_t b = 0; b < bands; ++b) per_band[b][i] = encode(limited[b]);
    });
    std::vector<FeatureMatrix> out;
    out.reserve(bands);
    for (const auto& rows : per_band) out.push_back(stack_rows(rows));
    return out;
  };

  const auto id_bands = encode_bands(id_images);
  const auto ood_bands = encode_bands(ood_images);
  if (options.sigma_k) return profile_from_features(id_bands, ood_bands, options);
  const FeatureMatrix id_full = encode_all(encode, id_images);
  const FeatureMatrix ood_full = encode_all(encode, ood_images);
  return profile_from_features(id_bands, ood_bands, options, &id_full, &ood_full);
}

}  // namespace eihf
