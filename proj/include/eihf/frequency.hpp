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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eihf/tensor.hpp"

namespace eihf {

// ---------------------------------------------------------------------------
// Band decomposition
// ---------------------------------------------------------------------------

/// B binary masks over the centered spectrum (DC at (H/2, W/2), integer
/// division). Masks partition the grid: every bin belongs to exactly one band.
struct BandMaskSet {
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Plane> masks;  // masks[b] is band b + 1

  /// 0-based band index of a centered bin.
  std::size_t band_of(std::size_t cy, std::size_t cx) const;
};

/// Normalized radius of centered bin (cy, cx): the offset from DC scaled by
/// (1/H, 1/W), divided by the largest such radius on the grid. In [0, 1].
double normalized_radius(std::size_t height, std::size_t width, std::size_t cy, std::size_t cx);

/// Equal-width annular bands over the normalized radius: band b holds radii in
/// [(b-1)/B, b/B), the last band also holds radius 1. Warns if a band is empty.
BandMaskSet make_band_masks(std::size_t height, std::size_t width, std::size_t bands);

struct BandLimited {
  ImageTensor image;
  double imag_residue = 0.0;  // max |Im| of the inverse transform
};

/// Per channel: forward 2D DFT, multiply by the centered mask, inverse DFT,
/// keep the real part.
BandLimited band_limit(const ImageTensor& img, const Plane& mask);

/// band_limit for every mask in the set, sharing one forward transform.
std::vector<ImageTensor> band_decompose(const ImageTensor& img, const BandMaskSet& masks);

// ---------------------------------------------------------------------------
// High-frequency residual
// ---------------------------------------------------------------------------

enum class ResidualOperator { kGaussian, kSobel, kLaplace };

std::string_view to_string(ResidualOperator op);
ResidualOperator parse_residual_operator(std::string_view name);

struct ResidualParams {
  static constexpr double kDefaultEpsilon = 1e-6;

  std::size_t kernel_size = 5;
  double sigma_blur = 1.0;
  std::optional<double> alpha_hf;  // unset until fitted
  double epsilon = kDefaultEpsilon;
  ResidualOperator op = ResidualOperator::kGaussian;

  /// Throws a parameter error if kernel_size is even or < 3, or sigma/epsilon <= 0.
  void validate() const;
};

/// 0.2989 R + 0.5870 G + 0.1140 B.
Plane grayscale(const ImageTensor& img);

/// Truncated Gaussian weights, renormalized to sum to one.
std::vector<double> gaussian_kernel_1d(std::size_t size, double sigma);

/// Reflect-101 index (mirror without repeating the edge sample).
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// 2D Gaussian convolution with reflect padding; output has the input's size.
Plane gaussian_smooth(const Plane& map, const ResidualParams& params);

/// |G - K*G| for the Gaussian operator; gradient magnitude for Sobel; |Laplacian|
/// for Laplace. Always >= 0.
Plane hf_residual(const ImageTensor& img, const ResidualParams& params);

/// Streaming population statistics over residual pixels (Welford updates,
/// Chan merge), so partial accumulators from parallel workers can be combined.
class AlphaAccumulator {
 public:
  void add(double value);
  void add(const Plane& map);
  void merge(const AlphaAccumulator& other);

  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  double population_std() const;
  /// 1 / (sigma + epsilon); throws if fewer than two pixels were seen.
  double alpha(double epsilon) const;

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

double fit_alpha(std::span<const Plane> residual_maps, double epsilon = ResidualParams::kDefaultEpsilon);

/// concat(x, alpha * C_hf(x)); channels 0..2 are copied bit-for-bit.
ImageTensor eihf_transform(const ImageTensor& img, const ResidualParams& params);

// ---------------------------------------------------------------------------
// Fourth-channel ablations
// ---------------------------------------------------------------------------

enum class AblationVariant { kZero, kRandom, kLowFreq, kShuffledHf };

AblationVariant parse_ablation_variant(std::string_view name);

/// The single replacement channel for an ablation. lowfreq uses alpha * K*G
/// (alpha fitted on K*G statistics); shuffled_hf permutes alpha * C_hf.
Plane ablation_channel(const ImageTensor& img, AblationVariant variant, const ResidualParams& params,
                       std::uint64_t seed);

/// The unscaled map an alpha is fitted on: C_hf for eihf/shuffled, K*G for lowfreq.
Plane low_frequency_map(const ImageTensor& img, const ResidualParams& params);

// ---------------------------------------------------------------------------
// Whole-transform description, shared by the CLI and the stats bundle
// ---------------------------------------------------------------------------

enum class TransformVariant { kIdentity, kEihf, kZero, kRandom, kLowFreq, kShuffled };

std::string_view to_string(TransformVariant variant);
TransformVariant parse_transform_variant(std::string_view name);

struct TransformSpec {
  TransformVariant variant = TransformVariant::kIdentity;
  ResidualParams params;
  std::uint64_t seed = 0;

  bool needs_alpha() const;
  /// Maps whose statistics define alpha for this variant.
  Plane alpha_source(const ImageTensor& img) const;
  /// Applies the transform to the index-th image of a set; per-image
  /// randomness is drawn from SplitMix64::derive(seed, index).
  ImageTensor apply(const ImageTensor& img, std::uint64_t index) const;

  friend bool operator==(const TransformSpec& a, const TransformSpec& b);
};

}  // namespace eihf
