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
#include <string>
#include <vector>

#include "eihf/tensor.hpp"

namespace eihf {

/// Training-free featurizer: F random k×k convolution filters over all input
/// channels, rectifier, global average pooling. Feature i is filter i's mean
/// rectified response.
class ToyEncoder {
 public:
  static constexpr std::size_t kDefaultFilters = 64;
  static constexpr std::size_t kDefaultKernel = 5;

  /// Filter weights are i.i.d. standard normal from SplitMix64(seed).
  ToyEncoder(std::uint64_t seed, std::size_t in_channels, std::size_t filters = kDefaultFilters,
             std::size_t kernel = kDefaultKernel);

  std::uint64_t seed() const { return seed_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t filters() const { return filters_; }
  std::size_t kernel() const { return kernel_; }

  /// Weights laid out [filter][channel][ky][kx].
  const std::vector<double>& weights() const { return weights_; }

  Vector encode(const ImageTensor& img) const;

  /// "toy:<seed>,<F>,<k>".
  std::string descriptor() const;

 private:
  std::uint64_t seed_;
  std::size_t in_channels_;
  std::size_t filters_;
  std::size_t kernel_;
  std::vector<double> weights_;
};

}  // namespace eihf
