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

#include "eihf/toy_encoder.hpp"

#include <algorithm>

#include "eihf/error.hpp"
#include "eihf/frequency.hpp"
#include "eihf/rng.hpp"

namespace eihf {

ToyEncoder::ToyEncoder(std::uint64_t seed, std::size_t in_channels, std::size_t filters, std::size_t kernel)
    : seed_(seed), in_channels_(in_channels), filters_(filters), kernel_(kernel) {
  require(in_channels == 1 || in_channels == 3 || in_channels == 4, ErrorKind::kParameter,
          "toy encoder: in_channels must be 1, 3 or 4");
  require(filters >= 1, ErrorKind::kParameter, "toy encoder: need at least one filter");
  require(kernel >= 1 && kernel % 2 == 1, ErrorKind::kParameter, "toy encoder: kernel size must be odd");
  SplitMix64 rng(seed);
  weights_.resize(filters * in_channels * kernel * kernel);
  for (double& w : weights_) w = rng.normal();
}

Vector ToyEncoder::encode(const ImageTensor& img) const {
  require(img.channels() == in_channels_, ErrorKind::kParameter,
          "toy encoder: expects " + std::to_string(in_channels_) + " channels, got " + std::to_string(img.channels()));
  require(img.height() > kernel_ / 2 && img.width() > kernel_ / 2, ErrorKind::kParameter,
          "toy encoder: image smaller than kernel");
  const auto h = static_cast<std::ptrdiff_t>(img.height());
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  const auto k = static_cast<std::ptrdiff_t>(kernel_);
  const std::ptrdiff_t r = k / 2;

  // Reflect-padded copy of each channel so the inner loop is branch-free.
  const std::ptrdiff_t pw = w + 2 * r;
  const std::ptrdiff_t ph = h + 2 * r;
  std::vector<double> padded(in_channels_ * static_cast<std::size_t>(ph * pw));
  for (std::size_t c = 0; c < in_channels_; ++c) {
    for (std::ptrdiff_t y = 0; y < ph; ++y) {
      for (std::ptrdiff_t x = 0; x < pw; ++x) {
        padded[c * static_cast<std::size_t>(ph * pw) + static_cast<std::size_t>(y * pw + x)] =
            img.at(c, static_cast<std::size_t>(reflect_index(y - r, h)), static_cast<std::size_t>(reflect_index(x - r, w)));
      }
    }
  }

  Vector features(static_cast<Eigen::Index>(filters_));
  std::vector<double> response(static_cast<std::size_t>(h * w));
  for (std::size_t f = 0; f < filters_; ++f) {
    std::fill(response.begin(), response.end(), 0.0);
    for (std::size_t c = 0; c < in_channels_; ++c) {
      const double* plane = padded.data() + c * static_cast<std::size_t>(ph * pw);
      const double* wk = weights_.data() + (f * in_channels_ + c) * static_cast<std::size_t>(k * k);
      for (std::ptrdiff_t dy = 0; dy < k; ++dy) {
        for (std::ptrdiff_t dx = 0; dx < k; ++dx) {
          const double weight = wk[dy * k + dx];
          for (std::ptrdiff_t y = 0; y < h; ++y) {
            const double* src = plane + (y + dy) * pw + dx;
            double* dst = response.data() + y * w;
            for (std::ptrdiff_t x = 0; x < w; ++x) dst[x] += weight * src[x];
          }
        }
      }
    }
    double sum = 0.0;
    for (double v : response) sum += std::max(0.0, v);
    features(static_cast<Eigen::Index>(f)) = sum / static_cast<double>(response.size());
  }
  return features;
}

std::string ToyEncoder::descriptor() const {
  return "toy:" + std::to_string(seed_) + "," + std::to_string(filters_) + "," + std::to_string(kernel_);
}

}  // namespace eihf
