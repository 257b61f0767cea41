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
#include <vector>

#include <Eigen/Core>

namespace eihf {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Single-channel H×W real map, row-major. Used for grayscale intensity,
/// residual channels, and frequency masks.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
};

struct ChannelNorm {
  double mean = 0.0;
  double std = 1.0;
};

/// C×H×W image, channel-major then row-major. Immutable after construction.
class ImageTensor {
 public:
  static constexpr std::size_t kMinSide = 8;

  /// Validates channels ∈ {1,3,4}, sides ≥ 8, size match, and finiteness.
  ImageTensor(std::size_t channels, std::size_t height, std::size_t width,
              std::vector<double> data, std::optional<std::vector<ChannelNorm>> norm = std::nullopt);

  static ImageTensor from_planes(std::span<const Plane> planes,
                                 std::optional<std::vector<ChannelNorm>> norm = std::nullopt);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane_size() const { return height_ * width_; }

  std::span<const double> data() const { return data_; }
  std::span<const double> channel_span(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
  }
  Plane channel(std::size_t c) const;
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  const std::optional<std::vector<ChannelNorm>>& norm_meta() const { return norm_; }

  /// Appends one plane as a new last channel; RGB data is copied verbatim.
  ImageTensor with_channel(const Plane& extra) const;

 private:
  std::size_t channels_;
  std::size_t height_;
  std::size_t width_;
  std::vector<double> data_;
  std::optional<std::vector<ChannelNorm>> norm_;
};

/// Integer class ids in [0, class_count).
class LabelVector {
 public:
  /// class_count defaults to max id + 1.
  explicit LabelVector(std::vector<std::int64_t> ids, std::optional<std::size_t> class_count = std::nullopt);

  std::size_t size() const { return ids_.size(); }
  std::size_t class_count() const { return class_count_; }
  std::int64_t operator[](std::size_t i) const { return ids_[i]; }
  const std::vector<std::int64_t>& ids() const { return ids_; }

 private:
  std::vector<std::int64_t> ids_;
  std::size_t class_count_;
};

/// N×D features (rows = samples) with optional per-row labels.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Matrix values, std::optional<LabelVector> labels = std::nullopt);

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
  const Matrix& values() const { return values_; }
  auto row(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)); }

  bool has_labels() const { return labels_.has_value(); }
  const LabelVector& labels() const;
  FeatureMatrix with_labels(LabelVector labels) const;

 private:
  Matrix values_;
  std::optional<LabelVector> labels_;
};

/// Builds a feature matrix from equal-length vectors.
FeatureMatrix stack_rows(std::span<const Vector> rows);

/// Per-channel (x - mean) / std; records the applied parameters.
ImageTensor normalize_image(const ImageTensor& img, std::span<const double> mean, std::span<const double> std);

/// Inverts normalize_image using the recorded metadata.
ImageTensor denormalize_image(const ImageTensor& img);

}  // namespace eihf
