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

#include "eihf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eihf/error.hpp"

namespace eihf {

namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::kValidation,
           std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

}  // namespace

ImageTensor::ImageTensor(std::size_t channels, std::size_t height, std::size_t width,
                         std::vector<double> data, std::optional<std::vector<ChannelNorm>> norm)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)), norm_(std::move(norm)) {
  require(channels == 1 || channels == 3 || channels == 4, ErrorKind::kValidation,
          "image: channels must be 1, 3 or 4, got " + std::to_string(channels));
  require(height >= kMinSide && width >= kMinSide, ErrorKind::kValidation,
          "image: height and width must be >= 8, got " + std::to_string(height) + "x" +
              std::to_string(width));
  require(data_.size() == channels * height * width, ErrorKind::kValidation,
          "image: payload has " + std::to_string(data_.size()) + " values, expected " +
              std::to_string(channels * height * width));
  if (norm_) {
    require(norm_->size() == channels, ErrorKind::kValidation, "image: norm metadata length != channels");
  }
  check_finite(data_, "image");
}

ImageTensor ImageTensor::from_planes(std::span<const Plane> planes,
                                     std::optional<std::vector<ChannelNorm>> norm) {
  require(!planes.empty(), ErrorKind::kParameter, "image: no planes");
  const std::size_t h = planes[0].height;
  const std::size_t w = planes[0].width;
  std::vector<double> data;
  data.reserve(planes.size() * h * w);
  for (const Plane& p : planes) {
    require(p.height == h && p.width == w, ErrorKind::kParameter, "image: plane sizes differ");
    data.insert(data.end(), p.values.begin(), p.values.end());
  }
  return ImageTensor(planes.size(), h, w, std::move(data), std::move(norm));
}

Plane ImageTensor::channel(std::size_t c) const {
  Plane p;
  p.height = height_;
  p.width = width_;
  auto src = channel_span(c);
  p.values.assign(src.begin(), src.end());
  return p;
}

ImageTensor ImageTensor::with_channel(const Plane& extra) const {
  require(extra.height == height_ && extra.width == width_, ErrorKind::kParameter,
          "image: appended channel size mismatch");
  std::vector<double> data(data_);
  data.insert(data.end(), extra.values.begin(), extra.values.end());
  std::optional<std::vector<ChannelNorm>> norm;
  if (norm_) {
    norm = *norm_;
    norm->push_back(ChannelNorm{0.0, 1.0});
  }
  return ImageTensor(channels_ + 1, height_, width_, std::move(data), std::move(norm));
}

LabelVector::LabelVector(std::vector<std::int64_t> ids, std::optional<std::size_t> class_count)
    : ids_(std::move(ids)) {
  std::int64_t max_id = -1;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    require(ids_[i] >= 0, ErrorKind::kValidation,
            "labels: negative class id at index " + std::to_string(i));
    max_id = std::max(max_id, ids_[i]);
  }
  class_count_ = class_count.value_or(static_cast<std::size_t>(max_id + 1));
  require(class_count_ >= 1, ErrorKind::kValidation, "labels: class count must be >= 1");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    require(static_cast<std::size_t>(ids_[i]) < class_count_, ErrorKind::kValidation,
            "labels: class id " + std::to_string(ids_[i]) + " at index " + std::to_string(i) +
                " >= class count " + std::to_string(class_count_));
  }
}

FeatureMatrix::FeatureMatrix(Matrix values, std::optional<LabelVector> labels)
    : values_(std::move(values)), labels_(std::move(labels)) {
  require(values_.rows() >= 1 && values_.cols() >= 1, ErrorKind::kValidation,
          "features: need at least one row and one column");
  check_finite(std::span<const double>(values_.data(), static_cast<std::size_t>(values_.size())), "features");
  if (labels_) {
    require(labels_->size() == rows(), ErrorKind::kValidation,
            "features: " + std::to_string(labels_->size()) + " labels for " + std::to_string(rows()) + " rows");
  }
}

const LabelVector& FeatureMatrix::labels() const {
  require(labels_.has_value(), ErrorKind::kParameter, "features: labels required");
  return *labels_;
}

FeatureMatrix FeatureMatrix::with_labels(LabelVector labels) const {
  return FeatureMatrix(values_, std::move(labels));
}

FeatureMatrix stack_rows(std::span<const Vector> rows) {
  require(!rows.empty(), ErrorKind::kParameter, "features: no rows to stack");
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows[0].size(), ErrorKind::kParameter, "features: ragged rows");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return FeatureMatrix(std::move(m));
}

ImageTensor normalize_image(const ImageTensor& img, std::span<const double> mean, std::span<const double> std) {
  const std::size_t c_count = img.channels();
  require(mean.size() == c_count && std.size() == c_count, ErrorKind::kParameter,
          "normalize: need one mean and one std per channel");
  std::vector<double> out(img.data().begin(), img.data().end());
  std::vector<ChannelNorm> meta(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    require(std[c] > 0.0, ErrorKind::kParameter, "normalize: std must be > 0 for channel " + std::to_string(c));
    meta[c] = ChannelNorm{mean[c], std[c]};
    const std::size_t base = c * img.plane_size();
    for (std::size_t i = 0; i < img.plane_size(); ++i) out[base + i] = (out[base + i] - mean[c]) / std[c];
  }
  return ImageTensor(c_count, img.height(), img.width(), std::move(out), std::move(meta));
}

ImageTensor denormalize_image(const ImageTensor& img) {
  require(img.norm_meta().has_value(), ErrorKind::kParameter, "denormalize: image carries no normalization metadata");
  const auto& meta = *img.norm_meta();
  std::vector<double> out(img.data().begin(), img.data().end());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    const std::size_t base = c * img.plane_size();
    for (std::size_t i = 0; i < img.plane_size(); ++i) out[base + i] = out[base + i] * meta[c].std + meta[c].mean;
  }
  return ImageTensor(img.channels(), img.height(), img.width(), std::move(out));
}

}  // namespace eihf
