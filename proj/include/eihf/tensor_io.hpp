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
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eihf/tensor.hpp"

namespace eihf {

// FTB layout (little-endian):
//   "FTB1" | dtype u8 | ndim u8 | reserved u16 = 0 | ndim x u64 dims | payload
// Payload is row-major; dtype 1 = f32, 2 = f64, 3 = i64.

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kI64 = 3 };

std::size_t dtype_size(DType dtype);

/// An FTB payload exactly as stored on disk.
struct RawArray {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::int64_t>> payload;

  DType dtype() const;
  std::size_t element_count() const;
  /// Widening copy to the working precision.
  std::vector<double> as_f64() const;
};

std::size_t ftb_header_size(std::size_t ndim);

std::vector<std::uint8_t> encode_ftb(const RawArray& array);
RawArray decode_ftb(std::span<const std::uint8_t> bytes);

RawArray read_ftb(const std::filesystem::path& path);
void write_ftb(const std::filesystem::path& path, const RawArray& array);

enum class FileFormat { kFtb, kCsv };

/// ".csv" → CSV, anything else → FTB.
FileFormat format_from_path(const std::filesystem::path& path);

/// FTB with 3 dims → image, 2 dims → matrix; CSV → matrix.
std::variant<ImageTensor, FeatureMatrix> load_tensor(const std::filesystem::path& path, FileFormat format);
void save_tensor(const std::variant<ImageTensor, FeatureMatrix>& tensor, const std::filesystem::path& path,
                 FileFormat format, DType dtype = DType::kF64);

FeatureMatrix load_features(const std::filesystem::path& path, FileFormat format);
void save_features(const FeatureMatrix& features, const std::filesystem::path& path, FileFormat format,
                   DType dtype = DType::kF64);

/// FTB (3 dims) or 8-bit RGB PNG decoded to [0, 1].
ImageTensor load_image(const std::filesystem::path& path);
void save_image(const ImageTensor& image, const std::filesystem::path& path, DType dtype = DType::kF64);

/// N×C×H×W FTB batch.
std::vector<ImageTensor> load_image_batch(const std::filesystem::path& path);
void save_image_batch(std::span<const ImageTensor> images, const std::filesystem::path& path,
                      DType dtype = DType::kF64);

ImageTensor load_png(const std::filesystem::path& path);

LabelVector load_labels(const std::filesystem::path& path, FileFormat format);
void save_labels(const LabelVector& labels, const std::filesystem::path& path, FileFormat format);

/// 1-D (or N×1) real vector, e.g. a score set.
std::vector<double> load_vector(const std::filesystem::path& path, FileFormat format);
void save_vector(std::span<const double> values, const std::filesystem::path& path, FileFormat format);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

/// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace eihf
