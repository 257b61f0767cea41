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

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "eihf/frequency.hpp"
#include "eihf/tensor.hpp"
#include "eihf/tensor_io.hpp"
#include "eihf/toy_encoder.hpp"

namespace eihf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// --- image sets -------------------------------------------------------------

enum class SetLayout { kSingle, kBatch, kDirectory };

struct ImageSet {
  std::vector<ImageTensor> images;
  std::vector<std::string> names;  // file stems for directory layouts
  SetLayout layout = SetLayout::kBatch;
};

/// A directory of .ftb/.png files (sorted by name), a .txt/.lst list of
/// paths, a 4-D FTB batch, a 3-D FTB image, or a PNG.
ImageSet load_image_set(const fs::path& path);

/// Writes images as a batch/single FTB when `path` ends in .ftb, otherwise as
/// one FTB per image inside the directory `path`.
void save_image_set(const ImageSet& set, const fs::path& path, DType dtype);

// --- transform metadata sidecars -------------------------------------------

struct NormalizeSpec {
  std::vector<double> mean;
  std::vector<double> std;
};

struct TransformMeta {
  TransformSpec spec;
  std::optional<NormalizeSpec> normalize;
};

fs::path sidecar_path(const fs::path& data_path);
json transform_to_json(const TransformMeta& meta);
TransformMeta transform_from_json(const json& j);

/// Explicit --transform file wins; otherwise the data path's sidecar if it
/// exists.
std::optional<TransformMeta> find_transform(const fs::path& data_path, const std::string& explicit_path);

// --- encoders ---------------------------------------------------------------

struct ToyEncoderSpec {
  std::uint64_t seed = 0;
  std::size_t filters = ToyEncoder::kDefaultFilters;
  std::size_t kernel = ToyEncoder::kDefaultKernel;
};

/// Parses "toy:<seed>[,F,k]".
ToyEncoderSpec parse_toy_encoder(const std::string& text);

FeatureMatrix encode_images(const ToyEncoder& encoder, const std::vector<ImageTensor>& images);

// --- reports ----------------------------------------------------------------

/// Every option of the subcommand with its resolved value.
json resolved_config(const CLI::App& sub);

/// Adds "config" and "version" to a report.
json with_provenance(json report, const CLI::App& sub);

/// JSON text to `path` (atomically) or to `out` when path is empty.
void emit_json(const json& report, const std::string& path, std::ostream& out);

std::string dump(const json& j);

// --- subcommand registration -------------------------------------------------

using Runner = std::function<void(Streams)>;

void add_transform(CLI::App& app, Runner& runner);
void add_bandscan(CLI::App& app, Runner& runner);
void add_fit_stats(CLI::App& app, Runner& runner);
void add_score(CLI::App& app, Runner& runner);
void add_eval(CLI::App& app, Runner& runner);
void add_diagnose(CLI::App& app, Runner& runner);
void add_synth(CLI::App& app, Runner& runner);

}  // namespace eihf::cli
