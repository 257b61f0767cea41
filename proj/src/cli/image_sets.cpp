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

#include <algorithm>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "eihf/error.hpp"
#include "eihf/parallel.hpp"

namespace eihf::cli {

namespace {

std::string lower_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool is_image_file(const fs::path& p) {
  const auto ext = lower_ext(p);
  return ext == ".ftb" || ext == ".png";
}

void append_file(ImageSet& set, const fs::path& file) {
  if (lower_ext(file) == ".ftb") {
    const auto array = read_ftb(file);
    if (array.dims.size() == 4) {
      auto batch = load_image_batch(file);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        set.names.push_back(file.stem().string() + "_" + std::to_string(i));
        set.images.push_back(std::move(batch[i]));
      }
      return;
    }
  }
  set.names.push_back(file.stem().string());
  set.images.push_back(load_image(file));
}

}  // namespace

ImageSet load_image_set(const fs::path& path) {
  require(!path.empty(), ErrorKind::kIo, "empty image set path");
  require(fs::exists(path), ErrorKind::kIo, "image set not found: " + path.string());
  ImageSet set;
  if (fs::is_directory(path)) {
    set.layout = SetLayout::kDirectory;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) append_file(set, f);
  } else if (const auto ext = lower_ext(path); ext == ".txt" || ext == ".lst") {
    set.layout = SetLayout::kDirectory;
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      fs::path entry(line);
      if (entry.is_relative()) entry = path.parent_path() / entry;
      append_file(set, entry);
    }
  } else if (ext == ".png") {
    set.layout = SetLayout::kSingle;
    append_file(set, path);
  } else {
    const auto array = read_ftb(path);
    set.layout = array.dims.size() == 4 ? SetLayout::kBatch : SetLayout::kSingle;
    append_file(set, path);
  }
  require(!set.images.empty(), ErrorKind::kValidation, "image set is empty: " + path.string());
  return set;
}

void save_image_set(const ImageSet& set, const fs::path& path, DType dtype) {
  require(!set.images.empty(), ErrorKind::kParameter, "no images to write");
  if (lower_ext(path) == ".ftb") {
    if (set.layout == SetLayout::kSingle && set.images.size() == 1) {
      save_image(set.images.front(), path, dtype);
    } else {
      save_image_batch(set.images, path, dtype);
    }
    return;
  }
  fs::create_directories(path);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const std::string name = i < set.names.size() ? set.names[i] : std::to_string(i);
    save_image(set.images[i], path / (name + ".ftb"), dtype);
  }
}

// ---------------------------------------------------------------------------

fs::path sidecar_path(const fs::path& data_path) {
  if (fs::is_directory(data_path)) return data_path / "transform.json";
  fs::path p = data_path;
  p += ".transform.json";
  return p;
}

json transform_to_json(const TransformMeta& meta) {
  const auto& t = meta.spec;
  json j;
  j["variant"] = std::string(to_string(t.variant));
  j["operator"] = std::string(to_string(t.params.op));
  j["kernel_size"] = t.params.kernel_size;
  j["sigma_blur"] = t.params.sigma_blur;
  j["alpha_hf"] = t.params.alpha_hf ? json(*t.params.alpha_hf) : json(nullptr);
  j["epsilon"] = t.params.epsilon;
  j["seed"] = t.seed;
  if (meta.normalize) {
    j["normalize"] = {{"mean", meta.normalize->mean}, {"std", meta.normalize->std}};
  } else {
    j["normalize"] = nullptr;
  }
  return j;
}

TransformMeta transform_from_json(const json& j) {
  try {
    TransformMeta meta;
    auto& t = meta.spec;
    t.variant = parse_transform_variant(j.at("variant").get<std::string>());
    t.params.op = parse_residual_operator(j.value("operator", std::string("gaussian")));
    t.params.kernel_size = j.at("kernel_size").get<std::size_t>();
    t.params.sigma_blur = j.at("sigma_blur").get<double>();
    if (!j.at("alpha_hf").is_null()) t.params.alpha_hf = j.at("alpha_hf").get<double>();
    t.params.epsilon = j.at("epsilon").get<double>();
    t.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("normalize") && !j.at("normalize").is_null()) {
      meta.normalize = NormalizeSpec{j.at("normalize").at("mean").get<std::vector<double>>(),
                                     j.at("normalize").at("std").get<std::vector<double>>()};
    }
    return meta;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("transform metadata: ") + e.what());
  }
}

std::optional<TransformMeta> find_transform(const fs::path& data_path, const std::string& explicit_path) {
  fs::path meta_path;
  if (!explicit_path.empty()) {
    meta_path = explicit_path;
    require(fs::exists(meta_path), ErrorKind::kIo, "transform metadata not found: " + explicit_path);
  } else {
    meta_path = sidecar_path(data_path);
    if (!fs::exists(meta_path)) return std::nullopt;
  }
  const auto bytes = read_file_bytes(meta_path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, meta_path.string() + ": " + e.what());
  }
  // Sidecars written by `transform` nest the spec under "transform".
  return transform_from_json(j.contains("transform") ? j.at("transform") : j);
}

// ---------------------------------------------------------------------------

ToyEncoderSpec parse_toy_encoder(const std::string& text) {
  require(text.rfind("toy:", 0) == 0, ErrorKind::kParameter, "encoder must look like toy:<seed>[,F,k], got '" + text + "'");
  std::vector<std::string> parts;
  std::stringstream ss(text.substr(4));
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  require(parts.size() == 1 || parts.size() == 3, ErrorKind::kParameter, "encoder must look like toy:<seed>[,F,k]");
  ToyEncoderSpec spec;
  try {
    std::size_t used = 0;
    spec.seed = std::stoull(parts[0], &used);
    require(used == parts[0].size(), ErrorKind::kParameter, "bad encoder seed");
    if (parts.size() == 3) {
      spec.filters = std::stoul(parts[1]);
      spec.kernel = std::stoul(parts[2]);
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::kParameter, "cannot parse encoder '" + text + "'");
  }
  return spec;
}

FeatureMatrix encode_images(const ToyEncoder& encoder, const std::vector<ImageTensor>& images) {
  require(!images.empty(), ErrorKind::kParameter, "no images to encode");
  std::vector<Vector> rows(images.size());
  parallel_for(images.size(), [&](std::size_t i) { rows[i] = encoder.encode(images[i]); });
  return stack_rows(rows);
}

// ---------------------------------------------------------------------------

json resolved_config(const CLI::App& sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "h" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      config[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      config[name] = results.size() == 1 ? json(results.front()) : json(results);
    } else {
      const std::string def = opt->get_default_str();
      config[name] = def.empty() ? json(nullptr) : json(def);
    }
  }
  config["subcommand"] = sub.get_name();
  return config;
}

json with_provenance(json report, const CLI::App& sub) {
  report["config"] = resolved_config(sub);
  report["version"] = EIHF_VERSION;
  return report;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void emit_json(const json& report, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << dump(report);
  } else {
    write_file_atomic(path, dump(report));
  }
}

}  // namespace eihf::cli
