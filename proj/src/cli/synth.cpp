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

#include <cmath>
#include <memory>
#include <numbers>

#include "common.hpp"
#include "eihf/error.hpp"
#include "eihf/parallel.hpp"
#include "eihf/rng.hpp"

namespace eihf::cli {

namespace {

struct SynthOptions {
  std::string mode;
  std::string out;
  std::uint64_t seed = 0;
  std::string format = "ftb";
  // gaussians
  double mu = 2.0;
  std::size_t n = 1000;
  std::size_t dim = 1;
  // image modes
  std::size_t size = 32;
  std::size_t bands = 8;
  std::size_t target = 7;
  double contrast = 3.0;
  std::size_t classes = 2;
  std::size_t n_test = 0;
  double texture = 0.02;
};

// Stream ids keep every generated set independent of the others.
constexpr std::uint64_t kIdStream = 0;
constexpr std::uint64_t kOodStream = 1u << 20;
constexpr std::uint64_t kTestStream = 2u << 20;
constexpr std::uint64_t kNoiseStream = 3u << 20;

std::string ext(const SynthOptions& o) { return o.format == "csv" ? ".csv" : ".ftb"; }

json synth_gaussians(const SynthOptions& o, const fs::path& dir) {
  require(o.n >= 1 && o.dim >= 1, ErrorKind::kParameter, "synth: --n and --dim must be >= 1");
  const FileFormat format = o.format == "csv" ? FileFormat::kCsv : FileFormat::kFtb;
  const double shift = o.mu / std::sqrt(static_cast<double>(o.dim));
  auto draw = [&](std::uint64_t stream, double offset) {
    SplitMix64 rng = SplitMix64::derive(o.seed, stream);
    Matrix m(static_cast<Eigen::Index>(o.n), static_cast<Eigen::Index>(o.dim));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = offset + rng.normal();
    return m;
  };
  const Matrix id = draw(kIdStream, shift);
  const Matrix ood = draw(kOodStream, 0.0);
  json files = json::object();
  if (o.dim == 1) {
    save_vector(std::span<const double>(id.data(), o.n), dir / ("id_scores" + ext(o)), format);
    save_vector(std::span<const double>(ood.data(), o.n), dir / ("ood_scores" + ext(o)), format);
    files["id_scores"] = "id_scores" + ext(o);
    files["ood_scores"] = "ood_scores" + ext(o);
  } else {
    save_features(FeatureMatrix(id), dir / ("id_features" + ext(o)), format);
    save_features(FeatureMatrix(ood), dir / ("ood_features" + ext(o)), format);
    save_labels(LabelVector(std::vector<std::int64_t>(o.n, 0)), dir / ("id_labels" + ext(o)), format);
    files["id_features"] = "id_features" + ext(o);
    files["ood_features"] = "ood_features" + ext(o);
    files["id_labels"] = "id_labels" + ext(o);
  }
  return files;
}

ImageTensor white_noise(SplitMix64 rng, std::size_t size) {
  std::vector<double> data(3 * size * size);
  for (double& v : data) v = rng.normal();
  return ImageTensor(3, size, size, std::move(data));
}

json synth_band_textures(const SynthOptions& o, const fs::path& dir) {
  require(o.target >= 1 && o.target <= o.bands, ErrorKind::kParameter, "synth: --target must be in [1, --bands]");
  require(o.n >= 2, ErrorKind::kParameter, "synth: --n must be >= 2");
  require(o.contrast > 0.0, ErrorKind::kParameter, "synth: --contrast must be > 0");
  const BandMaskSet masks = make_band_masks(o.size, o.size, o.bands);
  const std::size_t t = o.target - 1;

  std::vector<std::optional<ImageTensor>> id(o.n);
  std::vector<std::optional<ImageTensor>> ood(o.n);
  parallel_for(o.n, [&](std::size_t i) {
    id[i] = white_noise(SplitMix64::derive(o.seed, kIdStream + i), o.size);
    // Every band but the target comes from an independent base draw; the
    // target band is replaced by amplified content from a second draw.
    const auto base = band_decompose(white_noise(SplitMix64::derive(o.seed, kOodStream + i), o.size), masks);
    const auto replacement = band_decompose(white_noise(SplitMix64::derive(o.seed, kNoiseStream + i), o.size), masks);
    std::vector<double> data(base.front().data().size(), 0.0);
    for (std::size_t b = 0; b < o.bands; ++b) {
      const auto src = b == t ? replacement[b].data() : base[b].data();
      const double gain = b == t ? o.contrast : 1.0;
      for (std::size_t k = 0; k < data.size(); ++k) data[k] += gain * src[k];
    }
    ood[i] = ImageTensor(3, o.size, o.size, std::move(data));
  });
  std::vector<ImageTensor> id_set;
  std::vector<ImageTensor> ood_set;
  for (auto& img : id) id_set.push_back(std::move(*img));
  for (auto& img : ood) ood_set.push_back(std::move(*img));
  save_image_batch(id_set, dir / "id.ftb");
  save_image_batch(ood_set, dir / "ood.ftb");
  return json{{"id", "id.ftb"}, {"ood", "ood.ftb"}, {"target_band", o.target}};
}

// Oriented sinusoidal grating per class; OOD images carry extra per-pixel
// texture on top of a grating of a random class.
ImageTensor grating(SplitMix64 rng, std::size_t cls, std::size_t classes, std::size_t size, double texture) {
  const double angle = std::numbers::pi * static_cast<double>(cls) / static_cast<double>(classes);
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const double cycles = 3.0;
  const double tint[3] = {1.0, 0.8, 0.6};
  std::vector<double> data(3 * size * size);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double u = (static_cast<double>(x) * std::cos(angle) + static_cast<double>(y) * std::sin(angle)) /
                         static_cast<double>(size);
        const double base = 0.5 + 0.25 * tint[c] * std::sin(2.0 * std::numbers::pi * cycles * u + phase);
        data[(c * size + y) * size + x] = base + 0.03 * rng.normal() + texture * rng.normal();
      }
    }
  }
  return ImageTensor(3, size, size, std::move(data));
}

json synth_two_class_images(const SynthOptions& o, const fs::path& dir) {
  require(o.classes >= 2, ErrorKind::kParameter, "synth: --classes must be >= 2");
  require(o.n >= 2, ErrorKind::kParameter, "synth: --n must be >= 2");
  const std::size_t n_test = o.n_test == 0 ? o.n / 2 : o.n_test;
  auto make_set = [&](std::uint64_t stream, std::size_t per_class, double texture, bool random_class) {
    const std::size_t total = per_class * o.classes;
    std::vector<std::optional<ImageTensor>> images(total);
    std::vector<std::int64_t> labels(total);
    parallel_for(total, [&](std::size_t i) {
      SplitMix64 rng = SplitMix64::derive(o.seed, stream + i);
      const std::size_t cls = random_class ? static_cast<std::size_t>(rng.below(o.classes)) : i % o.classes;
      labels[i] = static_cast<std::int64_t>(cls);
      images[i] = grating(rng, cls, o.classes, o.size, texture);
    });
    std::vector<ImageTensor> out;
    for (auto& img : images) out.push_back(std::move(*img));
    return std::make_pair(std::move(out), LabelVector(std::move(labels), o.classes));
  };
  const auto [train, train_labels] = make_set(kIdStream, o.n, 0.0, false);
  const auto [test, test_labels] = make_set(kTestStream, n_test, 0.0, false);
  const auto [ood, ood_labels] = make_set(kOodStream, n_test, o.texture, true);
  save_image_batch(train, dir / "train.ftb");
  save_labels(train_labels, dir / "train_labels.ftb", FileFormat::kFtb);
  save_image_batch(test, dir / "test.ftb");
  save_labels(test_labels, dir / "test_labels.ftb", FileFormat::kFtb);
  save_image_batch(ood, dir / "ood.ftb");
  return json{{"train", "train.ftb"}, {"train_labels", "train_labels.ftb"}, {"test", "test.ftb"},
              {"test_labels", "test_labels.ftb"}, {"ood", "ood.ftb"}};
}

void run_synth(const SynthOptions& o, const CLI::App& sub, Streams) {
  const fs::path dir(o.out);
  fs::create_directories(dir);
  json files;
  if (o.mode == "gaussians") {
    files = synth_gaussians(o, dir);
  } else if (o.mode == "band_textures") {
    files = synth_band_textures(o, dir);
  } else if (o.mode == "two_class_images") {
    files = synth_two_class_images(o, dir);
  } else {
    fail(ErrorKind::kParameter, "synth: unknown mode '" + o.mode + "'");
  }
  json manifest;
  manifest["mode"] = o.mode;
  manifest["files"] = files;
  write_file_atomic(dir / "manifest.json", dump(with_provenance(manifest, sub)));
}

}  // namespace

void add_synth(CLI::App& app, Runner& runner) {
  auto o = std::make_shared<SynthOptions>();
  auto* sub = app.add_subcommand("synth", "Generate deterministic fixtures");
  sub->add_option("--mode", o->mode, "gaussians | band_textures | two_class_images")
      ->check(CLI::IsMember({"gaussians", "band_textures", "two_class_images"}))
      ->required();
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->add_option("--seed", o->seed, "Seed")->capture_default_str();
  sub->add_option("--format", o->format, "Score/feature file format (gaussians)")
      ->check(CLI::IsMember({"ftb", "csv"}))
      ->capture_default_str();
  sub->add_option("--mu", o->mu, "ID mean shift (gaussians)")->capture_default_str();
  sub->add_option("--n", o->n, "Samples per set, or per class for two_class_images")->capture_default_str();
  sub->add_option("--dim", o->dim, "Feature dimension (gaussians)")->capture_default_str();
  sub->add_option("--size", o->size, "Image side length")->capture_default_str();
  sub->add_option("--bands", o->bands, "Band count (band_textures)")->capture_default_str();
  sub->add_option("--target", o->target, "1-based band carrying the discrepancy (band_textures)")->capture_default_str();
  sub->add_option("--contrast", o->contrast, "Gain on the replaced band (band_textures)")->capture_default_str();
  sub->add_option("--classes", o->classes, "Class count (two_class_images)")->capture_default_str();
  sub->add_option("--texture", o->texture, "Per-pixel noise added to OOD images (two_class_images)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--n-test", o->n_test, "Test images per class (default n/2)")->capture_default_str();
  sub->parse_complete_callback([sub, o, &runner] {
    runner = [sub, o](Streams s) { run_synth(*o, *sub, s); };
  });
}

}  // namespace eihf::cli
