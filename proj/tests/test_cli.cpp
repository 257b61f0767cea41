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

#include <png.h>

#include <fstream>

#include "cli_support.hpp"
#include "doctest.h"
#include "eihf/tensor_io.hpp"
#include "support.hpp"

using namespace eihf;
using eihf::testing::run_cli;
using eihf::testing::TempDir;
using json = nlohmann::json;

namespace {

std::string p(const std::filesystem::path& path) { return path.string(); }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

void write_png(const std::filesystem::path& path, std::size_t w, std::size_t h, std::uint64_t seed) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  SplitMix64 rng(seed);
  std::vector<std::uint8_t> pixels(3 * w * h);
  for (auto& v : pixels) v = static_cast<std::uint8_t>(rng.below(256));
  REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr) != 0);
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  auto r = run_cli({"eval", "--no-such-flag"});
  CHECK(r.code == 2);
  CHECK(r.err.find("\"error\":\"usage\"") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);

  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"--version"}).code == 0);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("cli: missing input is a structured io error") {
  const auto r = run_cli({"eval", "--id-scores", "/nonexistent/a.ftb", "--ood-scores", "/nonexistent/b.ftb"});
  CHECK(r.code == 2);
  const auto err = json::parse(r.err);
  CHECK(err["error"] == "io");
}

TEST_CASE("cli: gaussian fixtures through eval") {
  TempDir dir("cli");
  REQUIRE(run_cli({"synth", "--mode", "gaussians", "--mu", "2", "--n", "1000", "--seed", "1", "--out", p(dir / "g")}).code == 0);
  auto r = run_cli({"eval", "--id-scores", p(dir / "g/id_scores.ftb"), "--ood-scores", p(dir / "g/ood_scores.ftb")});
  REQUIRE(r.code == 0);
  const auto report = r.json_out();
  CHECK(report["auroc"].get<double>() >= 0.85);
  CHECK(report["auroc"].get<double>() <= 0.97);
  CHECK(report["version"].is_string());
  CHECK(report["config"]["subcommand"] == "eval");

  REQUIRE(run_cli({"synth", "--mode", "gaussians", "--mu", "0", "--n", "20000", "--seed", "2", "--format", "csv",
                   "--out", p(dir / "null")})
              .code == 0);
  r = run_cli({"eval", "--id-scores", p(dir / "null/id_scores.csv"), "--ood-scores", p(dir / "null/ood_scores.csv"),
               "--out", p(dir / "null.json")});
  REQUIRE(r.code == 0);
  // Matched distributions: the 95% ID threshold also admits ~95% of OOD.
  const double fpr = read_json(dir / "null.json")["fpr95"].get<double>();
  CHECK(fpr > 0.94);
  CHECK(fpr < 0.96);
}

TEST_CASE("cli: synth is deterministic") {
  TempDir dir("cli");
  for (const char* sub : {"a", "b"}) {
    REQUIRE(run_cli({"synth", "--mode", "two_class_images", "--n", "6", "--size", "16", "--seed", "9", "--out",
                     p(dir / sub)})
                .code == 0);
  }
  for (const char* f : {"train.ftb", "train_labels.ftb", "test.ftb", "ood.ftb"}) {
    CHECK(read_file_bytes(dir / "a" / f) == read_file_bytes(dir / "b" / f));
  }
  CHECK(load_image_batch(dir / "a/train.ftb").size() == 12);
}

TEST_CASE("cli: transform variants and sidecar metadata") {
  TempDir dir("cli");
  REQUIRE(run_cli({"synth", "--mode", "two_class_images", "--n", "4", "--size", "16", "--out", p(dir / "s")}).code == 0);
  auto r = run_cli({"transform", p(dir / "s/train.ftb"), "--variant", "zero", "--out", p(dir / "zero.ftb")});
  REQUIRE(r.code == 0);
  for (const auto& img : load_image_batch(dir / "zero.ftb")) {
    REQUIRE(img.channels() == 4);
    for (double v : img.channel_span(3)) CHECK(v == 0.0);
  }
  CHECK(read_json(dir / "zero.ftb.transform.json")["transform"]["variant"] == "zero");

  r = run_cli({"transform", p(dir / "s/train.ftb"), "--variant", "eihf", "--out", p(dir / "e.ftb")});
  CHECK(r.code == 2);
  CHECK(r.err.find("--fit-alpha") != std::string::npos);

  r = run_cli({"transform", p(dir / "s/train.ftb"), "--variant", "eihf", "--alpha", "2.5", "--out", p(dir / "e.ftb")});
  REQUIRE(r.code == 0);
  const auto original = load_image_batch(dir / "s/train.ftb");
  const auto transformed = load_image_batch(dir / "e.ftb");
  for (std::size_t i = 0; i < original.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const auto a = original[i].channel_span(c);
      const auto b = transformed[i].channel_span(c);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
  CHECK(read_json(dir / "e.ftb.transform.json")["transform"]["alpha_hf"] == 2.5);
}

TEST_CASE("cli: png inputs and directories") {
  TempDir dir("cli");
  std::filesystem::create_directories(dir / "png");
  write_png(dir / "png/a.png", 12, 10, 1);
  write_png(dir / "png/b.png", 12, 10, 2);
  const auto img = load_image(dir / "png/a.png");
  CHECK(img.channels() == 3);
  CHECK(img.height() == 10);
  CHECK(img.width() == 12);
  for (double v : img.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const auto r = run_cli({"transform", "--input", p(dir / "png"), "--variant", "eihf", "--fit-alpha",
                          p(dir / "png"), "--out", p(dir / "out")});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "out/a.ftb"));
  CHECK(std::filesystem::exists(dir / "out/b.ftb"));
  CHECK(std::filesystem::exists(dir / "out/transform.json"));
}

TEST_CASE("cli: fit-stats, score, diagnose on features") {
  TempDir dir("cli");
  REQUIRE(run_cli({"synth", "--mode", "gaussians", "--dim", "4", "--n", "300", "--seed", "3", "--out", p(dir / "g")}).code == 0);
  REQUIRE(run_cli({"fit-stats", "--features", p(dir / "g/id_features.ftb"), "--labels", p(dir / "g/id_labels.ftb"),
                   "--out", p(dir / "stats.ftbc")})
              .code == 0);
  CHECK(read_json(dir / "stats.ftbc.json")["dim"] == 4);
  for (const char* which : {"id", "ood"}) {
    const auto r = run_cli({"score", "--method", "mahalanobis", "--stats", p(dir / "stats.ftbc"), "--features",
                            p(dir / "g" / (std::string(which) + "_features.ftb")), "--out",
                            p(dir / (std::string(which) + ".csv"))});
    REQUIRE(r.code == 0);
  }
  auto r = run_cli({"eval", "--id-scores", p(dir / "id.csv"), "--ood-scores", p(dir / "ood.csv")});
  REQUIRE(r.code == 0);
  CHECK(r.json_out()["auroc"].get<double>() > 0.7);

  r = run_cli({"score", "--method", "knn", "--k", "5", "--bank", p(dir / "g/id_features.ftb"), "--features",
               p(dir / "g/ood_features.ftb")});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 300);

  r = run_cli({"diagnose", "--features", p(dir / "g/id_features.ftb"), "--labels", p(dir / "g/id_labels.ftb")});
  REQUIRE(r.code == 0);
  const auto d = r.json_out();
  CHECK(d["v_intra"].get<double>() == doctest::Approx(d["v_intra_trace"].get<double>()).epsilon(1e-8));
  CHECK(d["trace_terms"].size() == 1);
}

TEST_CASE("cli: transform mismatch between stats and inputs is a hard error") {
  TempDir dir("cli");
  REQUIRE(run_cli({"synth", "--mode", "two_class_images", "--n", "6", "--size", "16", "--out", p(dir / "s")}).code == 0);
  REQUIRE(run_cli({"transform", p(dir / "s/train.ftb"), "--variant", "eihf", "--fit-alpha", p(dir / "s/train.ftb"),
                   "--out", p(dir / "train_e.ftb")})
              .code == 0);
  REQUIRE(run_cli({"transform", p(dir / "s/test.ftb"), "--variant", "zero", "--out", p(dir / "test_z.ftb")}).code == 0);
  REQUIRE(run_cli({"fit-stats", "--images", p(dir / "train_e.ftb"), "--encoder", "toy:1,8,3", "--labels",
                   p(dir / "s/train_labels.ftb"), "--out", p(dir / "stats.ftbc")})
              .code == 0);
  const auto r = run_cli({"score", "--method", "mahalanobis", "--stats", p(dir / "stats.ftbc"), "--images",
                          p(dir / "test_z.ftb"), "--encoder", "toy:1,8,3"});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"] == "mismatch");
}

TEST_CASE("cli: bandscan on planted fixtures, csv and config file") {
  TempDir dir("cli");
  REQUIRE(run_cli({"synth", "--mode", "band_textures", "--n", "30", "--size", "16", "--bands", "4", "--target", "2",
                   "--seed", "4", "--out", p(dir / "bt")})
              .code == 0);
  std::ofstream(dir / "scan.toml") << "[bandscan]\nbands = 4\nencoder = \"toy:2,8,3\"\n";
  const auto r = run_cli({"bandscan", "--config", p(dir / "scan.toml"), "--id", p(dir / "bt/id.ftb"), "--ood",
                          p(dir / "bt/ood.ftb"), "--out", p(dir / "scan.csv")});
  REQUIRE(r.code == 0);
  const auto meta = read_json(dir / "scan.json");
  CHECK(meta["argmax_band"] == 2);
  CHECK(meta["bands"] == 4);
  CHECK(meta["encoder"] == "toy:2,8,3");
  std::ifstream csv(dir / "scan.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "band,mmd2");
}

TEST_CASE("cli: bandscan from precomputed band features") {
  TempDir dir("cli");
  SplitMix64 rng(5);
  std::filesystem::create_directories(dir / "f");
  for (std::size_t b = 1; b <= 3; ++b) {
    save_features(FeatureMatrix(eihf::testing::random_matrix(rng, 20, 2)), dir / ("f/id_b" + std::to_string(b) + ".ftb"),
                  FileFormat::kFtb);
    save_features(FeatureMatrix(eihf::testing::random_matrix(rng, 20, 2, b == 3 ? 4.0 : 1.0)),
                  dir / ("f/ood_b" + std::to_string(b) + ".ftb"), FileFormat::kFtb);
  }
  const auto r = run_cli({"bandscan", "--bands", "3", "--sigma", "1.0", "--encoder", "features:" + p(dir / "f")});
  REQUIRE(r.code == 0);
  CHECK(r.json_out()["argmax_band"] == 3);
}
