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

#include <fstream>

#include "doctest.h"
#include "eihf/error.hpp"
#include "eihf/tensor_io.hpp"
#include "support.hpp"

using namespace eihf;
using eihf::testing::TempDir;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an eihf::Error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("ftb: 2x3 payload loads as rows") {
  TempDir dir("io");
  RawArray raw;
  raw.dims = {2, 3};
  raw.payload = std::vector<double>{1, 2, 3, 4, 5, 6};
  write_ftb(dir / "m.ftb", raw);
  const auto f = load_features(dir / "m.ftb", FileFormat::kFtb);
  REQUIRE(f.rows() == 2);
  REQUIRE(f.cols() == 3);
  CHECK(f.values()(0, 2) == 3.0);
  CHECK(f.values()(1, 0) == 4.0);
}

TEST_CASE("ftb: header layout and size") {
  // 4 magic + dtype + ndim + 2 reserved + 8 per dim, then 8 bytes per f64.
  CHECK(ftb_header_size(2) == 24);
  TempDir dir("io");
  save_features(FeatureMatrix(Matrix::Zero(1, 1)), dir / "one.ftb", FileFormat::kFtb);
  const auto bytes = read_file_bytes(dir / "one.ftb");
  REQUIRE(bytes.size() == 32);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FTB1");
  CHECK(bytes[4] == 2);
  CHECK(bytes[5] == 2);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 1);
  CHECK(bytes[16] == 1);
}

TEST_CASE("ftb: random matrices round-trip bitwise in both formats") {
  TempDir dir("io");
  SplitMix64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix m = eihf::testing::random_matrix(rng, 5, 4, 1e3);
    save_features(FeatureMatrix(m), dir / "m.ftb", FileFormat::kFtb);
    save_features(FeatureMatrix(m), dir / "m.csv", FileFormat::kCsv);
    const auto a = load_features(dir / "m.ftb", FileFormat::kFtb);
    const auto b = load_features(dir / "m.csv", FileFormat::kCsv);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      CHECK(a.values().data()[i] == m.data()[i]);
      CHECK(b.values().data()[i] == m.data()[i]);
    }
  }
}

TEST_CASE("ftb: f32 payload widens on load") {
  TempDir dir("io");
  Matrix m(1, 2);
  m << 0.25, -1.5;
  save_features(FeatureMatrix(m), dir / "f.ftb", FileFormat::kFtb, DType::kF32);
  CHECK(read_ftb(dir / "f.ftb").dtype() == DType::kF32);
  CHECK(load_features(dir / "f.ftb", FileFormat::kFtb).values() == m);
}

TEST_CASE("ftb: contract violations name the offending field") {
  TempDir dir("io");
  RawArray cube;
  cube.dims = {2, 2, 2};
  cube.payload = std::vector<double>(8, 0.0);
  write_ftb(dir / "cube.ftb", cube);
  try {
    load_features(dir / "cube.ftb", FileFormat::kFtb);
    FAIL("loaded a 3-dim file as features");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kFormat);
    CHECK(std::string(e.what()).find("expected 2 dims") != std::string::npos);
  }

  auto bytes = encode_ftb(cube);
  bytes[0] = 'X';
  write_bytes(dir / "magic.ftb", bytes);
  CHECK(kind_of([&] { read_ftb(dir / "magic.ftb"); }) == ErrorKind::kFormat);

  bytes = encode_ftb(cube);
  bytes[4] = 9;
  write_bytes(dir / "dtype.ftb", bytes);
  try {
    read_ftb(dir / "dtype.ftb");
    FAIL("accepted dtype 9");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("dtype") != std::string::npos);
  }

  bytes = encode_ftb(cube);
  bytes.pop_back();
  write_bytes(dir / "short.ftb", bytes);
  CHECK(kind_of([&] { read_ftb(dir / "short.ftb"); }) == ErrorKind::kFormat);
}

TEST_CASE("ftb: non-finite payload reports the first bad index") {
  TempDir dir("io");
  RawArray raw;
  raw.dims = {2, 2};
  raw.payload = std::vector<double>{0.0, 1.0, std::nan(""), INFINITY};
  write_ftb(dir / "nan.ftb", raw);
  try {
    load_features(dir / "nan.ftb", FileFormat::kFtb);
    FAIL("accepted NaN");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("index 2") != std::string::npos);
  }
}

TEST_CASE("csv: formatting and parsing") {
  TempDir dir("io");
  Matrix m(1, 2);
  m << 1.5, -2.0;
  save_features(FeatureMatrix(m), dir / "row.csv", FileFormat::kCsv);
  CHECK(read_text(dir / "row.csv") == "1.5,-2\n");

  std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
  CHECK(kind_of([&] { load_features(dir / "ragged.csv", FileFormat::kCsv); }) == ErrorKind::kFormat);
  std::ofstream(dir / "text.csv") << "1,abc\n";
  CHECK(kind_of([&] { load_features(dir / "text.csv", FileFormat::kCsv); }) == ErrorKind::kFormat);
}

TEST_CASE("io: empty path and missing file") {
  CHECK(kind_of([] { save_features(FeatureMatrix(Matrix::Zero(1, 1)), "", FileFormat::kFtb); }) == ErrorKind::kIo);
  CHECK(kind_of([] { read_ftb("/nonexistent/dir/x.ftb"); }) == ErrorKind::kIo);
}

TEST_CASE("images: single and batch round-trip, load_tensor dispatch") {
  TempDir dir("io");
  SplitMix64 rng(3);
  const auto img = eihf::testing::random_image(rng, 3, 8, 12);
  save_image(img, dir / "img.ftb");
  const auto back = load_image(dir / "img.ftb");
  CHECK(back.height() == 8);
  CHECK(back.width() == 12);
  CHECK(std::equal(back.data().begin(), back.data().end(), img.data().begin()));
  CHECK(std::holds_alternative<ImageTensor>(load_tensor(dir / "img.ftb", FileFormat::kFtb)));

  std::vector<ImageTensor> batch{img, eihf::testing::random_image(rng, 3, 8, 12)};
  save_image_batch(batch, dir / "batch.ftb");
  const auto loaded = load_image_batch(dir / "batch.ftb");
  REQUIRE(loaded.size() == 2);
  CHECK(std::equal(loaded[1].data().begin(), loaded[1].data().end(), batch[1].data().begin()));
}

TEST_CASE("labels and vectors round-trip") {
  TempDir dir("io");
  const LabelVector labels({0, 2, 1, 2});
  save_labels(labels, dir / "l.ftb", FileFormat::kFtb);
  save_labels(labels, dir / "l.csv", FileFormat::kCsv);
  CHECK(load_labels(dir / "l.ftb", FileFormat::kFtb).ids() == labels.ids());
  CHECK(load_labels(dir / "l.csv", FileFormat::kCsv).ids() == labels.ids());
  CHECK(read_ftb(dir / "l.ftb").dtype() == DType::kI64);

  const std::vector<double> v{0.1, -3.0, 1e-300};
  save_vector(v, dir / "v.csv", FileFormat::kCsv);
  CHECK(load_vector(dir / "v.csv", FileFormat::kCsv) == v);
}

TEST_CASE("tensor: validation and normalization") {
  CHECK_THROWS_AS(ImageTensor(2, 8, 8, std::vector<double>(128, 0.0)), Error);
  CHECK_THROWS_AS(ImageTensor(3, 7, 8, std::vector<double>(168, 0.0)), Error);
  CHECK_THROWS_AS(ImageTensor(1, 8, 8, std::vector<double>(63, 0.0)), Error);
  CHECK_THROWS_AS(LabelVector({-1, 0}), Error);

  const auto half = eihf::testing::constant_image(3, 8, 8, 0.5);
  const std::vector<double> mean{0.5, 0.5, 0.5};
  const std::vector<double> unit{1.0, 1.0, 1.0};
  const auto zeros = normalize_image(half, mean, unit);
  for (double v : zeros.data()) CHECK(v == 0.0);

  const auto one = eihf::testing::constant_image(1, 8, 8, 1.0);
  const std::vector<double> m0{0.0};
  const std::vector<double> s2{2.0};
  CHECK(normalize_image(one, m0, s2).at(0, 3, 3) == 0.5);
  const std::vector<double> bad{0.0};
  CHECK_THROWS_AS(normalize_image(one, m0, bad), Error);

  SplitMix64 rng(5);
  const auto img = eihf::testing::random_image(rng, 3, 9, 10);
  const std::vector<double> mu{0.485, 0.456, 0.406};
  const std::vector<double> sd{0.229, 0.224, 0.225};
  const auto restored = denormalize_image(normalize_image(img, mu, sd));
  CHECK(eihf::testing::max_abs_diff(restored.data(), img.data()) < 1e-12);
}
