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

#include "eihf/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "eihf/error.hpp"

namespace eihf {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'T', 'B', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return std::bit_cast<T>(bits);
}

void check_finite_payload(const std::vector<double>& values, const fs::path& path) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::kValidation, path.string() + ": non-finite value at index " + std::to_string(i));
    }
  }
}

void require_path(const fs::path& path) {
  require(!path.empty(), ErrorKind::kIo, "empty path");
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::vector<std::string>> read_csv_cells(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  std::string text(bytes.begin(), bytes.end());
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                           : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && cells.size() != rows.front().size()) {
      fail(ErrorKind::kFormat, path.string() + ": line " + std::to_string(line_no) + " has " +
                                   std::to_string(cells.size()) + " columns, expected " +
                                   std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(cells));
  }
  require(!rows.empty(), ErrorKind::kFormat, path.string() + ": empty CSV");
  return rows;
}

template <typename T>
T parse_cell(const std::string& cell, const fs::path& path, std::size_t row, std::size_t col) {
  T value{};
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || cell.empty()) {
    fail(ErrorKind::kFormat, path.string() + ": cannot parse '" + cell + "' at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
  }
  return value;
}

std::vector<std::uint64_t> to_dims(std::initializer_list<std::size_t> dims) {
  return std::vector<std::uint64_t>(dims.begin(), dims.end());
}

RawArray make_real_array(std::vector<std::uint64_t> dims, std::span<const double> values, DType dtype) {
  RawArray array;
  array.dims = std::move(dims);
  switch (dtype) {
    case DType::kF32:
      array.payload = std::vector<float>(values.begin(), values.end());
      break;
    case DType::kF64:
      array.payload = std::vector<double>(values.begin(), values.end());
      break;
    case DType::kI64:
      fail(ErrorKind::kParameter, "real tensors cannot be saved as i64");
  }
  return array;
}

std::string join_row(auto&& row_values) {
  std::string line;
  bool first = true;
  for (const auto& v : row_values) {
    if (!first) line += ',';
    first = false;
    if constexpr (std::is_integral_v<std::decay_t<decltype(v)>>) {
      line += std::to_string(v);
    } else {
      line += format_real(v);
    }
  }
  line += '\n';
  return line;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI64: return 8;
  }
  return 0;
}

DType RawArray::dtype() const {
  switch (payload.index()) {
    case 0: return DType::kF32;
    case 1: return DType::kF64;
    default: return DType::kI64;
  }
}

std::size_t RawArray::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<double> RawArray::as_f64() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, payload);
}

std::size_t ftb_header_size(std::size_t ndim) { return 4 + 1 + 1 + 2 + 8 * ndim; }

std::vector<std::uint8_t> encode_ftb(const RawArray& array) {
  const std::size_t count = array.element_count();
  const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, array.payload);
  require(stored == count, ErrorKind::kParameter,
          "ftb: payload holds " + std::to_string(stored) + " elements, dims declare " + std::to_string(count));
  require(array.dims.size() <= 255, ErrorKind::kParameter, "ftb: too many dims");

  std::vector<std::uint8_t> out;
  out.reserve(ftb_header_size(array.dims.size()) + count * dtype_size(array.dtype()));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(array.dtype()));
  out.push_back(static_cast<std::uint8_t>(array.dims.size()));
  put_le<std::uint16_t>(out, 0);
  for (auto d : array.dims) put_le<std::uint64_t>(out, d);
  std::visit([&](const auto& v) {
    for (auto x : v) put_le(out, x);
  }, array.payload);
  return out;
}

RawArray decode_ftb(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 8, ErrorKind::kFormat, "ftb: truncated header");
  require(std::equal(kMagic.begin(), kMagic.end(), bytes.begin()), ErrorKind::kFormat, "ftb: bad magic");
  const std::uint8_t dtype_code = bytes[4];
  require(dtype_code >= 1 && dtype_code <= 3, ErrorKind::kFormat,
          "ftb: bad dtype " + std::to_string(dtype_code));
  const DType dtype = static_cast<DType>(dtype_code);
  const std::size_t ndim = bytes[5];
  require(get_le<std::uint16_t>(bytes.data() + 6) == 0, ErrorKind::kFormat, "ftb: reserved field must be 0");
  const std::size_t header = ftb_header_size(ndim);
  require(bytes.size() >= header, ErrorKind::kFormat, "ftb: truncated dims");

  RawArray array;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = get_le<std::uint64_t>(bytes.data() + 8 + 8 * i);
    require(d <= bytes.size(), ErrorKind::kFormat, "ftb: dims[" + std::to_string(i) + "] exceeds file size");
    array.dims.push_back(d);
    count *= static_cast<std::size_t>(d);
  }
  const std::size_t payload_bytes = bytes.size() - header;
  require(payload_bytes == count * dtype_size(dtype), ErrorKind::kFormat,
          "ftb: payload is " + std::to_string(payload_bytes) + " bytes, dims declare " +
              std::to_string(count * dtype_size(dtype)));

  const std::uint8_t* p = bytes.data() + header;
  switch (dtype) {
    case DType::kF32: {
      std::vector<float> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = get_le<float>(p + 4 * i);
      array.payload = std::move(v);
      break;
    }
    case DType::kF64: {
      std::vector<double> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = get_le<double>(p + 8 * i);
      array.payload = std::move(v);
      break;
    }
    case DType::kI64: {
      std::vector<std::int64_t> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = get_le<std::int64_t>(p + 8 * i);
      array.payload = std::move(v);
      break;
    }
  }
  return array;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  require_path(path);
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorKind::kIo, "read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  require_path(path);
  std::error_code dir_ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), dir_ec);
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::kIo, "cannot rename into " + path.string());
  }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

RawArray read_ftb(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_ftb(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void write_ftb(const fs::path& path, const RawArray& array) { write_file_atomic(path, encode_ftb(array)); }

FileFormat format_from_path(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? FileFormat::kCsv : FileFormat::kFtb;
}

std::string format_real(double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) fail(ErrorKind::kParameter, "cannot format value");
  return std::string(buf.data(), ptr);
}

FeatureMatrix load_features(const fs::path& path, FileFormat format) {
  if (format == FileFormat::kCsv) {
    const auto cells = read_csv_cells(path);
    Matrix m(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(cells.front().size()));
    for (std::size_t r = 0; r < cells.size(); ++r) {
      for (std::size_t c = 0; c < cells[r].size(); ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_cell<double>(cells[r][c], path, r, c);
      }
    }
    check_finite_payload(std::vector<double>(m.data(), m.data() + m.size()), path);
    return FeatureMatrix(std::move(m));
  }
  const RawArray array = read_ftb(path);
  require(array.dims.size() == 2, ErrorKind::kFormat,
          path.string() + ": expected 2 dims, got " + std::to_string(array.dims.size()));
  require(array.dtype() != DType::kI64, ErrorKind::kFormat, path.string() + ": dtype must be f32 or f64");
  const auto values = array.as_f64();
  check_finite_payload(values, path);
  Matrix m = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(array.dims[0]),
                                      static_cast<Eigen::Index>(array.dims[1]));
  return FeatureMatrix(std::move(m));
}

void save_features(const FeatureMatrix& features, const fs::path& path, FileFormat format, DType dtype) {
  const Matrix& m = features.values();
  if (format == FileFormat::kCsv) {
    std::string text;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
      text += join_row(row);
    }
    write_file_atomic(path, text);
    return;
  }
  write_ftb(path, make_real_array(to_dims({features.rows(), features.cols()}),
                                  std::span<const double>(m.data(), static_cast<std::size_t>(m.size())), dtype));
}

ImageTensor load_image(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return load_png(path);
  const RawArray array = read_ftb(path);
  require(array.dims.size() == 3, ErrorKind::kFormat,
          path.string() + ": expected 3 dims, got " + std::to_string(array.dims.size()));
  require(array.dtype() != DType::kI64, ErrorKind::kFormat, path.string() + ": dtype must be f32 or f64");
  auto values = array.as_f64();
  check_finite_payload(values, path);
  return ImageTensor(array.dims[0], array.dims[1], array.dims[2], std::move(values));
}

void save_image(const ImageTensor& image, const fs::path& path, DType dtype) {
  write_ftb(path, make_real_array(to_dims({image.channels(), image.height(), image.width()}), image.data(), dtype));
}

std::vector<ImageTensor> load_image_batch(const fs::path& path) {
  const RawArray array = read_ftb(path);
  require(array.dims.size() == 4, ErrorKind::kFormat,
          path.string() + ": expected 4 dims, got " + std::to_string(array.dims.size()));
  require(array.dtype() != DType::kI64, ErrorKind::kFormat, path.string() + ": dtype must be f32 or f64");
  const auto values = array.as_f64();
  check_finite_payload(values, path);
  const std::size_t per_image = static_cast<std::size_t>(array.dims[1] * array.dims[2] * array.dims[3]);
  std::vector<ImageTensor> images;
  images.reserve(array.dims[0]);
  for (std::size_t i = 0; i < array.dims[0]; ++i) {
    auto first = values.begin() + static_cast<std::ptrdiff_t>(i * per_image);
    images.emplace_back(array.dims[1], array.dims[2], array.dims[3],
                        std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per_image)));
  }
  return images;
}

void save_image_batch(std::span<const ImageTensor> images, const fs::path& path, DType dtype) {
  require(!images.empty(), ErrorKind::kParameter, "image batch is empty");
  const auto& first = images.front();
  std::vector<double> all;
  all.reserve(images.size() * first.data().size());
  for (const auto& img : images) {
    require(img.channels() == first.channels() && img.height() == first.height() && img.width() == first.width(),
            ErrorKind::kParameter, "image batch: shapes differ");
    all.insert(all.end(), img.data().begin(), img.data().end());
  }
  write_ftb(path, make_real_array(to_dims({images.size(), first.channels(), first.height(), first.width()}), all, dtype));
}

ImageTensor load_png(const fs::path& path) {
  require_path(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    fail(ErrorKind::kFormat, path.string() + ": " + image.message);
  }
  if (image.format != PNG_FORMAT_RGB) {
    png_image_free(&image);
    fail(ErrorKind::kFormat, path.string() + ": only 8-bit RGB PNG without alpha is supported");
  }
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    fail(ErrorKind::kFormat, path.string() + ": " + image.message);
  }
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  std::vector<double> data(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) data[(c * h + y) * w + x] = buffer[(y * w + x) * 3 + c] / 255.0;
    }
  }
  return ImageTensor(3, h, w, std::move(data));
}

LabelVector load_labels(const fs::path& path, FileFormat format) {
  if (format == FileFormat::kCsv) {
    const auto cells = read_csv_cells(path);
    require(cells.front().size() == 1, ErrorKind::kFormat, path.string() + ": labels need a single column");
    std::vector<std::int64_t> ids;
    for (std::size_t r = 0; r < cells.size(); ++r) ids.push_back(parse_cell<std::int64_t>(cells[r][0], path, r, 0));
    return LabelVector(std::move(ids));
  }
  const RawArray array = read_ftb(path);
  require(array.dims.size() == 1, ErrorKind::kFormat,
          path.string() + ": expected 1 dim, got " + std::to_string(array.dims.size()));
  require(array.dtype() == DType::kI64, ErrorKind::kFormat, path.string() + ": labels must be i64");
  return LabelVector(std::get<std::vector<std::int64_t>>(array.payload));
}

void save_labels(const LabelVector& labels, const fs::path& path, FileFormat format) {
  if (format == FileFormat::kCsv) {
    std::string text;
    for (auto id : labels.ids()) text += std::to_string(id) + '\n';
    write_file_atomic(path, text);
    return;
  }
  RawArray array;
  array.dims = {labels.size()};
  array.payload = labels.ids();
  write_ftb(path, array);
}

std::vector<double> load_vector(const fs::path& path, FileFormat format) {
  if (format == FileFormat::kCsv) {
    const auto cells = read_csv_cells(path);
    require(cells.front().size() == 1, ErrorKind::kFormat, path.string() + ": expected a single column");
    std::vector<double> v;
    for (std::size_t r = 0; r < cells.size(); ++r) v.push_back(parse_cell<double>(cells[r][0], path, r, 0));
    check_finite_payload(v, path);
    return v;
  }
  const RawArray array = read_ftb(path);
  const bool column = array.dims.size() == 2 && array.dims[1] == 1;
  require(array.dims.size() == 1 || column, ErrorKind::kFormat,
          path.string() + ": expected 1 dim, got " + std::to_string(array.dims.size()));
  require(array.dtype() != DType::kI64, ErrorKind::kFormat, path.string() + ": dtype must be f32 or f64");
  auto v = array.as_f64();
  check_finite_payload(v, path);
  return v;
}

void save_vector(std::span<const double> values, const fs::path& path, FileFormat format) {
  if (format == FileFormat::kCsv) {
    std::string text;
    for (double v : values) text += format_real(v) + '\n';
    write_file_atomic(path, text);
    return;
  }
  write_ftb(path, make_real_array({values.size()}, values, DType::kF64));
}

std::variant<ImageTensor, FeatureMatrix> load_tensor(const fs::path& path, FileFormat format) {
  if (format == FileFormat::kCsv) return load_features(path, format);
  const RawArray array = read_ftb(path);
  if (array.dims.size() == 3) return load_image(path);
  if (array.dims.size() == 2) return load_features(path, format);
  fail(ErrorKind::kFormat, path.string() + ": expected 2 or 3 dims, got " + std::to_string(array.dims.size()));
}

void save_tensor(const std::variant<ImageTensor, FeatureMatrix>& tensor, const fs::path& path, FileFormat format,
                 DType dtype) {
  if (const auto* img = std::get_if<ImageTensor>(&tensor)) {
    require(format == FileFormat::kFtb, ErrorKind::kParameter, "images can only be saved as FTB");
    save_image(*img, path, dtype);
  } else {
    save_features(std::get<FeatureMatrix>(tensor), path, format, dtype);
  }
}

}  // namespace eihf
