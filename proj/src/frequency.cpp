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

#include "eihf/frequency.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "eihf/error.hpp"
#include "eihf/rng.hpp"

namespace eihf {

namespace {

using Complex = std::complex<double>;

constexpr double kImagResidueWarn = 1e-6;

// FFTW's planner is not thread-safe; execution on distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Dft2d {
 public:
  Dft2d(std::size_t h, std::size_t w, int sign, std::vector<Complex>& buffer) {
    auto* data = reinterpret_cast<fftw_complex*>(buffer.data());
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), data, data, sign, FFTW_ESTIMATE);
  }
  ~Dft2d() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Dft2d(const Dft2d&) = delete;
  Dft2d& operator=(const Dft2d&) = delete;

  void run() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_ = nullptr;
};

// Unshifted DFT index -> centered (DC at n/2) index.
std::size_t centered(std::size_t k, std::size_t n) { return (k + n / 2) % n; }

std::vector<std::vector<Complex>> forward_spectra(const ImageTensor& img) {
  std::vector<std::vector<Complex>> spectra(img.channels());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    auto& buf = spectra[c];
    auto src = img.channel_span(c);
    buf.assign(src.begin(), src.end());
    Dft2d forward(img.height(), img.width(), FFTW_FORWARD, buf);
    forward.run();
  }
  return spectra;
}

// Masked inverse of one spectrum; returns the max |imag| seen.
double masked_inverse(const std::vector<Complex>& spectrum, const Plane& mask, std::size_t h, std::size_t w,
                      std::vector<double>& out) {
  std::vector<Complex> buf(spectrum.size());
  for (std::size_t ky = 0; ky < h; ++ky) {
    const std::size_t cy = centered(ky, h);
    for (std::size_t kx = 0; kx < w; ++kx) {
      const std::size_t i = ky * w + kx;
      buf[i] = mask.at(cy, centered(kx, w)) != 0.0 ? spectrum[i] : Complex(0.0, 0.0);
    }
  }
  Dft2d inverse(h, w, FFTW_BACKWARD, buf);
  inverse.run();
  const double scale = 1.0 / static_cast<double>(h * w);
  double residue = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out.push_back(buf[i].real() * scale);
    residue = std::max(residue, std::abs(buf[i].imag() * scale));
  }
  return residue;
}

void check_mask(const ImageTensor& img, const Plane& mask) {
  require(mask.height == img.height() && mask.width == img.width(), ErrorKind::kParameter,
          "band_limit: mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) + ", image is " +
              std::to_string(img.height()) + "x" + std::to_string(img.width()));
}

void warn_residue(double residue) {
  if (residue > kImagResidueWarn) {
    warn("band_limit: inverse DFT imaginary residue " + std::to_string(residue) + " exceeds 1e-6");
  }
}

Plane convolve_separable(const Plane& map, std::span<const double> kernel) {
  const auto h = static_cast<std::ptrdiff_t>(map.height);
  const auto w = static_cast<std::ptrdiff_t>(map.width);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  Plane rows(map.height, map.width);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               map.values[static_cast<std::size_t>(y * w + reflect_index(x + t, w))];
      }
      rows.values[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  Plane out(map.height, map.width);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               rows.values[static_cast<std::size_t>(reflect_index(y + t, h) * w + x)];
      }
      out.values[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

// map - K*map for a separable kernel K = v h^T, written as weighted
// differences: (map - h*map) + (h*map - v*(h*map)). Flat regions give exact
// zeros instead of rounding residue.
Plane separable_residual(const Plane& map, std::span<const double> kernel) {
  const auto h = static_cast<std::ptrdiff_t>(map.height);
  const auto w = static_cast<std::ptrdiff_t>(map.width);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  Plane rows(map.height, map.width);
  Plane out(map.height, map.width);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const double center = map.values[static_cast<std::size_t>(y * w + x)];
      double smooth = 0.0;
      double diff = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        const double k = kernel[static_cast<std::size_t>(t + radius)];
        const double v = map.values[static_cast<std::size_t>(y * w + reflect_index(x + t, w))];
        smooth += k * v;
        diff += k * (center - v);
      }
      rows.values[static_cast<std::size_t>(y * w + x)] = smooth;
      out.values[static_cast<std::size_t>(y * w + x)] = diff;
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const double center = rows.values[static_cast<std::size_t>(y * w + x)];
      double diff = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        diff += kernel[static_cast<std::size_t>(t + radius)] *
                (center - rows.values[static_cast<std::size_t>(reflect_index(y + t, h) * w + x)]);
      }
      out.values[static_cast<std::size_t>(y * w + x)] += diff;
    }
  }
  return out;
}

Plane convolve3x3(const Plane& map, const double (&k)[3][3]) {
  const auto h = static_cast<std::ptrdiff_t>(map.height);
  const auto w = static_cast<std::ptrdiff_t>(map.width);
  Plane out(map.height, map.width);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          acc += k[dy + 1][dx + 1] *
                 map.values[static_cast<std::size_t>(reflect_index(y + dy, h) * w + reflect_index(x + dx, w))];
        }
      }
      out.values[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

Plane scaled(Plane map, double factor) {
  for (double& v : map.values) v *= factor;
  return map;
}

double require_alpha(const ResidualParams& params, const char* who) {
  require(params.alpha_hf.has_value(), ErrorKind::kParameter, std::string(who) + ": alpha is not fitted");
  require(*params.alpha_hf > 0.0 && std::isfinite(*params.alpha_hf), ErrorKind::kParameter,
          std::string(who) + ": alpha must be positive and finite");
  return *params.alpha_hf;
}

}  // namespace

// ---------------------------------------------------------------------------

double normalized_radius(std::size_t height, std::size_t width, std::size_t cy, std::size_t cx) {
  auto radius = [&](double dy, double dx) {
    const double u = dy / static_cast<double>(height);
    const double v = dx / static_cast<double>(width);
    return std::sqrt(u * u + v * v);
  };
  // Farthest bin from DC is the (-H/2, -W/2) corner of the centered grid.
  const double r_max = radius(static_cast<double>(height / 2), static_cast<double>(width / 2));
  if (r_max == 0.0) return 0.0;
  const double dy = static_cast<double>(cy) - static_cast<double>(height / 2);
  const double dx = static_cast<double>(cx) - static_cast<double>(width / 2);
  return std::min(1.0, radius(dy, dx) / r_max);
}

std::size_t BandMaskSet::band_of(std::size_t cy, std::size_t cx) const {
  const double r = normalized_radius(height, width, cy, cx);
  return std::min(static_cast<std::size_t>(r * static_cast<double>(bands)), bands - 1);
}

BandMaskSet make_band_masks(std::size_t height, std::size_t width, std::size_t bands) {
  require(bands >= 1, ErrorKind::kParameter, "band masks: need at least one band");
  require(height >= 1 && width >= 1, ErrorKind::kParameter, "band masks: empty grid");
  BandMaskSet set;
  set.bands = bands;
  set.height = height;
  set.width = width;
  set.masks.assign(bands, Plane(height, width, 0.0));
  for (std::size_t cy = 0; cy < height; ++cy) {
    for (std::size_t cx = 0; cx < width; ++cx) set.masks[set.band_of(cy, cx)].at(cy, cx) = 1.0;
  }
  for (std::size_t b = 0; b < bands; ++b) {
    const bool empty = std::all_of(set.masks[b].values.begin(), set.masks[b].values.end(),
                                   [](double v) { return v == 0.0; });
    if (empty) {
      warn("band masks: band " + std::to_string(b + 1) + " of " + std::to_string(bands) + " is empty on a " +
           std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
  }
  return set;
}

BandLimited band_limit(const ImageTensor& img, const Plane& mask) {
  check_mask(img, mask);
  const auto spectra = forward_spectra(img);
  std::vector<double> out;
  out.reserve(img.data().size());
  double residue = 0.0;
  for (const auto& spectrum : spectra) {
    residue = std::max(residue, masked_inverse(spectrum, mask, img.height(), img.width(), out));
  }
  warn_residue(residue);
  return BandLimited{ImageTensor(img.channels(), img.height(), img.width(), std::move(out)), residue};
}

std::vector<ImageTensor> band_decompose(const ImageTensor& img, const BandMaskSet& masks) {
  require(masks.height == img.height() && masks.width == img.width(), ErrorKind::kParameter,
          "band_decompose: mask set size does not match image");
  const auto spectra = forward_spectra(img);
  std::vector<ImageTensor> bands;
  bands.reserve(masks.bands);
  double residue = 0.0;
  for (const Plane& mask : masks.masks) {
    std::vector<double> out;
    out.reserve(img.data().size());
    for (const auto& spectrum : spectra) {
      residue = std::max(residue, masked_inverse(spectrum, mask, img.height(), img.width(), out));
    }
    bands.emplace_back(img.channels(), img.height(), img.width(), std::move(out));
  }
  warn_residue(residue);
  return bands;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ResidualOperator op) {
  switch (op) {
    case ResidualOperator::kGaussian: return "gaussian";
    case ResidualOperator::kSobel: return "sobel";
    case ResidualOperator::kLaplace: return "laplace";
  }
  return "gaussian";
}

ResidualOperator parse_residual_operator(std::string_view name) {
  if (name == "gaussian") return ResidualOperator::kGaussian;
  if (name == "sobel") return ResidualOperator::kSobel;
  if (name == "laplace") return ResidualOperator::kLaplace;
  fail(ErrorKind::kParameter, "unknown residual operator '" + std::string(name) + "'");
}

void ResidualParams::validate() const {
  require(kernel_size >= 3 && kernel_size % 2 == 1, ErrorKind::kParameter,
          "residual: kernel size must be odd and >= 3, got " + std::to_string(kernel_size));
  require(sigma_blur > 0.0 && std::isfinite(sigma_blur), ErrorKind::kParameter, "residual: sigma must be > 0");
  require(epsilon > 0.0 && std::isfinite(epsilon), ErrorKind::kParameter, "residual: epsilon must be > 0");
}

Plane grayscale(const ImageTensor& img) {
  require(img.channels() == 3, ErrorKind::kParameter,
          "grayscale: expected 3 channels, got " + std::to_string(img.channels()));
  Plane g(img.height(), img.width());
  auto r = img.channel_span(0);
  auto gr = img.channel_span(1);
  auto b = img.channel_span(2);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = 0.2989 * r[i] + 0.5870 * gr[i] + 0.1140 * b[i];
  return g;
}

std::vector<double> gaussian_kernel_1d(std::size_t size, double sigma) {
  std::vector<double> k(size);
  const auto radius = static_cast<double>(size / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double t = static_cast<double>(i) - radius;
    k[i] = std::exp(-t * t / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Plane gaussian_smooth(const Plane& map, const ResidualParams& params) {
  params.validate();
  require(map.height >= params.kernel_size && map.width >= params.kernel_size, ErrorKind::kParameter,
          "smooth: map " + std::to_string(map.height) + "x" + std::to_string(map.width) +
              " is smaller than the kernel (" + std::to_string(params.kernel_size) + ")");
  const auto kernel = gaussian_kernel_1d(params.kernel_size, params.sigma_blur);
  return convolve_separable(map, kernel);
}

Plane hf_residual(const ImageTensor& img, const ResidualParams& params) {
  const Plane g = grayscale(img);
  Plane out(g.height, g.width);
  switch (params.op) {
    case ResidualOperator::kGaussian: {
      params.validate();
      require(g.height >= params.kernel_size && g.width >= params.kernel_size, ErrorKind::kParameter,
              "hf_residual: image is smaller than the kernel (" + std::to_string(params.kernel_size) + ")");
      const Plane diff = separable_residual(g, gaussian_kernel_1d(params.kernel_size, params.sigma_blur));
      for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = std::abs(diff.values[i]);
      break;
    }
    case ResidualOperator::kSobel: {
      static constexpr double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
      static constexpr double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
      const Plane gx = convolve3x3(g, kx);
      const Plane gy = convolve3x3(g, ky);
      for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = std::hypot(gx.values[i], gy.values[i]);
      break;
    }
    case ResidualOperator::kLaplace: {
      static constexpr double kl[3][3] = {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}};
      const Plane lap = convolve3x3(g, kl);
      for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = std::abs(lap.values[i]);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void AlphaAccumulator::add(double value) {
  ++count_;
  const double delta = value - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (value - mean_);
}

void AlphaAccumulator::add(const Plane& map) {
  for (double v : map.values) add(v);
}

void AlphaAccumulator::merge(const AlphaAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const auto n_a = static_cast<double>(count_);
  const auto n_b = static_cast<double>(other.count_);
  const double n = n_a + n_b;
  const double delta = other.mean_ - mean_;
  mean_ += delta * n_b / n;
  m2_ += other.m2_ + delta * delta * n_a * n_b / n;
  count_ += other.count_;
}

double AlphaAccumulator::population_std() const {
  require(count_ >= 1, ErrorKind::kParameter, "alpha: no residual pixels");
  return std::sqrt(std::max(0.0, m2_ / static_cast<double>(count_)));
}

double AlphaAccumulator::alpha(double epsilon) const {
  require(count_ >= 2, ErrorKind::kParameter, "alpha: need at least 2 residual pixels, got " + std::to_string(count_));
  require(epsilon > 0.0, ErrorKind::kParameter, "alpha: epsilon must be > 0");
  return 1.0 / (population_std() + epsilon);
}

double fit_alpha(std::span<const Plane> residual_maps, double epsilon) {
  AlphaAccumulator acc;
  for (const Plane& map : residual_maps) acc.add(map);
  return acc.alpha(epsilon);
}

ImageTensor eihf_transform(const ImageTensor& img, const ResidualParams& params) {
  const double alpha = require_alpha(params, "eihf");
  return img.with_channel(scaled(hf_residual(img, params), alpha));
}

// ---------------------------------------------------------------------------

AblationVariant parse_ablation_variant(std::string_view name) {
  if (name == "zero") return AblationVariant::kZero;
  if (name == "random") return AblationVariant::kRandom;
  if (name == "lowfreq") return AblationVariant::kLowFreq;
  if (name == "shuffled_hf" || name == "shuffled") return AblationVariant::kShuffledHf;
  fail(ErrorKind::kParameter, "unknown ablation variant '" + std::string(name) + "'");
}

Plane low_frequency_map(const ImageTensor& img, const ResidualParams& params) {
  return gaussian_smooth(grayscale(img), params);
}

Plane ablation_channel(const ImageTensor& img, AblationVariant variant, const ResidualParams& params,
                       std::uint64_t seed) {
  switch (variant) {
    case AblationVariant::kZero:
      return Plane(img.height(), img.width(), 0.0);
    case AblationVariant::kRandom: {
      Plane out(img.height(), img.width());
      SplitMix64 rng(seed);
      for (double& v : out.values) v = rng.normal();
      return out;
    }
    case AblationVariant::kLowFreq:
      return scaled(low_frequency_map(img, params), require_alpha(params, "lowfreq ablation"));
    case AblationVariant::kShuffledHf: {
      Plane out = scaled(hf_residual(img, params), require_alpha(params, "shuffled ablation"));
      SplitMix64 rng(seed);
      for (std::size_t i = out.size() - 1; i > 0; --i) std::swap(out.values[i], out.values[rng.below(i + 1)]);
      return out;
    }
  }
  fail(ErrorKind::kParameter, "unknown ablation variant");
}

// ---------------------------------------------------------------------------

std::string_view to_string(TransformVariant variant) {
  switch (variant) {
    case TransformVariant::kIdentity: return "identity";
    case TransformVariant::kEihf: return "eihf";
    case TransformVariant::kZero: return "zero";
    case TransformVariant::kRandom: return "random";
    case TransformVariant::kLowFreq: return "lowfreq";
    case TransformVariant::kShuffled: return "shuffled";
  }
  return "identity";
}

TransformVariant parse_transform_variant(std::string_view name) {
  if (name == "identity") return TransformVariant::kIdentity;
  if (name == "eihf") return TransformVariant::kEihf;
  if (name == "zero") return TransformVariant::kZero;
  if (name == "random") return TransformVariant::kRandom;
  if (name == "lowfreq") return TransformVariant::kLowFreq;
  if (name == "shuffled" || name == "shuffled_hf") return TransformVariant::kShuffled;
  fail(ErrorKind::kParameter, "unknown transform variant '" + std::string(name) + "'");
}

bool TransformSpec::needs_alpha() const {
  return variant == TransformVariant::kEihf || variant == TransformVariant::kLowFreq ||
         variant == TransformVariant::kShuffled;
}

Plane TransformSpec::alpha_source(const ImageTensor& img) const {
  switch (variant) {
    case TransformVariant::kEihf:
    case TransformVariant::kShuffled:
      return hf_residual(img, params);
    case TransformVariant::kLowFreq:
      return low_frequency_map(img, params);
    default:
      fail(ErrorKind::kParameter, "transform '" + std::string(to_string(variant)) + "' has no alpha");
  }
}

ImageTensor TransformSpec::apply(const ImageTensor& img, std::uint64_t index) const {
  const std::uint64_t image_seed = SplitMix64::derive(seed, index).next();
  switch (variant) {
    case TransformVariant::kIdentity: return img;
    case TransformVariant::kEihf: return eihf_transform(img, params);
    case TransformVariant::kZero:
      return img.with_channel(ablation_channel(img, AblationVariant::kZero, params, image_seed));
    case TransformVariant::kRandom:
      return img.with_channel(ablation_channel(img, AblationVariant::kRandom, params, image_seed));
    case TransformVariant::kLowFreq:
      return img.with_channel(ablation_channel(img, AblationVariant::kLowFreq, params, image_seed));
    case TransformVariant::kShuffled:
      return img.with_channel(ablation_channel(img, AblationVariant::kShuffledHf, params, image_seed));
  }
  fail(ErrorKind::kParameter, "unknown transform variant");
}

bool operator==(const TransformSpec& a, const TransformSpec& b) {
  if (a.variant != b.variant) return false;
  if (a.variant == TransformVariant::kIdentity || a.variant == TransformVariant::kZero ||
      a.variant == TransformVariant::kRandom) {
    return true;
  }
  return a.params.op == b.params.op && a.params.kernel_size == b.params.kernel_size &&
         a.params.sigma_blur == b.params.sigma_blur && a.params.alpha_hf == b.params.alpha_hf &&
         a.params.epsilon == b.params.epsilon;
}

}  // namespace eihf
