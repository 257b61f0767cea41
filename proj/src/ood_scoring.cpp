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

#include "eihf/ood_scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "eihf/error.hpp"
#include "eihf/parallel.hpp"
#include "eihf/tensor_io.hpp"

namespace eihf {

namespace {

// Pivots below this fraction of the largest diagonal entry are treated as a
// failed factorization.
constexpr double kRelativePivotFloor = 1e-13;

ScoreSet map_rows(const FeatureMatrix& m, const std::function<double(std::span<const double>)>& score) {
  ScoreSet out;
  out.scores.resize(m.rows());
  parallel_for(m.rows(), [&](std::size_t i) {
    out.scores[i] = score(std::span<const double>(m.values().data() + i * m.cols(), m.cols()));
  });
  return out;
}

double log_sum_exp_scaled(std::span<const double> logits, double temperature) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp((v - top) / temperature);
  return top / temperature + std::log(sum);
}

Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  std::size_t zero_rows = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) {
      out.row(i) /= norm;
    } else {
      ++zero_rows;
    }
  }
  if (zero_rows > 0) warn("knn: " + std::to_string(zero_rows) + " zero vector(s) left unnormalized");
  return out;
}

double kth_distance(std::span<const double> z, const Matrix& bank, std::size_t k) {
  const std::size_t d = z.size();
  std::vector<double> dist(static_cast<std::size_t>(bank.rows()));
  for (Eigen::Index r = 0; r < bank.rows(); ++r) {
    const double* row = bank.data() + r * bank.cols();
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = z[j] - row[j];
      s += t * t;
    }
    dist[static_cast<std::size_t>(r)] = s;
  }
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
  return std::sqrt(dist[k - 1]);
}

void check_knn(std::size_t dim, const FeatureMatrix& bank, const KnnOptions& options) {
  require(options.k >= 1 && options.k <= bank.rows(), ErrorKind::kParameter,
          "knn: k must be in [1, " + std::to_string(bank.rows()) + "], got " + std::to_string(options.k));
  require(dim == bank.cols(), ErrorKind::kParameter,
          "knn: query dim " + std::to_string(dim) + " != bank dim " + std::to_string(bank.cols()));
}

}  // namespace

ScoreSet ScoreSet::as_larger_is_id() const {
  if (convention == ScoreConvention::kLargerIsId) return *this;
  ScoreSet out{scores, ScoreConvention::kLargerIsId};
  for (double& s : out.scores) s = -s;
  return out;
}

ClassStats::ClassStats(Matrix mu, Eigen::MatrixXd sigma_hat, double lambda, std::vector<std::size_t> class_sizes,
                       std::vector<Eigen::MatrixXd> per_class_cov)
    : mu_(std::move(mu)),
      sigma_hat_(std::move(sigma_hat)),
      lambda_(lambda),
      class_sizes_(std::move(class_sizes)),
      per_class_cov_(std::move(per_class_cov)) {
  const auto d = mu_.cols();
  require(mu_.rows() >= 1 && d >= 1, ErrorKind::kValidation, "class stats: empty means");
  require(sigma_hat_.rows() == d && sigma_hat_.cols() == d, ErrorKind::kValidation,
          "class stats: covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  require(class_sizes_.size() == class_count(), ErrorKind::kValidation, "class stats: class size count mismatch");
  require(per_class_cov_.empty() || per_class_cov_.size() == class_count(), ErrorKind::kValidation,
          "class stats: per-class covariance count mismatch");
  require(lambda_ >= 0.0 && lambda_ <= 1.0, ErrorKind::kParameter, "class stats: shrinkage must be in [0, 1]");
  require(sigma_hat_.allFinite() && mu_.allFinite(), ErrorKind::kValidation, "class stats: non-finite values");
  require((sigma_hat_ - sigma_hat_.transpose()).cwiseAbs().maxCoeff() <=
              1e-12 * std::max(1.0, sigma_hat_.cwiseAbs().maxCoeff()),
          ErrorKind::kValidation, "class stats: covariance is not symmetric");

  llt_.compute(sigma_hat_);
  const double scale = sigma_hat_.diagonal().maxCoeff();
  bool ok = llt_.info() == Eigen::Success && scale > 0.0;
  if (ok) {
    const Eigen::VectorXd pivots = llt_.matrixLLT().diagonal();
    ok = (pivots.array().square() > kRelativePivotFloor * scale).all();
  }
  require(ok, ErrorKind::kValidation,
          "class stats: covariance is not positive definite at lambda = " + format_real(lambda_) +
              "; use a larger shrinkage");
}

ClassStats ClassStats::with_transform(std::optional<TransformSpec> transform) const {
  ClassStats out = *this;
  out.transform_ = std::move(transform);
  return out;
}

double ClassStats::distance(std::span<const double> z, std::size_t c) const {
  require(z.size() == dim(), ErrorKind::kParameter,
          "mahalanobis: feature dim " + std::to_string(z.size()) + " != stats dim " + std::to_string(dim()));
  Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size())) -
                         mu_.row(static_cast<Eigen::Index>(c)).transpose();
  llt_.matrixL().solveInPlace(diff);
  return diff.squaredNorm();
}

ClassStats fit_class_stats(const FeatureMatrix& features, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kParameter, "fit stats: shrinkage must be in [0, 1]");
  const LabelVector& labels = features.labels();
  const std::size_t classes = labels.class_count();
  const auto d = static_cast<Eigen::Index>(features.cols());

  std::vector<std::size_t> sizes(classes, 0);
  Matrix mu = Matrix::Zero(static_cast<Eigen::Index>(classes), d);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    ++sizes[c];
    mu.row(static_cast<Eigen::Index>(c)) += features.row(i);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    require(sizes[c] > 0, ErrorKind::kValidation, "fit stats: class " + std::to_string(c) + " has no samples");
    mu.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(sizes[c]);
  }

  std::vector<Eigen::MatrixXd> per_class(classes, Eigen::MatrixXd::Zero(d, d));
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const Eigen::RowVectorXd dev = features.row(i) - mu.row(static_cast<Eigen::Index>(c));
    per_class[c].noalias() += dev.transpose() * dev;
  }
  Eigen::MatrixXd tied = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t c = 0; c < classes; ++c) {
    tied += per_class[c];
    per_class[c] /= static_cast<double>(sizes[c]);
  }
  tied /= static_cast<double>(features.rows());
  tied = 0.5 * (tied + tied.transpose());

  const double mean_variance = tied.trace() / static_cast<double>(d);
  Eigen::MatrixXd shrunk = (1.0 - lambda) * tied;
  shrunk.diagonal().array() += lambda * mean_variance;
  return ClassStats(std::move(mu), std::move(shrunk), lambda, std::move(sizes), std::move(per_class));
}

double mahalanobis_score(std::span<const double> z, const ClassStats& stats) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < stats.class_count(); ++c) best = std::min(best, stats.distance(z, c));
  return -best;
}

ScoreSet mahalanobis_scores(const FeatureMatrix& features, const ClassStats& stats) {
  require(features.cols() == stats.dim(), ErrorKind::kParameter,
          "mahalanobis: feature dim " + std::to_string(features.cols()) + " != stats dim " +
              std::to_string(stats.dim()));
  return map_rows(features, [&](std::span<const double> z) { return mahalanobis_score(z, stats); });
}

double msp_score(std::span<const double> logits) {
  require(!logits.empty(), ErrorKind::kParameter, "msp: empty logit vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - top);
  return 1.0 / sum;
}

ScoreSet msp_scores(const FeatureMatrix& logits) {
  return map_rows(logits, [](std::span<const double> z) { return msp_score(z); });
}

double energy_score(std::span<const double> logits, double temperature) {
  require(!logits.empty(), ErrorKind::kParameter, "energy: empty logit vector");
  require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::kParameter, "energy: temperature must be > 0");
  return temperature * log_sum_exp_scaled(logits, temperature);
}

ScoreSet energy_scores(const FeatureMatrix& logits, double temperature) {
  require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::kParameter, "energy: temperature must be > 0");
  return map_rows(logits, [&](std::span<const double> z) { return energy_score(z, temperature); });
}

double knn_score(std::span<const double> z, const FeatureMatrix& bank, const KnnOptions& options) {
  check_knn(z.size(), bank, options);
  if (!options.normalize) return -kth_distance(z, bank.values(), options.k);
  Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
  const double norm = q.norm();
  if (norm > 0.0) {
    q /= norm;
  } else {
    warn("knn: zero query vector left unnormalized");
  }
  return -kth_distance(std::span<const double>(q.data(), z.size()), normalized_rows(bank.values()), options.k);
}

ScoreSet knn_scores(const FeatureMatrix& queries, const FeatureMatrix& bank, const KnnOptions& options) {
  check_knn(queries.cols(), bank, options);
  const Matrix bank_rows = options.normalize ? normalized_rows(bank.values()) : bank.values();
  const Matrix query_rows = options.normalize ? normalized_rows(queries.values()) : queries.values();
  ScoreSet out;
  out.scores.resize(queries.rows());
  parallel_for(queries.rows(), [&](std::size_t i) {
    std::span<const double> z(query_rows.data() + i * queries.cols(), queries.cols());
    out.scores[i] = -kth_distance(z, bank_rows, options.k);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Stats bundle

namespace {

constexpr std::array<char, 4> kContainerMagic = {'F', 'T', 'B', 'C'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  require(offset + width <= bytes.size(), ErrorKind::kFormat, "stats bundle: truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  return v;
}

RawArray f64_array(std::vector<std::uint64_t> dims, const double* data) {
  RawArray a;
  a.dims = std::move(dims);
  std::size_t n = 1;
  for (auto d : a.dims) n *= d;
  a.payload = std::vector<double>(data, data + n);
  return a;
}

RawArray i64_array(std::vector<std::int64_t> values) {
  RawArray a;
  a.dims = {values.size()};
  a.payload = std::move(values);
  return a;
}

// variant, operator, kernel size, sigma, alpha (NaN if unset), epsilon
constexpr std::size_t kTransformFields = 6;

RawArray encode_transform(const TransformSpec& t) {
  const double alpha = t.params.alpha_hf.value_or(std::numeric_limits<double>::quiet_NaN());
  const double fields[kTransformFields] = {static_cast<double>(t.variant),     static_cast<double>(t.params.op),
                                           static_cast<double>(t.params.kernel_size), t.params.sigma_blur,
                                           alpha,                                  t.params.epsilon};
  return f64_array({kTransformFields}, fields);
}

TransformSpec decode_transform(const RawArray& a) {
  require(a.dims.size() == 1 && a.dims[0] == kTransformFields && a.dtype() == DType::kF64, ErrorKind::kFormat,
          "stats bundle: malformed transform entry");
  const auto& v = std::get<std::vector<double>>(a.payload);
  require(v[0] >= 0 && v[0] <= static_cast<double>(TransformVariant::kShuffled) && v[1] >= 0 &&
              v[1] <= static_cast<double>(ResidualOperator::kLaplace),
          ErrorKind::kFormat, "stats bundle: unknown transform code");
  TransformSpec t;
  t.variant = static_cast<TransformVariant>(static_cast<int>(v[0]));
  t.params.op = static_cast<ResidualOperator>(static_cast<int>(v[1]));
  t.params.kernel_size = static_cast<std::size_t>(v[2]);
  t.params.sigma_blur = v[3];
  if (!std::isnan(v[4])) t.params.alpha_hf = v[4];
  t.params.epsilon = v[5];
  return t;
}

const RawArray& entry(const std::map<std::string, RawArray>& entries, const std::string& name) {
  auto it = entries.find(name);
  require(it != entries.end(), ErrorKind::kFormat, "stats bundle: missing entry '" + name + "'");
  return it->second;
}

}  // namespace

void save_class_stats(const ClassStats& stats, const std::filesystem::path& path) {
  const auto c = static_cast<std::uint64_t>(stats.class_count());
  const auto d = static_cast<std::uint64_t>(stats.dim());
  std::vector<std::pair<std::string, RawArray>> entries;
  entries.emplace_back("mu", f64_array({c, d}, stats.mu().data()));
  entries.emplace_back("sigma_hat", f64_array({d, d}, stats.sigma_hat().data()));
  const double lambda = stats.lambda();
  entries.emplace_back("lambda", f64_array({1}, &lambda));
  entries.emplace_back("class_count", i64_array({static_cast<std::int64_t>(c)}));
  entries.emplace_back("dim", i64_array({static_cast<std::int64_t>(d)}));
  std::vector<std::int64_t> sizes(stats.class_sizes().begin(), stats.class_sizes().end());
  entries.emplace_back("class_sizes", i64_array(std::move(sizes)));
  if (stats.has_per_class_cov()) {
    std::vector<double> all;
    all.reserve(c * d * d);
    for (const auto& cov : stats.per_class_cov()) all.insert(all.end(), cov.data(), cov.data() + cov.size());
    entries.emplace_back("per_class_cov", f64_array({c, d, d}, all.data()));
  }
  if (stats.transform()) entries.emplace_back("transform", encode_transform(*stats.transform()));

  std::vector<std::uint8_t> out(kContainerMagic.begin(), kContainerMagic.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, array] : entries) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const auto record = encode_ftb(array);
    put_le<std::uint64_t>(out, record.size());
    out.insert(out.end(), record.begin(), record.end());
  }
  write_file_atomic(path, out);
}

ClassStats load_class_stats(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  require(bytes.size() >= 8 && std::equal(kContainerMagic.begin(), kContainerMagic.end(), bytes.begin()),
          ErrorKind::kFormat, path.string() + ": bad magic (expected FTBC stats bundle)");
  const auto count = get_le(bytes, 4, 4);
  std::size_t offset = 8;
  std::map<std::string, RawArray> entries;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = get_le(bytes, offset, 2);
    offset += 2;
    require(offset + name_len <= bytes.size(), ErrorKind::kFormat, "stats bundle: truncated entry name");
    std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                     bytes.begin() + static_cast<std::ptrdiff_t>(offset + name_len));
    offset += name_len;
    const auto record_len = get_le(bytes, offset, 8);
    offset += 8;
    require(offset + record_len <= bytes.size(), ErrorKind::kFormat, "stats bundle: truncated entry '" + name + "'");
    entries.emplace(name, decode_ftb(std::span<const std::uint8_t>(bytes).subspan(offset, record_len)));
    offset += record_len;
  }
  require(offset == bytes.size(), ErrorKind::kFormat, "stats bundle: trailing bytes");

  const auto& mu_a = entry(entries, "mu");
  const auto& sigma_a = entry(entries, "sigma_hat");
  require(mu_a.dims.size() == 2 && sigma_a.dims.size() == 2 && mu_a.dtype() == DType::kF64 &&
              sigma_a.dtype() == DType::kF64,
          ErrorKind::kFormat, "stats bundle: mu and sigma_hat must be 2-D f64");
  const auto c = static_cast<Eigen::Index>(mu_a.dims[0]);
  const auto d = static_cast<Eigen::Index>(mu_a.dims[1]);
  require(sigma_a.dims[0] == mu_a.dims[1] && sigma_a.dims[1] == mu_a.dims[1], ErrorKind::kFormat,
          "stats bundle: sigma_hat dims do not match mu");
  Matrix mu = Eigen::Map<const Matrix>(std::get<std::vector<double>>(mu_a.payload).data(), c, d);
  Eigen::MatrixXd sigma = Eigen::Map<const Eigen::MatrixXd>(std::get<std::vector<double>>(sigma_a.payload).data(), d, d);

  const auto& lambda_a = entry(entries, "lambda");
  require(lambda_a.dtype() == DType::kF64 && lambda_a.element_count() == 1, ErrorKind::kFormat,
          "stats bundle: malformed lambda");
  const double lambda = std::get<std::vector<double>>(lambda_a.payload)[0];

  const auto& sizes_a = entry(entries, "class_sizes");
  require(sizes_a.dtype() == DType::kI64 && sizes_a.element_count() == static_cast<std::size_t>(c),
          ErrorKind::kFormat, "stats bundle: malformed class_sizes");
  const auto& raw_sizes = std::get<std::vector<std::int64_t>>(sizes_a.payload);
  std::vector<std::size_t> sizes(raw_sizes.begin(), raw_sizes.end());

  std::vector<Eigen::MatrixXd> per_class;
  if (auto it = entries.find("per_class_cov"); it != entries.end()) {
    const auto& a = it->second;
    require(a.dtype() == DType::kF64 && a.dims.size() == 3 && a.dims[0] == mu_a.dims[0] && a.dims[1] == mu_a.dims[1] &&
                a.dims[2] == mu_a.dims[1],
            ErrorKind::kFormat, "stats bundle: malformed per_class_cov");
    const auto& v = std::get<std::vector<double>>(a.payload);
    for (Eigen::Index k = 0; k < c; ++k) per_class.push_back(Eigen::Map<const Eigen::MatrixXd>(v.data() + k * d * d, d, d));
  }

  ClassStats stats(std::move(mu), std::move(sigma), lambda, std::move(sizes), std::move(per_class));
  if (auto it = entries.find("transform"); it != entries.end()) return stats.with_transform(decode_transform(it->second));
  return stats;
}

}  // namespace eihf
