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

#include "eihf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eihf/error.hpp"
#include "eihf/tensor_io.hpp"

namespace eihf {

namespace {

constexpr double kTraceIdentityTolerance = 1e-8;

std::pair<ScoreSet, ScoreSet> canonical_pair(const ScoreSet& id_scores, const ScoreSet& ood_scores) {
  require(!id_scores.scores.empty() && !ood_scores.scores.empty(), ErrorKind::kParameter,
          "metrics: ID and OOD score sets must be non-empty");
  require(id_scores.convention == ood_scores.convention, ErrorKind::kMismatch,
          "metrics: ID and OOD scores use different conventions");
  return {id_scores.as_larger_is_id(), ood_scores.as_larger_is_id()};
}

std::vector<std::size_t> class_sizes(const LabelVector& labels) {
  std::vector<std::size_t> sizes(labels.class_count(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) ++sizes[static_cast<std::size_t>(labels[i])];
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    require(sizes[c] > 0, ErrorKind::kValidation, "geometry: class " + std::to_string(c) + " has no samples");
  }
  return sizes;
}

Matrix class_means(const FeatureMatrix& features, const std::vector<std::size_t>& sizes) {
  const LabelVector& labels = features.labels();
  Matrix mu = Matrix::Zero(static_cast<Eigen::Index>(sizes.size()), static_cast<Eigen::Index>(features.cols()));
  for (std::size_t i = 0; i < features.rows(); ++i) mu.row(labels[i]) += features.row(i);
  for (std::size_t c = 0; c < sizes.size(); ++c) mu.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(sizes[c]);
  return mu;
}

}  // namespace

double auroc(const ScoreSet& id_in, const ScoreSet& ood_in) {
  const auto [id, ood] = canonical_pair(id_in, ood_in);
  const std::size_t n = id.size();
  const std::size_t m = ood.size();
  std::vector<std::pair<double, bool>> pooled;  // (score, is_id)
  pooled.reserve(n + m);
  for (double s : id.scores) pooled.emplace_back(s, true);
  for (double s : ood.scores) pooled.emplace_back(s, false);
  std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // For each tie group: every ID member beats all OOD strictly below and gets
  // half credit against OOD in the group. Counts stay integral (doubled).
  unsigned long long doubled_wins = 0;
  std::size_t ood_below = 0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    std::size_t id_in_group = 0;
    std::size_t ood_in_group = 0;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) {
      (pooled[j].second ? id_in_group : ood_in_group)++;
      ++j;
    }
    doubled_wins += static_cast<unsigned long long>(id_in_group) * (2 * ood_below + ood_in_group);
    ood_below += ood_in_group;
    i = j;
  }
  return static_cast<double>(doubled_wins) / (2.0 * static_cast<double>(n) * static_cast<double>(m));
}

ThresholdResult fpr_at_tpr(const ScoreSet& id_in, const ScoreSet& ood_in, double tpr_target) {
  require(tpr_target > 0.0 && tpr_target <= 1.0, ErrorKind::kParameter, "fpr: TPR target must be in (0, 1]");
  const auto [id, ood] = canonical_pair(id_in, ood_in);
  std::vector<double> sorted = id.scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto n = static_cast<double>(sorted.size());
  // Smallest count of ID scores >= tau meeting the target; the guard absorbs
  // the representation error of targets like 0.95.
  const auto needed = static_cast<std::size_t>(std::max(1.0, std::ceil(tpr_target * n - 1e-9)));
  const double tau = sorted[std::min(needed, sorted.size()) - 1];

  ThresholdResult result;
  result.tau = tau;
  result.tpr = static_cast<double>(std::count_if(sorted.begin(), sorted.end(), [&](double s) { return s >= tau; })) / n;
  result.fpr = static_cast<double>(std::count_if(ood.scores.begin(), ood.scores.end(),
                                                 [&](double s) { return s >= tau; })) /
               static_cast<double>(ood.size());
  return result;
}

OverlapResult score_overlap(const ScoreSet& id_in, const ScoreSet& ood_in, std::size_t bins) {
  require(bins >= 2, ErrorKind::kParameter, "overlap: need at least 2 bins");
  const auto [id, ood] = canonical_pair(id_in, ood_in);
  const auto [id_lo, id_hi] = std::minmax_element(id.scores.begin(), id.scores.end());
  const auto [ood_lo, ood_hi] = std::minmax_element(ood.scores.begin(), ood.scores.end());
  const double lo = std::min(*id_lo, *ood_lo);
  const double hi = std::max(*id_hi, *ood_hi);

  OverlapResult result;
  result.bins = bins;
  result.range_min = lo;
  result.range_max = hi;
  if (!(hi > lo)) {
    warn("overlap: all pooled scores are identical; returning 1");
    result.overlap = 1.0;
    return result;
  }
  auto histogram = [&](const std::vector<double>& scores) {
    std::vector<std::uint64_t> h(bins, 0);
    const double width = hi - lo;
    for (double s : scores) {
      auto b = static_cast<std::size_t>((s - lo) / width * static_cast<double>(bins));
      ++h[std::min(b, bins - 1)];
    }
    return h;
  };
  // min(a/n, b/m) summed over bins, kept in integers as min(a*m, b*n) / (n*m).
  const auto c_in = histogram(id.scores);
  const auto c_out = histogram(ood.scores);
  const std::uint64_t n = id.scores.size();
  const std::uint64_t m = ood.scores.size();
  std::uint64_t shared = 0;
  for (std::size_t b = 0; b < bins; ++b) shared += std::min(c_in[b] * m, c_out[b] * n);
  const double total = static_cast<double>(shared) / (static_cast<double>(n) * static_cast<double>(m));
  result.overlap = std::clamp(total, 0.0, 1.0);
  return result;
}

IntraVariance v_intra(const FeatureMatrix& features) {
  const LabelVector& labels = features.labels();
  const auto sizes = class_sizes(labels);
  const Matrix mu = class_means(features, sizes);
  const std::size_t classes = sizes.size();

  std::vector<double> direct_sum(classes, 0.0);
  std::vector<Eigen::MatrixXd> cov(classes, Eigen::MatrixXd::Zero(mu.cols(), mu.cols()));
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    const Eigen::RowVectorXd dev = features.row(i) - mu.row(labels[i]);
    direct_sum[c] += dev.squaredNorm();
    cov[c].noalias() += dev.transpose() * dev;
  }
  IntraVariance out;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto n_c = static_cast<double>(sizes[c]);
    out.direct += direct_sum[c] / n_c;
    out.trace_form += (cov[c] / n_c).trace();
  }
  out.direct /= static_cast<double>(classes);
  out.trace_form /= static_cast<double>(classes);
  const double scale = std::max(std::abs(out.direct), std::abs(out.trace_form));
  require(std::abs(out.direct - out.trace_form) <= kTraceIdentityTolerance * scale + 1e-300, ErrorKind::kValidation,
          "v_intra: direct and trace forms disagree (" + format_real(out.direct) + " vs " +
              format_real(out.trace_form) + ")");
  return out;
}

double mean_id_distance(const FeatureMatrix& features) {
  const LabelVector& labels = features.labels();
  const auto sizes = class_sizes(labels);
  const Matrix mu = class_means(features, sizes);
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) total += (features.row(i) - mu.row(labels[i])).norm();
  return total / static_cast<double>(features.rows());
}

double expected_mahalanobis(const ClassStats& stats, std::size_t c) {
  require(stats.has_per_class_cov(), ErrorKind::kParameter, "expected mahalanobis: per-class covariance not retained");
  require(c < stats.class_count(), ErrorKind::kParameter, "expected mahalanobis: class out of range");
  const Eigen::MatrixXd& cov = stats.per_class_cov()[c];
  double trace = 0.0;
  for (Eigen::Index j = 0; j < cov.cols(); ++j) {
    const Eigen::VectorXd col = stats.factor().solve(cov.col(j));
    trace += col(j);
  }
  return trace;
}

EvalReport evaluate(const ScoreSet& id_scores, const ScoreSet& ood_scores, std::size_t bins, double tpr_target) {
  EvalReport report;
  report.auroc = auroc(id_scores, ood_scores);
  const auto threshold = fpr_at_tpr(id_scores, ood_scores, tpr_target);
  report.fpr95 = threshold.fpr;
  report.tau95 = threshold.tau;
  report.tpr_target = tpr_target;
  const auto ov = score_overlap(id_scores, ood_scores, bins);
  report.overlap = ov.overlap;
  report.bins = ov.bins;
  report.bin_min = ov.range_min;
  report.bin_max = ov.range_max;
  report.n_id = id_scores.size();
  report.n_ood = ood_scores.size();
  return report;
}

GeometryReport diagnose_geometry(const FeatureMatrix& features, const ClassStats& stats) {
  GeometryReport g;
  g.v_intra = v_intra(features).direct;
  g.mean_id_dist = mean_id_distance(features);
  for (std::size_t c = 0; c < stats.class_count(); ++c) g.trace_terms.push_back(expected_mahalanobis(stats, c));
  return g;
}

}  // namespace eihf
