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
#include <optional>
#include <vector>

#include "eihf/ood_scoring.hpp"
#include "eihf/tensor.hpp"

namespace eihf {

/// P(id > ood) + 0.5 P(id = ood), by sorting the pooled scores.
double auroc(const ScoreSet& id_scores, const ScoreSet& ood_scores);

struct ThresholdResult {
  double fpr = 0.0;
  double tau = 0.0;
  double tpr = 0.0;  // achieved fraction of ID scores >= tau
};

/// tau is the largest ID score value with #(ID >= tau) / n >= tpr_target;
/// fpr = #(OOD >= tau) / m.
ThresholdResult fpr_at_tpr(const ScoreSet& id_scores, const ScoreSet& ood_scores, double tpr_target = 0.95);

struct OverlapResult {
  double overlap = 0.0;
  std::size_t bins = 0;
  double range_min = 0.0;
  double range_max = 0.0;
};

/// Sum over shared bins of min(p_in, p_out); bins span the pooled [min, max].
OverlapResult score_overlap(const ScoreSet& id_scores, const ScoreSet& ood_scores, std::size_t bins = 100);

struct IntraVariance {
  double direct = 0.0;       // (1/C) sum_c (1/N_c) sum ||z - mu_c||^2
  double trace_form = 0.0;   // (1/C) sum_c tr(Sigma_c)
};

/// Average within-class variance by both routes; throws if they disagree
/// beyond 1e-8 relative.
IntraVariance v_intra(const FeatureMatrix& features);

/// Mean over samples of the unsquared distance to the own class mean.
double mean_id_distance(const FeatureMatrix& features);

/// tr(sigma_hat^{-1} Sigma_c), one solve per column of Sigma_c.
double expected_mahalanobis(const ClassStats& stats, std::size_t c);

struct GeometryReport {
  double v_intra = 0.0;
  double mean_id_dist = 0.0;
  std::vector<double> trace_terms;  // per class
};

struct EvalReport {
  double auroc = 0.0;
  double fpr95 = 0.0;
  double tau95 = 0.0;
  double tpr_target = 0.95;
  double overlap = 0.0;
  std::size_t bins = 0;
  double bin_min = 0.0;
  double bin_max = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::optional<GeometryReport> geometry;
};

EvalReport evaluate(const ScoreSet& id_scores, const ScoreSet& ood_scores, std::size_t bins = 100,
                    double tpr_target = 0.95);

GeometryReport diagnose_geometry(const FeatureMatrix& features, const ClassStats& stats);

}  // namespace eihf
