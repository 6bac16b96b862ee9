// Copyright 2026 The confbench Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file ablation.hpp
/// @brief Feature-based tile removal driven by per-tile mean nucleus area.
///
/// A threshold on the per-tile mean nucleus area is chosen so that removing
/// every tile above it from the positive WSIs makes the SDANA of the two
/// classes least separable (maximal Welch p-value). Removal at ratio p then
/// drops the ceil(p |A|) largest-area tiles of the above-threshold set A of
/// each positive WSI, always keeping at least one tile. The random baseline
/// drops the same number of uniformly chosen tiles.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confbench/abmil.hpp"
#include "confbench/core.hpp"
#include "json.hpp"

namespace confbench::ablation {

class CountTooLarge : public Error {
 public:
  using Error::Error;
};

struct AblationConfig {
  /// Empty: grid_points evenly spaced quantiles of the positive-class
  /// per-tile mean areas of the training split.
  std::vector<double> threshold_grid;
  int grid_points = 41;
  std::vector<double> removal_ratios = {0.0, 0.2, 0.5, 0.8, 1.0};
  int baseline_replicates = 5;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const AblationConfig& cfg);
void to_json(nlohmann::json& j, const AblationConfig& cfg);
void from_json(const nlohmann::json& j, AblationConfig& cfg);

/// Per-tile mean nucleus areas of a WSI (empty entries for tiles without
/// nuclei), in tile order.
std::vector<std::optional<double>> tile_mean_areas(const Wsi& wsi);

/// Linear-interpolation quantiles q = i / (points - 1) of the per-tile mean
/// areas of the positive WSIs in `wsis`.
std::vector<double> quantile_grid(std::span<const Wsi> wsis, int points);

struct ThresholdCurve {
  std::vector<double> thresholds;
  std::vector<double> p_values;  // NaN where fewer than two WSIs per class have an SDANA
  double best_threshold = 0.0;
  std::size_t best_index = 0;
};

/// For every threshold, removes (hypothetically) all above-threshold tiles
/// from the positive WSIs, recomputes SDANA, and Welch-tests positive
/// against negative. WSIs left with fewer than two tiles with nuclei do not
/// contribute. The best threshold maximizes the p-value, smallest on ties.
/// Throws metrics::DegenerateSamples if no threshold yields a p-value.
ThresholdCurve select_threshold(std::span<const Wsi> wsis, std::span<const double> grid);

/// Positions (in tile order) kept in each WSI.
using KeepLists = std::vector<std::vector<int>>;

/// Removal lists of the feature-based strategy.
KeepLists feature_based_keep(std::span<const Wsi> wsis, double threshold, double ratio);

/// Number of tiles each WSI loses under a keep list.
std::vector<int> removed_counts(std::span<const Wsi> wsis, const KeepLists& keep);

/// Keeps lists for removing `counts[i]` uniformly random tiles of each
/// positive WSI. Throws CountTooLarge when a count exceeds T - 1 and
/// std::invalid_argument for a non-zero count on a negative WSI.
KeepLists random_keep(std::span<const Wsi> wsis, std::span<const int> counts,
                      std::uint64_t replicate_seed);

std::vector<Wsi> apply_keep(std::span<const Wsi> wsis, const KeepLists& keep);
std::vector<abmil::EmbeddedWsi> apply_keep(std::span<const abmil::EmbeddedWsi> wsis,
                                           const KeepLists& keep);

std::vector<Wsi> ablate_feature_based(std::span<const Wsi> wsis, double threshold, double ratio);
std::vector<Wsi> ablate_random_baseline(std::span<const Wsi> wsis, std::span<const int> counts,
                                        std::uint64_t replicate_seed);

/// Welch p-value of positive vs negative SDANA over the WSIs of `wsis`
/// that have an SDANA.
double sdana_p_value(std::span<const Wsi> wsis);

struct RatioResult {
  double ratio = 0.0;
  double sdana_p_value = 0.0;
  int tiles_removed = 0;
  double auc_feature = 0.0;
  std::vector<double> auc_baseline;
  double auc_baseline_mean = 0.0;
};

/// Classification-only report: removed tiles leave no modification mask, so
/// attention metrics are not part of it.
struct AblationReport {
  ThresholdCurve curve;
  std::vector<RatioResult> ratios;
};

/// Threshold search on the training split, then for each ratio: one model
/// on the feature-ablated data and one per baseline replicate, each scored
/// by test AUC. Removal applies to the positive WSIs of every split.
AblationReport run_ablation_study(std::span<const Wsi> wsis, const AblationConfig& cfg,
                                  const abmil::AbmilConfig& model_cfg, int jobs = 1);

/// Test-split AUC of a model trained on `dataset`.
double train_and_score(std::span<const abmil::EmbeddedWsi> dataset,
                       const abmil::AbmilConfig& model_cfg);

/// Columns: threshold, p_value.
std::string curve_to_csv(const ThresholdCurve& curve);
/// Columns: ratio, sdana_p_value, tiles_removed, auc_feature,
/// auc_baseline_mean, auc_baseline_1..R.
std::string results_to_csv(const AblationReport& report);

}  // namespace confbench::ablation
