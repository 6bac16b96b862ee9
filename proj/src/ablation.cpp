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

#include "confbench/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "confbench/features.hpp"
#include "confbench/metrics.hpp"
#include "confbench/parallel.hpp"
#include "confbench/rng.hpp"

namespace confbench::ablation {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double population_std(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::vector<Wsi> training_split(std::span<const Wsi> wsis) {
  std::vector<Wsi> out;
  for (const Wsi& w : wsis) {
    if (w.split == Split::kTrain) out.push_back(w);
  }
  return out;
}

}  // namespace

void validate(const AblationConfig& cfg) {
  if (cfg.threshold_grid.empty() && cfg.grid_points < 2) {
    throw std::invalid_argument("grid_points must be >= 2");
  }
  if (cfg.removal_ratios.empty()) throw std::invalid_argument("removal_ratios must not be empty");
  for (std::size_t i = 0; i < cfg.removal_ratios.size(); ++i) {
    const double r = cfg.removal_ratios[i];
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("removal_ratios must lie in [0,1]");
    if (i > 0 && r < cfg.removal_ratios[i - 1]) {
      throw std::invalid_argument("removal_ratios must be sorted ascending");
    }
  }
  if (cfg.baseline_replicates < 1) throw std::invalid_argument("baseline_replicates must be >= 1");
}

void to_json(nlohmann::json& j, const AblationConfig& cfg) {
  j = nlohmann::json{{"threshold_grid", cfg.threshold_grid},
                     {"grid_points", cfg.grid_points},
                     {"removal_ratios", cfg.removal_ratios},
                     {"baseline_replicates", cfg.baseline_replicates},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, AblationConfig& cfg) {
  if (!j.is_object()) throw std::invalid_argument("ablation config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument(std::string("ablation config field '") + key +
                                  "' has the wrong type");
    }
  };
  get("threshold_grid", cfg.threshold_grid);
  get("grid_points", cfg.grid_points);
  get("removal_ratios", cfg.removal_ratios);
  get("baseline_replicates", cfg.baseline_replicates);
  get("seed", cfg.seed);
}

std::vector<std::optional<double>> tile_mean_areas(const Wsi& wsi) {
  std::vector<std::optional<double>> out;
  out.reserve(wsi.tiles.size());
  for (const Tile& t : wsi.tiles) out.push_back(features::mean_nucleus_area(t));
  return out;
}

std::vector<double> quantile_grid(std::span<const Wsi> wsis, int points) {
  if (points < 2) throw std::invalid_argument("a quantile grid needs at least two points");
  std::vector<double> areas;
  for (const Wsi& w : wsis) {
    if (w.label != 1) continue;
    for (const auto& a : tile_mean_areas(w)) {
      if (a) areas.push_back(*a);
    }
  }
  if (areas.empty()) throw std::invalid_argument("no positive tiles with nuclei");
  std::sort(areas.begin(), areas.end());
  std::vector<double> grid;
  grid.reserve(points);
  const double last = static_cast<double>(areas.size() - 1);
  for (int i = 0; i < points; ++i) {
    const double pos = last * i / (points - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, areas.size() - 1);
    grid.push_back(areas[lo] + (pos - static_cast<double>(lo)) * (areas[hi] - areas[lo]));
  }
  return grid;
}

ThresholdCurve select_threshold(std::span<const Wsi> wsis, std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("threshold grid is empty");
  std::vector<std::vector<std::optional<double>>> areas;
  bool has_pos = false;
  bool has_neg = false;
  for (const Wsi& w : wsis) {
    areas.push_back(tile_mean_areas(w));
    (w.label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw metrics::DegenerateSamples("threshold search needs both classes");
  }
  // Negative SDANA does not depend on the threshold.
  std::vector<double> neg;
  for (std::size_t i = 0; i < wsis.size(); ++i) {
    if (wsis[i].label != 0) continue;
    std::vector<double> v;
    for (const auto& a : areas[i]) {
      if (a) v.push_back(*a);
    }
    if (v.size() >= 2) neg.push_back(population_std(v));
  }

  ThresholdCurve curve;
  curve.thresholds.assign(grid.begin(), grid.end());
  double best = -1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> pos;
    for (std::size_t i = 0; i < wsis.size(); ++i) {
      if (wsis[i].label != 1) continue;
      std::vector<double> v;
      for (const auto& a : areas[i]) {
        if (a && *a <= grid[g]) v.push_back(*a);
      }
      if (v.size() >= 2) pos.push_back(population_std(v));
    }
    double p = kNaN;
    if (pos.size() >= 2 && neg.size() >= 2) {
      try {
        p = metrics::welch_t_test(pos, neg).p_value;
      } catch (const metrics::DegenerateSamples&) {
      }
    }
    curve.p_values.push_back(p);
    const bool better = p > best || (p == best && grid[g] < curve.thresholds[curve.best_index]);
    if (!std::isnan(p) && better) {
      best = p;
      curve.best_index = g;
    }
  }
  if (best < 0.0) throw metrics::DegenerateSamples("no threshold produced a valid t-test");
  curve.best_threshold = curve.thresholds[curve.best_index];
  return curve;
}

KeepLists feature_based_keep(std::span<const Wsi> wsis, double threshold, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("ratio must lie in [0,1]");
  KeepLists keep(wsis.size());
  for (std::size_t i = 0; i < wsis.size(); ++i) {
    const Wsi& w = wsis[i];
    const int t = w.tile_count();
    std::vector<bool> drop(t, false);
    if (w.label == 1) {
      const auto areas = tile_mean_areas(w);
      std::vector<int> above;
      for (int j = 0; j < t; ++j) {
        if (areas[j] && *areas[j] > threshold) above.push_back(j);
      }
      std::stable_sort(above.begin(), above.end(),
                       [&](int a, int b) { return *areas[a] > *areas[b]; });
      auto count = static_cast<int>(
          std::ceil(ratio * static_cast<double>(above.size()) - 1e-9));
      count = std::clamp(count, 0, std::min(static_cast<int>(above.size()), t - 1));
      for (int k = 0; k < count; ++k) drop[above[k]] = true;
    }
    for (int j = 0; j < t; ++j) {
      if (!drop[j]) keep[i].push_back(j);
    }
  }
  return keep;
}

std::vector<int> removed_counts(std::span<const Wsi> wsis, const KeepLists& keep) {
  std::vector<int> out;
  out.reserve(wsis.size());
  for (std::size_t i = 0; i < wsis.size(); ++i) {
    out.push_back(wsis[i].tile_count() - static_cast<int>(keep.at(i).size()));
  }
  return out;
}

KeepLists random_keep(std::span<const Wsi> wsis, std::span<const int> counts,
                      std::uint64_t replicate_seed) {
  if (counts.size() != wsis.size()) {
    throw std::invalid_argument("one removal count per WSI is required");
  }
  KeepLists keep(wsis.size());
  for (std::size_t i = 0; i < wsis.size(); ++i) {
    const Wsi& w = wsis[i];
    const int t = w.tile_count();
    const int c = counts[i];
    if (c < 0) throw std::invalid_argument("removal counts must be >= 0");
    if (w.label != 1 && c != 0) {
      throw std::invalid_argument("negative WSI " + std::to_string(w.id) + " cannot lose tiles");
    }
    if (c > t - 1) {
      throw CountTooLarge("wsi " + std::to_string(w.id) + ": cannot remove " +
                          std::to_string(c) + " of " + std::to_string(t) + " tiles");
    }
    std::vector<int> idx(t);
    std::iota(idx.begin(), idx.end(), 0);
    if (c > 0) {
      RngStream rng =
          derive_stream(replicate_seed, "ablation/random/wsi/" + std::to_string(w.id));
      for (int k = 0; k < c; ++k) {
        std::swap(idx[k], idx[k + static_cast<int>(rng.below(static_cast<std::uint64_t>(t - k)))]);
      }
    }
    keep[i].assign(idx.begin() + c, idx.end());
    std::sort(keep[i].begin(), keep[i].end());
  }
  return keep;
}

std::vector<Wsi> apply_keep(std::span<const Wsi> wsis, const KeepLists& keep) {
  std::vector<Wsi> out;
  out.reserve(wsis.size());
  for (std::size_t i = 0; i < wsis.size(); ++i) {
    Wsi w;
    w.id = wsis[i].id;
    w.label = wsis[i].label;
    w.split = wsis[i].split;
    w.modified = wsis[i].modified;
    w.grid_cols = wsis[i].grid_cols;
    for (int j : keep.at(i)) w.tiles.push_back(wsis[i].tiles.at(j));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<abmil::EmbeddedWsi> apply_keep(std::span<const abmil::EmbeddedWsi> wsis,
                                           const KeepLists& keep) {
  std::vector<abmil::EmbeddedWsi> out;
  out.reserve(wsis.size());
  for (std::size_t i = 0; i < wsis.size(); ++i) {
    const abmil::EmbeddedWsi& src = wsis[i];
    abmil::EmbeddedWsi w;
    w.id = src.id;
    w.label = src.label;
    w.split = src.split;
    w.x.resize(static_cast<Eigen::Index>(keep.at(i).size()), src.x.cols());
    for (std::size_t r = 0; r < keep[i].size(); ++r) {
      const int j = keep[i][r];
      w.x.row(static_cast<Eigen::Index>(r)) = src.x.row(j);
      w.grid_pos.push_back(src.grid_pos.at(j));
      w.modified.push_back(src.modified.at(j));
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Wsi> ablate_feature_based(std::span<const Wsi> wsis, double threshold, double ratio) {
  return apply_keep(wsis, feature_based_keep(wsis, threshold, ratio));
}

std::vector<Wsi> ablate_random_baseline(std::span<const Wsi> wsis, std::span<const int> counts,
                                        std::uint64_t replicate_seed) {
  return apply_keep(wsis, random_keep(wsis, counts, replicate_seed));
}

double sdana_p_value(std::span<const Wsi> wsis) {
  std::vector<double> pos;
  std::vector<double> neg;
  for (const Wsi& w : wsis) {
    try {
      (w.label == 1 ? pos : neg).push_back(features::sdana(w));
    } catch (const features::InsufficientTiles&) {
    }
  }
  return metrics::welch_t_test(pos, neg).p_value;
}

double train_and_score(std::span<const abmil::EmbeddedWsi> dataset,
                       const abmil::AbmilConfig& model_cfg) {
  const abmil::TrainResult trained = abmil::train(dataset, model_cfg);
  std::vector<double> pos;
  std::vector<double> neg;
  for (const abmil::EmbeddedWsi& w : dataset) {
    if (w.split != Split::kTest) continue;
    (w.label == 1 ? pos : neg).push_back(abmil::predict_full(trained.model, w).probability);
  }
  return metrics::auc(pos, neg);
}

AblationReport run_ablation_study(std::span<const Wsi> wsis, const AblationConfig& cfg,
                                  const abmil::AbmilConfig& model_cfg, int jobs) {
  validate(cfg);
  const std::vector<Wsi> train = training_split(wsis);
  const std::vector<double> grid =
      cfg.threshold_grid.empty() ? quantile_grid(train, cfg.grid_points) : cfg.threshold_grid;

  AblationReport report;
  report.curve = select_threshold(train, grid);
  const std::vector<abmil::EmbeddedWsi> embedded = abmil::embed_all(wsis, jobs);

  const std::size_t replicates = static_cast<std::size_t>(cfg.baseline_replicates);
  struct Job {
    std::size_t ratio;
    int replicate;  // -1 for the feature-based dataset
  };
  std::vector<Job> work;
  std::vector<KeepLists> feature_keep;
  for (std::size_t r = 0; r < cfg.removal_ratios.size(); ++r) {
    feature_keep.push_back(
        feature_based_keep(wsis, report.curve.best_threshold, cfg.removal_ratios[r]));
    RatioResult row;
    row.ratio = cfg.removal_ratios[r];
    const std::vector<int> counts = removed_counts(wsis, feature_keep.back());
    row.tiles_removed = std::accumulate(counts.begin(), counts.end(), 0);
    row.sdana_p_value = sdana_p_value(training_split(apply_keep(wsis, feature_keep.back())));
    row.auc_baseline.assign(replicates, 0.0);
    report.ratios.push_back(std::move(row));
    work.push_back({r, -1});
    for (std::size_t k = 0; k < replicates; ++k) work.push_back({r, static_cast<int>(k)});
  }

  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const Job& job = work[i];
    KeepLists keep = feature_keep[job.ratio];
    if (job.replicate >= 0) {
      const std::vector<int> counts = removed_counts(wsis, keep);
      keep = random_keep(wsis, counts,
                         derive_seed(cfg.seed, "ablation/replicate/" + std::to_string(job.replicate)));
    }
    const double auc = train_and_score(apply_keep(std::span(embedded), keep), model_cfg);
    RatioResult& row = report.ratios[job.ratio];
    if (job.replicate < 0) {
      row.auc_feature = auc;
    } else {
      row.auc_baseline[static_cast<std::size_t>(job.replicate)] = auc;
    }
  });
  for (RatioResult& row : report.ratios) {
    row.auc_baseline_mean = std::accumulate(row.auc_baseline.begin(), row.auc_baseline.end(), 0.0) /
                            static_cast<double>(row.auc_baseline.size());
  }
  return report;
}

std::string curve_to_csv(const ThresholdCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,p_value\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    out << curve.thresholds[i] << ',';
    if (!std::isnan(curve.p_values[i])) out << curve.p_values[i];
    out << '\n';
  }
  return out.str();
}

std::string results_to_csv(const AblationReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "ratio,sdana_p_value,tiles_removed,auc_feature,auc_baseline_mean";
  const std::size_t reps = report.ratios.empty() ? 0 : report.ratios.front().auc_baseline.size();
  for (std::size_t k = 0; k < reps; ++k) out << ",auc_baseline_" << (k + 1);
  out << '\n';
  for (const RatioResult& row : report.ratios) {
    out << row.ratio << ',' << row.sdana_p_value << ',' << row.tiles_removed << ','
        << row.auc_feature << ',' << row.auc_baseline_mean;
    for (double a : row.auc_baseline) out << ',' << a;
    out << '\n';
  }
  return out.str();
}

}  // namespace confbench::ablation
