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

/// @file experiment.hpp
/// @brief Confounder sweeps: one trained model per modification probability.
///
/// For every p of a sweep the training and validation WSIs are modified by
/// a plan sampled at p, a model is trained on their embeddings, and each
/// test WSI is scored twice: as generated and after a second, independently
/// seeded plan at the same p. Test AUC uses the modified copies; CR and NCC
/// come from the paired predictions.
///
/// Seeds derive from the sweep root seed through fixed tags. The plan seeds
/// do not depend on p, so plans across the grid are nested, and the model
/// seed is shared by every condition.
///
/// Results layout under an output root:
///
///     runs/<spec-hash>/summary.csv
///     runs/<spec-hash>/sweep.png
///     runs/<spec-hash>/<design>-<modifier>-p<percent>/
///         record.json  model.ckpt  metrics.csv  train_log.csv
///         heatmaps/wsi-<id>-orig.png  heatmaps/wsi-<id>-mod.png

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confbench/abmil.hpp"
#include "confbench/core.hpp"
#include "confbench/metrics.hpp"
#include "confbench/modify.hpp"
#include "json.hpp"

namespace confbench::experiment {

class GridMismatch : public Error {
 public:
  using Error::Error;
};

struct SweepSpec {
  modify::Design design = modify::Design::kTileBased;
  modify::Modifier modifier = modify::Modifier::kCleverHans;
  std::vector<double> p_grid = {0.0, 0.2, 0.5, 0.8, 1.0};
  abmil::AbmilConfig model_cfg;
  modify::ModifierParams modifier_params;
  std::uint64_t root_seed = 0;
};

/// Throws std::invalid_argument for an unsorted or out-of-range grid.
void validate(const SweepSpec& spec);
void to_json(nlohmann::json& j, const SweepSpec& spec);
void from_json(const nlohmann::json& j, SweepSpec& spec);

/// Content hash of the spec and the dataset digest, 16 hex digits.
std::string spec_hash(const SweepSpec& spec, std::uint64_t dataset_digest);

struct ConditionSeeds {
  std::uint64_t train_plan = 0;
  std::uint64_t test_plan = 0;
  std::uint64_t model = 0;
};
ConditionSeeds condition_seeds(const SweepSpec& spec);

/// "<design>-<modifier>-p<percent>", e.g. "tile-clever-hans-p020".
std::string condition_name(const SweepSpec& spec, double p);

struct RunRecord {
  std::string spec_hash;
  modify::Design design = modify::Design::kTileBased;
  modify::Modifier modifier = modify::Modifier::kNone;
  double p = 0.0;
  ConditionSeeds seeds;
  std::string checkpoint;
  bool ok = false;
  std::string error;
  double auc = 0.0;
  int best_epoch = -1;
  metrics::InterpretabilityReport interpretability;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& j);

/// Unmodified dataset plus the embeddings of every WSI, computed once per
/// sweep and shared read-only by all conditions.
struct PreparedDataset {
  std::vector<Wsi> wsis;
  std::vector<abmil::EmbeddedWsi> embedded;
  std::uint64_t digest = 0;
};
PreparedDataset prepare(std::vector<Wsi> wsis, int jobs = 1);

struct ConditionOutput {
  RunRecord record;
  abmil::AbmilModel model;
  std::vector<abmil::EpochLog> log;
  std::vector<metrics::PairedEval> evals;
};

/// Runs one condition. Errors propagate; run_sweep turns them into failed
/// records.
ConditionOutput run_condition(const PreparedDataset& data, const SweepSpec& spec, double p);

struct SweepOptions {
  /// Output root; empty keeps everything in memory.
  std::filesystem::path out_root;
  int jobs = 1;
  bool heatmaps = true;
};

/// One record per grid point, in grid order. Failed conditions are
/// recorded with ok = false; everything else is still persisted.
std::vector<RunRecord> run_sweep(const PreparedDataset& data, const SweepSpec& spec,
                                 const SweepOptions& options = {});

/// Columns: design, modifier, p, auc, cr, ncc, sbar_size.
std::string summary_csv(std::span<const RunRecord> records);

// ---------------------------------------------------------------------------
// Images

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb pixel(int x, int y) const;
  void set(int x, int y, Rgb c);
  friend bool operator==(const Image&, const Image&) = default;
};

Image blank_image(int width, int height, Rgb fill);
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

inline constexpr Rgb kEmptyCell = {0, 0, 0};
inline constexpr Rgb kOutline = {255, 0, 0};
inline constexpr std::uint8_t kUniformGray = 128;

/// One cell_px square per grid cell. Tiles are gray with intensity
/// 255 * a_j / max a; a map without any variation is drawn mid-gray. Cells
/// without a tile stay kEmptyCell; `modified` (optional, per tile) draws a
/// one-pixel kOutline border. Throws GridMismatch when a position falls
/// outside the grid, two tiles share a cell, or lengths disagree.
Image render_attention_heatmap(const abmil::AttentionMap& map, int grid_rows, int grid_cols,
                               int cell_px = 8, const std::vector<bool>* modified = nullptr);

/// Three stacked panels (AUC, CR, NCC against p) with p on [0,1] and the
/// value axis on [-1,1] for NCC, [0,1] otherwise.
Image render_sweep_plot(std::span<const RunRecord> records);

/// Reloads every record.json below a spec directory, sorted by p.
std::vector<RunRecord> load_records(const std::filesystem::path& spec_dir);

}  // namespace confbench::experiment
