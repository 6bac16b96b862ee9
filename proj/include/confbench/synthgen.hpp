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

/// @file synthgen.hpp
/// @brief Procedural whole-slide dataset with a nuclear-size class signal.
///
/// Tiles are a flat background with non-overlapping axis-aligned elliptical
/// "nuclei". Positive slides contain a contiguous run of lesion tiles whose
/// nuclei are larger and more variable, so the per-slide spread of per-tile
/// mean nuclear area separates the classes.
///
/// The background shade of every tile is shifted so that the tile's mean
/// intensity equals a target drawn from one class-independent distribution.
/// Nuclear coverage therefore does not leak into brightness, and a model has
/// to pick up the label from structure.

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "confbench/core.hpp"
#include "confbench/rng.hpp"
#include "json.hpp"

namespace confbench::synthgen {

class PlacementFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct AreaDistribution {
  double mean = 0.0;
  double stddev = 0.0;
};

struct GenConfig {
  int num_wsis = 100;
  double pos_fraction = 0.6;
  int tile_size = kDeskTileSize;
  std::pair<int, int> tiles_per_wsi_range = {64, 256};
  int grid_cols = 16;
  std::pair<int, int> nuclei_per_tile_range = {2, 6};
  AreaDistribution neg_nucleus_area = {28.0, 6.0};
  AreaDistribution pos_lesion_nucleus_area = {32.0, 10.0};
  double lesion_tile_fraction = 0.3;
  Rgb background_color = {214, 180, 204};
  Rgb nucleus_color = {84, 52, 134};
  double noise_sigma = 4.0;
  /// Per-tile target mean intensity (gray = mean of R, G, B).
  double tile_gray_mean = 180.0;
  double tile_gray_jitter = 4.0;
  double test_fraction = 0.3;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Throws ConfigError naming the offending field.
void validate(const GenConfig& cfg);

/// Largest nucleus area the sampler will produce for a given tile size.
double max_nucleus_area(int tile_size);

void to_json(nlohmann::json& j, const GenConfig& cfg);
/// Reads the keys present in `j`, keeping the current value for the rest.
void from_json(const nlohmann::json& j, GenConfig& cfg);

struct RenderedTile {
  TileImage image;
  /// Rasterized pixel count of each nucleus, in input order.
  std::vector<double> nucleus_areas;
};

/// Renders one tile holding exactly `areas.size()` non-overlapping nuclei.
/// Throws std::invalid_argument when an area's equivalent-circle diameter is
/// not smaller than the tile, PlacementFailure when the retry budget runs out.
RenderedTile generate_tile(std::span<const double> areas, const GenConfig& cfg, RngStream& rng);

std::vector<Wsi> generate_dataset(const GenConfig& cfg);

}  // namespace confbench::synthgen
