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

#include "confbench/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "confbench/parallel.hpp"

namespace confbench::synthgen {

namespace {

constexpr int kPlacementAttempts = 400;
constexpr int kLayoutAttempts = 50;
constexpr int kAreaResamples = 64;
// Smallest area whose ellipse (aspect >= 0.6) always covers a pixel center.
constexpr double kMinNucleusArea = 4.0;
constexpr double kMinAspect = 0.6;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

double gray(const Rgb& c) { return (c.r + c.g + c.b) / 3.0; }

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double sample_area(const AreaDistribution& dist, double max_area, RngStream& rng) {
  for (int i = 0; i < kAreaResamples; ++i) {
    const double a = rng.normal(dist.mean, dist.stddev);
    if (a >= kMinNucleusArea && a <= max_area) return a;
  }
  return std::clamp(dist.mean, kMinNucleusArea, max_area);
}

}  // namespace

double max_nucleus_area(int tile_size) {
  return static_cast<double>(tile_size) * tile_size / 10.0;
}

void validate(const GenConfig& cfg) {
  require(cfg.num_wsis >= 1, "num_wsis must be >= 1");
  require(cfg.pos_fraction >= 0.0 && cfg.pos_fraction <= 1.0, "pos_fraction must be in [0,1]");
  require(cfg.tile_size >= kMinTileSize && cfg.tile_size <= 4096,
          "tile_size must be in [8, 4096]");
  require(cfg.tiles_per_wsi_range.first >= 1 &&
              cfg.tiles_per_wsi_range.first <= cfg.tiles_per_wsi_range.second,
          "tiles_per_wsi_range must satisfy 1 <= min <= max");
  require(cfg.grid_cols >= 1, "grid_cols must be >= 1");
  require(cfg.nuclei_per_tile_range.first >= 0 &&
              cfg.nuclei_per_tile_range.first <= cfg.nuclei_per_tile_range.second,
          "nuclei_per_tile_range must satisfy 0 <= min <= max");
  require(cfg.nuclei_per_tile_range.second >= 1, "nuclei_per_tile_range max must be >= 1");
  require(cfg.neg_nucleus_area.mean > 0 && cfg.neg_nucleus_area.stddev >= 0,
          "neg_nucleus_area needs mean > 0 and std >= 0");
  require(cfg.pos_lesion_nucleus_area.mean > 0,
          "pos_lesion_nucleus_area mean must be > 0");
  require(cfg.pos_lesion_nucleus_area.stddev > cfg.neg_nucleus_area.stddev,
          "pos_lesion_nucleus_area std must exceed neg_nucleus_area std");
  require(cfg.lesion_tile_fraction > 0.0 && cfg.lesion_tile_fraction <= 1.0,
          "lesion_tile_fraction must be in (0,1]");
  require(cfg.noise_sigma >= 0.0, "noise_sigma must be >= 0");
  require(cfg.tile_gray_jitter >= 0.0, "tile_gray_jitter must be >= 0");
  require(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0, "test_fraction must be in [0,1)");
  require(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0, "val_fraction must be in [0,1)");
  require(cfg.jobs >= 1, "jobs must be >= 1");
}

void to_json(nlohmann::json& j, const GenConfig& cfg) {
  auto rgb = [](const Rgb& c) { return nlohmann::json::array({c.r, c.g, c.b}); };
  j = nlohmann::json{
      {"num_wsis", cfg.num_wsis},
      {"pos_fraction", cfg.pos_fraction},
      {"tile_size", cfg.tile_size},
      {"tiles_per_wsi_range", {cfg.tiles_per_wsi_range.first, cfg.tiles_per_wsi_range.second}},
      {"grid_cols", cfg.grid_cols},
      {"nuclei_per_tile_range",
       {cfg.nuclei_per_tile_range.first, cfg.nuclei_per_tile_range.second}},
      {"neg_nucleus_area", {cfg.neg_nucleus_area.mean, cfg.neg_nucleus_area.stddev}},
      {"pos_lesion_nucleus_area",
       {cfg.pos_lesion_nucleus_area.mean, cfg.pos_lesion_nucleus_area.stddev}},
      {"lesion_tile_fraction", cfg.lesion_tile_fraction},
      {"background_color", rgb(cfg.background_color)},
      {"nucleus_color", rgb(cfg.nucleus_color)},
      {"noise_sigma", cfg.noise_sigma},
      {"tile_gray_mean", cfg.tile_gray_mean},
      {"tile_gray_jitter", cfg.tile_gray_jitter},
      {"test_fraction", cfg.test_fraction},
      {"val_fraction", cfg.val_fraction},
      {"seed", cfg.seed},
  };
}

void from_json(const nlohmann::json& j, GenConfig& cfg) {
  auto pair = [&](const char* key, std::pair<int, int>& out) {
    if (j.contains(key)) out = {j.at(key).at(0).get<int>(), j.at(key).at(1).get<int>()};
  };
  auto dist = [&](const char* key, AreaDistribution& out) {
    if (j.contains(key)) out = {j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
  };
  auto rgb = [&](const char* key, Rgb& out) {
    if (j.contains(key)) {
      out = {j.at(key).at(0).get<std::uint8_t>(), j.at(key).at(1).get<std::uint8_t>(),
             j.at(key).at(2).get<std::uint8_t>()};
    }
  };
  cfg.num_wsis = j.value("num_wsis", cfg.num_wsis);
  cfg.pos_fraction = j.value("pos_fraction", cfg.pos_fraction);
  cfg.tile_size = j.value("tile_size", cfg.tile_size);
  pair("tiles_per_wsi_range", cfg.tiles_per_wsi_range);
  cfg.grid_cols = j.value("grid_cols", cfg.grid_cols);
  pair("nuclei_per_tile_range", cfg.nuclei_per_tile_range);
  dist("neg_nucleus_area", cfg.neg_nucleus_area);
  dist("pos_lesion_nucleus_area", cfg.pos_lesion_nucleus_area);
  cfg.lesion_tile_fraction = j.value("lesion_tile_fraction", cfg.lesion_tile_fraction);
  rgb("background_color", cfg.background_color);
  rgb("nucleus_color", cfg.nucleus_color);
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.tile_gray_mean = j.value("tile_gray_mean", cfg.tile_gray_mean);
  cfg.tile_gray_jitter = j.value("tile_gray_jitter", cfg.tile_gray_jitter);
  cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  cfg.seed = j.value("seed", cfg.seed);
}

RenderedTile generate_tile(std::span<const double> areas, const GenConfig& cfg, RngStream& rng) {
  const int n = cfg.tile_size;
  for (double area : areas) {
    if (!(area > 0.0) || 2.0 * std::sqrt(area / std::numbers::pi) >= n) {
      throw std::invalid_argument("nucleus area " + std::to_string(area) +
                                  " does not fit a " + std::to_string(n) + "px tile");
    }
  }

  std::vector<std::uint8_t> nucleus(static_cast<std::size_t>(n) * n, 0);
  // Nucleus pixels dilated by one, so accepted blobs never touch.
  std::vector<std::uint8_t> blocked(nucleus.size(), 0);
  std::vector<double> realized(areas.size(), 0.0);
  std::vector<int> candidate;

  // Large nuclei first: they are the hardest to fit.
  std::vector<std::size_t> order(areas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });

  auto place = [&](double area) {
    double aspect = rng.uniform(kMinAspect, 1.0);
    const bool wide = rng.bernoulli(0.5);
    double semi_major = std::sqrt(area / (std::numbers::pi * aspect));
    if (2.0 * semi_major >= n) {
      aspect = 1.0;
      semi_major = std::sqrt(area / std::numbers::pi);
    }
    const double semi_minor = aspect * semi_major;
    const double ax = wide ? semi_major : semi_minor;
    const double ay = wide ? semi_minor : semi_major;

    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const double cx = rng.uniform(ax, n - ax);
      const double cy = rng.uniform(ay, n - ay);
      candidate.clear();
      bool collides = false;
      const int r0 = std::max(0, static_cast<int>(std::floor(cy - ay)));
      const int r1 = std::min(n - 1, static_cast<int>(std::ceil(cy + ay)));
      const int c0 = std::max(0, static_cast<int>(std::floor(cx - ax)));
      const int c1 = std::min(n - 1, static_cast<int>(std::ceil(cx + ax)));
      for (int r = r0; r <= r1 && !collides; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double dx = (c + 0.5 - cx) / ax;
          const double dy = (r + 0.5 - cy) / ay;
          if (dx * dx + dy * dy > 1.0) continue;
          const int k = r * n + c;
          if (blocked[k]) {
            collides = true;
            break;
          }
          candidate.push_back(k);
        }
      }
      if (collides || candidate.empty()) continue;
      for (int k : candidate) {
        nucleus[k] = 1;
        const int r = k / n;
        const int c = k % n;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr >= 0 && rr < n && cc >= 0 && cc < n) blocked[rr * n + cc] = 1;
          }
        }
      }
      return static_cast<double>(candidate.size());
    }
    return 0.0;
  };

  // A failed nucleus restarts the whole layout; the budget is bounded.
  bool complete = areas.empty();
  for (int layout = 0; layout < kLayoutAttempts && !complete; ++layout) {
    std::fill(nucleus.begin(), nucleus.end(), 0);
    std::fill(blocked.begin(), blocked.end(), 0);
    complete = true;
    for (std::size_t idx : order) {
      realized[idx] = place(areas[idx]);
      if (realized[idx] == 0.0) {
        complete = false;
        break;
      }
    }
  }
  if (!complete) {
    throw PlacementFailure("could not place " + std::to_string(areas.size()) +
                           " nuclei after " + std::to_string(kLayoutAttempts) + " layouts of " +
                           std::to_string(kPlacementAttempts) + " attempts per nucleus");
  }

  const double covered = std::accumulate(realized.begin(), realized.end(), 0.0);
  const double coverage = covered / (static_cast<double>(n) * n);
  const double target = cfg.tile_gray_jitter > 0.0
                            ? rng.normal(cfg.tile_gray_mean, cfg.tile_gray_jitter)
                            : cfg.tile_gray_mean;
  const double nuc_gray = gray(cfg.nucleus_color);
  const double shift =
      coverage < 1.0 ? (target - coverage * nuc_gray) / (1.0 - coverage) -
                           gray(cfg.background_color)
                     : 0.0;
  const double bg[3] = {cfg.background_color.r + shift, cfg.background_color.g + shift,
                        cfg.background_color.b + shift};
  const double fg[3] = {static_cast<double>(cfg.nucleus_color.r),
                        static_cast<double>(cfg.nucleus_color.g),
                        static_cast<double>(cfg.nucleus_color.b)};

  TileImage image(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double* base = nucleus[r * n + c] ? fg : bg;
      for (int ch = 0; ch < 3; ++ch) {
        const double noise = cfg.noise_sigma > 0.0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0;
        image.at(r, c, ch) = to_byte(base[ch] + noise);
      }
    }
  }
  return {std::move(image), std::move(realized)};
}

namespace {

Wsi generate_wsi(const GenConfig& cfg, WsiId id, int label, Split split) {
  RngStream rng = derive_stream(cfg.seed, "synthgen/wsi/" + std::to_string(id));
  Wsi wsi;
  wsi.id = id;
  wsi.label = label;
  wsi.split = split;
  wsi.grid_cols = cfg.grid_cols;

  const int tiles = static_cast<int>(
      rng.uniform_int(cfg.tiles_per_wsi_range.first, cfg.tiles_per_wsi_range.second));
  const int lesion =
      label == 1 ? static_cast<int>(std::lround(cfg.lesion_tile_fraction * tiles)) : 0;
  const int lesion_start = static_cast<int>(rng.uniform_int(0, tiles - lesion));
  const double max_area = max_nucleus_area(cfg.tile_size);

  wsi.tiles.reserve(tiles);
  std::vector<double> areas;
  for (int j = 0; j < tiles; ++j) {
    const bool in_lesion = j >= lesion_start && j < lesion_start + lesion;
    const AreaDistribution& dist = in_lesion ? cfg.pos_lesion_nucleus_area : cfg.neg_nucleus_area;
    const int count = static_cast<int>(
        rng.uniform_int(cfg.nuclei_per_tile_range.first, cfg.nuclei_per_tile_range.second));
    areas.clear();
    for (int k = 0; k < count; ++k) areas.push_back(sample_area(dist, max_area, rng));
    RenderedTile rendered = generate_tile(areas, cfg, rng);

    Tile tile;
    tile.image = std::move(rendered.image);
    tile.meta.wsi_id = id;
    tile.meta.index_in_wsi = j;
    tile.meta.grid_pos = grid_position(j, cfg.grid_cols);
    tile.meta.nucleus_areas = std::move(rendered.nucleus_areas);
    wsi.tiles.push_back(std::move(tile));
  }
  return wsi;
}

}  // namespace

std::vector<Wsi> generate_dataset(const GenConfig& cfg) {
  validate(cfg);
  const int total = cfg.num_wsis;
  const int positives = static_cast<int>(std::lround(cfg.pos_fraction * total));

  std::vector<int> labels(total, 0);
  std::fill(labels.begin(), labels.begin() + positives, 1);
  RngStream label_rng = derive_stream(cfg.seed, "synthgen/labels");
  label_rng.shuffle(std::span<int>(labels));

  // Stratified split: test first, then val as a fraction of what remains.
  std::vector<Split> splits(total, Split::kTrain);
  RngStream split_rng = derive_stream(cfg.seed, "synthgen/splits");
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> members;
    for (int i = 0; i < total; ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    split_rng.shuffle(std::span<int>(members));
    const auto count = static_cast<double>(members.size());
    const auto n_test = static_cast<std::size_t>(std::lround(cfg.test_fraction * count));
    const auto n_val = static_cast<std::size_t>(
        std::lround(cfg.val_fraction * static_cast<double>(members.size() - n_test)));
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < n_test) {
        splits[members[k]] = Split::kTest;
      } else if (k < n_test + n_val) {
        splits[members[k]] = Split::kVal;
      }
    }
  }

  std::vector<Wsi> wsis(total);
  parallel_for(static_cast<std::size_t>(total), cfg.jobs, [&](std::size_t i) {
    wsis[i] = generate_wsi(cfg, static_cast<WsiId>(i), labels[i], splits[i]);
  });
  return wsis;
}

}  // namespace confbench::synthgen
