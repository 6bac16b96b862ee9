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

/// @file modify.hpp
/// @brief Confounder injection: Bernoulli modification plans and tile edits.
///
/// A ModificationPlan is the frozen realization of the two Bernoulli
/// functions, one deciding which WSIs are modified and one deciding which
/// tiles inside a modified WSI are edited. Only positive WSIs are eligible.
///
///  - Tile-based design: every positive WSI is modified; each of its tiles
///    is edited with probability p.
///  - WSI-based design: each positive WSI is modified with probability p;
///    tiles inside a modified WSI are edited with probability 0.5.
///
/// Plans draw one uniform per positive WSI and one per tile in a fixed
/// order and compare them against the probabilities. Two plans built from
/// the same seed at different p are therefore nested: every flag set at a
/// lower p is also set at a higher p.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confbench/core.hpp"
#include "confbench/rng.hpp"
#include "json.hpp"

namespace confbench::modify {

class UnknownModifier : public Error {
 public:
  using Error::Error;
};

enum class Modifier : std::uint8_t { kNone, kCleverHans, kBlur, kPenMark };
enum class Design : std::uint8_t { kTileBased, kWsiBased };

std::string_view to_string(Modifier m);
std::string_view to_string(Design d);
/// Accepts "clever-hans", "blur", "pen-mark", "none". Throws UnknownModifier.
Modifier parse_modifier(std::string_view text);
/// Accepts "tile" / "wsi" (and "tile-based" / "wsi-based").
Design parse_design(std::string_view text);

/// Tile-level flag probability inside modified WSIs for the WSI-based design.
inline constexpr double kWsiBasedTileProbability = 0.5;

struct ModificationPlan {
  Modifier modifier = Modifier::kNone;
  Design design = Design::kTileBased;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::map<WsiId, bool> wsi_flags;
  std::map<WsiId, std::vector<bool>> tile_flags;

  bool wsi_flag(WsiId id) const;
  /// Flag of the tile at `position` in the WSI's tile list.
  bool tile_flag(WsiId id, int position) const;
  std::size_t flagged_tile_count() const;

  friend bool operator==(const ModificationPlan&, const ModificationPlan&) = default;
};

/// Throws std::invalid_argument if p is outside [0,1].
ModificationPlan sample_plan(std::span<const Wsi> wsis, Modifier modifier, Design design,
                             double p, std::uint64_t seed);

/// JSON with run-length encoded tile flags: each WSI carries "runs", the
/// lengths of alternating false/true runs starting with a (possibly empty)
/// false run.
nlohmann::json plan_to_json(const ModificationPlan& plan);
ModificationPlan plan_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Tile edits

struct CleverHansParams {
  std::string text = "Clever Hans";
  double alpha = 0.5;
  Rgb color = {0, 0, 0};
  /// Glyph cell scale in pixels per font pixel; 0 picks the largest scale
  /// at which the text fits the tile under any rotation, capped at one
  /// third of the tile height.
  double scale = 0.0;
};

struct PenParams {
  double alpha = 0.6;
  /// Line width in pixels; 0 means max(1, n/64).
  double width = 0.0;
  Rgb color = {255, 0, 0};
};

struct ModifierParams {
  CleverHansParams clever_hans;
  PenParams pen;
  /// Gaussian standard deviation in pixels; 0 means 4 * n / 256.
  double blur_sigma = 0.0;
};

/// Where a text stamp lands: the axis-aligned bounding box of the rotated
/// text starts at (left, top); the text is rotated about the box center.
struct TextPlacement {
  double left = 0.0;
  double top = 0.0;
  double angle_deg = 0.0;
  double scale = 1.0;
};

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

/// Text bitmap size in font pixels (one blank column between glyphs).
int text_width_cells(std::string_view text);

/// Pixel-space size of the rotated text's bounding box.
struct BoxSize {
  double width = 0.0;
  double height = 0.0;
};
BoxSize rotated_text_box(std::string_view text, double scale, double angle_deg);

double auto_text_scale(std::string_view text, int tile_size);

/// True where the built-in 5x7 font sets the cell (col, row) of `text`.
bool text_cell(std::string_view text, int col, int row);

/// Alpha-composites `text` into a copy of `tile`. Coverage is estimated
/// with 4x4 supersampling; out = a*cov*color + (1 - a*cov)*in.
TileImage render_text(const TileImage& tile, std::string_view text, const TextPlacement& at,
                      double alpha, Rgb color);

TileImage apply_clever_hans(const TileImage& tile, RngStream& rng,
                            const CleverHansParams& params = {});

/// Separable Gaussian blur per channel, kernel radius ceil(3 sigma),
/// half-sample symmetric reflection at the borders, rounded and clamped.
TileImage apply_blur(const TileImage& tile, double sigma);

/// Normalized 1-D Gaussian weights for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Composites a segment of the given width: every pixel whose center is
/// within width/2 of the segment gets out = a*color + (1-a)*in.
TileImage draw_line(const TileImage& tile, Point from, Point to, double width, double alpha,
                    Rgb color);

TileImage apply_pen_mark(const TileImage& tile, RngStream& rng, const PenParams& params = {});

/// Resolves the auto (0) fields of `params` for a tile size.
ModifierParams resolve_params(ModifierParams params, int tile_size);

TileImage apply_modifier(const TileImage& tile, Modifier modifier, RngStream& rng,
                         const ModifierParams& params);

/// Returns modified copies of `wsis`. Flagged tiles are edited with a
/// per-tile stream derived from the plan seed, so the result does not depend
/// on processing order. Throws UnknownModifier for kNone with p > 0 and
/// std::invalid_argument if the plan does not cover a WSI.
std::vector<Wsi> apply_plan(std::span<const Wsi> wsis, const ModificationPlan& plan,
                            const ModifierParams& params = {}, int jobs = 1);

}  // namespace confbench::modify
