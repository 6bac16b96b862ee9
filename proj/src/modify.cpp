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

#include "confbench/modify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "confbench/parallel.hpp"

namespace confbench::modify {

std::string_view to_string(Modifier m) {
  switch (m) {
    case Modifier::kNone:
      return "none";
    case Modifier::kCleverHans:
      return "clever-hans";
    case Modifier::kBlur:
      return "blur";
    case Modifier::kPenMark:
      return "pen-mark";
  }
  return "none";
}

std::string_view to_string(Design d) {
  return d == Design::kTileBased ? "tile" : "wsi";
}

Modifier parse_modifier(std::string_view text) {
  if (text == "clever-hans") return Modifier::kCleverHans;
  if (text == "blur") return Modifier::kBlur;
  if (text == "pen-mark") return Modifier::kPenMark;
  if (text == "none") return Modifier::kNone;
  throw UnknownModifier("unknown modifier '" + std::string(text) +
                        "' (expected clever-hans, blur, pen-mark or none)");
}

Design parse_design(std::string_view text) {
  if (text == "tile" || text == "tile-based") return Design::kTileBased;
  if (text == "wsi" || text == "wsi-based") return Design::kWsiBased;
  throw std::invalid_argument("unknown design '" + std::string(text) +
                              "' (expected tile or wsi)");
}

bool ModificationPlan::wsi_flag(WsiId id) const {
  const auto it = wsi_flags.find(id);
  return it != wsi_flags.end() && it->second;
}

bool ModificationPlan::tile_flag(WsiId id, int index) const {
  const auto it = tile_flags.find(id);
  if (it == tile_flags.end() || index < 0 || index >= static_cast<int>(it->second.size())) {
    return false;
  }
  return it->second[index];
}

std::size_t ModificationPlan::flagged_tile_count() const {
  std::size_t count = 0;
  for (const auto& [id, flags] : tile_flags) count += std::count(flags.begin(), flags.end(), true);
  return count;
}

ModificationPlan sample_plan(std::span<const Wsi> wsis, Modifier modifier, Design design,
                             double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("plan probability must be in [0,1]");
  ModificationPlan plan;
  plan.modifier = modifier;
  plan.design = design;
  plan.p = p;
  plan.seed = seed;
  for (const Wsi& wsi : wsis) {
    std::vector<bool> flags(wsi.tiles.size(), false);
    bool wsi_flag = false;
    if (wsi.label == 1) {
      // One stream per WSI keeps the plan independent of dataset order.
      RngStream rng = derive_stream(seed, "plan/wsi/" + std::to_string(wsi.id));
      const double u_wsi = rng.uniform();
      const double tile_p = design == Design::kTileBased ? p : kWsiBasedTileProbability;
      wsi_flag = design == Design::kTileBased ? true : u_wsi < p;
      for (std::size_t j = 0; j < flags.size(); ++j) {
        const double u_tile = rng.uniform();
        flags[j] = wsi_flag && u_tile < tile_p;
      }
    }
    plan.wsi_flags[wsi.id] = wsi_flag;
    plan.tile_flags[wsi.id] = std::move(flags);
  }
  return plan;
}

nlohmann::json plan_to_json(const ModificationPlan& plan) {
  nlohmann::json wsis = nlohmann::json::array();
  for (const auto& [id, flag] : plan.wsi_flags) {
    std::vector<std::size_t> runs;
    bool current = false;
    std::size_t length = 0;
    const auto it = plan.tile_flags.find(id);
    const std::vector<bool> empty;
    const std::vector<bool>& flags = it == plan.tile_flags.end() ? empty : it->second;
    for (bool f : flags) {
      if (f != current) {
        runs.push_back(length);
        current = f;
        length = 0;
      }
      ++length;
    }
    runs.push_back(length);
    wsis.push_back({{"id", id}, {"flag", flag}, {"tiles", flags.size()}, {"runs", runs}});
  }
  return {{"modifier", to_string(plan.modifier)},
          {"design", to_string(plan.design)},
          {"p", plan.p},
          {"seed", plan.seed},
          {"wsis", std::move(wsis)}};
}

ModificationPlan plan_from_json(const nlohmann::json& j) {
  ModificationPlan plan;
  plan.modifier = parse_modifier(j.at("modifier").get<std::string>());
  plan.design = parse_design(j.at("design").get<std::string>());
  plan.p = j.at("p").get<double>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& w : j.at("wsis")) {
    const auto id = w.at("id").get<WsiId>();
    const auto total = w.at("tiles").get<std::size_t>();
    std::vector<bool> flags;
    flags.reserve(total);
    bool value = false;
    for (const auto& run : w.at("runs")) {
      flags.insert(flags.end(), run.get<std::size_t>(), value);
      value = !value;
    }
    if (flags.size() != total) {
      throw FormatError("plan: run lengths do not add up for wsi " + std::to_string(id));
    }
    plan.wsi_flags[id] = w.at("flag").get<bool>();
    plan.tile_flags[id] = std::move(flags);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Text stamp

namespace {

struct Glyph {
  char ch;
  std::array<std::uint8_t, kGlyphHeight> rows;  // bit 4 is the leftmost column
};

constexpr std::array<Glyph, 10> kFont = {{
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'s', {0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E}},
    {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
}};

const Glyph& glyph(char ch) {
  for (const Glyph& g : kFont) {
    if (g.ch == ch) return g;
  }
  throw std::invalid_argument(std::string("no glyph for character '") + ch + "'");
}

std::uint8_t composite(std::uint8_t in, std::uint8_t over, double weight) {
  const double v = weight * over + (1.0 - weight) * in;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

int text_width_cells(std::string_view text) {
  return text.empty() ? 0 : static_cast<int>(text.size()) * (kGlyphWidth + 1) - 1;
}

bool text_cell(std::string_view text, int col, int row) {
  if (row < 0 || row >= kGlyphHeight || col < 0) return false;
  const int index = col / (kGlyphWidth + 1);
  const int within = col % (kGlyphWidth + 1);
  if (index >= static_cast<int>(text.size()) || within == kGlyphWidth) return false;
  return (glyph(text[index]).rows[row] >> (kGlyphWidth - 1 - within)) & 1;
}

BoxSize rotated_text_box(std::string_view text, double scale, double angle_deg) {
  const double w = text_width_cells(text) * scale;
  const double h = kGlyphHeight * scale;
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double c = std::abs(std::cos(t));
  const double s = std::abs(std::sin(t));
  return {w * c + h * s, w * s + h * c};
}

double auto_text_scale(std::string_view text, int tile_size) {
  const double w = text_width_cells(text);
  const double h = kGlyphHeight;
  // The rotated box never exceeds the text diagonal.
  const double fit = 0.98 * tile_size / std::hypot(w, h);
  const double third = tile_size / (3.0 * h);
  return std::min(fit, third);
}

TileImage render_text(const TileImage& tile, std::string_view text, const TextPlacement& at,
                      double alpha, Rgb color) {
  for (char ch : text) glyph(ch);
  TileImage out = tile;
  if (alpha <= 0.0 || text.empty()) return out;

  const int n = tile.size();
  const BoxSize box = rotated_text_box(text, at.scale, at.angle_deg);
  const double text_w = text_width_cells(text) * at.scale;
  const double text_h = kGlyphHeight * at.scale;
  const double cx = at.left + box.width / 2.0;
  const double cy = at.top + box.height / 2.0;
  const double t = at.angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(t);
  const double sin_t = std::sin(t);
  const std::array<std::uint8_t, 3> rgb = {color.r, color.g, color.b};

  constexpr int kSub = 4;
  const int r0 = std::max(0, static_cast<int>(std::floor(at.top)));
  const int r1 = std::min(n, static_cast<int>(std::ceil(at.top + box.height)));
  const int c0 = std::max(0, static_cast<int>(std::floor(at.left)));
  const int c1 = std::min(n, static_cast<int>(std::ceil(at.left + box.width)));
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double dx = c + (sx + 0.5) / kSub - cx;
          const double dy = r + (sy + 0.5) / kSub - cy;
          // Undo the rotation to land in unrotated text coordinates.
          const double u = dx * cos_t + dy * sin_t + text_w / 2.0;
          const double v = -dx * sin_t + dy * cos_t + text_h / 2.0;
          if (u < 0.0 || v < 0.0) continue;
          if (text_cell(text, static_cast<int>(u / at.scale), static_cast<int>(v / at.scale))) {
            ++hits;
          }
        }
      }
      if (hits == 0) continue;
      const double weight = alpha * hits / (kSub * kSub);
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = composite(tile.at(r, c, ch), rgb[ch], weight);
      }
    }
  }
  return out;
}

TileImage apply_clever_hans(const TileImage& tile, RngStream& rng,
                            const CleverHansParams& params) {
  const int n = tile.size();
  TextPlacement at;
  at.scale = params.scale > 0.0 ? params.scale : auto_text_scale(params.text, n);
  at.angle_deg = rng.uniform(0.0, 360.0);
  const BoxSize box = rotated_text_box(params.text, at.scale, at.angle_deg);
  if (box.width > n || box.height > n) {
    throw std::invalid_argument("Clever Hans text does not fit the tile at this scale");
  }
  // Uniform over every position where the box lies inside the tile.
  at.left = rng.uniform(0.0, n - box.width);
  at.top = rng.uniform(0.0, n - box.height);
  return render_text(tile, params.text, at, params.alpha, params.color);
}

// ---------------------------------------------------------------------------
// Blur

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("blur sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> weights(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    weights[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += weights[i + radius];
  }
  for (double& w : weights) w /= total;
  return weights;
}

namespace {

// Half-sample symmetric: ... c b a | a b c ... | c b a ...
int reflect(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

TileImage apply_blur(const TileImage& tile, double sigma) {
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = tile.size();
  std::vector<double> horizontal(static_cast<std::size_t>(n) * n * 3);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * tile.at(r, reflect(c + k, n), ch);
        }
        horizontal[(static_cast<std::size_t>(r) * n + c) * 3 + ch] = acc;
      }
    }
  }
  TileImage out(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] *
                 horizontal[(static_cast<std::size_t>(reflect(r + k, n)) * n + c) * 3 + ch];
        }
        out.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pen mark

TileImage draw_line(const TileImage& tile, Point from, Point to, double width, double alpha,
                    Rgb color) {
  TileImage out = tile;
  if (alpha <= 0.0) return out;
  const int n = tile.size();
  const double half = width / 2.0;
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double len2 = dx * dx + dy * dy;
  const std::array<std::uint8_t, 3> rgb = {color.r, color.g, color.b};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double px = c + 0.5;
      const double py = r + 0.5;
      double t = len2 > 0.0 ? ((px - from.x) * dx + (py - from.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = from.x + t * dx - px;
      const double ey = from.y + t * dy - py;
      if (ex * ex + ey * ey > half * half) continue;
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = composite(tile.at(r, c, ch), rgb[ch], alpha);
      }
    }
  }
  return out;
}

TileImage apply_pen_mark(const TileImage& tile, RngStream& rng, const PenParams& params) {
  const int n = tile.size();
  const double width = params.width > 0.0 ? params.width : std::max(1.0, n / 64.0);
  auto point = [&] {
    const double x = static_cast<double>(rng.uniform_int(0, n - 1)) + 0.5;
    const double y = static_cast<double>(rng.uniform_int(0, n - 1)) + 0.5;
    return Point{x, y};
  };
  const Point a = point();
  const Point b = point();
  return draw_line(tile, a, b, width, params.alpha, params.color);
}

ModifierParams resolve_params(ModifierParams params, int tile_size) {
  if (params.blur_sigma <= 0.0) params.blur_sigma = 4.0 * tile_size / 256.0;
  if (params.pen.width <= 0.0) params.pen.width = std::max(1.0, tile_size / 64.0);
  if (params.clever_hans.scale <= 0.0) {
    params.clever_hans.scale = auto_text_scale(params.clever_hans.text, tile_size);
  }
  return params;
}

TileImage apply_modifier(const TileImage& tile, Modifier modifier, RngStream& rng,
                         const ModifierParams& params) {
  const ModifierParams p = resolve_params(params, tile.size());
  switch (modifier) {
    case Modifier::kCleverHans:
      return apply_clever_hans(tile, rng, p.clever_hans);
    case Modifier::kBlur:
      return apply_blur(tile, p.blur_sigma);
    case Modifier::kPenMark:
      return apply_pen_mark(tile, rng, p.pen);
    case Modifier::kNone:
      break;
  }
  throw UnknownModifier("modifier 'none' cannot edit tiles");
}

std::vector<Wsi> apply_plan(std::span<const Wsi> wsis, const ModificationPlan& plan,
                            const ModifierParams& params, int jobs) {
  if (plan.modifier == Modifier::kNone && plan.p > 0.0) {
    throw UnknownModifier("plan with modifier 'none' must have p == 0");
  }
  for (const Wsi& wsi : wsis) {
    if (!plan.wsi_flags.contains(wsi.id) || !plan.tile_flags.contains(wsi.id)) {
      throw std::invalid_argument("plan does not cover wsi " + std::to_string(wsi.id));
    }
    if (plan.tile_flags.at(wsi.id).size() != wsi.tiles.size()) {
      throw std::invalid_argument("plan tile count mismatch for wsi " + std::to_string(wsi.id));
    }
    if (wsi.label == 0 && (plan.wsi_flag(wsi.id) || plan.tile_flags.at(wsi.id) !=
                                                        std::vector<bool>(wsi.tiles.size()))) {
      throw InvariantViolation("plan flags negative wsi " + std::to_string(wsi.id));
    }
  }
  std::vector<Wsi> out(wsis.begin(), wsis.end());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    Wsi& wsi = out[i];
    // A WSI counts as modified only when at least one of its tiles is edited.
    wsi.modified = false;
    for (std::size_t j = 0; j < wsi.tiles.size(); ++j) {
      Tile& tile = wsi.tiles[j];
      tile.meta.modified = false;
      if (!plan.tile_flag(wsi.id, static_cast<int>(j))) continue;
      RngStream rng = derive_stream(plan.seed, "modify/wsi/" + std::to_string(wsi.id) +
                                                   "/tile/" +
                                                   std::to_string(tile.meta.index_in_wsi));
      tile.image = apply_modifier(tile.image, plan.modifier, rng, params);
      tile.meta.modified = true;
      wsi.modified = true;
    }
  });
  return out;
}

}  // namespace confbench::modify
