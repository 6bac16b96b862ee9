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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "confbench/modify.hpp"
#include "confbench/synthgen.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace confbench;
using namespace confbench::modify;

namespace {

// Mixed-label bag collection with `tiles` tiles per WSI.
std::vector<Wsi> labeled_bags(int count, int tiles) {
  std::vector<Wsi> out;
  for (int i = 0; i < count; ++i) out.push_back(testing::flat_wsi(i, i % 3 == 0 ? 0 : 1, tiles));
  return out;
}

std::size_t flagged_in(const ModificationPlan& plan, const Wsi& w) {
  const auto& f = plan.tile_flags.at(w.id);
  return static_cast<std::size_t>(std::count(f.begin(), f.end(), true));
}

double channel_variance(const TileImage& t, int ch) {
  const int n = t.size();
  double sum = 0.0;
  double sq = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      sum += t.at(r, c, ch);
      sq += double(t.at(r, c, ch)) * t.at(r, c, ch);
    }
  }
  const double m = sum / (n * n);
  return sq / (n * n) - m * m;
}

}  // namespace

TEST_CASE("names parse and unknown modifiers are rejected") {
  for (Modifier m : {Modifier::kNone, Modifier::kCleverHans, Modifier::kBlur, Modifier::kPenMark}) {
    CHECK(parse_modifier(to_string(m)) == m);
  }
  CHECK(parse_design("tile") == Design::kTileBased);
  CHECK(parse_design("wsi-based") == Design::kWsiBased);
  CHECK_THROWS_AS(parse_modifier("sticker"), UnknownModifier);
  CHECK_THROWS(parse_design("slide"));
}

TEST_CASE("p = 0 flags nothing in either design") {
  const auto wsis = labeled_bags(30, 20);
  for (Design d : {Design::kTileBased, Design::kWsiBased}) {
    const auto plan = sample_plan(wsis, Modifier::kBlur, d, 0.0, 5);
    CHECK(plan.flagged_tile_count() == 0);
  }
}

TEST_CASE("p = 1 tile-based flags every positive tile and no negative one") {
  const auto wsis = labeled_bags(30, 20);
  const auto plan = sample_plan(wsis, Modifier::kBlur, Design::kTileBased, 1.0, 5);
  for (const Wsi& w : wsis) {
    CHECK(plan.wsi_flag(w.id) == (w.label == 1));
    CHECK(flagged_in(plan, w) == (w.label == 1 ? w.tiles.size() : 0u));
  }
}

TEST_CASE("p = 0.5 tile-based flag rate over 1e4 tiles") {
  std::vector<Wsi> wsis;
  for (int i = 0; i < 100; ++i) wsis.push_back(testing::flat_wsi(i, 1, 100));
  const auto plan = sample_plan(wsis, Modifier::kPenMark, Design::kTileBased, 0.5, 77);
  const double rate = plan.flagged_tile_count() / 10000.0;
  CHECK(rate >= 0.48);
  CHECK(rate <= 0.52);
}

TEST_CASE("wsi-based flag rates are p at WSI level and one half inside") {
  std::vector<Wsi> wsis;
  for (int i = 0; i < 2000; ++i) wsis.push_back(testing::flat_wsi(i, 1, 10));
  const double p = 0.3;
  const auto plan = sample_plan(wsis, Modifier::kBlur, Design::kWsiBased, p, 3);
  int flagged_wsis = 0;
  std::size_t inside = 0;
  std::size_t inside_flagged = 0;
  for (const Wsi& w : wsis) {
    if (!plan.wsi_flag(w.id)) {
      CHECK(flagged_in(plan, w) == 0);
      continue;
    }
    ++flagged_wsis;
    inside += w.tiles.size();
    inside_flagged += flagged_in(plan, w);
  }
  const double n = wsis.size();
  CHECK(std::abs(flagged_wsis / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
  const double q = double(inside_flagged) / inside;
  CHECK(std::abs(q - 0.5) <= 3.0 * std::sqrt(0.25 / inside));
}

TEST_CASE("plans never flag negatives, over many random plans") {
  const auto wsis = labeled_bags(40, 12);
  RngStream rng(1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = rng.uniform();
    const Design d = trial % 2 ? Design::kTileBased : Design::kWsiBased;
    const auto plan = sample_plan(wsis, Modifier::kCleverHans, d, p, trial);
    for (const Wsi& w : wsis) {
      if (w.label == 0) {
        REQUIRE_FALSE(plan.wsi_flag(w.id));
        REQUIRE(flagged_in(plan, w) == 0);
      }
    }
  }
}

TEST_CASE("plans from one seed are nested in p and deterministic") {
  const auto wsis = labeled_bags(20, 15);
  for (Design d : {Design::kTileBased, Design::kWsiBased}) {
    const auto lo = sample_plan(wsis, Modifier::kBlur, d, 0.2, 9);
    const auto hi = sample_plan(wsis, Modifier::kBlur, d, 0.8, 9);
    CHECK(lo == sample_plan(wsis, Modifier::kBlur, d, 0.2, 9));
    for (const Wsi& w : wsis) {
      if (lo.wsi_flag(w.id)) CHECK(hi.wsi_flag(w.id));
      for (int j = 0; j < w.tile_count(); ++j) {
        if (lo.tile_flag(w.id, j)) CHECK(hi.tile_flag(w.id, j));
      }
    }
  }
}

TEST_CASE("sample_plan rejects p outside [0,1]") {
  const auto wsis = labeled_bags(3, 3);
  CHECK_THROWS_AS(sample_plan(wsis, Modifier::kBlur, Design::kTileBased, 1.5, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_plan(wsis, Modifier::kBlur, Design::kTileBased, -0.1, 0),
                  std::invalid_argument);
}

TEST_CASE("plan JSON round-trip") {
  const auto wsis = labeled_bags(12, 9);
  const auto plan = sample_plan(wsis, Modifier::kPenMark, Design::kWsiBased, 0.6, 21);
  CHECK(plan_from_json(plan_to_json(plan)) == plan);
  const auto empty = sample_plan(wsis, Modifier::kNone, Design::kTileBased, 0.0, 1);
  CHECK(plan_from_json(plan_to_json(empty)) == empty);
}

TEST_CASE("text compositing with alpha 0 is the identity") {
  RngStream rng(4, 4);
  const TileImage tile = testing::noise_tile(32, rng);
  CHECK(render_text(tile, "Clever Hans", {1.0, 2.0, 33.0, 1.0}, 0.0, {0, 0, 0}) == tile);
  CleverHansParams params;
  params.alpha = 0.0;
  CHECK(apply_clever_hans(tile, rng, params) == tile);
}

TEST_CASE("opaque unrotated text equals a direct bitmap stamp") {
  RngStream rng(8, 8);
  const TileImage tile = testing::noise_tile(64, rng);
  const std::string text = "Clever";
  const int left = 3;
  const int top = 5;
  const int scale = 2;
  const Rgb ink = {10, 250, 30};
  const TileImage out = render_text(tile, text, {double(left), double(top), 0.0, double(scale)},
                                    1.0, ink);
  TileImage oracle = tile;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const int col = c - left;
      const int row = r - top;
      if (col < 0 || row < 0) continue;
      if (text_cell(text, col / scale, row / scale)) oracle.set_pixel(r, c, ink);
    }
  }
  CHECK(out == oracle);
  CHECK(out != tile);
}

TEST_CASE("rotated text only touches its bounding box") {
  RngStream rng(2, 2);
  const TileImage tile = TileImage::filled(64, {200, 200, 200});
  const TextPlacement at = {7.25, 4.5, 33.0, 1.5};
  const BoxSize box = rotated_text_box("Clever Hans", at.scale, at.angle_deg);
  const TileImage out = render_text(tile, "Clever Hans", at, 0.5, {0, 0, 0});
  int changed = 0;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      if (out.pixel(r, c) == tile.pixel(r, c)) continue;
      ++changed;
      CHECK(c >= std::floor(at.left));
      CHECK(c < std::ceil(at.left + box.width));
      CHECK(r >= std::floor(at.top));
      CHECK(r < std::ceil(at.top + box.height));
    }
  }
  CHECK(changed > 0);
}

TEST_CASE("auto text scale fits the tile under any rotation") {
  for (int n : {16, 32, 64, 256}) {
    const double s = auto_text_scale("Clever Hans", n);
    CHECK(s > 0.0);
    CHECK(s * kGlyphHeight <= n / 3.0 + 1e-9);
    for (int deg = 0; deg < 360; deg += 3) {
      const BoxSize b = rotated_text_box("Clever Hans", s, deg);
      CHECK(b.width <= n + 1e-9);
      CHECK(b.height <= n + 1e-9);
    }
  }
}

TEST_CASE("clever hans stamp is deterministic and visible") {
  RngStream base(3, 3);
  const TileImage tile = testing::noise_tile(32, base);
  RngStream a(5, 6);
  RngStream b(5, 6);
  const TileImage x = apply_clever_hans(tile, a);
  CHECK(x == apply_clever_hans(tile, b));
  CHECK(x != tile);
}

TEST_CASE("gaussian kernel is normalized with radius ceil(3 sigma)") {
  for (double sigma : {0.5, 1.0, 2.3, 4.0}) {
    const auto k = gaussian_kernel(sigma);
    CHECK(k.size() == 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
    double sum = 0.0;
    for (double w : k) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k.front() == doctest::Approx(k.back()));
  }
}

TEST_CASE("blur of a constant tile is the identity") {
  const TileImage t = TileImage::filled(32, {17, 99, 230});
  CHECK(apply_blur(t, 0.5) == t);
  CHECK(apply_blur(t, 4.0) == t);
}

TEST_CASE("blur matches dense 2-D convolution within one level") {
  TileImage impulse = TileImage::filled(32, {0, 0, 0});
  impulse.set_pixel(16, 16, {255, 255, 255});
  impulse.set_pixel(0, 0, {255, 0, 128});
  for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
    CHECK(oracle::max_abs_diff(apply_blur(impulse, sigma), oracle::dense_blur(impulse, sigma)) <= 1);
  }
  RngStream rng(12, 1);
  for (int i = 0; i < 5; ++i) {
    const TileImage t = testing::noise_tile(24, rng);
    CHECK(oracle::max_abs_diff(apply_blur(t, 1.5), oracle::dense_blur(t, 1.5)) <= 1);
  }
}

TEST_CASE("blur with sigma 4 lowers per-channel variance of generated tiles") {
  const auto wsis = synthgen::generate_dataset(testing::tiny_config(5, 4));
  for (const Tile& t : wsis[0].tiles) {
    const TileImage b = apply_blur(t.image, 4.0);
    for (int ch = 0; ch < 3; ++ch) CHECK(channel_variance(b, ch) < channel_variance(t.image, ch));
  }
}

TEST_CASE("pen mark with alpha 0 is the identity") {
  RngStream rng(6, 6);
  const TileImage tile = testing::noise_tile(32, rng);
  PenParams params;
  params.alpha = 0.0;
  CHECK(apply_pen_mark(tile, rng, params) == tile);
  CHECK(draw_line(tile, {1, 1}, {30, 20}, 2.0, 0.0, {255, 0, 0}) == tile);
}

TEST_CASE("degenerate segment draws a disc") {
  const TileImage tile = TileImage::filled(32, {100, 150, 200});
  const Point center = {10.5, 12.5};
  const double width = 5.0;
  const TileImage out = draw_line(tile, center, center, width, 1.0, {255, 0, 0});
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const double d = std::hypot(c + 0.5 - center.x, r + 0.5 - center.y);
      const Rgb expect = d <= width / 2 ? Rgb{255, 0, 0} : Rgb{100, 150, 200};
      CHECK(out.pixel(r, c) == expect);
    }
  }
}

TEST_CASE("horizontal pen line shifts covered pixels toward red") {
  const TileImage tile = TileImage::filled(32, {100, 150, 200});
  const TileImage out = draw_line(tile, {0.0, 8.5}, {32.0, 8.5}, 1.0, 0.6, {255, 0, 0});
  for (int c = 0; c < 32; ++c) {
    const Rgb p = out.pixel(8, c);
    CHECK(p.r > 100);
    CHECK(p.g < 150);
    CHECK(p.b < 200);
    CHECK(out.pixel(7, c) == Rgb{100, 150, 200});
    CHECK(out.pixel(9, c) == Rgb{100, 150, 200});
  }
}

TEST_CASE("auto parameters scale with tile size") {
  const ModifierParams small = resolve_params({}, 32);
  CHECK(small.blur_sigma == doctest::Approx(0.5));
  CHECK(small.pen.width == doctest::Approx(1.0));
  const ModifierParams large = resolve_params({}, 256);
  CHECK(large.blur_sigma == doctest::Approx(4.0));
  CHECK(large.pen.width == doctest::Approx(4.0));
  CHECK(large.clever_hans.scale > small.clever_hans.scale);
}

TEST_CASE("apply_plan: p = 0 is the identity and inputs are untouched") {
  const auto wsis = synthgen::generate_dataset(testing::tiny_config(2, 6));
  const auto copy = wsis;
  const auto plan = sample_plan(wsis, Modifier::kBlur, Design::kTileBased, 0.0, 1);
  CHECK(apply_plan(wsis, plan) == wsis);
  CHECK(wsis == copy);
}

TEST_CASE("apply_plan edits exactly the flagged tiles") {
  const auto wsis = synthgen::generate_dataset(testing::tiny_config(2, 6));
  const auto pos = std::find_if(wsis.begin(), wsis.end(), [](const Wsi& w) { return w.label == 1; });
  REQUIRE(pos != wsis.end());
  for (Modifier m : {Modifier::kCleverHans, Modifier::kBlur, Modifier::kPenMark}) {
    ModificationPlan plan = sample_plan(wsis, m, Design::kTileBased, 0.0, 4);
    plan.p = 0.5;
    plan.tile_flags[pos->id][2] = true;
    const auto out = apply_plan(wsis, plan);
    for (std::size_t i = 0; i < wsis.size(); ++i) {
      CHECK(out[i].label == wsis[i].label);
      CHECK(out[i].split == wsis[i].split);
      for (int j = 0; j < wsis[i].tile_count(); ++j) {
        const bool target = wsis[i].id == pos->id && j == 2;
        CHECK((out[i].tiles[j].image != wsis[i].tiles[j].image) == target);
        CHECK(out[i].tiles[j].meta.modified == target);
        CHECK(out[i].tiles[j].meta.nucleus_areas == wsis[i].tiles[j].meta.nucleus_areas);
      }
    }
    CHECK(apply_plan(wsis, plan) == out);
    CHECK(apply_plan(wsis, plan, {}, 3) == out);
  }
}

TEST_CASE("apply_plan rejects 'none' with p > 0 and uncovered WSIs") {
  const auto wsis = labeled_bags(4, 3);
  ModificationPlan plan = sample_plan(wsis, Modifier::kNone, Design::kTileBased, 0.0, 1);
  plan.p = 0.5;
  CHECK_THROWS_AS(apply_plan(wsis, plan), UnknownModifier);
  ModificationPlan partial = sample_plan(wsis, Modifier::kBlur, Design::kTileBased, 0.5, 1);
  partial.wsi_flags.erase(wsis[1].id);
  partial.tile_flags.erase(wsis[1].id);
  CHECK_THROWS_AS(apply_plan(wsis, partial), std::invalid_argument);
}
