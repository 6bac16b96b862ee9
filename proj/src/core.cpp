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

#include "confbench/core.hpp"

#include <cstdio>
#include <set>

#include "confbench/rng.hpp"

namespace confbench {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

TileImage::TileImage(int n) : n_(n), pixels_(static_cast<std::size_t>(n) * n * 3, 0) {
  if (n < kMinTileSize) {
    throw std::invalid_argument("tile size must be >= " + std::to_string(kMinTileSize));
  }
}

TileImage::TileImage(int n, std::vector<std::uint8_t> pixels)
    : n_(n), pixels_(std::move(pixels)) {
  if (n < kMinTileSize) {
    throw std::invalid_argument("tile size must be >= " + std::to_string(kMinTileSize));
  }
  if (pixels_.size() != static_cast<std::size_t>(n) * n * 3) {
    throw std::invalid_argument("pixel buffer does not match an n x n x 3 tile");
  }
}

TileImage TileImage::filled(int n, Rgb color) {
  TileImage tile(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) tile.set_pixel(r, c, color);
  }
  return tile;
}

Rgb TileImage::pixel(int row, int col) const {
  const std::size_t o = offset(row, col, 0);
  return {pixels_[o], pixels_[o + 1], pixels_[o + 2]};
}

void TileImage::set_pixel(int row, int col, Rgb color) {
  const std::size_t o = offset(row, col, 0);
  pixels_[o] = color.r;
  pixels_[o + 1] = color.g;
  pixels_[o + 2] = color.b;
}

void validate(const Wsi& wsi) {
  const std::string where = "wsi " + std::to_string(wsi.id) + ": ";
  if (wsi.tiles.empty()) throw InvariantViolation(where + "no tiles");
  if (wsi.label != 0 && wsi.label != 1) throw InvariantViolation(where + "label must be 0 or 1");
  if (wsi.grid_cols < 1) throw InvariantViolation(where + "grid_cols must be >= 1");
  const int n = wsi.tiles.front().image.size();
  std::set<int> seen;
  for (const Tile& tile : wsi.tiles) {
    if (tile.image.size() != n || n < kMinTileSize) {
      throw InvariantViolation(where + "inconsistent tile size");
    }
    if (!seen.insert(tile.meta.index_in_wsi).second) {
      throw InvariantViolation(where + "duplicate tile index " +
                               std::to_string(tile.meta.index_in_wsi));
    }
    for (double area : tile.meta.nucleus_areas) {
      if (!(area > 0.0)) throw InvariantViolation(where + "nucleus area must be > 0");
    }
    if (wsi.label == 0 && tile.meta.modified) {
      throw InvariantViolation(where + "negative WSI has a modified tile");
    }
    if (!wsi.modified && tile.meta.modified) {
      throw InvariantViolation(where + "modified tile inside an unmodified WSI");
    }
  }
  if (wsi.label == 0 && wsi.modified) {
    throw InvariantViolation(where + "negative WSI flagged as modified");
  }
}

std::uint64_t dataset_digest(std::span<const Wsi> wsis) {
  // FNV-1a over a canonical byte stream.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  auto mix_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(v >> (8 * i)));
  };
  mix_u64(wsis.size());
  for (const Wsi& wsi : wsis) {
    mix_u64(wsi.id);
    mix_u64(static_cast<std::uint64_t>(wsi.label));
    mix_u64(static_cast<std::uint64_t>(wsi.split));
    mix_u64(wsi.modified ? 1 : 0);
    mix_u64(static_cast<std::uint64_t>(wsi.grid_cols));
    mix_u64(wsi.tiles.size());
    for (const Tile& tile : wsi.tiles) {
      mix_u64(static_cast<std::uint64_t>(tile.meta.index_in_wsi));
      mix_u64(tile.meta.modified ? 1 : 0);
      for (std::uint8_t b : tile.image.bytes()) mix_byte(b);
    }
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace confbench
