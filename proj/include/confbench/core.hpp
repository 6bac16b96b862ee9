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

/// @file core.hpp
/// @brief Domain types shared by every confbench module.
///
/// A whole slide image (Wsi) is an ordered bag of square RGB tiles. Each tile
/// carries its pixels (TileImage) and bookkeeping (TileMeta): grid position,
/// ground-truth nucleus areas when the data is synthetic, and whether a
/// confounder was injected into it. All types are plain values; once built
/// they are shared read-only between worker threads.

#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace confbench {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file, bad magic, truncated store.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A domain invariant was violated (e.g. a negative WSI carrying flags).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

using WsiId = std::uint32_t;

enum class Split : std::uint8_t { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr int kMinTileSize = 8;
inline constexpr int kDeskTileSize = 32;
inline constexpr int kPaperTileSize = 256;

/// n x n x 3 interleaved RGB, row-major.
class TileImage {
 public:
  TileImage() = default;
  explicit TileImage(int n);
  TileImage(int n, std::vector<std::uint8_t> pixels);

  static TileImage filled(int n, Rgb color);

  int size() const { return n_; }
  std::size_t byte_size() const { return pixels_.size(); }

  std::uint8_t at(int row, int col, int channel) const {
    return pixels_[offset(row, col, channel)];
  }
  std::uint8_t& at(int row, int col, int channel) {
    return pixels_[offset(row, col, channel)];
  }
  Rgb pixel(int row, int col) const;
  void set_pixel(int row, int col, Rgb color);

  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  friend bool operator==(const TileImage&, const TileImage&) = default;

 private:
  std::size_t offset(int row, int col, int channel) const {
    return (static_cast<std::size_t>(row) * n_ + col) * 3 + channel;
  }

  int n_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct GridPos {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const GridPos&, const GridPos&) = default;
};

struct TileMeta {
  WsiId wsi_id = 0;
  int index_in_wsi = 0;
  GridPos grid_pos;
  /// Ground-truth per-nucleus areas in pixels^2; empty for ingested data.
  std::vector<double> nucleus_areas;
  bool modified = false;
  friend bool operator==(const TileMeta&, const TileMeta&) = default;
};

struct Tile {
  TileImage image;
  TileMeta meta;
  friend bool operator==(const Tile&, const Tile&) = default;
};

struct Wsi {
  WsiId id = 0;
  int label = 0;
  Split split = Split::kTrain;
  bool modified = false;
  int grid_cols = 1;
  std::vector<Tile> tiles;

  int tile_count() const { return static_cast<int>(tiles.size()); }
  int tile_size() const { return tiles.empty() ? 0 : tiles.front().image.size(); }

  friend bool operator==(const Wsi&, const Wsi&) = default;
};

/// Throws InvariantViolation when `wsi` breaks a structural invariant:
/// empty bag, label outside {0,1}, duplicate tile indices, non-square or
/// undersized tiles, or modification flags on a negative WSI.
void validate(const Wsi& wsi);

/// Grid position of the j-th tile in a bag laid out `grid_cols` wide.
inline GridPos grid_position(int index, int grid_cols) {
  return {index / grid_cols, index % grid_cols};
}

/// Order-sensitive 64-bit content digest over labels, splits, flags, and
/// pixels. Used for run directory names and reproducibility checks.
std::uint64_t dataset_digest(std::span<const Wsi> wsis);

std::string hex64(std::uint64_t value);

}  // namespace confbench
