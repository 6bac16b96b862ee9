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

/// @file features.hpp
/// @brief Hand-built tile embedding, nuclear statistics, and SDANA.
///
/// The 32-dimensional embedding is a fixed function of the tile pixels:
///
///     slot   content
///     0-2    channel means (R, G, B) / 255
///     3-5    channel standard deviations / 255
///     6-13   8-bin gray-level histogram (fractions)
///     14-15  Sobel gradient magnitude mean / std (gray, / 255)
///     16     variance of the 4-neighbour Laplacian (/ 255^2)
///     17     red excess mean(R - (G + B) / 2) / 255
///     18-20  dark blob count, blob area mean, blob area std
///     21-24  edge density at 0, 45, 90, 135 degrees
///     25-31  mean gray level of 7 horizontal bands / 255
///
/// Gray is the plain mean of the three channels. Blobs are 4-connected
/// components of pixels darker than kBlobThreshold with at least
/// kMinBlobArea pixels.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "confbench/core.hpp"

namespace confbench::features {

class InsufficientTiles : public Error {
 public:
  using Error::Error;
};

inline constexpr int kFeatureDim = 32;
using FeatureVector = std::array<float, kFeatureDim>;

enum Slot : int {
  kChannelMean = 0,
  kChannelStd = 3,
  kHistogram = 6,
  kGradientMean = 14,
  kGradientStd = 15,
  kSharpness = 16,
  kRedExcess = 17,
  kBlobCount = 18,
  kBlobAreaMean = 19,
  kBlobAreaStd = 20,
  kEdgeDensity = 21,
  kProfile = 25,
};

inline constexpr double kBlobThreshold = 140.0;
inline constexpr int kMinBlobArea = 2;
inline constexpr double kEdgeThreshold = 64.0;

FeatureVector extract(const TileImage& tile);

struct BlobStats {
  int count = 0;
  double mean_area = 0.0;
  double std_area = 0.0;
};
BlobStats blob_stats(const TileImage& tile);

/// Mean nucleus area of a tile: ground truth when the metadata carries it,
/// the blob estimate otherwise. Empty for tiles without nuclei.
std::optional<double> mean_nucleus_area(const Tile& tile);

/// Population standard deviation of the defined per-tile mean nucleus areas.
/// Throws InsufficientTiles with fewer than two defined values.
double sdana(const Wsi& wsi);

/// Embeddings of every tile, per WSI, in tile order.
std::vector<std::vector<FeatureVector>> extract_all(std::span<const Wsi> wsis, int jobs = 1);

// ---------------------------------------------------------------------------
// Embedding store (little-endian):
//   magic "CBEM" | version u16 | k u16 | row count u64 | rows x k float32

inline constexpr char kEmbeddingMagic[4] = {'C', 'B', 'E', 'M'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;

struct EmbeddingTable {
  int k = 0;
  std::size_t rows = 0;
  std::vector<float> values;  // row-major, rows * k

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * k, k);
  }
  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

/// Flattens per-WSI embeddings into manifest order (WSI order, then tiles).
EmbeddingTable to_table(std::span<const std::vector<FeatureVector>> per_wsi);

}  // namespace confbench::features
