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

#include "confbench/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "confbench/io.hpp"
#include "confbench/parallel.hpp"

namespace confbench::features {

namespace {

std::vector<double> gray_plane(const TileImage& tile) {
  const int n = tile.size();
  std::vector<double> gray(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      gray[r * n + c] = (tile.at(r, c, 0) + tile.at(r, c, 1) + tile.at(r, c, 2)) / 3.0;
    }
  }
  return gray;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / values.size())};
}

BlobStats blobs_from_gray(std::span<const double> gray, int n) {
  std::vector<int> label(gray.size(), 0);
  std::vector<int> stack;
  std::vector<double> areas;
  for (int start = 0; start < n * n; ++start) {
    if (label[start] != 0 || gray[start] >= kBlobThreshold) continue;
    const int id = static_cast<int>(areas.size()) + 1;
    int area = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      ++area;
      const int r = k / n;
      const int c = k % n;
      const int neighbours[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& nb : neighbours) {
        if (nb[0] < 0 || nb[0] >= n || nb[1] < 0 || nb[1] >= n) continue;
        const int kk = nb[0] * n + nb[1];
        if (label[kk] == 0 && gray[kk] < kBlobThreshold) {
          label[kk] = id;
          stack.push_back(kk);
        }
      }
    }
    areas.push_back(area);
  }
  std::erase_if(areas, [](double a) { return a < kMinBlobArea; });
  const MeanStd ms = mean_std(areas);
  return {static_cast<int>(areas.size()), ms.mean, ms.std};
}

}  // namespace

BlobStats blob_stats(const TileImage& tile) {
  return blobs_from_gray(gray_plane(tile), tile.size());
}

FeatureVector extract(const TileImage& tile) {
  const int n = tile.size();
  const double pixels = static_cast<double>(n) * n;
  std::array<double, kFeatureDim> f{};

  // Channel moments and red excess.
  for (int ch = 0; ch < 3; ++ch) {
    double sum = 0.0;
    double sq = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double v = tile.at(r, c, ch);
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / pixels;
    f[kChannelMean + ch] = mean / 255.0;
    f[kChannelStd + ch] = std::sqrt(std::max(0.0, sq / pixels - mean * mean)) / 255.0;
  }
  double red_excess = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      red_excess += tile.at(r, c, 0) - (tile.at(r, c, 1) + tile.at(r, c, 2)) / 2.0;
    }
  }
  f[kRedExcess] = red_excess / pixels / 255.0;

  const std::vector<double> gray = gray_plane(tile);
  for (double g : gray) {
    const int bin = std::min(7, static_cast<int>(g / 32.0));
    f[kHistogram + bin] += 1.0 / pixels;
  }

  // Sobel gradients and Laplacian on the interior.
  std::vector<double> magnitude;
  std::vector<double> laplacian;
  std::array<double, 4> edges{};
  magnitude.reserve(static_cast<std::size_t>(n - 2) * (n - 2));
  laplacian.reserve(magnitude.capacity());
  auto g = [&](int r, int c) { return gray[r * n + c]; };
  for (int r = 1; r < n - 1; ++r) {
    for (int c = 1; c < n - 1; ++c) {
      const double gx = (g(r - 1, c + 1) + 2 * g(r, c + 1) + g(r + 1, c + 1)) -
                        (g(r - 1, c - 1) + 2 * g(r, c - 1) + g(r + 1, c - 1));
      const double gy = (g(r + 1, c - 1) + 2 * g(r + 1, c) + g(r + 1, c + 1)) -
                        (g(r - 1, c - 1) + 2 * g(r - 1, c) + g(r - 1, c + 1));
      const double mag = std::hypot(gx, gy);
      magnitude.push_back(mag);
      laplacian.push_back(g(r - 1, c) + g(r + 1, c) + g(r, c - 1) + g(r, c + 1) - 4 * g(r, c));
      if (mag > kEdgeThreshold) {
        double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
        if (angle < 0) angle += 180.0;
        const int bin = static_cast<int>(std::floor((angle + 22.5) / 45.0)) % 4;
        edges[bin] += 1.0;
      }
    }
  }
  const MeanStd grad = mean_std(magnitude);
  f[kGradientMean] = grad.mean / 255.0;
  f[kGradientStd] = grad.std / 255.0;
  const MeanStd lap = mean_std(laplacian);
  f[kSharpness] = lap.std * lap.std / (255.0 * 255.0);
  const double interior = std::max<double>(1.0, static_cast<double>(magnitude.size()));
  for (int b = 0; b < 4; ++b) f[kEdgeDensity + b] = edges[b] / interior;

  const BlobStats blobs = blobs_from_gray(gray, n);
  f[kBlobCount] = blobs.count;
  f[kBlobAreaMean] = blobs.mean_area;
  f[kBlobAreaStd] = blobs.std_area;

  constexpr int kBands = kFeatureDim - kProfile;
  for (int b = 0; b < kBands; ++b) {
    const int r0 = b * n / kBands;
    const int r1 = std::max(r0 + 1, (b + 1) * n / kBands);
    double sum = 0.0;
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < n; ++c) sum += gray[r * n + c];
    }
    f[kProfile + b] = sum / ((r1 - r0) * static_cast<double>(n)) / 255.0;
  }

  FeatureVector out;
  std::transform(f.begin(), f.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return out;
}

std::optional<double> mean_nucleus_area(const Tile& tile) {
  const auto& areas = tile.meta.nucleus_areas;
  if (!areas.empty()) {
    return std::accumulate(areas.begin(), areas.end(), 0.0) / areas.size();
  }
  const BlobStats blobs = blob_stats(tile.image);
  if (blobs.count == 0) return std::nullopt;
  return blobs.mean_area;
}

double sdana(const Wsi& wsi) {
  std::vector<double> means;
  means.reserve(wsi.tiles.size());
  for (const Tile& tile : wsi.tiles) {
    if (auto m = mean_nucleus_area(tile)) means.push_back(*m);
  }
  if (means.size() < 2) {
    throw InsufficientTiles("wsi " + std::to_string(wsi.id) + " has " +
                            std::to_string(means.size()) +
                            " tiles with nuclei; SDANA needs at least 2");
  }
  return mean_std(means).std;
}

std::vector<std::vector<FeatureVector>> extract_all(std::span<const Wsi> wsis, int jobs) {
  std::vector<std::vector<FeatureVector>> out(wsis.size());
  parallel_for(wsis.size(), jobs, [&](std::size_t i) {
    out[i].reserve(wsis[i].tiles.size());
    for (const Tile& tile : wsis[i].tiles) out[i].push_back(extract(tile.image));
  });
  return out;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  if (table.k <= 0 || table.k > 0xffff || table.values.size() != table.rows * table.k) {
    throw std::invalid_argument("embedding table shape is inconsistent");
  }
  if (!std::all_of(table.values.begin(), table.values.end(),
                   [](float v) { return std::isfinite(v); })) {
    throw std::invalid_argument("embedding values must be finite");
  }
  std::string out;
  out.append(kEmbeddingMagic, 4);
  io::put_u16(out, kEmbeddingVersion);
  io::put_u16(out, static_cast<std::uint16_t>(table.k));
  io::put_u64(out, table.rows);
  for (float v : table.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  io::write_file_atomic(path, out);
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  if (data.size() < 16 || std::memcmp(data.data(), kEmbeddingMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a CBEM embedding store");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (io::get_u16(p + 4) != kEmbeddingVersion) {
    throw FormatError(path.string() + ": unsupported embedding store version");
  }
  EmbeddingTable table;
  table.k = io::get_u16(p + 6);
  table.rows = io::get_u64(p + 8);
  if (table.k == 0 || data.size() != 16 + table.rows * table.k * 4) {
    throw FormatError(path.string() + ": size does not match header");
  }
  table.values.resize(table.rows * table.k);
  for (std::size_t i = 0; i < table.values.size(); ++i) {
    const unsigned char* q = p + 16 + 4 * i;
    const std::uint32_t bits = q[0] | (q[1] << 8) | (q[2] << 16) | (std::uint32_t{q[3]} << 24);
    std::memcpy(&table.values[i], &bits, 4);
    if (!std::isfinite(table.values[i])) {
      throw FormatError(path.string() + ": non-finite embedding value");
    }
  }
  return table;
}

EmbeddingTable to_table(std::span<const std::vector<FeatureVector>> per_wsi) {
  EmbeddingTable table;
  table.k = kFeatureDim;
  for (const auto& rows : per_wsi) {
    for (const FeatureVector& f : rows) {
      table.values.insert(table.values.end(), f.begin(), f.end());
      ++table.rows;
    }
  }
  return table;
}

}  // namespace confbench::features
