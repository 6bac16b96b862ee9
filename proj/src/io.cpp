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

#include "confbench/io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace confbench::io {

namespace fs = std::filesystem;
using nlohmann::json;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_tile_store(const fs::path& path, int tile_size, std::span<const TileImage> tiles) {
  if (tile_size < kMinTileSize || tile_size > 0xffff) {
    throw std::invalid_argument("tile store: unsupported tile size");
  }
  const std::size_t tile_bytes = static_cast<std::size_t>(tile_size) * tile_size * 3;
  std::string out;
  out.reserve(kStoreHeaderBytes + tile_bytes * tiles.size());
  out.append(kTileMagic, 4);
  put_u16(out, kTileStoreVersion);
  put_u16(out, static_cast<std::uint16_t>(tile_size));
  put_u64(out, tiles.size());
  for (const TileImage& tile : tiles) {
    if (tile.size() != tile_size) throw std::invalid_argument("tile store: mixed tile sizes");
    const auto bytes = tile.bytes();
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  write_file_atomic(path, out);
}

std::vector<TileImage> read_tile_store(const fs::path& path) {
  const std::string data = read_file(path);
  if (data.size() < kStoreHeaderBytes || std::memcmp(data.data(), kTileMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a CBTL tile store");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  const std::uint16_t version = get_u16(p + 4);
  if (version != kTileStoreVersion) {
    throw FormatError(path.string() + ": unsupported tile store version " +
                      std::to_string(version));
  }
  const int n = get_u16(p + 6);
  const std::uint64_t count = get_u64(p + 8);
  const std::size_t tile_bytes = static_cast<std::size_t>(n) * n * 3;
  if (n < kMinTileSize || data.size() != kStoreHeaderBytes + tile_bytes * count) {
    throw FormatError(path.string() + ": size does not match header");
  }
  std::vector<TileImage> tiles;
  tiles.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto* begin = p + kStoreHeaderBytes + i * tile_bytes;
    tiles.emplace_back(n, std::vector<std::uint8_t>(begin, begin + tile_bytes));
  }
  return tiles;
}

namespace {

constexpr std::array<Split, 3> kSplits = {Split::kTrain, Split::kVal, Split::kTest};

std::string store_name(Split split) { return "tiles_" + std::string(to_string(split)) + ".bin"; }

}  // namespace

void write_dataset(const fs::path& dir, std::span<const Wsi> wsis) {
  fs::create_directories(dir);
  int tile_size = 0;
  for (const Wsi& wsi : wsis) {
    validate(wsi);
    if (tile_size == 0) tile_size = wsi.tile_size();
    if (wsi.tile_size() != tile_size) throw std::invalid_argument("dataset mixes tile sizes");
  }
  if (tile_size == 0) tile_size = kDeskTileSize;

  std::map<Split, std::vector<TileImage>> stores;
  json manifest;
  manifest["format"] = "confbench-dataset";
  manifest["version"] = 1;
  manifest["tile_size"] = tile_size;
  for (Split s : kSplits) manifest["stores"][std::string(to_string(s))] = store_name(s);
  json entries = json::array();
  for (const Wsi& wsi : wsis) {
    auto& store = stores[wsi.split];
    const std::size_t first = store.size();
    json tiles = json::array();
    for (const Tile& tile : wsi.tiles) {
      store.push_back(tile.image);
      tiles.push_back({{"index", tile.meta.index_in_wsi},
                       {"row", tile.meta.grid_pos.row},
                       {"col", tile.meta.grid_pos.col},
                       {"modified", tile.meta.modified},
                       {"nucleus_areas", tile.meta.nucleus_areas}});
    }
    const std::size_t tile_bytes = static_cast<std::size_t>(tile_size) * tile_size * 3;
    entries.push_back({{"id", wsi.id},
                       {"label", wsi.label},
                       {"split", to_string(wsi.split)},
                       {"modified", wsi.modified},
                       {"grid_cols", wsi.grid_cols},
                       {"tile_count", wsi.tile_count()},
                       {"tile_offset", first},
                       {"byte_offset", kStoreHeaderBytes + first * tile_bytes},
                       {"tiles", std::move(tiles)}});
  }
  manifest["wsis"] = std::move(entries);
  for (Split s : kSplits) write_tile_store(dir / store_name(s), tile_size, stores[s]);
  write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<Wsi> read_dataset(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "confbench-dataset") {
    throw FormatError((dir / "manifest.json").string() + ": not a confbench manifest");
  }
  std::map<Split, std::vector<TileImage>> stores;
  for (Split s : kSplits) {
    const auto name = manifest.at("stores").at(std::string(to_string(s))).get<std::string>();
    stores[s] = read_tile_store(dir / name);
  }
  std::vector<Wsi> wsis;
  try {
    for (const json& e : manifest.at("wsis")) {
      Wsi wsi;
      wsi.id = e.at("id").get<WsiId>();
      wsi.label = e.at("label").get<int>();
      wsi.split = parse_split(e.at("split").get<std::string>());
      wsi.modified = e.at("modified").get<bool>();
      wsi.grid_cols = e.at("grid_cols").get<int>();
      const auto offset = e.at("tile_offset").get<std::size_t>();
      const auto count = e.at("tile_count").get<std::size_t>();
      const auto& store = stores.at(wsi.split);
      if (offset + count > store.size() || e.at("tiles").size() != count) {
        throw FormatError("manifest entry for wsi " + std::to_string(wsi.id) +
                          " points outside its store");
      }
      for (std::size_t j = 0; j < count; ++j) {
        const json& t = e.at("tiles")[j];
        Tile tile;
        tile.image = store[offset + j];
        tile.meta.wsi_id = wsi.id;
        tile.meta.index_in_wsi = t.at("index").get<int>();
        tile.meta.grid_pos = {t.at("row").get<int>(), t.at("col").get<int>()};
        tile.meta.modified = t.at("modified").get<bool>();
        tile.meta.nucleus_areas = t.at("nucleus_areas").get<std::vector<double>>();
        wsi.tiles.push_back(std::move(tile));
      }
      validate(wsi);
      wsis.push_back(std::move(wsi));
    }
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  return wsis;
}

}  // namespace confbench::io
