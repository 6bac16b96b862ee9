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

/// @file io.hpp
/// @brief On-disk dataset layout.
///
/// A dataset directory holds `manifest.json` plus one tile pixel store per
/// split (`tiles_train.bin`, `tiles_val.bin`, `tiles_test.bin`).
///
/// Pixel store layout (little-endian):
///
///     offset  size  field
///     0       4     magic "CBTL"
///     4       2     version (u16, currently 1)
///     6       2     tile side n (u16)
///     8       8     tile count (u64)
///     16      ...   tiles, each n*n*3 bytes, RGB, row-major
///
/// The manifest lists every WSI with its label, split, tile count, and the
/// index/byte offset of its first tile inside the split's store, followed by
/// per-tile metadata (grid position, nucleus areas, modified flag).

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "confbench/core.hpp"

namespace confbench::io {

inline constexpr char kTileMagic[4] = {'C', 'B', 'T', 'L'};
inline constexpr std::uint16_t kTileStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderBytes = 16;

void write_tile_store(const std::filesystem::path& path, int tile_size,
                      std::span<const TileImage> tiles);
std::vector<TileImage> read_tile_store(const std::filesystem::path& path);

/// Writes manifest.json and the three split stores into `dir` (created if
/// missing). Existing files are replaced atomically per file.
void write_dataset(const std::filesystem::path& dir, std::span<const Wsi> wsis);
std::vector<Wsi> read_dataset(const std::filesystem::path& dir);

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Little-endian helpers shared by the binary formats.
void put_u16(std::string& out, std::uint16_t v);
void put_u64(std::string& out, std::uint64_t v);
std::uint16_t get_u16(const unsigned char* p);
std::uint64_t get_u64(const unsigned char* p);

}  // namespace confbench::io
