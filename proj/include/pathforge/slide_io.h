// Copyright 2026 The Pathforge Authors. All Rights Reserved.
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

#ifndef PATHFORGE_SLIDE_IO_H_
#define PATHFORGE_SLIDE_IO_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pathforge/raster.h"

namespace pathforge {

using Metadata = std::map<std::string, std::string>;

struct LevelInfo {
  int level = 0;
  int width = 0;
  int height = 0;
  double downsample = 1.0;  // relative to level 0
};

enum class MagSource { kMetadataMpp, kMetadataObjective, kUserOverride };

std::string_view MagSourceName(MagSource source);

struct MagInfo {
  double mpp = 0.0;  // microns per pixel at level 0
  int base_magnification = 0;
  MagSource source = MagSource::kUserOverride;
};

/// Handle to an opened slide. Only the header and tile index are held in
/// memory; pixel data is read on demand with positioned reads, so a handle
/// can be shared by concurrent readers without locking.
///
/// Two on-disk forms are accepted: the tiled SPYR container, and a flat PNG
/// (optionally with a `<stem>.meta.json` sidecar) that is served as a
/// single-level pyramid.
class SlidePyramid {
 public:
  const std::string& slide_id() const { return slide_id_; }
  const std::filesystem::path& path() const { return path_; }
  const std::vector<LevelInfo>& levels() const { return levels_; }
  const LevelInfo& level(int index) const;
  int level_count() const { return static_cast<int>(levels_.size()); }
  int tile_size() const { return tile_size_; }
  const Metadata& metadata() const { return metadata_; }
  bool is_flat() const { return flat_ != nullptr; }
  /// Microns-per-pixel override supplied at open time, if any.
  std::optional<double> mpp_override() const { return mpp_override_; }

  int width() const { return levels_.front().width; }
  int height() const { return levels_.front().height; }

 private:
  struct TileRef {
    uint64_t offset = 0;
    uint64_t length = 0;
  };
  struct FileHandle;
  struct FlatImage;

  friend SlidePyramid OpenSlide(const std::filesystem::path&,
                                std::optional<double>);
  friend RasterImage ReadRegion(const SlidePyramid&, int, int64_t, int64_t,
                                int, int);

  RasterImage DecodeTile(int level, int tx, int ty) const;

  std::string slide_id_;
  std::filesystem::path path_;
  std::vector<LevelInfo> levels_;
  int tile_size_ = 0;
  Metadata metadata_;
  std::optional<double> mpp_override_;
  std::vector<std::vector<TileRef>> tile_index_;  // per level, row-major
  std::shared_ptr<const FileHandle> file_;
  std::shared_ptr<FlatImage> flat_;
};

/// Opens an SPYR container or a flat PNG. Throws MissingFile, BadMagic,
/// VersionMismatch, CorruptIndex or InconsistentPyramid.
SlidePyramid OpenSlide(const std::filesystem::path& path,
                       std::optional<double> mpp_override = std::nullopt);

/// Reads a w x h region at `level`; (x, y) are level-0 coordinates mapped
/// to the level through its downsample. Pixels outside the level are white.
RasterImage ReadRegion(const SlidePyramid& slide, int level, int64_t x,
                       int64_t y, int w, int h);

/// Resolution heuristics, first hit wins: explicit override, then the
/// slide's open-time override, then metadata "mpp_x"/"mpp_y", then
/// metadata "objective_power". Throws UnknownMagnification otherwise.
MagInfo InferMagnification(const SlidePyramid& slide,
                           std::optional<double> mpp_override = std::nullopt);

/// Nearest standard objective for a given mpp (log-space buckets
/// 80x:0.125, 40x:0.25, 20x:0.5, 10x:1, 5x:2).
int MagnificationForMpp(double mpp);
double MppForMagnification(int magnification);

struct Thumbnail {
  RasterImage image;
  double scale = 1.0;  // level-0 pixels per thumbnail pixel
  int source_level = 0;
};

Thumbnail BuildThumbnail(const SlidePyramid& slide, int max_dim);

/// Width/height BuildThumbnail produces for a given level-0 size.
std::pair<int, int> ThumbnailSize(int level0_width, int level0_height,
                                  int max_dim);

/// Writes an SPYR container. Level k+1 is the 2x2 block mean of level k
/// (odd trailing rows/columns dropped); levels stop early once a further
/// halving would reach zero pixels. Returns the number of levels written.
int WritePyramid(const RasterImage& image, int tile_size, int n_levels,
                 const Metadata& metadata, const std::filesystem::path& path,
                 const std::string& slide_id = {});

/// Writes `image` as a flat PNG slide plus its `<stem>.meta.json` sidecar.
void WriteFlatSlide(const RasterImage& image, const Metadata& metadata,
                    const std::filesystem::path& png_path);

/// Decodes a whole level into one buffer (tile-free reference path).
RasterImage ReadLevel(const SlidePyramid& slide, int level);

}  // namespace pathforge

#endif  // PATHFORGE_SLIDE_IO_H_
