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

#include "pathforge/slide_io.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

#include "json.hpp"

#include "binary_io.h"
#include "pathforge/error.h"

namespace pathforge {

using nlohmann::json;

namespace {

constexpr char kSpyrMagic[] = "SPYR";
constexpr uint32_t kSpyrVersion = 1;
constexpr uint8_t kPngSignature[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

struct MagBucket {
  int magnification;
  double mpp;
};
constexpr std::array<MagBucket, 5> kMagTable = {{
    {80, 0.125}, {40, 0.25}, {20, 0.5}, {10, 1.0}, {5, 2.0},
}};

bool IsPowerOfTwo(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::filesystem::path SidecarPath(const std::filesystem::path& png) {
  auto p = png;
  p.replace_extension(".meta.json");
  return p;
}

std::optional<double> ParsePositive(const Metadata& md, const std::string& key) {
  auto it = md.find(key);
  if (it == md.end()) return std::nullopt;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used == 0 || !std::isfinite(v) || v <= 0) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

int64_t FloorDiv(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

RasterImage HalveImage(const RasterImage& src) {
  const int w = src.width / 2;
  const int h = src.height / 2;
  if (src.width == 2 * w && src.height == 2 * h) return ResizeArea(src, w, h);
  return ResizeArea(Crop(src, 0, 0, 2 * w, 2 * h), w, h);
}

}  // namespace

std::string_view MagSourceName(MagSource source) {
  switch (source) {
    case MagSource::kMetadataMpp: return "metadata_mpp";
    case MagSource::kMetadataObjective: return "metadata_objective";
    case MagSource::kUserOverride: return "user_override";
  }
  return "unknown";
}

struct SlidePyramid::FileHandle {
  int fd = -1;
  explicit FileHandle(int f) : fd(f) {}
  ~FileHandle() {
    if (fd >= 0) ::close(fd);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;

  void ReadAt(uint64_t offset, void* out, size_t n) const {
    auto* p = static_cast<uint8_t*>(out);
    size_t done = 0;
    while (done < n) {
      const ssize_t got = ::pread(fd, p + done, n - done,
                                  static_cast<off_t>(offset + done));
      if (got <= 0) Fail(ErrorCode::kCorruptIndex, "read past end of container");
      done += static_cast<size_t>(got);
    }
  }
};

struct SlidePyramid::FlatImage {
  std::filesystem::path path;
  std::once_flag once;
  RasterImage image;

  const RasterImage& Get() {
    std::call_once(once, [this] { image = ReadPng(path); });
    return image;
  }
};

const LevelInfo& SlidePyramid::level(int index) const {
  if (index < 0 || index >= level_count()) {
    Fail(ErrorCode::kBadLevel, "level " + std::to_string(index) +
                                   " not in [0, " +
                                   std::to_string(level_count()) + ")");
  }
  return levels_[static_cast<size_t>(index)];
}

SlidePyramid OpenSlide(const std::filesystem::path& path,
                       std::optional<double> mpp_override) {
  if (!std::filesystem::is_regular_file(path)) {
    Fail(ErrorCode::kMissingFile, path.string());
  }
  if (mpp_override && (!std::isfinite(*mpp_override) || *mpp_override <= 0)) {
    Fail(ErrorCode::kInvalidArgument, "mpp override must be positive");
  }

  SlidePyramid slide;
  slide.path_ = path;
  slide.mpp_override_ = mpp_override;

  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) Fail(ErrorCode::kMissingFile, path.string());
  auto handle = std::make_shared<const SlidePyramid::FileHandle>(fd);
  struct stat st {};
  ::fstat(fd, &st);
  const auto file_size = static_cast<uint64_t>(st.st_size);

  std::array<uint8_t, 12> prefix{};
  if (file_size < 8) Fail(ErrorCode::kBadMagic, path.string());
  handle->ReadAt(0, prefix.data(), std::min<uint64_t>(file_size, prefix.size()));

  if (std::memcmp(prefix.data(), kPngSignature, sizeof(kPngSignature)) == 0) {
    const auto [w, h] = PngDimensions(path);
    slide.slide_id_ = path.stem().string();
    slide.levels_.push_back({0, w, h, 1.0});
    slide.tile_size_ = 256;  // logical; flat images have no tiles
    slide.flat_ = std::make_shared<SlidePyramid::FlatImage>();
    slide.flat_->path = path;
    const auto sidecar = SidecarPath(path);
    if (std::filesystem::exists(sidecar)) {
      std::ifstream in(sidecar);
      json meta;
      try {
        meta = json::parse(in);
      } catch (const json::exception& e) {
        Fail(ErrorCode::kCorruptIndex, "bad sidecar " + sidecar.string());
      }
      for (const auto& [key, value] : meta.items()) {
        slide.metadata_[key] =
            value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
    return slide;
  }

  if (std::memcmp(prefix.data(), kSpyrMagic, 4) != 0) {
    Fail(ErrorCode::kBadMagic, path.string());
  }
  if (file_size < 12) Fail(ErrorCode::kCorruptIndex, "truncated header");
  uint32_t version, header_len;
  std::memcpy(&version, prefix.data() + 4, 4);
  std::memcpy(&header_len, prefix.data() + 8, 4);
  if (version != kSpyrVersion) {
    Fail(ErrorCode::kVersionMismatch,
         "SPYR version " + std::to_string(version));
  }
  if (12 + static_cast<uint64_t>(header_len) > file_size) {
    Fail(ErrorCode::kCorruptIndex, "header extends past end of file");
  }
  std::string header_text(header_len, '\0');
  handle->ReadAt(12, header_text.data(), header_len);
  json header;
  try {
    header = json::parse(header_text);
    slide.slide_id_ = header.at("slide_id").get<std::string>();
    slide.tile_size_ = header.at("tile_size").get<int>();
    int index = 0;
    for (const auto& lv : header.at("levels")) {
      LevelInfo info;
      info.level = index;
      info.width = lv.at("w").get<int>();
      info.height = lv.at("h").get<int>();
      info.downsample = std::ldexp(1.0, index);
      slide.levels_.push_back(info);
      ++index;
    }
    if (header.contains("metadata")) {
      for (const auto& [key, value] : header["metadata"].items()) {
        slide.metadata_[key] =
            value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kCorruptIndex, std::string("bad header: ") + e.what());
  }

  if (!IsPowerOfTwo(slide.tile_size_) || slide.tile_size_ < 64) {
    Fail(ErrorCode::kInconsistentPyramid,
         "tile_size must be a power of two >= 64");
  }
  if (slide.levels_.empty()) {
    Fail(ErrorCode::kInconsistentPyramid, "no levels");
  }
  for (size_t i = 0; i < slide.levels_.size(); ++i) {
    const auto& lv = slide.levels_[i];
    if (lv.width <= 0 || lv.height <= 0) {
      Fail(ErrorCode::kInconsistentPyramid,
           "level " + std::to_string(i) + " has empty dimensions");
    }
    if (i > 0) {
      const auto& prev = slide.levels_[i - 1];
      if (lv.width > (prev.width + 1) / 2 + 1 ||
          lv.height > (prev.height + 1) / 2 + 1) {
        Fail(ErrorCode::kInconsistentPyramid,
             "level " + std::to_string(i) + " is not a 2x reduction");
      }
    }
  }

  // Tile index follows the header directly.
  uint64_t n_tiles = 0;
  for (const auto& lv : slide.levels_) {
    const uint64_t tx = (lv.width + slide.tile_size_ - 1) / slide.tile_size_;
    const uint64_t ty = (lv.height + slide.tile_size_ - 1) / slide.tile_size_;
    n_tiles += tx * ty;
  }
  const uint64_t index_start = 12 + header_len;
  const uint64_t data_start = index_start + n_tiles * 16;
  if (data_start > file_size) {
    Fail(ErrorCode::kCorruptIndex, "tile index extends past end of file");
  }
  std::vector<uint8_t> raw(n_tiles * 16);
  if (!raw.empty()) handle->ReadAt(index_start, raw.data(), raw.size());
  internal::ByteReader reader(raw.data(), raw.size(), ErrorCode::kCorruptIndex);
  for (const auto& lv : slide.levels_) {
    const uint64_t tx = (lv.width + slide.tile_size_ - 1) / slide.tile_size_;
    const uint64_t ty = (lv.height + slide.tile_size_ - 1) / slide.tile_size_;
    std::vector<SlidePyramid::TileRef> refs(tx * ty);
    for (auto& ref : refs) {
      ref.offset = reader.U64();
      ref.length = reader.U64();
      if (ref.length == 0 || ref.offset < data_start ||
          ref.offset > file_size || ref.length > file_size - ref.offset) {
        Fail(ErrorCode::kCorruptIndex,
             "tile at offset " + std::to_string(ref.offset) +
                 " is outside the container");
      }
    }
    slide.tile_index_.push_back(std::move(refs));
  }
  slide.file_ = std::move(handle);
  return slide;
}

RasterImage SlidePyramid::DecodeTile(int level, int tx, int ty) const {
  const auto& lv = levels_[static_cast<size_t>(level)];
  const int tiles_x = (lv.width + tile_size_ - 1) / tile_size_;
  const TileRef& ref =
      tile_index_[static_cast<size_t>(level)][static_cast<size_t>(ty) * tiles_x + tx];
  std::vector<uint8_t> compressed(ref.length);
  file_->ReadAt(ref.offset, compressed.data(), compressed.size());
  RasterImage tile;
  tile.width = tile.height = tile_size_;
  tile.pixels.resize(static_cast<size_t>(tile_size_) * tile_size_ * 3);
  uLongf out_len = static_cast<uLongf>(tile.pixels.size());
  const int rc = uncompress(tile.pixels.data(), &out_len, compressed.data(),
                            static_cast<uLong>(compressed.size()));
  if (rc != Z_OK || out_len != tile.pixels.size()) {
    Fail(ErrorCode::kCorruptIndex,
         "tile (" + std::to_string(level) + "," + std::to_string(tx) + "," +
             std::to_string(ty) + ") does not decompress to a full tile");
  }
  return tile;
}

RasterImage ReadRegion(const SlidePyramid& slide, int level, int64_t x,
                       int64_t y, int w, int h) {
  const LevelInfo& lv = slide.level(level);
  if (w <= 0 || h <= 0) Fail(ErrorCode::kZeroArea, "region has zero area");

  const auto ds = static_cast<int64_t>(std::llround(lv.downsample));
  const int64_t lx = FloorDiv(x, ds);
  const int64_t ly = FloorDiv(y, ds);
  RasterImage out(w, h, 255);

  // Intersection with the level, in level coordinates.
  const int64_t x0 = std::max<int64_t>(lx, 0);
  const int64_t y0 = std::max<int64_t>(ly, 0);
  const int64_t x1 = std::min<int64_t>(lx + w, lv.width);
  const int64_t y1 = std::min<int64_t>(ly + h, lv.height);
  if (x0 >= x1 || y0 >= y1) return out;

  if (slide.flat_) {
    const RasterImage& img = slide.flat_->Get();
    for (int64_t row = y0; row < y1; ++row) {
      std::memcpy(out.at(static_cast<int>(x0 - lx), static_cast<int>(row - ly)),
                  img.at(static_cast<int>(x0), static_cast<int>(row)),
                  static_cast<size_t>(x1 - x0) * 3);
    }
    return out;
  }

  const int ts = slide.tile_size_;
  for (int64_t ty = y0 / ts; ty <= (y1 - 1) / ts; ++ty) {
    for (int64_t tx = x0 / ts; tx <= (x1 - 1) / ts; ++tx) {
      const RasterImage tile =
          slide.DecodeTile(level, static_cast<int>(tx), static_cast<int>(ty));
      const int64_t cx0 = std::max(x0, tx * ts);
      const int64_t cx1 = std::min(x1, (tx + 1) * ts);
      const int64_t cy0 = std::max(y0, ty * ts);
      const int64_t cy1 = std::min(y1, (ty + 1) * ts);
      for (int64_t row = cy0; row < cy1; ++row) {
        std::memcpy(
            out.at(static_cast<int>(cx0 - lx), static_cast<int>(row - ly)),
            tile.at(static_cast<int>(cx0 - tx * ts),
                    static_cast<int>(row - ty * ts)),
            static_cast<size_t>(cx1 - cx0) * 3);
      }
    }
  }
  return out;
}

RasterImage ReadLevel(const SlidePyramid& slide, int level) {
  const LevelInfo& lv = slide.level(level);
  return ReadRegion(slide, level, 0, 0, lv.width, lv.height);
}

int MagnificationForMpp(double mpp) {
  int best = kMagTable[0].magnification;
  double best_dist = INFINITY;
  for (const auto& bucket : kMagTable) {
    const double d = std::abs(std::log(mpp) - std::log(bucket.mpp));
    if (d < best_dist) {
      best_dist = d;
      best = bucket.magnification;
    }
  }
  return best;
}

double MppForMagnification(int magnification) {
  for (const auto& bucket : kMagTable) {
    if (bucket.magnification == magnification) return bucket.mpp;
  }
  Fail(ErrorCode::kInvalidArgument,
       "no standard mpp for " + std::to_string(magnification) + "x");
}

MagInfo InferMagnification(const SlidePyramid& slide,
                           std::optional<double> mpp_override) {
  if (!mpp_override) mpp_override = slide.mpp_override();
  if (mpp_override) {
    if (!std::isfinite(*mpp_override) || *mpp_override <= 0) {
      Fail(ErrorCode::kInvalidArgument, "mpp override must be positive");
    }
    return {*mpp_override, MagnificationForMpp(*mpp_override),
            MagSource::kUserOverride};
  }
  if (auto mpp_x = ParsePositive(slide.metadata(), "mpp_x")) {
    double mpp = *mpp_x;
    if (auto mpp_y = ParsePositive(slide.metadata(), "mpp_y")) {
      mpp = 0.5 * (mpp + *mpp_y);
    }
    return {mpp, MagnificationForMpp(mpp), MagSource::kMetadataMpp};
  }
  if (auto objective = ParsePositive(slide.metadata(), "objective_power")) {
    // Snap the objective to the nearest standard bucket in log space.
    const int mag = MagnificationForMpp(10.0 / *objective);
    return {MppForMagnification(mag), mag, MagSource::kMetadataObjective};
  }
  Fail(ErrorCode::kUnknownMagnification,
       "slide " + slide.slide_id() +
           " has no mpp/objective metadata; supply an mpp override");
}

std::pair<int, int> ThumbnailSize(int level0_width, int level0_height,
                                  int max_dim) {
  const int long_side = std::max(level0_width, level0_height);
  if (long_side <= max_dim) return {level0_width, level0_height};
  const double f = static_cast<double>(max_dim) / long_side;
  const int w = level0_width >= level0_height
                    ? max_dim
                    : std::max(1, static_cast<int>(std::lround(level0_width * f)));
  const int h = level0_height > level0_width
                    ? max_dim
                    : std::max(1, static_cast<int>(std::lround(level0_height * f)));
  return {w, h};
}

Thumbnail BuildThumbnail(const SlidePyramid& slide, int max_dim) {
  if (max_dim < 64) Fail(ErrorCode::kInvalidArgument, "max_dim must be >= 64");
  int chosen = 0;
  for (int i = slide.level_count() - 1; i >= 0; --i) {
    const auto& lv = slide.levels()[static_cast<size_t>(i)];
    if (std::max(lv.width, lv.height) >= max_dim) {
      chosen = i;
      break;
    }
  }
  Thumbnail thumb;
  thumb.source_level = chosen;
  RasterImage level_image = ReadLevel(slide, chosen);
  const auto [tw, th] = ThumbnailSize(level_image.width, level_image.height,
                                      max_dim);
  thumb.image = ResizeArea(level_image, tw, th);
  thumb.scale = static_cast<double>(slide.width()) / thumb.image.width;
  return thumb;
}

int WritePyramid(const RasterImage& image, int tile_size, int n_levels,
                 const Metadata& metadata, const std::filesystem::path& path,
                 const std::string& slide_id) {
  if (!IsPowerOfTwo(tile_size) || tile_size < 64) {
    Fail(ErrorCode::kInvalidArgument, "tile_size must be a power of two >= 64");
  }
  if (n_levels < 1) Fail(ErrorCode::kInvalidArgument, "n_levels must be >= 1");
  if (image.width <= 0 || image.height <= 0) {
    Fail(ErrorCode::kInvalidArgument, "empty image");
  }

  std::vector<RasterImage> levels;
  levels.push_back(image);
  while (static_cast<int>(levels.size()) < n_levels) {
    const RasterImage& prev = levels.back();
    if (prev.width / 2 == 0 || prev.height / 2 == 0) break;
    levels.push_back(HalveImage(prev));
  }

  json header;
  header["slide_id"] = slide_id.empty() ? path.stem().string() : slide_id;
  header["tile_size"] = tile_size;
  header["levels"] = json::array();
  for (const auto& lv : levels) {
    header["levels"].push_back({{"w", lv.width}, {"h", lv.height}});
  }
  header["metadata"] = json::object();
  for (const auto& [k, v] : metadata) header["metadata"][k] = v;
  const std::string header_text = header.dump();

  // Compress every tile first; the index needs their lengths.
  std::vector<std::vector<uint8_t>> blobs;
  RasterImage tile(tile_size, tile_size);
  for (const auto& lv : levels) {
    const int tiles_x = (lv.width + tile_size - 1) / tile_size;
    const int tiles_y = (lv.height + tile_size - 1) / tile_size;
    for (int ty = 0; ty < tiles_y; ++ty) {
      for (int tx = 0; tx < tiles_x; ++tx) {
        std::fill(tile.pixels.begin(), tile.pixels.end(), 255);
        const int cw = std::min(tile_size, lv.width - tx * tile_size);
        const int ch = std::min(tile_size, lv.height - ty * tile_size);
        for (int row = 0; row < ch; ++row) {
          std::memcpy(tile.at(0, row),
                      lv.at(tx * tile_size, ty * tile_size + row),
                      static_cast<size_t>(cw) * 3);
        }
        uLongf bound = compressBound(static_cast<uLong>(tile.pixels.size()));
        std::vector<uint8_t> blob(bound);
        if (compress2(blob.data(), &bound, tile.pixels.data(),
                      static_cast<uLong>(tile.pixels.size()), 3) != Z_OK) {
          Fail(ErrorCode::kIoFailure, "zlib compression failed");
        }
        blob.resize(bound);
        blobs.push_back(std::move(blob));
      }
    }
  }

  internal::ByteWriter out;
  out.Magic(kSpyrMagic);
  out.U32(kSpyrVersion);
  out.LengthPrefixed(header_text);
  uint64_t offset = out.size() + blobs.size() * 16;
  for (const auto& blob : blobs) {
    out.U64(offset);
    out.U64(blob.size());
    offset += blob.size();
  }
  for (const auto& blob : blobs) out.Bytes(blob.data(), blob.size());
  internal::AtomicWrite(path, out.buffer());
  return static_cast<int>(levels.size());
}

void WriteFlatSlide(const RasterImage& image, const Metadata& metadata,
                    const std::filesystem::path& png_path) {
  WritePng(png_path, image);
  json meta = json::object();
  for (const auto& [k, v] : metadata) meta[k] = v;
  std::ofstream out(SidecarPath(png_path));
  if (!out) Fail(ErrorCode::kIoFailure, "cannot write sidecar");
  out << meta.dump(2) << "\n";
}

}  // namespace pathforge
