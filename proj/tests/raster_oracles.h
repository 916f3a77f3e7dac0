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

// Reference implementations for image-side checks: a from-scratch SPYR
// level decoder, the Otsu variance scan and a per-pixel patch lattice.

#ifndef PATHFORGE_TESTS_RASTER_ORACLES_H_
#define PATHFORGE_TESTS_RASTER_ORACLES_H_

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "pathforge/patch_grid.h"
#include "pathforge/raster.h"
#include "pathforge/tissue_seg.h"

namespace pathforge::oracle {

// Decodes every tile of one level straight from the file bytes and pastes
// them into a full-level image. Shares no code with the slide reader.
inline RasterImage SpyrDecodeLevel(const std::filesystem::path& path, int level) {
  std::ifstream in(path, std::ios::binary);
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  auto u32 = [&](size_t at) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes.at(at + static_cast<size_t>(i));
    return v;
  };
  auto u64 = [&](size_t at) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes.at(at + static_cast<size_t>(i));
    return v;
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "SPYR", 4) != 0) {
    throw std::runtime_error("not a SPYR file");
  }
  const uint32_t header_len = u32(8);
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  const int ts = header["tile_size"];
  size_t index = 12 + header_len;
  for (int l = 0; l < level; ++l) {
    const int w = header["levels"][static_cast<size_t>(l)]["w"];
    const int h = header["levels"][static_cast<size_t>(l)]["h"];
    index += static_cast<size_t>((w + ts - 1) / ts) * static_cast<size_t>((h + ts - 1) / ts) * 16;
  }
  const int w = header["levels"][static_cast<size_t>(level)]["w"];
  const int h = header["levels"][static_cast<size_t>(level)]["h"];
  const int cols = (w + ts - 1) / ts, rows = (h + ts - 1) / ts;
  RasterImage out(w, h);
  std::vector<uint8_t> tile(static_cast<size_t>(ts) * ts * 3);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const size_t entry = index + static_cast<size_t>(r * cols + c) * 16;
      const uint64_t offset = u64(entry), length = u64(entry + 8);
      uLongf dest_len = static_cast<uLongf>(tile.size());
      if (uncompress(tile.data(), &dest_len, bytes.data() + offset, static_cast<uLong>(length)) != Z_OK ||
          dest_len != tile.size()) {
        throw std::runtime_error("bad tile");
      }
      for (int y = 0; y < ts && r * ts + y < h; ++y) {
        for (int x = 0; x < ts && c * ts + x < w; ++x) {
          std::memcpy(out.at(c * ts + x, r * ts + y), &tile[(static_cast<size_t>(y) * ts + x) * 3], 3);
        }
      }
    }
  }
  return out;
}

// Crop with white fill outside the image.
inline RasterImage CropWithFill(const RasterImage& src, int64_t x, int64_t y, int w, int h) {
  RasterImage out(w, h, 255);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const int64_t sx = x + col, sy = y + row;
      if (sx < 0 || sy < 0 || sx >= src.width || sy >= src.height) continue;
      std::memcpy(out.at(col, row), src.at(static_cast<int>(sx), static_cast<int>(sy)), 3);
    }
  }
  return out;
}

// Direct evaluation of the between-class variance, first maximum wins.
inline int BruteForceOtsu(const Histogram& hist) {
  double total = 0;
  for (uint64_t c : hist) total += static_cast<double>(c);
  int best = -1;
  double best_v = -1;
  for (int t = 0; t < 255; ++t) {
    double n0 = 0, s0 = 0, n1 = 0, s1 = 0;
    for (int i = 0; i <= t; ++i) { n0 += hist[i]; s0 += static_cast<double>(hist[i]) * i; }
    for (int i = t + 1; i < 256; ++i) { n1 += hist[i]; s1 += static_cast<double>(hist[i]) * i; }
    if (n0 == 0 || n1 == 0) continue;
    const double w0 = n0 / total, w1 = n1 / total;
    const double d = s0 / n0 - s1 / n1;
    const double v = w0 * w1 * d * d;
    if (v > best_v) { best_v = v; best = t; }
  }
  return best;
}

// Fraction of the cell covered by tissue pixels, summed over every mask
// pixel with no windowing. Power-of-two scales keep every term exact.
inline double BruteFraction(const TissueMask& m, int64_t x, int64_t y, int64_t extent) {
  double covered = 0;
  for (int r = 0; r < m.mask.height; ++r) {
    for (int c = 0; c < m.mask.width; ++c) {
      if (!m.mask.at(c, r)) continue;
      const double ox = std::min((c + 1) * m.scale, double(x + extent)) -
                        std::max(c * m.scale, double(x));
      const double oy = std::min((r + 1) * m.scale, double(y + extent)) -
                        std::max(r * m.scale, double(y));
      if (ox > 0 && oy > 0) covered += ox * oy;
    }
  }
  return covered / (double(extent) * double(extent));
}

// Every level-0 position that is a multiple of the step and fits.
inline std::vector<PatchCoord> BruteGrid(int64_t width, int64_t height, const TissueMask& m,
                                         int base, const PatchParams& p) {
  const double ratio = base / p.target_magnification;
  const int64_t extent = std::llround(p.patch_size * ratio);
  const int64_t step = std::llround((p.patch_size - p.overlap) * ratio);
  std::vector<PatchCoord> out;
  for (int64_t y = 0; y <= height - extent; ++y) {
    if (y % step) continue;
    for (int64_t x = 0; x <= width - extent; ++x) {
      if (x % step) continue;
      if (BruteFraction(m, x, y, extent) >= p.min_tissue_frac) out.push_back({x, y});
    }
  }
  return out;
}

}  // namespace pathforge::oracle

#endif  // PATHFORGE_TESTS_RASTER_ORACLES_H_
