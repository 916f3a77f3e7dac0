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

#ifndef PATHFORGE_RASTER_H_
#define PATHFORGE_RASTER_H_

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace pathforge {

/// 8-bit RGB, row-major, interleaved.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  RasterImage() = default;
  RasterImage(int w, int h, uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t* at(int x, int y) {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  bool operator==(const RasterImage&) const = default;
};

/// Single-channel 8-bit raster. Also used for binary masks (0 / 1).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  bool operator==(const GrayImage&) const = default;
};

/// Area-averaging resize. Each output pixel is the coverage-weighted mean of
/// the source pixels under its footprint, rounded half up. Integral factors
/// use exact integer block sums, so a 2x reduction is the plain 2x2 mean.
RasterImage ResizeArea(const RasterImage& src, int out_width, int out_height);

RasterImage Crop(const RasterImage& src, int x, int y, int w, int h);

RasterImage ReadPng(const std::filesystem::path& path);
void WritePng(const std::filesystem::path& path, const RasterImage& image);
GrayImage ReadPngGray(const std::filesystem::path& path);
void WritePngGray(const std::filesystem::path& path, const GrayImage& image);

/// Width/height from the PNG header without decoding pixels.
std::pair<int, int> PngDimensions(const std::filesystem::path& path);

}  // namespace pathforge

#endif  // PATHFORGE_RASTER_H_
