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

#include "pathforge/raster.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pathforge/error.h"

namespace pathforge {
namespace {

struct Tap {
  int index;
  double weight;
};

// Footprint of each output sample on the source axis, in source pixels.
std::vector<std::vector<Tap>> AxisTaps(int in_size, int out_size) {
  std::vector<std::vector<Tap>> taps(out_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double lo = o * ratio;
    const double hi = (o + 1) * ratio;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in_size - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int i = first; i <= last; ++i) {
      const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (w > 0) taps[o].push_back({i, w});
    }
  }
  return taps;
}

RasterImage ResizeIntegral(const RasterImage& src, int fx, int fy) {
  const int out_w = src.width / fx;
  const int out_h = src.height / fy;
  RasterImage out(out_w, out_h);
  const uint32_t n = static_cast<uint32_t>(fx) * fy;
  std::vector<uint32_t> acc(static_cast<size_t>(out_w) * 3);
  for (int oy = 0; oy < out_h; ++oy) {
    std::fill(acc.begin(), acc.end(), 0);
    for (int sy = oy * fy; sy < (oy + 1) * fy; ++sy) {
      const uint8_t* row = src.at(0, sy);
      for (int ox = 0; ox < out_w; ++ox) {
        uint32_t* a = &acc[static_cast<size_t>(ox) * 3];
        const uint8_t* p = row + static_cast<size_t>(ox) * fx * 3;
        for (int k = 0; k < fx; ++k, p += 3) {
          a[0] += p[0];
          a[1] += p[1];
          a[2] += p[2];
        }
      }
    }
    uint8_t* dst = out.at(0, oy);
    for (size_t i = 0; i < acc.size(); ++i) {
      dst[i] = static_cast<uint8_t>((acc[i] + n / 2) / n);
    }
  }
  return out;
}

}  // namespace

RasterImage ResizeArea(const RasterImage& src, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0) {
    Fail(ErrorCode::kInvalidArgument, "resize target must be positive");
  }
  if (out_width == src.width && out_height == src.height) return src;
  if (src.width % out_width == 0 && src.height % out_height == 0) {
    return ResizeIntegral(src, src.width / out_width, src.height / out_height);
  }

  const auto xtaps = AxisTaps(src.width, out_width);
  const auto ytaps = AxisTaps(src.height, out_height);
  const double norm = (static_cast<double>(src.width) / out_width) *
                      (static_cast<double>(src.height) / out_height);

  // Horizontal pass into doubles, then vertical; one rounding at the end.
  std::vector<double> rows(static_cast<size_t>(src.height) * out_width * 3);
  for (int y = 0; y < src.height; ++y) {
    const uint8_t* row = src.at(0, y);
    double* dst = &rows[static_cast<size_t>(y) * out_width * 3];
    for (int ox = 0; ox < out_width; ++ox) {
      double r = 0, g = 0, b = 0;
      for (const Tap& t : xtaps[ox]) {
        const uint8_t* p = row + static_cast<size_t>(t.index) * 3;
        r += t.weight * p[0];
        g += t.weight * p[1];
        b += t.weight * p[2];
      }
      dst[ox * 3] = r;
      dst[ox * 3 + 1] = g;
      dst[ox * 3 + 2] = b;
    }
  }
  RasterImage out(out_width, out_height);
  for (int oy = 0; oy < out_height; ++oy) {
    uint8_t* dst = out.at(0, oy);
    for (int ox = 0; ox < out_width * 3; ++ox) {
      double v = 0;
      for (const Tap& t : ytaps[oy]) {
        v += t.weight * rows[static_cast<size_t>(t.index) * out_width * 3 + ox];
      }
      dst[ox] = static_cast<uint8_t>(
          std::clamp(std::floor(v / norm + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

RasterImage Crop(const RasterImage& src, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > src.width ||
      y + h > src.height) {
    Fail(ErrorCode::kInvalidArgument, "crop rectangle outside image");
  }
  RasterImage out(w, h);
  for (int row = 0; row < h; ++row) {
    std::memcpy(out.at(0, row), src.at(x, y + row), static_cast<size_t>(w) * 3);
  }
  return out;
}

namespace {

template <typename Image>
Image ReadPngAs(const std::filesystem::path& path, png_uint_32 format,
                int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    Fail(ErrorCode::kIoFailure, "cannot read PNG " + path.string() + ": " +
                                    img.message);
  }
  img.format = format;
  Image out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  auto& buffer = [&]() -> std::vector<uint8_t>& {
    if constexpr (requires { out.pixels; }) {
      return out.pixels;
    } else {
      return out.data;
    }
  }();
  buffer.resize(static_cast<size_t>(img.width) * img.height * channels);
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    Fail(ErrorCode::kIoFailure, "cannot decode PNG " + path.string());
  }
  return out;
}

void WritePngRaw(const std::filesystem::path& path, int w, int h,
                 png_uint_32 format, const uint8_t* data) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    Fail(ErrorCode::kIoFailure, "cannot write PNG " + path.string());
  }
}

}  // namespace

RasterImage ReadPng(const std::filesystem::path& path) {
  return ReadPngAs<RasterImage>(path, PNG_FORMAT_RGB, 3);
}

void WritePng(const std::filesystem::path& path, const RasterImage& image) {
  WritePngRaw(path, image.width, image.height, PNG_FORMAT_RGB,
              image.pixels.data());
}

GrayImage ReadPngGray(const std::filesystem::path& path) {
  return ReadPngAs<GrayImage>(path, PNG_FORMAT_GRAY, 1);
}

void WritePngGray(const std::filesystem::path& path, const GrayImage& image) {
  WritePngRaw(path, image.width, image.height, PNG_FORMAT_GRAY,
              image.data.data());
}

std::pair<int, int> PngDimensions(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    Fail(ErrorCode::kIoFailure, "cannot read PNG header " + path.string());
  }
  std::pair<int, int> dims{static_cast<int>(img.width),
                           static_cast<int>(img.height)};
  png_image_free(&img);
  return dims;
}

}  // namespace pathforge
