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

#include "pathforge/patch_grid.h"

#include <algorithm>
#include <cmath>

#include "binary_io.h"
#include "json.hpp"
#include "pathforge/error.h"

namespace pathforge {
namespace {

using nlohmann::json;

constexpr char kMagic[] = "PGRD";
constexpr uint32_t kVersion = 1;

json ParamsToJson(const PatchParams& p) {
  return {{"patch_size", p.patch_size},
          {"target_magnification", p.target_magnification},
          {"overlap", p.overlap},
          {"min_tissue_frac", p.min_tissue_frac}};
}

PatchParams ParamsFromJson(const json& j) {
  PatchParams p;
  p.patch_size = j.at("patch_size").get<int>();
  p.target_magnification = j.at("target_magnification").get<double>();
  p.overlap = j.at("overlap").get<int>();
  p.min_tissue_frac = j.at("min_tissue_frac").get<double>();
  return p;
}

}  // namespace

void PatchParams::Validate() const {
  if (patch_size <= 0) Fail(ErrorCode::kInvalidArgument, "patch_size must be positive");
  if (overlap < 0 || overlap >= patch_size) {
    Fail(ErrorCode::kInvalidArgument, "overlap must lie in [0, patch_size)");
  }
  if (!(min_tissue_frac >= 0.0 && min_tissue_frac <= 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "min_tissue_frac must lie in [0, 1]");
  }
  if (!(target_magnification > 0.0) || !std::isfinite(target_magnification)) {
    Fail(ErrorCode::kInvalidArgument, "target magnification must be positive");
  }
}

PatchGrid PlanGrid(const SlidePyramid& slide, const TissueMask& mask,
                   const MagInfo& mag, const PatchParams& params) {
  params.Validate();
  if (!mask.slide_id.empty() && !slide.slide_id().empty() &&
      mask.slide_id != slide.slide_id()) {
    Fail(ErrorCode::kInvalidArgument,
         "mask belongs to " + mask.slide_id + ", not " + slide.slide_id());
  }
  if (mag.base_magnification <= 0) {
    Fail(ErrorCode::kInvalidArgument, "base magnification must be positive");
  }
  if (params.target_magnification > mag.base_magnification) {
    Fail(ErrorCode::kMagnificationUnavailable,
         "target magnification exceeds the slide's base magnification");
  }

  const double ratio = mag.base_magnification / params.target_magnification;
  PatchGrid grid;
  grid.slide_id = slide.slide_id();
  grid.params = params;
  grid.level0_patch_extent = std::llround(params.patch_size * ratio);
  grid.step = std::max<int64_t>(1, std::llround((params.patch_size - params.overlap) * ratio));

  grid.read_level = 0;
  for (int i = 0; i < slide.level_count(); ++i) {
    if (slide.level(i).downsample <= ratio) grid.read_level = i;
  }
  grid.resize_factor = ratio / slide.level(grid.read_level).downsample;

  const int64_t extent = grid.level0_patch_extent;
  const double e = static_cast<double>(extent);
  for (int64_t y = 0; y + extent <= slide.height(); y += grid.step) {
    for (int64_t x = 0; x + extent <= slide.width(); x += grid.step) {
      const Rect cell{static_cast<double>(x), static_cast<double>(y), e, e};
      if (TissueFraction(mask, cell) >= params.min_tissue_frac) {
        grid.coords.push_back({x, y});
      }
    }
  }
  if (grid.coords.empty()) {
    Fail(ErrorCode::kNoPatches, "no lattice cell reaches the tissue threshold");
  }
  return grid;
}

RasterImage LoadPatch(const SlidePyramid& slide, const PatchGrid& grid,
                      size_t index) {
  if (index >= grid.coords.size()) {
    Fail(ErrorCode::kBadIndex, "patch index " + std::to_string(index) +
                                   " out of range (" +
                                   std::to_string(grid.coords.size()) + " patches)");
  }
  const PatchCoord& c = grid.coords[index];
  const double ds = slide.level(grid.read_level).downsample;
  const int side = std::max<int>(
      1, static_cast<int>(std::llround(static_cast<double>(grid.level0_patch_extent) / ds)));
  RasterImage raw = ReadRegion(slide, grid.read_level, c.x, c.y, side, side);
  const int ps = grid.params.patch_size;
  if (side == ps) return raw;
  return ResizeArea(raw, ps, ps);
}

void SaveGrid(const PatchGrid& grid, const std::filesystem::path& path) {
  if (grid.coords.empty()) {
    Fail(ErrorCode::kNoPatches, "refusing to save a grid without coordinates");
  }
  if (!std::is_sorted(grid.coords.begin(), grid.coords.end()) ||
      std::adjacent_find(grid.coords.begin(), grid.coords.end()) != grid.coords.end()) {
    Fail(ErrorCode::kInvalidArgument, "grid coordinates must be unique and row-major");
  }
  const json header = {{"slide_id", grid.slide_id},
                       {"params", ParamsToJson(grid.params)},
                       {"level0_patch_extent", grid.level0_patch_extent},
                       {"step", grid.step},
                       {"read_level", grid.read_level},
                       {"resize_factor", grid.resize_factor},
                       {"count", grid.coords.size()}};
  internal::ByteWriter w;
  w.Magic(kMagic);
  w.U32(kVersion);
  w.LengthPrefixed(header.dump());
  for (const PatchCoord& c : grid.coords) {
    w.I64(c.x);
    w.I64(c.y);
  }
  internal::AtomicWrite(path, w.buffer());
}

PatchGrid LoadGrid(const std::filesystem::path& path) {
  const std::vector<uint8_t> data = internal::ReadWholeFile(path);
  internal::ByteReader r(data.data(), data.size(), ErrorCode::kTruncatedFile);
  if (!r.Magic(kMagic)) Fail(ErrorCode::kBadMagic, path.string() + " is not a PGRD file");
  const uint32_t version = r.U32();
  if (version != kVersion) {
    Fail(ErrorCode::kVersionMismatch, "PGRD version " + std::to_string(version));
  }
  const uint32_t header_len = r.U32();
  const std::string text = r.String(header_len);

  PatchGrid grid;
  uint64_t count = 0;
  try {
    const json h = json::parse(text);
    grid.slide_id = h.at("slide_id").get<std::string>();
    grid.params = ParamsFromJson(h.at("params"));
    grid.level0_patch_extent = h.at("level0_patch_extent").get<int64_t>();
    grid.step = h.at("step").get<int64_t>();
    grid.read_level = h.at("read_level").get<int>();
    grid.resize_factor = h.at("resize_factor").get<double>();
    count = h.at("count").get<uint64_t>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kTruncatedFile, std::string("unreadable PGRD header: ") + e.what());
  }
  if (r.remaining() != count * 16) {
    Fail(ErrorCode::kTruncatedFile,
         "header declares " + std::to_string(count) + " records, file holds " +
             std::to_string(r.remaining() / 16) + " (+" +
             std::to_string(r.remaining() % 16) + " bytes)");
  }
  grid.coords.resize(count);
  for (PatchCoord& c : grid.coords) {
    c.x = r.I64();
    c.y = r.I64();
  }
  return grid;
}

}  // namespace pathforge
