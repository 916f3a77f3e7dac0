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

#ifndef PATHFORGE_PATCH_GRID_H_
#define PATHFORGE_PATCH_GRID_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathforge/raster.h"
#include "pathforge/slide_io.h"
#include "pathforge/tissue_seg.h"

namespace pathforge {

struct PatchParams {
  int patch_size = 256;              // pixels at the target magnification
  double target_magnification = 20;  // objective power
  int overlap = 0;                   // pixels at the target magnification
  double min_tissue_frac = 0.25;

  void Validate() const;
  bool operator==(const PatchParams&) const = default;
};

struct PatchCoord {
  int64_t x = 0;  // level-0 top-left
  int64_t y = 0;
  bool operator==(const PatchCoord&) const = default;
  auto operator<=>(const PatchCoord& o) const {
    return y != o.y ? y <=> o.y : x <=> o.x;  // row-major
  }
};

/// Patch coordinates only; pixels are read on demand by LoadPatch.
struct PatchGrid {
  std::string slide_id;
  PatchParams params;
  int64_t level0_patch_extent = 0;
  int64_t step = 0;
  int read_level = 0;
  double resize_factor = 1.0;
  std::vector<PatchCoord> coords;

  bool operator==(const PatchGrid&) const = default;
};

/// Walks the lattice anchored at (0, 0) over the full level-0 extent and
/// keeps cells whose tissue fraction reaches params.min_tissue_frac.
/// Throws MagnificationUnavailable or NoPatches.
PatchGrid PlanGrid(const SlidePyramid& slide, const TissueMask& mask,
                   const MagInfo& mag, const PatchParams& params);

/// patch_size x patch_size image for coords[index], read at read_level and
/// area-resized. Throws BadIndex.
RasterImage LoadPatch(const SlidePyramid& slide, const PatchGrid& grid,
                      size_t index);

/// PGRD: "PGRD" | u32 version | u32 header length | header JSON |
/// count x (i64 x, i64 y).
void SaveGrid(const PatchGrid& grid, const std::filesystem::path& path);
PatchGrid LoadGrid(const std::filesystem::path& path);

}  // namespace pathforge

#endif  // PATHFORGE_PATCH_GRID_H_
