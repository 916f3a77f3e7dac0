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

#include <algorithm>

#include "doctest.h"
#include "pathforge/patch_grid.h"
#include "raster_oracles.h"
#include "test_util.h"

namespace pathforge {
namespace {

using testing::RandomImage;
using testing::TempDir;

TissueMask FullMask(const SlidePyramid& slide, int scale) {
  TissueMask m;
  m.mask = GrayImage(slide.width() / scale, slide.height() / scale, 1);
  m.scale = scale;
  m.slide_id = slide.slide_id();
  return m;
}

MagInfo Base(int mag) { return {10.0 / mag, mag, MagSource::kUserOverride}; }

TEST_CASE("full-tissue mask gives the full lattice") {
  TempDir dir;
  WritePyramid(RasterImage(1024, 1024, 200), 256, 1, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  const PatchGrid grid = PlanGrid(slide, FullMask(slide, 4), Base(20), PatchParams{});
  REQUIRE(grid.coords.size() == 16);
  std::vector<PatchCoord> expected;
  for (int64_t y : {0, 256, 512, 768}) {
    for (int64_t x : {0, 256, 512, 768}) expected.push_back({x, y});
  }
  CHECK(grid.coords == expected);
  CHECK(grid.level0_patch_extent == 256);
  CHECK(grid.step == 256);
  CHECK(grid.read_level == 0);
  CHECK(grid.resize_factor == 1.0);
}

TEST_CASE("base 40x with a 20x target doubles the extent") {
  TempDir dir;
  WritePyramid(RasterImage(1024, 1024, 200), 256, 3, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  const PatchGrid grid = PlanGrid(slide, FullMask(slide, 4), Base(40), PatchParams{});
  CHECK(grid.level0_patch_extent == 512);
  CHECK(grid.step == 512);
  CHECK(grid.read_level == 1);
  CHECK(grid.resize_factor == 1.0);
  CHECK(grid.coords.size() == 4);

  PatchParams p;
  p.target_magnification = 10;
  p.patch_size = 64;
  p.overlap = 16;
  const PatchGrid g2 = PlanGrid(slide, FullMask(slide, 4), Base(40), p);
  CHECK(g2.level0_patch_extent == 256);
  CHECK(g2.step == 192);
  CHECK(g2.read_level == 2);  // deepest level with downsample <= 4

  PatchParams p3;
  p3.target_magnification = 5;
  p3.patch_size = 32;
  const PatchGrid g3 = PlanGrid(slide, FullMask(slide, 4), Base(40), p3);
  CHECK(g3.read_level == 2);
  CHECK(g3.resize_factor == 2.0);
}

TEST_CASE("left-half mask matches the per-cell pixel-count oracle") {
  TempDir dir;
  WritePyramid(RasterImage(1000, 800, 200), 256, 1, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  TissueMask m = FullMask(slide, 4);
  for (int y = 0; y < m.mask.height; ++y) {
    for (int x = m.mask.width / 2; x < m.mask.width; ++x) m.mask.at(x, y) = 0;
  }
  PatchParams p;
  p.patch_size = 96;
  p.min_tissue_frac = 0.5;
  const PatchGrid grid = PlanGrid(slide, m, Base(20), p);
  CHECK(grid.coords == oracle::BruteGrid(slide.width(), slide.height(), m, 20, p));
  // Tissue ends at x = 500: the cell at 480 is 20/96 covered and dropped.
  for (const auto& c : grid.coords) CHECK(c.x <= 384);
}

TEST_CASE("plan_grid equals brute-force enumeration on random masks") {
  TempDir dir;
  const std::vector<std::pair<int, int>> sizes = {{512, 384}, {640, 520}, {776, 600}};
  std::vector<SlidePyramid> slides;
  for (size_t i = 0; i < sizes.size(); ++i) {
    const auto path = dir / ("s" + std::to_string(i) + ".spyr");
    WritePyramid(RasterImage(sizes[i].first, sizes[i].second, 255), 128, 4, {}, path);
    slides.push_back(OpenSlide(path));
  }
  Rng rng(99);
  const int scales[] = {2, 4, 8};
  const int bases[] = {20, 40};
  const double targets[] = {5, 10, 20};
  for (int trial = 0; trial < 40; ++trial) {
    const SlidePyramid& slide = slides[rng.UniformInt(slides.size())];
    const int scale = scales[rng.UniformInt(3)];
    TissueMask m = FullMask(slide, scale);
    // Blocky random mask so fractions spread across [0, 1].
    const int block = 1 + static_cast<int>(rng.UniformInt(6));
    for (int y = 0; y < m.mask.height; ++y) {
      for (int x = 0; x < m.mask.width; ++x) {
        Rng cell(Rng::Derive(trial, static_cast<uint64_t>((y / block) * 1000 + x / block)));
        m.mask.at(x, y) = cell.UniformInt(100) < 45 ? 1 : 0;
      }
    }
    const int base = bases[rng.UniformInt(2)];
    PatchParams p;
    p.target_magnification = targets[rng.UniformInt(3)];
    p.patch_size = 16 * (1 + static_cast<int>(rng.UniformInt(6)));
    p.overlap = static_cast<int>(rng.UniformInt(static_cast<uint64_t>(p.patch_size / 2)));
    p.min_tissue_frac = rng.Uniform(0.0, 1.0);
    CAPTURE(trial);
    const auto expected = oracle::BruteGrid(slide.width(), slide.height(), m, base, p);
    if (expected.empty()) {
      CHECK_ERROR_CODE(PlanGrid(slide, m, Base(base), p), ErrorCode::kNoPatches);
      continue;
    }
    const PatchGrid grid = PlanGrid(slide, m, Base(base), p);
    CHECK(grid.coords == expected);
    CHECK(std::is_sorted(grid.coords.begin(), grid.coords.end()));
    for (const auto& c : grid.coords) {
      CHECK(c.x + grid.level0_patch_extent <= slide.width());
      CHECK(c.y + grid.level0_patch_extent <= slide.height());
    }
  }
}

TEST_CASE("min_tissue_frac monotonicity and disjointness") {
  TempDir dir;
  WritePyramid(RasterImage(768, 768, 255), 256, 1, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  TissueMask m = FullMask(slide, 4);
  Rng rng(5);
  for (int y = 0; y < m.mask.height; ++y) {
    for (int x = 0; x < m.mask.width; ++x) {
      m.mask.at(x, y) = (x / 7 + y / 5) % 3 != 0 || rng.UniformInt(4) == 0;
    }
  }
  PatchParams p;
  p.patch_size = 48;
  std::vector<PatchCoord> prev;
  for (double frac : {1.0, 0.75, 0.5, 0.25, 0.0}) {
    p.min_tissue_frac = frac;
    std::vector<PatchCoord> coords;
    try {
      coords = PlanGrid(slide, m, Base(20), p).coords;
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::kNoPatches);
    }
    CHECK(std::includes(coords.begin(), coords.end(), prev.begin(), prev.end()));
    prev = coords;
  }
  // overlap 0: distinct lattice cells never share a level-0 pixel.
  for (size_t i = 0; i < prev.size(); ++i) {
    for (size_t j = i + 1; j < prev.size(); ++j) {
      const bool overlap_x = std::abs(prev[i].x - prev[j].x) < 48;
      const bool overlap_y = std::abs(prev[i].y - prev[j].y) < 48;
      CHECK_FALSE((overlap_x && overlap_y));
    }
  }
}

TEST_CASE("plan_grid errors") {
  TempDir dir;
  WritePyramid(RasterImage(512, 512, 255), 256, 1, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  PatchParams p;
  p.target_magnification = 40;
  CHECK_ERROR_CODE(PlanGrid(slide, FullMask(slide, 4), Base(20), p),
                   ErrorCode::kMagnificationUnavailable);
  TissueMask empty = FullMask(slide, 4);
  std::fill(empty.mask.data.begin(), empty.mask.data.end(), 0);
  CHECK_ERROR_CODE(PlanGrid(slide, empty, Base(20), PatchParams{}), ErrorCode::kNoPatches);
  p = PatchParams{};
  p.overlap = 256;
  CHECK_ERROR_CODE(PlanGrid(slide, FullMask(slide, 4), Base(20), p),
                   ErrorCode::kInvalidArgument);
}

TEST_CASE("load_patch at native magnification is the raw crop") {
  TempDir dir;
  const RasterImage img = RandomImage(640, 512, 11);
  WritePyramid(img, 128, 3, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  PatchParams p;
  p.patch_size = 100;
  p.overlap = 30;
  const PatchGrid grid = PlanGrid(slide, FullMask(slide, 2), Base(20), p);
  for (size_t i = 0; i < grid.coords.size(); i += 3) {
    const auto& c = grid.coords[i];
    CHECK(LoadPatch(slide, grid, i) == ReadRegion(slide, 0, c.x, c.y, 100, 100));
  }
  CHECK_ERROR_CODE(LoadPatch(slide, grid, grid.coords.size()), ErrorCode::kBadIndex);
}

TEST_CASE("load_patch at half magnification is the 2x2 block mean") {
  TempDir dir;
  const RasterImage img = RandomImage(256, 256, 12);
  // Flat slide: a single level, so the resize does the 2x2 averaging.
  WriteFlatSlide(img, {{"mpp_x", "0.25"}}, dir / "flat.png");
  const SlidePyramid slide = OpenSlide(dir / "flat.png");
  PatchParams p;
  p.patch_size = 32;
  const PatchGrid grid = PlanGrid(slide, FullMask(slide, 1), InferMagnification(slide), p);
  REQUIRE(grid.read_level == 0);
  CHECK(grid.resize_factor == 2.0);
  for (size_t i = 0; i < grid.coords.size(); ++i) {
    const RasterImage patch = LoadPatch(slide, grid, i);
    REQUIRE(patch.width == 32);
    const auto& c = grid.coords[i];
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          int sum = 0;
          for (int k = 0; k < 4; ++k) {
            sum += img.at(static_cast<int>(c.x) + 2 * x + k % 2,
                          static_cast<int>(c.y) + 2 * y + k / 2)[ch];
          }
          REQUIRE(patch.at(x, y)[ch] == (sum + 2) / 4);
        }
      }
    }
  }

  // Same grid through a pyramid reads level 1 directly, with identical pixels.
  WritePyramid(img, 64, 2, {{"mpp_x", "0.25"}}, dir / "p.spyr");
  const SlidePyramid pyr = OpenSlide(dir / "p.spyr");
  const PatchGrid g2 = PlanGrid(pyr, FullMask(pyr, 1), InferMagnification(pyr), p);
  CHECK(g2.read_level == 1);
  CHECK(g2.coords == grid.coords);
  for (size_t i = 0; i < g2.coords.size(); ++i) {
    CHECK(LoadPatch(pyr, g2, i) == LoadPatch(slide, grid, i));
  }
}

TEST_CASE("PGRD round trip and error paths") {
  TempDir dir;
  WritePyramid(RasterImage(1024, 1024, 200), 256, 2, {}, dir / "s.spyr");
  const SlidePyramid slide = OpenSlide(dir / "s.spyr");
  PatchParams p;
  p.min_tissue_frac = 0.3;
  const PatchGrid grid = PlanGrid(slide, FullMask(slide, 4), Base(20), p);
  REQUIRE(grid.coords.size() == 16);
  SaveGrid(grid, dir / "g.pgrd");
  CHECK(LoadGrid(dir / "g.pgrd") == grid);

  PatchGrid empty = grid;
  empty.coords.clear();
  CHECK_ERROR_CODE(SaveGrid(empty, dir / "e.pgrd"), ErrorCode::kNoPatches);

  auto bytes = testing::FileBytes(dir / "g.pgrd");
  auto truncated = bytes;
  truncated.resize(bytes.size() - 24);  // mid-record
  testing::WriteBytes(dir / "t.pgrd", truncated);
  CHECK_ERROR_CODE(LoadGrid(dir / "t.pgrd"), ErrorCode::kTruncatedFile);

  auto longer = bytes;
  longer.insert(longer.end(), 16, 0);
  testing::WriteBytes(dir / "l.pgrd", longer);
  CHECK_ERROR_CODE(LoadGrid(dir / "l.pgrd"), ErrorCode::kTruncatedFile);

  auto bad = bytes;
  bad[0] = 'X';
  testing::WriteBytes(dir / "b.pgrd", bad);
  CHECK_ERROR_CODE(LoadGrid(dir / "b.pgrd"), ErrorCode::kBadMagic);

  auto version = bytes;
  version[4] = 2;
  testing::WriteBytes(dir / "v.pgrd", version);
  CHECK_ERROR_CODE(LoadGrid(dir / "v.pgrd"), ErrorCode::kVersionMismatch);
}

}  // namespace
}  // namespace pathforge
