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

#include <cstring>
#include <thread>

#include "doctest.h"
#include "pathforge/slide_io.h"
#include "test_util.h"

namespace pathforge {
namespace {

using testing::GradientImage;
using testing::RandomImage;
using testing::TempDir;

// Reference crop with white fill, independent of the tile reader.
RasterImage ReferenceCrop(const RasterImage& src, int x, int y, int w, int h) {
  RasterImage out(w, h, 255);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const int sx = x + col, sy = y + row;
      if (sx < 0 || sy < 0 || sx >= src.width || sy >= src.height) continue;
      std::memcpy(out.at(col, row), src.at(sx, sy), 3);
    }
  }
  return out;
}

TEST_CASE("open_slide reads a three-level container") {
  TempDir dir;
  const auto path = dir / "big.spyr";
  const int written =
      WritePyramid(GradientImage(4096, 4096), 256, 3, {{"mpp_x", "0.5"}}, path);
  CHECK(written == 3);
  const SlidePyramid slide = OpenSlide(path);
  REQUIRE(slide.level_count() == 3);
  CHECK(slide.slide_id() == "big");
  CHECK(slide.levels()[0].downsample == 1.0);
  CHECK(slide.levels()[1].downsample == 2.0);
  CHECK(slide.levels()[2].downsample == 4.0);
  CHECK(slide.levels()[2].width == 1024);
  CHECK(slide.metadata().at("mpp_x") == "0.5");
  CHECK_FALSE(slide.is_flat());
}

TEST_CASE("flat PNG with sidecar is a single-level slide") {
  TempDir dir;
  const auto path = dir / "flat.png";
  const RasterImage img = RandomImage(1024, 768, 3);
  testing::WriteText(dir / "flat.meta.json", R"({"mpp_x": 0.5})");
  WritePng(path, img);
  const SlidePyramid slide = OpenSlide(path);
  REQUIRE(slide.level_count() == 1);
  CHECK(slide.is_flat());
  CHECK(slide.width() == 1024);
  CHECK(slide.height() == 768);
  CHECK(slide.levels()[0].downsample == 1.0);
  CHECK(InferMagnification(slide).base_magnification == 20);
  CHECK(ReadRegion(slide, 0, 100, 50, 64, 32) == ReferenceCrop(img, 100, 50, 64, 32));
}

TEST_CASE("open_slide error paths") {
  TempDir dir;
  CHECK_ERROR_CODE(OpenSlide(dir / "nope.spyr"), ErrorCode::kMissingFile);

  testing::WriteText(dir / "junk.bin", "NOTASLIDEFILE");
  CHECK_ERROR_CODE(OpenSlide(dir / "junk.bin"), ErrorCode::kBadMagic);

  SUBCASE("tile offset past EOF") {
    const auto path = dir / "s.spyr";
    WritePyramid(RandomImage(300, 200, 1), 128, 1, {}, path);
    auto bytes = testing::FileBytes(path);
    uint32_t header_len;
    std::memcpy(&header_len, bytes.data() + 8, 4);
    const uint64_t bogus = bytes.size() + 1000;
    std::memcpy(bytes.data() + 12 + header_len, &bogus, 8);
    testing::WriteBytes(path, bytes);
    CHECK_ERROR_CODE(OpenSlide(path), ErrorCode::kCorruptIndex);
  }

  SUBCASE("tile length past EOF") {
    const auto path = dir / "s.spyr";
    WritePyramid(RandomImage(300, 200, 1), 128, 1, {}, path);
    auto bytes = testing::FileBytes(path);
    bytes.resize(bytes.size() - 10);
    testing::WriteBytes(path, bytes);
    CHECK_ERROR_CODE(OpenSlide(path), ErrorCode::kCorruptIndex);
  }

  SUBCASE("corrupted tile payload is detected at read time") {
    const auto path = dir / "s.spyr";
    WritePyramid(RandomImage(128, 128, 1), 128, 1, {}, path);
    auto bytes = testing::FileBytes(path);
    for (size_t i = bytes.size() - 64; i < bytes.size(); ++i) bytes[i] ^= 0x5a;
    testing::WriteBytes(path, bytes);
    const SlidePyramid slide = OpenSlide(path);
    CHECK_ERROR_CODE(ReadRegion(slide, 0, 0, 0, 8, 8), ErrorCode::kCorruptIndex);
  }

  SUBCASE("non-dyadic level dimensions") {
    const auto path = dir / "s.spyr";
    WritePyramid(RandomImage(256, 256, 1), 64, 2, {}, path);
    auto bytes = testing::FileBytes(path);
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("{\"h\":128,\"w\":128}");
    REQUIRE(pos != std::string::npos);
    // Same byte length, so offsets stay valid.
    const std::string bad = "{\"h\":200,\"w\":128}";
    std::memcpy(bytes.data() + pos, bad.data(), bad.size());
    testing::WriteBytes(path, bytes);
    CHECK_ERROR_CODE(OpenSlide(path), ErrorCode::kInconsistentPyramid);
  }
}

TEST_CASE("read_region stitching") {
  TempDir dir;
  const RasterImage img = GradientImage(700, 500);
  const auto path = dir / "g.spyr";
  WritePyramid(img, 64, 1, {}, path);
  const SlidePyramid slide = OpenSlide(path);

  SUBCASE("inside a single tile") {
    CHECK(ReadRegion(slide, 0, 70, 10, 30, 40) == ReferenceCrop(img, 70, 10, 30, 40));
  }
  SUBCASE("straddling a 2x2 tile neighbourhood") {
    CHECK(ReadRegion(slide, 0, 40, 40, 60, 60) == ReferenceCrop(img, 40, 40, 60, 60));
  }
  SUBCASE("half off the right edge is white") {
    const RasterImage r = ReadRegion(slide, 0, 680, 100, 40, 10);
    for (int y = 0; y < 10; ++y) {
      for (int x = 20; x < 40; ++x) {
        CHECK(r.at(x, y)[0] == 255);
        CHECK(r.at(x, y)[1] == 255);
        CHECK(r.at(x, y)[2] == 255);
      }
    }
    CHECK(Crop(r, 0, 0, 20, 10) == ReferenceCrop(img, 680, 100, 20, 10));
  }
  SUBCASE("negative origin") {
    CHECK(ReadRegion(slide, 0, -5, -7, 20, 20) == ReferenceCrop(img, -5, -7, 20, 20));
  }
  SUBCASE("errors") {
    CHECK_ERROR_CODE(ReadRegion(slide, 1, 0, 0, 4, 4), ErrorCode::kBadLevel);
    CHECK_ERROR_CODE(ReadRegion(slide, 0, 0, 0, 0, 4), ErrorCode::kZeroArea);
  }
}

TEST_CASE("read_region output does not depend on tile size") {
  TempDir dir;
  const RasterImage img = RandomImage(333, 257, 11);
  WritePyramid(img, 64, 3, {}, dir / "a.spyr");
  WritePyramid(img, 256, 3, {}, dir / "b.spyr");
  const SlidePyramid a = OpenSlide(dir / "a.spyr");
  const SlidePyramid b = OpenSlide(dir / "b.spyr");
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    const int level = static_cast<int>(rng.UniformInt(3));
    const int64_t x = static_cast<int64_t>(rng.UniformInt(340)) - 4;
    const int64_t y = static_cast<int64_t>(rng.UniformInt(260)) - 4;
    const int w = 1 + static_cast<int>(rng.UniformInt(150));
    const int h = 1 + static_cast<int>(rng.UniformInt(150));
    CHECK(ReadRegion(a, level, x, y, w, h) == ReadRegion(b, level, x, y, w, h));
  }
}

TEST_CASE("write_pyramid round trip and reductions") {
  TempDir dir;
  SUBCASE("512x512 random, one level") {
    const RasterImage img = RandomImage(512, 512, 99);
    WritePyramid(img, 256, 1, {}, dir / "r.spyr");
    const SlidePyramid slide = OpenSlide(dir / "r.spyr");
    CHECK(ReadLevel(slide, 0) == img);
  }
  SUBCASE("2x2-block checkerboard reduces to the block mean") {
    RasterImage img(256, 256);
    for (int y = 0; y < 256; ++y) {
      for (int x = 0; x < 256; ++x) {
        const uint8_t v = ((x / 2 + y / 2) % 2) ? 255 : 0;
        std::memset(img.at(x, y), v, 3);
      }
    }
    // Shift by one pixel so every 2x2 reduction block straddles two checker
    // cells: half 0, half 255.
    RasterImage shifted(256, 256);
    for (int y = 0; y < 256; ++y) {
      for (int x = 0; x < 256; ++x) {
        std::memcpy(shifted.at(x, y), img.at((x + 1) % 256, y), 3);
      }
    }
    WritePyramid(shifted, 64, 2, {}, dir / "c.spyr");
    const SlidePyramid slide = OpenSlide(dir / "c.spyr");
    const RasterImage level1 = ReadLevel(slide, 1);
    REQUIRE(level1.width == 128);
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) {
        unsigned sum = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) sum += shifted.at(2 * x + dx, 2 * y + dy)[0];
        const unsigned oracle = (sum + 2) / 4;  // round half up
        CHECK(level1.at(x, y)[0] == oracle);
        CHECK(level1.at(x, y)[0] >= 127);
        CHECK(level1.at(x, y)[0] <= 128);
      }
    }
  }
  SUBCASE("too many levels stops early") {
    const int written = WritePyramid(RandomImage(80, 20, 1), 64, 12, {}, dir / "d.spyr");
    CHECK(written == 5);  // 80x20, 40x10, 20x5, 10x2, 5x1
    const SlidePyramid slide = OpenSlide(dir / "d.spyr");
    CHECK(slide.level_count() == 5);
    CHECK(slide.levels().back().height == 1);
  }
  SUBCASE("invalid arguments") {
    CHECK_ERROR_CODE(WritePyramid(RandomImage(8, 8, 1), 100, 1, {}, dir / "x"),
                     ErrorCode::kInvalidArgument);
    CHECK_ERROR_CODE(WritePyramid(RandomImage(8, 8, 1), 64, 0, {}, dir / "x"),
                     ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("infer_magnification heuristic chain") {
  TempDir dir;
  auto make = [&](const Metadata& md) {
    WritePyramid(RasterImage(64, 64), 64, 1, md, dir / "m.spyr");
    return OpenSlide(dir / "m.spyr");
  };
  SUBCASE("mpp metadata") {
    const MagInfo info = InferMagnification(make({{"mpp_x", "0.25"}}));
    CHECK(info.mpp == 0.25);
    CHECK(info.base_magnification == 40);
    CHECK(info.source == MagSource::kMetadataMpp);
  }
  SUBCASE("mpp_x and mpp_y are averaged") {
    const MagInfo info = InferMagnification(make({{"mpp_x", "0.24"}, {"mpp_y", "0.26"}}));
    CHECK(info.mpp == doctest::Approx(0.25));
    CHECK(info.base_magnification == 40);
  }
  SUBCASE("objective power") {
    const MagInfo info = InferMagnification(make({{"objective_power", "20"}}));
    CHECK(info.mpp == 0.5);
    CHECK(info.base_magnification == 20);
    CHECK(info.source == MagSource::kMetadataObjective);
  }
  SUBCASE("override with no metadata") {
    const MagInfo info = InferMagnification(make({}), 0.5);
    CHECK(info.mpp == 0.5);
    CHECK(info.base_magnification == 20);
    CHECK(info.source == MagSource::kUserOverride);
  }
  SUBCASE("override always beats metadata") {
    const SlidePyramid s = make({{"mpp_x", "0.25"}, {"objective_power", "40"}});
    CHECK(InferMagnification(s, 1.0).source == MagSource::kUserOverride);
    CHECK(InferMagnification(s, 1.0).base_magnification == 10);
    const SlidePyramid opened = OpenSlide(dir / "m.spyr", 2.0);
    CHECK(InferMagnification(opened).base_magnification == 5);
  }
  SUBCASE("unparseable metadata falls through") {
    CHECK(InferMagnification(make({{"mpp_x", "n/a"}, {"objective_power", "40"}}))
              .source == MagSource::kMetadataObjective);
  }
  SUBCASE("nothing known") {
    CHECK_ERROR_CODE(InferMagnification(make({})), ErrorCode::kUnknownMagnification);
  }
}

TEST_CASE("nearest-bucket magnification in log space") {
  CHECK(MagnificationForMpp(0.125) == 80);
  CHECK(MagnificationForMpp(0.26) == 40);
  CHECK(MagnificationForMpp(0.46) == 20);
  CHECK(MagnificationForMpp(0.9) == 10);
  CHECK(MagnificationForMpp(3.0) == 5);
}

TEST_CASE("build_thumbnail") {
  TempDir dir;
  SUBCASE("exact ratio") {
    WritePyramid(RandomImage(4096, 2048, 2), 256, 3, {}, dir / "t.spyr");
    const Thumbnail t = BuildThumbnail(OpenSlide(dir / "t.spyr"), 1024);
    CHECK(t.image.width == 1024);
    CHECK(t.image.height == 512);
    CHECK(t.scale == 4.0);
    CHECK(t.source_level == 2);
  }
  SUBCASE("slide smaller than max_dim is returned as-is") {
    const RasterImage img = RandomImage(500, 500, 4);
    WritePyramid(img, 128, 2, {}, dir / "s.spyr");
    const Thumbnail t = BuildThumbnail(OpenSlide(dir / "s.spyr"), 1024);
    CHECK(t.image == img);
    CHECK(t.scale == 1.0);
  }
  SUBCASE("constant gray stays constant") {
    WritePyramid(RasterImage(1500, 900, 137), 256, 2, {}, dir / "g.spyr");
    const Thumbnail t = BuildThumbnail(OpenSlide(dir / "g.spyr"), 1024);
    CHECK(t.image.width == 1024);
    CHECK(t.image.height == 614);
    for (uint8_t v : t.image.pixels) CHECK(v == 137);
  }
  CHECK_ERROR_CODE(BuildThumbnail(OpenSlide((WritePyramid(RasterImage(64, 64), 64, 1, {},
                                                          dir / "z.spyr"),
                                             dir / "z.spyr")),
                                  32),
                   ErrorCode::kInvalidArgument);
}

TEST_CASE("concurrent reads on one handle") {
  TempDir dir;
  const RasterImage img = RandomImage(512, 512, 8);
  WritePyramid(img, 64, 1, {}, dir / "c.spyr");
  const SlidePyramid slide = OpenSlide(dir / "c.spyr");
  std::vector<int> ok(4, 0);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      int good = 0;
      for (int i = 0; i < 20; ++i) {
        const int x = (t * 37 + i * 13) % 400, y = (t * 11 + i * 29) % 400;
        good += ReadRegion(slide, 0, x, y, 100, 100) == ReferenceCrop(img, x, y, 100, 100);
      }
      ok[static_cast<size_t>(t)] = good;
    });
  }
  for (auto& th : threads) th.join();
  for (int v : ok) CHECK(v == 20);
}

}  // namespace
}  // namespace pathforge
