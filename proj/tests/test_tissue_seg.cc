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

#include <cmath>

#include "doctest.h"
#include "pathforge/synth.h"
#include "pathforge/tissue_seg.h"
#include "raster_oracles.h"
#include "test_util.h"

namespace pathforge {
namespace {

using testing::TempDir;

TissueMask MaskFrom(const GrayImage& img, double scale = 1.0) {
  return {img, scale, MaskSource::kOtsuPipeline, "m"};
}

GrayImage RandomBlobMask(int w, int h, uint64_t seed) {
  const SyntheticSlide s = MakeBlobSlide(RandomBlobParams(w, h, seed), seed);
  return s.truth;
}

TEST_CASE("saturation channel") {
  RasterImage img(3, 1);
  const uint8_t px[] = {255, 255, 255, 255, 0, 255, 200, 100, 100};
  std::copy(std::begin(px), std::end(px), img.pixels.begin());
  const GrayImage s = SaturationChannel(img);
  CHECK(s.data[0] == 0);
  CHECK(s.data[1] == 255);
  CHECK(s.data[2] == 128);  // round(127.5) half up
  RasterImage black(1, 1, 0);
  CHECK(SaturationChannel(black).data[0] == 0);
}

TEST_CASE("otsu threshold") {
  SUBCASE("two equal spikes tie over a range; smallest wins") {
    Histogram h{};
    h[10] = 500;
    h[200] = 500;
    CHECK(OtsuThreshold(h) == 10);
  }
  SUBCASE("single populated bin") {
    Histogram h{};
    h[42] = 1000;
    CHECK_ERROR_CODE(OtsuThreshold(h), ErrorCode::kDegenerateHistogram);
    Histogram empty{};
    CHECK_ERROR_CODE(OtsuThreshold(empty), ErrorCode::kDegenerateHistogram);
  }
  SUBCASE("random histograms equal the brute-force scan") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      Histogram h{};
      const int bins = 2 + static_cast<int>(rng.UniformInt(8));
      for (int b = 0; b < bins; ++b) {
        h[rng.UniformInt(256)] += 1 + rng.UniformInt(5000);
      }
      int populated = 0;
      for (auto c : h) populated += c > 0;
      if (populated < 2) continue;
      CHECK(OtsuThreshold(h) == oracle::BruteForceOtsu(h));
    }
  }
}

TEST_CASE("box blur averages over the clipped window") {
  GrayImage g(3, 3, 0);
  g.at(1, 1) = 90;
  const GrayImage b = BoxBlur(g, 1);
  CHECK(b.at(1, 1) == 10);  // 90 / 9
  CHECK(b.at(0, 0) == 23);  // 90 / 4 = 22.5 -> 23
  CHECK(BoxBlur(g, 0) == g);
}

TEST_CASE("morphology") {
  GrayImage m(20, 20, 0);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x) m.at(x, y) = 1;
  SUBCASE("opening removes a single pixel, keeps the square") {
    GrayImage withDot = m;
    withDot.at(1, 1) = 1;
    const GrayImage opened = Open(withDot, 1);
    CHECK(opened.at(1, 1) == 0);
    // A radius-1 disk is a cross: only the four square corners are lost.
    GrayImage expected = m;
    expected.at(5, 5) = expected.at(14, 5) = expected.at(5, 14) = expected.at(14, 14) = 0;
    CHECK(opened == expected);
  }
  SUBCASE("closing fills a one-pixel gap") {
    GrayImage gap = m;
    for (int y = 5; y < 15; ++y) gap.at(10, y) = 0;
    const GrayImage closed = Close(gap, 1);
    for (int y = 6; y < 14; ++y) CHECK(closed.at(10, y) == 1);
    for (size_t i = 0; i < gap.data.size(); ++i) CHECK(closed.data[i] >= gap.data[i]);
  }
  SUBCASE("closing keeps tissue touching the border") {
    GrayImage edge(10, 10, 0);
    for (int y = 0; y < 10; ++y) edge.at(0, y) = 1;
    CHECK(Close(edge, 2) == edge);
  }
  SUBCASE("close then open never reaches beyond close_radius") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      GrayImage r(40, 40, 0);
      for (auto& v : r.data) v = rng.UniformInt(10) == 0;
      const int radius = 1 + static_cast<int>(rng.UniformInt(3));
      const GrayImage out = Open(Close(r, radius), 1);
      for (int y = 0; y < 40; ++y) {
        for (int x = 0; x < 40; ++x) {
          if (!out.at(x, y)) continue;
          bool near = false;
          for (int yy = 0; yy < 40 && !near; ++yy)
            for (int xx = 0; xx < 40 && !near; ++xx)
              near = r.at(xx, yy) &&
                     (xx - x) * (xx - x) + (yy - y) * (yy - y) <= radius * radius;
          CHECK(near);
        }
      }
    }
  }
}

TEST_CASE("component and hole filtering") {
  GrayImage m(30, 30, 0);
  for (int y = 2; y < 20; ++y)
    for (int x = 2; x < 20; ++x) m.at(x, y) = 1;
  m.at(10, 10) = 0;            // 1-pixel hole
  m.at(25, 25) = 1;            // 1-pixel speck
  m.at(26, 26) = 1;            // diagonal neighbour: same 8-component
  CHECK(CountComponents(m) == 2);
  const GrayImage cleaned = FillSmallHoles(RemoveSmallComponents(m, 3), 2);
  CHECK(CountComponents(cleaned) == 1);
  CHECK(cleaned.at(10, 10) == 1);
  CHECK(cleaned.at(25, 25) == 0);
}

TEST_CASE("segment_tissue on synthetic slides") {
  TempDir dir;
  SUBCASE("single pink blob") {
    BlobSlideParams p;
    p.width = p.height = 2048;
    p.squares.push_back({700, 700, 600});
    const SyntheticSlide s = MakeBlobSlide(p, 1);
    WritePyramid(s.image, 256, 3, {{"mpp_x", "0.5"}}, dir / "blob.spyr");
    const TissueMask mask = SegmentTissue(OpenSlide(dir / "blob.spyr"), SegParams{});
    CHECK(mask.scale == 2.0);
    CHECK(mask.mask.width == 1024);
    const GrayImage truth = ReduceMask(s.truth, 1024, 1024);
    CHECK(MaskIoU(mask.mask, truth) >= 0.95);
  }
  SUBCASE("all-white slide") {
    WritePyramid(RasterImage(1024, 1024, 255), 256, 2, {}, dir / "w.spyr");
    CHECK_ERROR_CODE(SegmentTissue(OpenSlide(dir / "w.spyr"), SegParams{}),
                     ErrorCode::kEmptyTissue);
  }
  SUBCASE("isolated specks are removed") {
    BlobSlideParams p;
    p.width = p.height = 1024;
    p.blobs.push_back({512, 512, 250, 200});
    p.specks = 40;
    p.speck_size = 2;
    const SyntheticSlide s = MakeBlobSlide(p, 2);
    WritePyramid(s.image, 256, 1, {}, dir / "sp.spyr");
    const TissueMask mask = SegmentTissue(OpenSlide(dir / "sp.spyr"), SegParams{});
    CHECK(CountComponents(mask.mask) == 1);
    CHECK(MaskIoU(mask.mask, s.truth) >= 0.95);
  }
  SUBCASE("raising a fixed threshold never grows the mask") {
    const SyntheticSlide s = MakeBlobSlide(RandomBlobParams(512, 512, 5), 5);
    GrayImage prev;
    for (int t = 10; t <= 120; t += 10) {
      SegParams params;
      params.fixed_threshold = t;
      GrayImage cur;
      try {
        cur = SegmentThumbnail(s.image, 1.0, params).mask;
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kEmptyTissue);
        cur = GrayImage(512, 512, 0);
      }
      if (!prev.data.empty()) {
        for (size_t i = 0; i < cur.data.size(); ++i) CHECK(cur.data[i] <= prev.data[i]);
      }
      prev = cur;
    }
  }
}

TEST_CASE("mask_to_polygons topology") {
  SUBCASE("filled rectangle is one 4-vertex ring") {
    GrayImage m(12, 10, 0);
    for (int y = 2; y < 7; ++y)
      for (int x = 3; x < 10; ++x) m.at(x, y) = 1;
    const TissuePolygons polys = MaskToPolygons(MaskFrom(m, 4.0));
    REQUIRE(polys.polygons.size() == 1);
    const Ring& ring = polys.polygons[0].outer;
    CHECK(ring.size() == 4);
    CHECK(polys.polygons[0].holes.empty());
    CHECK(SignedArea(ring) == doctest::Approx(7 * 5 * 16.0));
  }
  SUBCASE("annulus is an outer ring plus an opposite-orientation hole") {
    GrayImage m(40, 40, 0);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const double r = std::hypot(x + 0.5 - 20, y + 0.5 - 20);
        m.at(x, y) = (r <= 15 && r >= 7) ? 1 : 0;
      }
    const TissuePolygons polys = MaskToPolygons(MaskFrom(m));
    REQUIRE(polys.polygons.size() == 1);
    REQUIRE(polys.polygons[0].holes.size() == 1);
    CHECK(SignedArea(polys.polygons[0].outer) > 0);
    CHECK(SignedArea(polys.polygons[0].holes[0]) < 0);
  }
  SUBCASE("diagonal touch stays one ring") {
    GrayImage m(4, 4, 0);
    m.at(1, 1) = 1;
    m.at(2, 2) = 1;
    const TissuePolygons polys = MaskToPolygons(MaskFrom(m));
    CHECK(polys.polygons.size() == 1);
    CHECK(RasterizePolygons(polys, {4, 4, 1.0, ""}) == m);
  }
  SUBCASE("island inside a hole") {
    GrayImage m(30, 30, 0);
    for (int y = 2; y < 28; ++y)
      for (int x = 2; x < 28; ++x) m.at(x, y) = 1;
    for (int y = 8; y < 22; ++y)
      for (int x = 8; x < 22; ++x) m.at(x, y) = 0;
    for (int y = 12; y < 18; ++y)
      for (int x = 12; x < 18; ++x) m.at(x, y) = 1;
    const TissuePolygons polys = MaskToPolygons(MaskFrom(m));
    CHECK(polys.polygons.size() == 2);
    CHECK(RasterizePolygons(polys, {30, 30, 1.0, ""}) == m);
  }
  CHECK_ERROR_CODE(MaskToPolygons(MaskFrom(GrayImage(5, 5, 0))), ErrorCode::kEmptyMask);
}

TEST_CASE("polygon rasterisation reproduces random masks") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    GrayImage m = RandomBlobMask(96, 80, 100 + trial);
    // Sprinkle noise to stress saddles and holes.
    for (auto& v : m.data) if (rng.UniformInt(20) == 0) v ^= 1;
    if (std::count(m.data.begin(), m.data.end(), 1) == 0) continue;
    const double scale = 1.0 + static_cast<double>(rng.UniformInt(4));
    const TissueMask mask = MaskFrom(m, scale);
    const GrayImage back = RasterizePolygons(MaskToPolygons(mask), mask.geometry());
    CHECK(MaskIoU(back, m) >= 0.98);
    CHECK(back == m);
  }
}

TEST_CASE("GeoJSON export and import") {
  TempDir dir;
  SUBCASE("round trip of a pipeline mask") {
    const SyntheticSlide s = MakeBlobSlide(RandomBlobParams(1024, 768, 9), 9);
    WritePyramid(s.image, 256, 2, {}, dir / "s.spyr");
    const SlidePyramid slide = OpenSlide(dir / "s.spyr");
    const TissueMask mask = SegmentTissue(slide, SegParams{});
    ExportGeoJson(MaskToPolygons(mask), dir / "s.geojson");
    const TissueMask back = ImportGeoJson(dir / "s.geojson", MaskGeometry::ForSlide(slide, 1024));
    CHECK(back.source == MaskSource::kExternal);
    CHECK(MaskIoU(back.mask, mask.mask) >= 0.98);
  }
  SUBCASE("hand-written square covering the left half") {
    testing::WriteText(dir / "left.geojson", R"({"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{},"geometry":{"type":"Polygon",
       "coordinates":[[[0,0],[1024,0],[1024,2048],[0,2048],[0,0]]]}}]})");
    const TissueMask m = ImportGeoJson(dir / "left.geojson", {1024, 1024, 2.0, "x"});
    for (int y = 0; y < 1024; y += 97)
      for (int x = 0; x < 1024; x += 13) CHECK(m.mask.at(x, y) == (x < 512 ? 1 : 0));
    CHECK(m.ForegroundCount() == 512 * 1024);
  }
  SUBCASE("MultiPolygon is accepted") {
    const auto polys = ParseGeoJson(R"({"type":"FeatureCollection","features":[
      {"type":"Feature","geometry":{"type":"MultiPolygon","coordinates":[
        [[[0,0],[2,0],[2,2],[0,2],[0,0]]], [[[4,4],[6,4],[6,6],[4,6],[4,4]]]]}}]})");
    CHECK(polys.polygons.size() == 2);
  }
  SUBCASE("errors") {
    CHECK_ERROR_CODE(ParseGeoJson(R"({"type":"FeatureCollection","features":[
      {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[1,1]]}}]})"),
                     ErrorCode::kUnsupportedGeometry);
    CHECK_ERROR_CODE(ParseGeoJson("{not json"), ErrorCode::kMalformedGeoJson);
    CHECK_ERROR_CODE(ParseGeoJson(R"({"type":"Feature"})"), ErrorCode::kMalformedGeoJson);
    CHECK_ERROR_CODE(ParseGeoJson(R"({"type":"FeatureCollection","features":[
      {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[0,0],["a",1],[1,1]]]}}]})"),
                     ErrorCode::kMalformedGeoJson);
  }
}

TEST_CASE("segmenting the rasterisation of its own polygons is idempotent") {
  const GrayImage m = RandomBlobMask(128, 128, 77);
  const TissueMask mask = MaskFrom(m, 3.0);
  const TissuePolygons polys = MaskToPolygons(mask);
  const GrayImage once = RasterizePolygons(polys, mask.geometry());
  const GrayImage twice =
      RasterizePolygons(MaskToPolygons(MaskFrom(once, 3.0)), mask.geometry());
  CHECK(once == m);
  CHECK(twice == once);
}

TEST_CASE("tissue fraction") {
  GrayImage m(16, 16, 0);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) m.at(x, y) = 1;
  const TissueMask mask = MaskFrom(m, 4.0);  // foreground = [16,48)^2 in level 0
  CHECK(TissueFraction(mask, {20, 20, 16, 16}) == 1.0);
  CHECK(TissueFraction(mask, {0, 0, 12, 12}) == 0.0);
  CHECK(TissueFraction(mask, {500, 500, 10, 10}) == 0.0);
  CHECK(TissueFraction(mask, {32, 16, 32, 32}) == doctest::Approx(0.5).epsilon(1.0 / 8));
  CHECK(TissueFraction(mask, {32, 16, 32, 32}) == 0.5);
  // Partial pixels: rect [14, 18) overlaps half a mask pixel at each side.
  CHECK(TissueFraction(mask, {14, 16, 4, 4}) == 0.5);
  CHECK_ERROR_CODE(TissueFraction(mask, {0, 0, 0, 5}), ErrorCode::kInvalidArgument);
}

TEST_CASE("mask snapshot round trip") {
  TempDir dir;
  const TissueMask mask = MaskFrom(RandomBlobMask(64, 48, 4), 2.5);
  SaveMask(mask, dir / "m.png");
  const TissueMask back = LoadMask(dir / "m.png");
  CHECK(back.mask == mask.mask);
  CHECK(back.scale == 2.5);
  CHECK(back.slide_id == "m");
}

}  // namespace
}  // namespace pathforge
