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

#include "pathforge/tissue_seg.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pathforge/error.h"

namespace pathforge {

using nlohmann::json;

void SegParams::Validate() const {
  if (thumb_max_dim < 64) Fail(ErrorCode::kInvalidArgument, "thumb_max_dim < 64");
  if (blur_radius < 0 || close_radius < 0 || open_radius < 0) {
    Fail(ErrorCode::kInvalidArgument, "radii must be >= 0");
  }
  if (fixed_threshold && (*fixed_threshold < 0 || *fixed_threshold > 255)) {
    Fail(ErrorCode::kInvalidArgument, "threshold must be in [0, 255]");
  }
  if (min_region_area < 0 || min_region_area >= 1 || min_hole_area < 0 ||
      min_hole_area >= 1) {
    Fail(ErrorCode::kInvalidArgument, "area fractions must be in [0, 1)");
  }
}

MaskGeometry MaskGeometry::ForSlide(const SlidePyramid& slide,
                                    int thumb_max_dim) {
  const auto [w, h] = ThumbnailSize(slide.width(), slide.height(), thumb_max_dim);
  return {w, h, static_cast<double>(slide.width()) / w, slide.slide_id()};
}

int64_t TissueMask::ForegroundCount() const {
  return std::count(mask.data.begin(), mask.data.end(), uint8_t{1});
}

double SignedArea(const Ring& ring) {
  double twice = 0;
  for (size_t i = 0; i < ring.size(); ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % ring.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2;
}

GrayImage SaturationChannel(const RasterImage& image) {
  GrayImage out(image.width, image.height);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const uint8_t* p = &image.pixels[i * 3];
    const unsigned mx = std::max({p[0], p[1], p[2]});
    const unsigned mn = std::min({p[0], p[1], p[2]});
    if (mx == 0) continue;
    // round(255 * (1 - mn/mx)), half up, in integers.
    out.data[i] = static_cast<uint8_t>((2 * 255 * (mx - mn) + mx) / (2 * mx));
  }
  return out;
}

Histogram ComputeHistogram(const GrayImage& image) {
  Histogram hist{};
  for (uint8_t v : image.data) ++hist[v];
  return hist;
}

namespace {

using u128 = unsigned __int128;

// 192-bit products held as (hi, lo) 128-bit limbs.
struct Wide {
  u128 hi = 0;
  u128 lo = 0;
  bool operator>(const Wide& o) const {
    return hi != o.hi ? hi > o.hi : lo > o.lo;
  }
};

Wide MulWide(u128 x, uint64_t y) {
  const uint64_t xl = static_cast<uint64_t>(x);
  const uint64_t xh = static_cast<uint64_t>(x >> 64);
  const u128 low = static_cast<u128>(xl) * y;
  const u128 high = static_cast<u128>(xh) * y;
  Wide w;
  w.lo = low + (high << 64);
  w.hi = (high >> 64) + (w.lo < low ? 1 : 0);
  return w;
}

}  // namespace

int OtsuThreshold(const Histogram& hist) {
  int populated = 0;
  uint64_t total = 0;
  u128 total_sum = 0;
  for (int i = 0; i < 256; ++i) {
    if (hist[i] > 0) ++populated;
    total += hist[i];
    total_sum += static_cast<u128>(hist[i]) * i;
  }
  if (populated < 2) {
    Fail(ErrorCode::kDegenerateHistogram, "fewer than two populated bins");
  }

  // Between-class variance is proportional to (S0*N - S*n0)^2 / (n0*n1).
  // With N < 2^28 the numerator fits in 128 bits and the cross-multiplied
  // comparison in 192, so ties are decided exactly.
  const bool exact = total < (uint64_t{1} << 28);
  int best_t = -1;
  u128 best_num = 0;
  uint64_t best_den = 1;
  long double best_value = -1;
  uint64_t n0 = 0;
  u128 s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[t];
    s0 += static_cast<u128>(hist[t]) * t;
    const uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    if (exact) {
      const __int128 a = static_cast<__int128>(s0 * total) -
                         static_cast<__int128>(total_sum * n0);
      const u128 mag = static_cast<u128>(a < 0 ? -a : a);
      const u128 num = mag * mag;
      const uint64_t den = n0 * n1;
      if (best_t < 0 || MulWide(num, best_den) > MulWide(best_num, den)) {
        best_t = t;
        best_num = num;
        best_den = den;
      }
    } else {
      const long double w0 = static_cast<long double>(n0) / total;
      const long double w1 = 1.0L - w0;
      const long double mu0 = static_cast<long double>(s0) / n0;
      const long double mu1 = static_cast<long double>(total_sum - s0) / n1;
      const long double v = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
      if (v > best_value) {
        best_value = v;
        best_t = t;
      }
    }
  }
  return best_t;
}

GrayImage BoxBlur(const GrayImage& image, int radius) {
  if (radius <= 0) return image;
  const int w = image.width, h = image.height;
  std::vector<uint64_t> integral(static_cast<size_t>(w + 1) * (h + 1), 0);
  auto I = [&](int x, int y) -> uint64_t& {
    return integral[static_cast<size_t>(y) * (w + 1) + x];
  };
  for (int y = 0; y < h; ++y) {
    uint64_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += image.at(x, y);
      I(x + 1, y + 1) = I(x + 1, y) + row;
    }
  }
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius), y1 = std::min(h, y + radius + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius), x1 = std::min(w, x + radius + 1);
      const uint64_t sum = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
      const uint64_t n = static_cast<uint64_t>(x1 - x0) * (y1 - y0);
      out.at(x, y) = static_cast<uint8_t>((2 * sum + n) / (2 * n));
    }
  }
  return out;
}

GrayImage ThresholdAbove(const GrayImage& image, int threshold) {
  GrayImage out(image.width, image.height);
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = image.data[i] > threshold ? 1 : 0;
  }
  return out;
}

namespace {

// For each disk row offset dy in [-r, r], the half-width of the disk.
std::vector<int> DiskHalfWidths(int radius) {
  std::vector<int> hw(static_cast<size_t>(2 * radius + 1));
  for (int dy = -radius; dy <= radius; ++dy) {
    hw[static_cast<size_t>(dy + radius)] =
        static_cast<int>(std::floor(std::sqrt(static_cast<double>(radius * radius - dy * dy))));
  }
  return hw;
}

// Dilation (want_all = false) or erosion (want_all = true) using per-row
// prefix counts; only in-image pixels take part.
GrayImage Morph(const GrayImage& mask, int radius, bool want_all) {
  if (radius <= 0) return mask;
  const int w = mask.width, h = mask.height;
  std::vector<int> prefix(static_cast<size_t>(w + 1) * h, 0);
  for (int y = 0; y < h; ++y) {
    int* row = &prefix[static_cast<size_t>(y) * (w + 1)];
    for (int x = 0; x < w; ++x) row[x + 1] = row[x] + (mask.at(x, y) ? 1 : 0);
  }
  const auto hw = DiskHalfWidths(radius);
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool hit = want_all;
      for (int dy = -radius; dy <= radius && hit == want_all; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        const int half = hw[static_cast<size_t>(dy + radius)];
        const int x0 = std::max(0, x - half), x1 = std::min(w, x + half + 1);
        const int* row = &prefix[static_cast<size_t>(yy) * (w + 1)];
        const int count = row[x1] - row[x0];
        if (want_all) {
          if (count != x1 - x0) hit = false;
        } else if (count > 0) {
          hit = true;
        }
      }
      out.at(x, y) = hit ? 1 : 0;
    }
  }
  return out;
}

// Labels components of pixels equal to `value`; returns per-pixel labels
// (-1 for other pixels) and per-label sizes / border-touch flags.
struct Components {
  std::vector<int> labels;
  std::vector<int64_t> sizes;
  std::vector<bool> touches_border;
};

Components Label(const GrayImage& mask, uint8_t value, bool eight_connected) {
  const int w = mask.width, h = mask.height;
  Components c;
  c.labels.assign(mask.data.size(), -1);
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (mask.data[static_cast<size_t>(start)] != value ||
        c.labels[static_cast<size_t>(start)] >= 0) {
      continue;
    }
    const int id = static_cast<int>(c.sizes.size());
    c.sizes.push_back(0);
    c.touches_border.push_back(false);
    stack.push_back(start);
    c.labels[static_cast<size_t>(start)] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++c.sizes[static_cast<size_t>(id)];
      const int x = p % w, y = p / w;
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
        c.touches_border[static_cast<size_t>(id)] = true;
      }
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (!eight_connected && dx != 0 && dy != 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int q = ny * w + nx;
          if (mask.data[static_cast<size_t>(q)] == value &&
              c.labels[static_cast<size_t>(q)] < 0) {
            c.labels[static_cast<size_t>(q)] = id;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return c;
}

}  // namespace

GrayImage Dilate(const GrayImage& mask, int radius) {
  return Morph(mask, radius, false);
}
GrayImage Erode(const GrayImage& mask, int radius) {
  return Morph(mask, radius, true);
}
GrayImage Close(const GrayImage& mask, int radius) {
  return Erode(Dilate(mask, radius), radius);
}
GrayImage Open(const GrayImage& mask, int radius) {
  return Dilate(Erode(mask, radius), radius);
}

GrayImage RemoveSmallComponents(const GrayImage& mask, int64_t min_pixels) {
  const Components c = Label(mask, 1, true);
  GrayImage out = mask;
  for (size_t i = 0; i < out.data.size(); ++i) {
    const int id = c.labels[i];
    if (id >= 0 && c.sizes[static_cast<size_t>(id)] < min_pixels) out.data[i] = 0;
  }
  return out;
}

GrayImage FillSmallHoles(const GrayImage& mask, int64_t min_pixels) {
  const Components c = Label(mask, 0, false);
  GrayImage out = mask;
  for (size_t i = 0; i < out.data.size(); ++i) {
    const int id = c.labels[i];
    if (id >= 0 && !c.touches_border[static_cast<size_t>(id)] &&
        c.sizes[static_cast<size_t>(id)] < min_pixels) {
      out.data[i] = 1;
    }
  }
  return out;
}

int CountComponents(const GrayImage& mask) {
  return static_cast<int>(Label(mask, 1, true).sizes.size());
}

TissueMask SegmentThumbnail(const RasterImage& thumbnail, double scale,
                            const SegParams& params,
                            const std::string& slide_id) {
  params.Validate();
  const GrayImage sat = BoxBlur(SaturationChannel(thumbnail), params.blur_radius);
  int threshold;
  if (params.fixed_threshold) {
    threshold = *params.fixed_threshold;
  } else {
    const Histogram hist = ComputeHistogram(sat);
    int populated = 0;
    for (uint64_t c : hist) populated += c > 0;
    if (populated < 2) {
      // Uniform thumbnail: nothing to separate.
      Fail(ErrorCode::kEmptyTissue, "uniform thumbnail for slide " + slide_id);
    }
    threshold = OtsuThreshold(hist);
  }
  GrayImage mask = ThresholdAbove(sat, threshold);
  mask = Open(Close(mask, params.close_radius), params.open_radius);
  const double area = static_cast<double>(mask.width) * mask.height;
  mask = RemoveSmallComponents(
      mask, static_cast<int64_t>(std::ceil(params.min_region_area * area)));
  mask = FillSmallHoles(
      mask, static_cast<int64_t>(std::ceil(params.min_hole_area * area)));

  TissueMask out{std::move(mask), scale, MaskSource::kOtsuPipeline, slide_id};
  if (out.ForegroundCount() == 0) {
    Fail(ErrorCode::kEmptyTissue, "no tissue found in slide " + slide_id);
  }
  return out;
}

TissueMask SegmentTissue(const SlidePyramid& slide, const SegParams& params) {
  params.Validate();
  const Thumbnail thumb = BuildThumbnail(slide, params.thumb_max_dim);
  return SegmentThumbnail(thumb.image, thumb.scale, params, slide.slide_id());
}

// ---------------------------------------------------------------------------
// Contours. Boundary edges run along pixel borders, oriented so tissue lies
// on a fixed side; outer rings come out with positive area, holes negative.

namespace {

struct Edge {
  int from;
  int to;
  int owner;  // pixel index that owns the edge
};

bool PointInRing(const Ring& ring, double px, double py) {
  bool inside = false;
  for (size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Point& a = ring[i];
    const Point& b = ring[j];
    if ((a.y > py) != (b.y > py)) {
      const double xc = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
      if (px < xc) inside = !inside;
    }
  }
  return inside;
}

Ring MergeCollinear(const std::vector<Point>& pts) {
  Ring out;
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& prev = pts[(i + n - 1) % n];
    const Point& cur = pts[i];
    const Point& next = pts[(i + 1) % n];
    const double cross = (cur.x - prev.x) * (next.y - cur.y) -
                         (cur.y - prev.y) * (next.x - cur.x);
    if (cross != 0) out.push_back(cur);
  }
  return out;
}

}  // namespace

TissuePolygons MaskToPolygons(const TissueMask& mask) {
  const GrayImage& m = mask.mask;
  const int w = m.width, h = m.height;
  if (mask.ForegroundCount() == 0) Fail(ErrorCode::kEmptyMask, "mask is empty");
  auto fg = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && m.at(x, y) != 0;
  };
  const int vw = w + 1;
  auto vid = [&](int x, int y) { return y * vw + x; };

  std::vector<Edge> edges;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y)) continue;
      const int owner = y * w + x;
      if (!fg(x, y - 1)) edges.push_back({vid(x, y), vid(x + 1, y), owner});
      if (!fg(x + 1, y)) edges.push_back({vid(x + 1, y), vid(x + 1, y + 1), owner});
      if (!fg(x, y + 1)) edges.push_back({vid(x + 1, y + 1), vid(x, y + 1), owner});
      if (!fg(x - 1, y)) edges.push_back({vid(x, y + 1), vid(x, y), owner});
    }
  }
  // At most two outgoing edges per vertex (two only at diagonal saddles).
  const size_t n_vertices = static_cast<size_t>(vw) * (h + 1);
  std::vector<std::array<int, 2>> outgoing(n_vertices, {-1, -1});
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    auto& slot = outgoing[static_cast<size_t>(edges[static_cast<size_t>(i)].from)];
    slot[slot[0] < 0 ? 0 : 1] = i;
  }

  std::vector<bool> used(edges.size(), false);
  std::vector<Ring> outers, holes;
  std::vector<int> hole_owner;
  for (size_t start = 0; start < edges.size(); ++start) {
    if (used[start]) continue;
    std::vector<Point> pts;
    int cur = static_cast<int>(start);
    while (!used[static_cast<size_t>(cur)]) {
      const Edge& e = edges[static_cast<size_t>(cur)];
      used[static_cast<size_t>(cur)] = true;
      pts.push_back({static_cast<double>(e.from % vw), static_cast<double>(e.from / vw)});
      const auto& next = outgoing[static_cast<size_t>(e.to)];
      if (next[1] < 0) {
        cur = next[0];
      } else {
        // Saddle: continue onto the diagonal pixel so that diagonally
        // touching tissue stays in one ring.
        const Edge& a = edges[static_cast<size_t>(next[0])];
        cur = (a.owner != e.owner) ? next[0] : next[1];
      }
    }
    Ring ring = MergeCollinear(pts);
    for (Point& p : ring) {
      p.x *= mask.scale;
      p.y *= mask.scale;
    }
    if (SignedArea(ring) > 0) {
      outers.push_back(std::move(ring));
    } else {
      holes.push_back(std::move(ring));
      hole_owner.push_back(edges[start].owner);
    }
  }

  TissuePolygons result;
  std::vector<double> outer_area;
  for (auto& ring : outers) {
    outer_area.push_back(SignedArea(ring));
    result.polygons.push_back({std::move(ring), {}});
  }
  for (size_t i = 0; i < holes.size(); ++i) {
    // A tissue pixel bordering the hole lies inside the hole's own outer
    // ring, and that ring is the smallest one containing it.
    const int owner = hole_owner[i];
    const double px = (owner % w + 0.5) * mask.scale;
    const double py = (owner / w + 0.5) * mask.scale;
    int best = -1;
    for (size_t j = 0; j < result.polygons.size(); ++j) {
      if (!PointInRing(result.polygons[j].outer, px, py)) continue;
      if (best < 0 || outer_area[j] < outer_area[static_cast<size_t>(best)]) {
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      result.polygons[static_cast<size_t>(best)].holes.push_back(std::move(holes[i]));
    }
  }
  return result;
}

GrayImage RasterizePolygons(const TissuePolygons& polys,
                            const MaskGeometry& geometry) {
  GrayImage out(geometry.width, geometry.height);
  std::vector<double> xs;
  for (const TissuePolygon& poly : polys.polygons) {
    for (int row = 0; row < geometry.height; ++row) {
      const double y = (row + 0.5) * geometry.scale;
      xs.clear();
      auto crossings = [&](const Ring& ring) {
        for (size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
          const Point& a = ring[i];
          const Point& b = ring[j];
          if ((a.y > y) != (b.y > y)) {
            xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
          }
        }
      };
      if (poly.outer.size() < 3) continue;
      crossings(poly.outer);
      for (const Ring& hole : poly.holes) {
        if (hole.size() >= 3) crossings(hole);
      }
      std::sort(xs.begin(), xs.end());
      for (size_t k = 0; k + 1 < xs.size(); k += 2) {
        // Pixel centres (col + 0.5) * scale within [xs[k], xs[k+1]).
        const double lo = xs[k] / geometry.scale - 0.5;
        const double hi = xs[k + 1] / geometry.scale - 0.5;
        const int c0 = std::max(0, static_cast<int>(std::ceil(lo)));
        const int c1 = std::min(geometry.width - 1, static_cast<int>(std::ceil(hi)) - 1);
        for (int col = c0; col <= c1; ++col) out.at(col, row) = 1;
      }
    }
  }
  return out;
}

std::string ToGeoJson(const TissuePolygons& polys) {
  auto ring_json = [](const Ring& ring) {
    json coords = json::array();
    for (const Point& p : ring) coords.push_back({p.x, p.y});
    if (!ring.empty()) coords.push_back({ring.front().x, ring.front().y});
    return coords;
  };
  json features = json::array();
  for (const TissuePolygon& poly : polys.polygons) {
    json rings = json::array();
    rings.push_back(ring_json(poly.outer));
    for (const Ring& hole : poly.holes) rings.push_back(ring_json(hole));
    features.push_back({
        {"type", "Feature"},
        {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}},
        {"properties",
         {{"objectType", "annotation"},
          {"classification", {{"name", "Tissue"}}}}},
    });
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump(1);
}

void ExportGeoJson(const TissuePolygons& polys,
                   const std::filesystem::path& path) {
  if (polys.polygons.empty()) Fail(ErrorCode::kEmptyMask, "no polygons to export");
  std::ofstream out(path, std::ios::trunc);
  if (!out) Fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << ToGeoJson(polys) << "\n";
}

namespace {

Ring ParseRing(const json& coords) {
  if (!coords.is_array()) Fail(ErrorCode::kMalformedGeoJson, "ring is not an array");
  Ring ring;
  for (const json& pt : coords) {
    if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number()) {
      Fail(ErrorCode::kMalformedGeoJson, "bad coordinate");
    }
    ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) Fail(ErrorCode::kMalformedGeoJson, "ring has < 3 vertices");
  return ring;
}

TissuePolygon ParsePolygon(const json& rings) {
  if (!rings.is_array() || rings.empty()) {
    Fail(ErrorCode::kMalformedGeoJson, "polygon without rings");
  }
  TissuePolygon poly;
  poly.outer = ParseRing(rings[0]);
  for (size_t i = 1; i < rings.size(); ++i) poly.holes.push_back(ParseRing(rings[i]));
  return poly;
}

}  // namespace

TissuePolygons ParseGeoJson(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kMalformedGeoJson, e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    Fail(ErrorCode::kMalformedGeoJson, "expected a FeatureCollection");
  }
  TissuePolygons polys;
  for (const json& feature : doc["features"]) {
    if (!feature.is_object() || !feature.contains("geometry") ||
        !feature["geometry"].is_object()) {
      Fail(ErrorCode::kMalformedGeoJson, "feature without geometry");
    }
    const json& geom = feature["geometry"];
    const std::string type = geom.value("type", "");
    if (!geom.contains("coordinates")) {
      if (type == "Polygon" || type == "MultiPolygon") {
        Fail(ErrorCode::kMalformedGeoJson, "geometry without coordinates");
      }
    }
    if (type == "Polygon") {
      polys.polygons.push_back(ParsePolygon(geom["coordinates"]));
    } else if (type == "MultiPolygon") {
      if (!geom["coordinates"].is_array()) {
        Fail(ErrorCode::kMalformedGeoJson, "bad MultiPolygon");
      }
      for (const json& rings : geom["coordinates"]) {
        polys.polygons.push_back(ParsePolygon(rings));
      }
    } else if (type.empty()) {
      Fail(ErrorCode::kMalformedGeoJson, "geometry without type");
    } else {
      Fail(ErrorCode::kUnsupportedGeometry, type + " is not an area geometry");
    }
  }
  return polys;
}

TissueMask ImportGeoJson(const std::filesystem::path& path,
                         const MaskGeometry& geometry) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kMissingFile, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const TissuePolygons polys = ParseGeoJson(ss.str());
  return {RasterizePolygons(polys, geometry), geometry.scale,
          MaskSource::kExternal, geometry.slide_id};
}

double TissueFraction(const TissueMask& mask, const Rect& rect) {
  if (rect.w <= 0 || rect.h <= 0) {
    Fail(ErrorCode::kInvalidArgument, "rectangle must have positive area");
  }
  const double s = mask.scale;
  const int w = mask.mask.width, h = mask.mask.height;
  const int c0 = std::max(0, static_cast<int>(std::floor(rect.x / s)));
  const int c1 = std::min(w - 1, static_cast<int>(std::ceil((rect.x + rect.w) / s)) - 1);
  const int r0 = std::max(0, static_cast<int>(std::floor(rect.y / s)));
  const int r1 = std::min(h - 1, static_cast<int>(std::ceil((rect.y + rect.h) / s)) - 1);
  if (c0 > c1 || r0 > r1) return 0.0;

  std::vector<double> wx(static_cast<size_t>(c1 - c0 + 1));
  for (int c = c0; c <= c1; ++c) {
    wx[static_cast<size_t>(c - c0)] =
        std::max(0.0, std::min((c + 1) * s, rect.x + rect.w) - std::max(c * s, rect.x));
  }
  double covered = 0;
  for (int r = r0; r <= r1; ++r) {
    const double wy =
        std::max(0.0, std::min((r + 1) * s, rect.y + rect.h) - std::max(r * s, rect.y));
    if (wy == 0) continue;
    double row = 0;
    for (int c = c0; c <= c1; ++c) {
      if (mask.mask.at(c, r)) row += wx[static_cast<size_t>(c - c0)];
    }
    covered += row * wy;
  }
  return std::clamp(covered / (rect.w * rect.h), 0.0, 1.0);
}

double MaskIoU(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) {
    Fail(ErrorCode::kDimMismatch, "masks differ in size");
  }
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void SaveMask(const TissueMask& mask, const std::filesystem::path& png_path) {
  GrayImage img = mask.mask;
  for (auto& v : img.data) v = v ? 255 : 0;
  WritePngGray(png_path, img);
  auto sidecar = png_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) Fail(ErrorCode::kIoFailure, "cannot write " + sidecar.string());
  out << json{{"scale", mask.scale},
              {"slide_id", mask.slide_id},
              {"source", mask.source == MaskSource::kExternal ? "external"
                                                              : "otsu_pipeline"}}
             .dump(2)
      << "\n";
}

TissueMask LoadMask(const std::filesystem::path& png_path) {
  auto sidecar = png_path;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) Fail(ErrorCode::kMissingFile, sidecar.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kSchemaError, e.what());
  }
  TissueMask mask;
  mask.mask = ReadPngGray(png_path);
  for (auto& v : mask.mask.data) v = v >= 128 ? 1 : 0;
  mask.scale = meta.value("scale", 1.0);
  mask.slide_id = meta.value("slide_id", "");
  mask.source = meta.value("source", "") == "external" ? MaskSource::kExternal
                                                       : MaskSource::kOtsuPipeline;
  return mask;
}

}  // namespace pathforge
