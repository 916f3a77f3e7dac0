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

#ifndef PATHFORGE_TISSUE_SEG_H_
#define PATHFORGE_TISSUE_SEG_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pathforge/raster.h"
#include "pathforge/slide_io.h"

namespace pathforge {

struct SegParams {
  int thumb_max_dim = 1024;
  int blur_radius = 2;
  /// Otsu when unset; otherwise foreground is saturation > threshold.
  std::optional<int> fixed_threshold;
  int close_radius = 2;
  int open_radius = 1;
  double min_region_area = 1e-4;  // fraction of thumbnail area
  double min_hole_area = 1e-4;

  void Validate() const;
};

enum class MaskSource { kOtsuPipeline, kExternal };

/// Geometry of a thumbnail-scale mask relative to its slide.
struct MaskGeometry {
  int width = 0;
  int height = 0;
  double scale = 1.0;  // level-0 pixels per mask pixel
  std::string slide_id;

  static MaskGeometry ForSlide(const SlidePyramid& slide, int thumb_max_dim);
};

struct TissueMask {
  GrayImage mask;  // 0 = background, 1 = tissue
  double scale = 1.0;
  MaskSource source = MaskSource::kOtsuPipeline;
  std::string slide_id;

  MaskGeometry geometry() const {
    return {mask.width, mask.height, scale, slide_id};
  }
  int64_t ForegroundCount() const;
};

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

/// Open ring: the closing vertex is implicit. Positive shoelace area for
/// outer rings, negative for holes.
using Ring = std::vector<Point>;

struct TissuePolygon {
  Ring outer;
  std::vector<Ring> holes;
};

struct TissuePolygons {
  std::vector<TissuePolygon> polygons;  // level-0 coordinates
};

double SignedArea(const Ring& ring);

GrayImage SaturationChannel(const RasterImage& image);

using Histogram = std::array<uint64_t, 256>;

Histogram ComputeHistogram(const GrayImage& image);

/// Smallest t maximising the between-class variance of [0..t] vs [t+1..255].
/// Throws DegenerateHistogram with fewer than two populated bins.
int OtsuThreshold(const Histogram& hist);

/// Mean over the (2r+1)^2 window clipped to the image, rounded half up.
GrayImage BoxBlur(const GrayImage& image, int radius);

/// Binary mask of pixels strictly above `threshold`.
GrayImage ThresholdAbove(const GrayImage& image, int threshold);

// Binary morphology with a disk of the given radius. Out-of-image pixels
// are ignored, which keeps closing extensive and opening anti-extensive.
GrayImage Dilate(const GrayImage& mask, int radius);
GrayImage Erode(const GrayImage& mask, int radius);
GrayImage Close(const GrayImage& mask, int radius);
GrayImage Open(const GrayImage& mask, int radius);

/// Drops 8-connected foreground components with fewer than `min_pixels`.
GrayImage RemoveSmallComponents(const GrayImage& mask, int64_t min_pixels);
/// Fills 4-connected background components that do not touch the border
/// and have fewer than `min_pixels`.
GrayImage FillSmallHoles(const GrayImage& mask, int64_t min_pixels);
int CountComponents(const GrayImage& mask);

/// Full classical pipeline on an already-built thumbnail.
TissueMask SegmentThumbnail(const RasterImage& thumbnail, double scale,
                            const SegParams& params,
                            const std::string& slide_id = {});

/// thumbnail -> saturation -> blur -> threshold -> close/open -> component
/// and hole filtering. Throws EmptyTissue when nothing survives.
TissueMask SegmentTissue(const SlidePyramid& slide, const SegParams& params);

/// Boundary extraction on the binary mask (8-connected foreground,
/// 4-connected background), collinear vertices merged, scaled to level 0.
TissuePolygons MaskToPolygons(const TissueMask& mask);

/// Pixel-centre rasterisation (even-odd within a polygon, union across).
GrayImage RasterizePolygons(const TissuePolygons& polys,
                            const MaskGeometry& geometry);

std::string ToGeoJson(const TissuePolygons& polys);
void ExportGeoJson(const TissuePolygons& polys,
                   const std::filesystem::path& path);
TissuePolygons ParseGeoJson(const std::string& text);
TissueMask ImportGeoJson(const std::filesystem::path& path,
                         const MaskGeometry& geometry);

struct Rect {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
};

/// Fraction of a level-0 rectangle covered by tissue, weighting mask pixels
/// by their partial overlap with the rectangle.
double TissueFraction(const TissueMask& mask, const Rect& rect);

double MaskIoU(const GrayImage& a, const GrayImage& b);

/// 8-bit PNG (0/255) plus `<stem>.json` sidecar {scale, slide_id, source}.
void SaveMask(const TissueMask& mask, const std::filesystem::path& png_path);
TissueMask LoadMask(const std::filesystem::path& png_path);

}  // namespace pathforge

#endif  // PATHFORGE_TISSUE_SEG_H_
