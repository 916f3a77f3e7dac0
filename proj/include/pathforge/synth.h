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

// Synthetic brightfield slides and cohorts with known ground truth.

#ifndef PATHFORGE_SYNTH_H_
#define PATHFORGE_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathforge/raster.h"

namespace pathforge {

struct Ellipse {
  double cx = 0;
  double cy = 0;
  double rx = 0;
  double ry = 0;
};

struct BlobSlideParams {
  int width = 2048;
  int height = 2048;
  std::vector<Ellipse> blobs;
  /// Axis-aligned square blobs: {x, y, side}.
  std::vector<std::array<int, 3>> squares;
  int specks = 0;      // isolated tissue-coloured specks
  int speck_size = 2;  // pixels
  int noise = 12;      // per-channel uniform noise amplitude
};

struct SyntheticSlide {
  RasterImage image;
  GrayImage truth;  // level-0 tissue mask, specks excluded
};

SyntheticSlide MakeBlobSlide(const BlobSlideParams& params, uint64_t seed);

/// Random 1-3 ellipses inside a slide of the given size.
BlobSlideParams RandomBlobParams(int width, int height, uint64_t seed);

/// Ground-truth mask reduced to a thumbnail grid (pixel is tissue when at
/// least half its footprint is).
GrayImage ReduceMask(const GrayImage& truth, int out_width, int out_height);

struct CohortParams {
  int n_slides = 20;
  int n_classes = 2;
  uint64_t seed = 7;
  int slide_size = 1536;
  int base_magnification = 20;
  /// Fraction of tissue patch-cells carrying the class signal.
  double signal_fraction = 0.6;
  bool survival = false;
  int slides_per_patient = 1;
  int n_folds = 5;
};

struct CohortSummary {
  std::vector<std::filesystem::path> slides;
  std::filesystem::path task_csv;
  std::filesystem::path task_yaml;
};

/// Writes `<out_dir>/slides/*.spyr` and `<out_dir>/task/task.{csv,yaml}`.
/// Class c slides get a stain/texture shift proportional to c in a seeded
/// fraction of their tissue, so patch statistics carry the label.
CohortSummary GenerateCohort(const CohortParams& params,
                             const std::filesystem::path& out_dir);

}  // namespace pathforge

#endif  // PATHFORGE_SYNTH_H_
