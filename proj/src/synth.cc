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

#include "pathforge/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "pathforge/error.h"
#include "pathforge/rng.h"
#include "pathforge/slide_io.h"
#include "pathforge/task_splits.h"

namespace pathforge {
namespace {

constexpr std::array<int, 3> kEosin = {228, 150, 196};
constexpr std::array<int, 3> kNuclei = {120, 72, 162};

uint8_t Clamp8(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

void Paint(RasterImage& img, int x, int y, const std::array<int, 3>& rgb,
           Rng& rng, int noise) {
  uint8_t* p = img.at(x, y);
  for (int c = 0; c < 3; ++c) {
    const int jitter = noise > 0 ? static_cast<int>(rng.UniformInt(2 * noise + 1)) - noise : 0;
    p[c] = Clamp8(rgb[static_cast<size_t>(c)] + jitter);
  }
}

}  // namespace

SyntheticSlide MakeBlobSlide(const BlobSlideParams& params, uint64_t seed) {
  if (params.width <= 0 || params.height <= 0) {
    Fail(ErrorCode::kInvalidArgument, "slide dimensions must be positive");
  }
  Rng rng(seed);
  SyntheticSlide out;
  out.image = RasterImage(params.width, params.height, 255);
  out.truth = GrayImage(params.width, params.height, 0);

  auto inside = [&](int x, int y) {
    const double px = x + 0.5, py = y + 0.5;
    for (const Ellipse& e : params.blobs) {
      const double dx = (px - e.cx) / e.rx, dy = (py - e.cy) / e.ry;
      if (dx * dx + dy * dy <= 1.0) return true;
    }
    for (const auto& sq : params.squares) {
      if (x >= sq[0] && x < sq[0] + sq[2] && y >= sq[1] && y < sq[1] + sq[2]) {
        return true;
      }
    }
    return false;
  };

  const int bg_noise = std::max(1, params.noise / 3);
  for (int y = 0; y < params.height; ++y) {
    for (int x = 0; x < params.width; ++x) {
      if (inside(x, y)) {
        out.truth.at(x, y) = 1;
        const bool nucleus = rng.UniformInt(100) < 8;
        Paint(out.image, x, y, nucleus ? kNuclei : kEosin, rng, params.noise);
      } else {
        const int v = 255 - static_cast<int>(rng.UniformInt(static_cast<uint64_t>(bg_noise) + 1));
        uint8_t* p = out.image.at(x, y);
        p[0] = p[1] = p[2] = Clamp8(v);
      }
    }
  }
  for (int s = 0; s < params.specks; ++s) {
    const int sx = static_cast<int>(rng.UniformInt(static_cast<uint64_t>(params.width - params.speck_size)));
    const int sy = static_cast<int>(rng.UniformInt(static_cast<uint64_t>(params.height - params.speck_size)));
    for (int dy = 0; dy < params.speck_size; ++dy) {
      for (int dx = 0; dx < params.speck_size; ++dx) {
        if (!out.truth.at(sx + dx, sy + dy)) {
          Paint(out.image, sx + dx, sy + dy, kNuclei, rng, 0);
        }
      }
    }
  }
  return out;
}

BlobSlideParams RandomBlobParams(int width, int height, uint64_t seed) {
  Rng rng(seed);
  BlobSlideParams p;
  p.width = width;
  p.height = height;
  const int n = 1 + static_cast<int>(rng.UniformInt(3));
  const double m = std::min(width, height);
  for (int i = 0; i < n; ++i) {
    Ellipse e;
    e.rx = rng.Uniform(0.12, 0.25) * m;
    e.ry = rng.Uniform(0.12, 0.25) * m;
    e.cx = rng.Uniform(e.rx + 0.05 * m, width - e.rx - 0.05 * m);
    e.cy = rng.Uniform(e.ry + 0.05 * m, height - e.ry - 0.05 * m);
    p.blobs.push_back(e);
  }
  return p;
}

GrayImage ReduceMask(const GrayImage& truth, int out_width, int out_height) {
  RasterImage as_rgb(truth.width, truth.height);
  for (size_t i = 0; i < truth.data.size(); ++i) {
    const uint8_t v = truth.data[i] ? 255 : 0;
    as_rgb.pixels[i * 3] = as_rgb.pixels[i * 3 + 1] = as_rgb.pixels[i * 3 + 2] = v;
  }
  const RasterImage small = ResizeArea(as_rgb, out_width, out_height);
  GrayImage out(out_width, out_height);
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = small.pixels[i * 3] >= 128 ? 1 : 0;
  }
  return out;
}

CohortSummary GenerateCohort(const CohortParams& params, const std::filesystem::path& out_dir) {
  if (params.n_slides < 1 || params.n_classes < 2 || params.slides_per_patient < 1 ||
      params.slide_size < 256 || params.signal_fraction < 0 || params.signal_fraction > 1) {
    Fail(ErrorCode::kInvalidArgument, "bad cohort parameters");
  }
  const double mpp = MppForMagnification(params.base_magnification);
  const int n_patients =
      (params.n_slides + params.slides_per_patient - 1) / params.slides_per_patient;

  // Balanced class assignment, shuffled by seed.
  std::vector<int> patient_class(static_cast<size_t>(n_patients));
  for (int i = 0; i < n_patients; ++i) patient_class[static_cast<size_t>(i)] = i % params.n_classes;
  Rng assign = Rng::Derive(params.seed, 1);
  assign.Shuffle(patient_class);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "slides", ec);
  std::filesystem::create_directories(out_dir / "task", ec);
  if (ec) Fail(ErrorCode::kIoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  constexpr int kCell = 128;  // signal is planted per cell of this many pixels
  int levels = 1;
  while ((params.slide_size >> levels) >= 256) ++levels;

  CohortSummary summary;
  std::vector<PatientRecord> patients(static_cast<size_t>(n_patients));
  Rng outcome = Rng::Derive(params.seed, 2);
  for (int p = 0; p < n_patients; ++p) {
    PatientRecord& rec = patients[static_cast<size_t>(p)];
    char id[32];
    std::snprintf(id, sizeof(id), "patient_%03d", p);
    rec.patient_id = id;
    const int cls = patient_class[static_cast<size_t>(p)];
    rec.label = "class" + std::to_string(cls);
    // Higher classes fail earlier.
    rec.time = std::round(100.0 * std::exp(-0.8 * cls + 0.4 * outcome.Normal()) * 1000) / 1000;
    rec.event = outcome.Uniform() < 0.75 ? 1 : 0;
  }

  for (int s = 0; s < params.n_slides; ++s) {
    const int p = s / params.slides_per_patient;
    const int cls = patient_class[static_cast<size_t>(p)];
    const uint64_t slide_seed = Rng::Derive(params.seed, 100 + static_cast<uint64_t>(s)).Next();
    SyntheticSlide slide = MakeBlobSlide(
        RandomBlobParams(params.slide_size, params.slide_size, slide_seed), slide_seed + 1);

    // Stain shift (less red and green, so darker purple) and extra nuclei in a
    // seeded fraction of cells, scaled by the class index.
    Rng plant = Rng::Derive(slide_seed, 3);
    for (int cy = 0; cy < params.slide_size; cy += kCell) {
      for (int cx = 0; cx < params.slide_size; cx += kCell) {
        if (plant.Uniform() >= params.signal_fraction || cls == 0) continue;
        for (int y = cy; y < std::min(cy + kCell, params.slide_size); ++y) {
          for (int x = cx; x < std::min(cx + kCell, params.slide_size); ++x) {
            if (!slide.truth.at(x, y)) continue;
            uint8_t* px = slide.image.at(x, y);
            if (plant.UniformInt(100) < static_cast<uint64_t>(6 * cls)) {
              Paint(slide.image, x, y, kNuclei, plant, 8);
              continue;
            }
            px[0] = Clamp8(px[0] - 24 * cls);
            px[1] = Clamp8(px[1] - 16 * cls);
          }
        }
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "slide_%03d", s);
    const std::filesystem::path path = out_dir / "slides" / (std::string(name) + ".spyr");
    char mpp_text[32];
    std::snprintf(mpp_text, sizeof(mpp_text), "%.4f", mpp);
    WritePyramid(slide.image, 256, levels,
                 {{"mpp_x", mpp_text}, {"mpp_y", mpp_text}}, path, name);
    patients[static_cast<size_t>(p)].slide_ids.push_back(name);
    summary.slides.push_back(path);
  }

  SplitOptions split;
  split.n_folds = params.n_folds;
  split.seed = params.seed;
  split.survival = params.survival;
  const SplitTable table = GenerateSplits(patients, split);

  TaskSpec spec;
  spec.task_id = params.survival ? "synthetic_survival" : "synthetic_classes";
  spec.level = TaskLevel::kPatient;
  spec.label_kind = params.survival ? LabelKind::kSurvival : LabelKind::kCategorical;
  if (!params.survival) {
    for (int c = 0; c < params.n_classes; ++c) spec.classes.push_back("class" + std::to_string(c));
  }
  spec.n_samples = n_patients;
  spec.n_folds = params.n_folds;
  spec.metric = params.survival ? Metric::kCIndex : Metric::kBalancedAccuracy;
  spec.split_scheme = SplitScheme::kKFold;
  spec.stratified = true;
  spec.seed = params.seed;
  summary.task_csv = out_dir / "task" / "task.csv";
  summary.task_yaml = out_dir / "task" / "task.yaml";
  WriteTask(spec, table, summary.task_csv, summary.task_yaml);
  return summary;
}

}  // namespace pathforge
