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

#include "pathforge/feature_engine.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "binary_io.h"
#include "json.hpp"
#include "pathforge/error.h"
#include "pathforge/rng.h"
#include "pathforge/slide_io.h"

namespace pathforge {
namespace {

using nlohmann::json;

constexpr char kMagic[] = "FSTR";
constexpr uint32_t kVersion = 1;

void CheckBatch(const EncoderSpec& spec, const std::vector<RasterImage>& patches) {
  if (patches.empty()) Fail(ErrorCode::kInvalidArgument, "empty patch batch");
  const int side = patches.front().width;
  for (const RasterImage& p : patches) {
    if (p.width != p.height || p.width != side ||
        (spec.expected_patch_size > 0 && p.width != spec.expected_patch_size)) {
      Fail(ErrorCode::kSizeMismatch,
           spec.name + " got a " + std::to_string(p.width) + "x" +
               std::to_string(p.height) + " patch, expected " +
               std::to_string(spec.expected_patch_size > 0 ? spec.expected_patch_size
                                                           : side) + " square");
    }
  }
}

class StubStatsEncoder : public PatchEncoder {
 public:
  StubStatsEncoder()
      : spec_{"stub-stats-64", EncoderKind::kPatch, kStubStatsDim,
              EncoderProvider::kBuiltinStub, 0} {}
  const EncoderSpec& spec() const override { return spec_; }
  FeatureMatrix Encode(const std::vector<RasterImage>& patches) override {
    CheckBatch(spec_, patches);
    FeatureMatrix out(static_cast<Eigen::Index>(patches.size()), kStubStatsDim);
    for (size_t i = 0; i < patches.size(); ++i) {
      const std::vector<float> f = StubStatsFeatures(patches[i]);
      std::copy(f.begin(), f.end(), out.row(static_cast<Eigen::Index>(i)).data());
    }
    return out;
  }

 private:
  EncoderSpec spec_;
};

// Fixed seeded projection of the stats features through a logistic, so the
// output stays in (0, 1) while mixing every input feature.
class StubProjEncoder : public PatchEncoder {
 public:
  static constexpr int kDim = 32;
  StubProjEncoder()
      : spec_{"stub-proj-32", EncoderKind::kPatch, kDim,
              EncoderProvider::kBuiltinStub, 0},
        weights_(kDim, kStubStatsDim) {
    Rng rng(0x5eed32);
    for (Eigen::Index r = 0; r < kDim; ++r) {
      for (Eigen::Index c = 0; c < kStubStatsDim; ++c) {
        weights_(r, c) = static_cast<float>(rng.Normal() * 2.0);
      }
    }
  }
  const EncoderSpec& spec() const override { return spec_; }
  FeatureMatrix Encode(const std::vector<RasterImage>& patches) override {
    CheckBatch(spec_, patches);
    FeatureMatrix out(static_cast<Eigen::Index>(patches.size()), kDim);
    for (size_t i = 0; i < patches.size(); ++i) {
      const std::vector<float> f = StubStatsFeatures(patches[i]);
      const Eigen::Map<const Eigen::VectorXf> x(f.data(), kStubStatsDim);
      const Eigen::VectorXf z = weights_ * (x.array() - 0.25f).matrix();
      out.row(static_cast<Eigen::Index>(i)) =
          (1.0f / (1.0f + (-z.array()).exp())).transpose();
    }
    return out;
  }

 private:
  EncoderSpec spec_;
  Eigen::MatrixXf weights_;
};

class MeanPoolEncoder : public SlideEncoder {
 public:
  MeanPoolEncoder()
      : spec_{"mean-pool", EncoderKind::kSlide, 0, EncoderProvider::kBuiltinStub, 0} {}
  const EncoderSpec& spec() const override { return spec_; }
  Eigen::VectorXf Encode(const FeatureStore& features) override {
    return PoolSlide(features, PoolMethod::kMean);
  }

 private:
  EncoderSpec spec_;
};

json HeaderJson(const FeatureStore& s) {
  return {{"slide_id", s.slide_id},
          {"encoder_name", s.encoder_name},
          {"dim", s.dim},
          {"count", s.coords.size()},
          {"grid",
           {{"patch_size", s.grid_params.patch_size},
            {"target_magnification", s.grid_params.target_magnification},
            {"overlap", s.grid_params.overlap},
            {"min_tissue_frac", s.grid_params.min_tissue_frac},
            {"level0_patch_extent", s.level0_patch_extent}}}};
}

struct ParsedHeader {
  FeatureStore store;  // without coords and matrix
  uint64_t count = 0;
  size_t payload_offset = 0;
};

// Parses everything up to the coordinate block. `data` may be just a prefix
// of the file; `file_size` is the full size.
ParsedHeader ParseHeader(const uint8_t* data, size_t size, uint64_t file_size) {
  internal::ByteReader r(data, size, ErrorCode::kTruncatedFile);
  if (!r.Magic(kMagic)) Fail(ErrorCode::kBadMagic, "not an FSTR file");
  const uint32_t version = r.U32();
  if (version != kVersion) {
    Fail(ErrorCode::kVersionMismatch, "FSTR version " + std::to_string(version));
  }
  const uint32_t header_len = r.U32();
  const std::string text = r.String(header_len);
  ParsedHeader out;
  try {
    const json h = json::parse(text);
    out.store.slide_id = h.at("slide_id").get<std::string>();
    out.store.encoder_name = h.at("encoder_name").get<std::string>();
    out.store.dim = h.at("dim").get<int>();
    out.count = h.at("count").get<uint64_t>();
    const json& g = h.at("grid");
    out.store.grid_params.patch_size = g.at("patch_size").get<int>();
    out.store.grid_params.target_magnification = g.at("target_magnification").get<double>();
    out.store.grid_params.overlap = g.at("overlap").get<int>();
    out.store.grid_params.min_tissue_frac = g.at("min_tissue_frac").get<double>();
    out.store.level0_patch_extent = g.at("level0_patch_extent").get<int64_t>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kTruncatedFile, std::string("unreadable FSTR header: ") + e.what());
  }
  if (out.store.dim <= 0) Fail(ErrorCode::kTruncatedFile, "FSTR dim must be positive");
  out.payload_offset = r.position();
  const uint64_t expected =
      out.payload_offset + out.count * 16 + out.count * static_cast<uint64_t>(out.store.dim) * 4;
  if (file_size != expected) {
    Fail(ErrorCode::kTruncatedFile, "FSTR size " + std::to_string(file_size) +
                                        " does not match header (" +
                                        std::to_string(expected) + ")");
  }
  return out;
}

}  // namespace

bool FeatureStore::operator==(const FeatureStore& o) const {
  return slide_id == o.slide_id && encoder_name == o.encoder_name && dim == o.dim &&
         coords == o.coords && grid_params == o.grid_params &&
         level0_patch_extent == o.level0_patch_extent &&
         matrix.rows() == o.matrix.rows() && matrix.cols() == o.matrix.cols() &&
         std::equal(matrix.data(), matrix.data() + matrix.size(), o.matrix.data());
}

std::vector<float> StubStatsFeatures(const RasterImage& patch) {
  const int w = patch.width, h = patch.height;
  const int64_t area = int64_t{w} * h;
  if (area <= 0) Fail(ErrorCode::kSizeMismatch, "empty patch");
  std::vector<float> f(kStubStatsDim, 0.0f);

  // Single pass: per-channel value histograms, neighbour differences and the
  // gray image for texture.
  std::array<std::array<int64_t, 256>, 3> hist{};
  std::array<int64_t, 3> edge{};
  std::vector<uint8_t> gray(static_cast<size_t>(area));
  for (int y = 0; y < h; ++y) {
    const uint8_t* row = patch.at(0, y);
    const uint8_t* below = y + 1 < h ? patch.at(0, y + 1) : nullptr;
    for (int x = 0; x < w; ++x) {
      const uint8_t* p = row + 3 * x;
      for (int c = 0; c < 3; ++c) {
        ++hist[c][p[c]];
        if (x + 1 < w) edge[c] += std::abs(int{p[c + 3]} - int{p[c]});
        if (below) edge[c] += std::abs(int{below[3 * x + c]} - int{p[c]});
      }
      gray[static_cast<size_t>(y) * w + x] =
          static_cast<uint8_t>((77 * p[0] + 150 * p[1] + 29 * p[2] + 128) >> 8);
    }
  }
  const int64_t pairs = int64_t{w - 1} * h + int64_t{w} * (h - 1);
  const double a = static_cast<double>(area);

  for (int c = 0; c < 3; ++c) {
    __int128 s1 = 0, s2 = 0;
    int64_t cum = 0;
    int median = -1;
    const int64_t half = (area + 1) / 2;  // lower median
    for (int v = 0; v < 256; ++v) {
      const int64_t n = hist[c][v];
      s1 += static_cast<__int128>(n) * v;
      s2 += static_cast<__int128>(n) * v * v;
      cum += n;
      if (median < 0 && cum >= half) median = v;
    }
    const double mean = static_cast<double>(s1) / a;
    const double var = static_cast<double>(s2 * area - s1 * s1) / (a * a);
    f[static_cast<size_t>(c * 4 + 0)] = static_cast<float>(mean / 255.0);
    f[static_cast<size_t>(c * 4 + 1)] = static_cast<float>(std::sqrt(std::max(0.0, var)) / 127.5);
    f[static_cast<size_t>(c * 4 + 2)] = static_cast<float>(0.5 + 0.5 * (mean - median) / 255.0);
    f[static_cast<size_t>(c * 4 + 3)] =
        pairs > 0 ? static_cast<float>(static_cast<double>(edge[c]) / (255.0 * pairs)) : 0.0f;
    for (int b = 0; b < 16; ++b) {
      int64_t n = 0;
      for (int v = b * 16; v < b * 16 + 16; ++v) n += hist[c][v];
      f[static_cast<size_t>(12 + c * 16 + b)] = static_cast<float>(n / a);
    }
  }

  // Gray texture, coordinate free: sums over all horizontal and vertical
  // neighbour pairs plus the 16-bin gray histogram.
  int64_t sq = 0;
  double homog = 0;
  std::array<int64_t, 16> gbins{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int g = gray[static_cast<size_t>(y) * w + x];
      ++gbins[static_cast<size_t>(g >> 4)];
      if (x + 1 < w) {
        const int d = gray[static_cast<size_t>(y) * w + x + 1] - g;
        sq += d * d;
        homog += 1.0 / (1.0 + std::abs(d));
      }
      if (y + 1 < h) {
        const int d = gray[static_cast<size_t>(y + 1) * w + x] - g;
        sq += d * d;
        homog += 1.0 / (1.0 + std::abs(d));
      }
    }
  }
  double energy = 0, entropy = 0;
  for (int64_t n : gbins) {
    if (n == 0) continue;
    const double p = n / a;
    energy += p * p;
    entropy -= p * std::log(p);
  }
  f[60] = pairs > 0 ? static_cast<float>(sq / (65025.0 * pairs)) : 0.0f;
  f[61] = pairs > 0 ? static_cast<float>(homog / pairs) : 1.0f;
  f[62] = static_cast<float>(energy);
  f[63] = static_cast<float>(entropy / std::log(16.0));
  return f;
}

// --- Registry ---------------------------------------------------------------

EncoderRegistry EncoderRegistry::WithBuiltins() {
  EncoderRegistry r;
  r.AddPatch(StubStatsEncoder().spec(), [] { return std::make_unique<StubStatsEncoder>(); });
  r.AddPatch(StubProjEncoder().spec(), [] { return std::make_unique<StubProjEncoder>(); });
  r.AddSlide(MeanPoolEncoder().spec(), [] { return std::make_unique<MeanPoolEncoder>(); });
  return r;
}

void EncoderRegistry::AddPatch(const EncoderSpec& spec, PatchFactory factory) {
  if (spec.kind != EncoderKind::kPatch || spec.dim <= 0) {
    Fail(ErrorCode::kInvalidArgument, "patch encoder " + spec.name + " needs dim > 0");
  }
  if (!entries_.emplace(spec.name, Entry{spec, std::move(factory), nullptr}).second) {
    Fail(ErrorCode::kInvalidArgument, "encoder " + spec.name + " already registered");
  }
}

void EncoderRegistry::AddSlide(const EncoderSpec& spec, SlideFactory factory) {
  if (spec.kind != EncoderKind::kSlide) {
    Fail(ErrorCode::kInvalidArgument, spec.name + " is not a slide encoder");
  }
  if (!entries_.emplace(spec.name, Entry{spec, nullptr, std::move(factory)}).second) {
    Fail(ErrorCode::kInvalidArgument, "encoder " + spec.name + " already registered");
  }
}

void EncoderRegistry::AddExternal(const std::string& name, int dim, int patch_size,
                                  std::vector<std::string> argv) {
  if (argv.empty()) Fail(ErrorCode::kInvalidArgument, "external encoder needs a command");
  const EncoderSpec spec{name, EncoderKind::kPatch, dim,
                         EncoderProvider::kExternalProcess, patch_size};
  AddPatch(spec, [spec, argv = std::move(argv)] {
    return std::make_unique<ExternalProcessEncoder>(spec, argv);
  });
}

bool EncoderRegistry::Contains(const std::string& name) const {
  return entries_.count(name) > 0;
}

const EncoderRegistry::Entry& EncoderRegistry::Find(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) {
    std::string known;
    for (const auto& [n, e] : entries_) known += (known.empty() ? "" : ", ") + n;
    Fail(ErrorCode::kUnknownEncoder,
         "'" + name + "' is not registered (known: " + known + ")");
  }
  return it->second;
}

const EncoderSpec& EncoderRegistry::Spec(const std::string& name) const {
  return Find(name).spec;
}

std::unique_ptr<PatchEncoder> EncoderRegistry::MakePatch(const std::string& name) const {
  const Entry& e = Find(name);
  if (!e.patch) Fail(ErrorCode::kUnknownEncoder, name + " is not a patch encoder");
  return e.patch();
}

std::unique_ptr<SlideEncoder> EncoderRegistry::MakeSlide(const std::string& name) const {
  const Entry& e = Find(name);
  if (!e.slide) Fail(ErrorCode::kUnknownEncoder, name + " is not a slide encoder");
  return e.slide();
}

std::vector<std::string> EncoderRegistry::Names() const {
  std::vector<std::string> out;
  for (const auto& [n, e] : entries_) out.push_back(n);
  return out;
}

// --- Pooling ----------------------------------------------------------------

Eigen::VectorXf PoolSlide(const FeatureStore& features, PoolMethod method) {
  if (method != PoolMethod::kMean) Fail(ErrorCode::kInvalidArgument, "unknown pooling");
  const auto& m = features.matrix;
  if (m.rows() == 0) Fail(ErrorCode::kEmptyStore, features.slide_id + " has no patches");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    acc += m.row(r).transpose().cast<double>();
  }
  return (acc / static_cast<double>(m.rows())).cast<float>();
}

Eigen::VectorXf AggregatePatient(const std::vector<Eigen::VectorXf>& slides) {
  if (slides.empty()) Fail(ErrorCode::kEmptyStore, "patient has no slide vectors");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(slides.front().size());
  for (const auto& v : slides) {
    if (v.size() != acc.size()) {
      Fail(ErrorCode::kDimMismatch, "slide vectors of dims " + std::to_string(acc.size()) +
                                        " and " + std::to_string(v.size()));
    }
    acc += v.cast<double>();
  }
  return (acc / static_cast<double>(slides.size())).cast<float>();
}

// --- FSTR -------------------------------------------------------------------

void SaveFeatures(const FeatureStore& store, const std::filesystem::path& path) {
  if (store.dim <= 0 || store.matrix.cols() != store.dim ||
      store.matrix.rows() != store.count()) {
    Fail(ErrorCode::kDimMismatch, "feature matrix shape does not match coords/dim");
  }
  if (!store.matrix.allFinite()) {
    Fail(ErrorCode::kNonFinite, "feature matrix of " + store.slide_id + " has non-finite values");
  }
  internal::ByteWriter w;
  w.Magic(kMagic);
  w.U32(kVersion);
  w.LengthPrefixed(HeaderJson(store).dump());
  for (const PatchCoord& c : store.coords) {
    w.I64(c.x);
    w.I64(c.y);
  }
  w.Bytes(store.matrix.data(), static_cast<size_t>(store.matrix.size()) * sizeof(float));
  internal::AtomicWrite(path, w.buffer());
}

FeatureStore LoadFeatures(const std::filesystem::path& path) {
  const std::vector<uint8_t> data = internal::ReadWholeFile(path);
  ParsedHeader h = ParseHeader(data.data(), data.size(), data.size());
  internal::ByteReader r(data.data() + h.payload_offset, data.size() - h.payload_offset,
                         ErrorCode::kTruncatedFile);
  FeatureStore s = std::move(h.store);
  s.coords.resize(h.count);
  for (PatchCoord& c : s.coords) {
    c.x = r.I64();
    c.y = r.I64();
  }
  s.matrix.resize(static_cast<Eigen::Index>(h.count), s.dim);
  r.Bytes(s.matrix.data(), static_cast<size_t>(s.matrix.size()) * sizeof(float));
  if (!s.matrix.allFinite()) Fail(ErrorCode::kNonFinite, path.string() + " has non-finite values");
  return s;
}

bool ValidFeatureFile(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) return false;
  std::ifstream in(path, std::ios::binary);
  std::vector<uint8_t> prefix(std::min<uintmax_t>(size, 1 << 16));
  if (!in.read(reinterpret_cast<char*>(prefix.data()),
               static_cast<std::streamsize>(prefix.size()))) {
    return false;
  }
  try {
    ParseHeader(prefix.data(), prefix.size(), size);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// --- Batch runner -----------------------------------------------------------

std::string_view SlideStatusName(SlideStatus status) {
  switch (status) {
    case SlideStatus::kDone: return "done";
    case SlideStatus::kSkippedExisting: return "skipped_existing";
    case SlideStatus::kFailed: return "failed";
  }
  return "unknown";
}

std::filesystem::path FeaturePathFor(const std::filesystem::path& out_dir,
                                     const std::filesystem::path& slide) {
  return out_dir / (slide.stem().string() + ".fstr");
}

namespace {

int64_t ExtractSlide(const std::filesystem::path& input, const std::filesystem::path& output,
                     const PipelineConfig& config, PatchEncoder& encoder) {
  const SlidePyramid slide = OpenSlide(input, config.mpp_override);
  const MagInfo mag = InferMagnification(slide);
  const TissueMask mask = SegmentTissue(slide, config.seg);
  const PatchGrid grid = PlanGrid(slide, mask, mag, config.patch);

  FeatureStore store;
  store.slide_id = slide.slide_id();
  store.encoder_name = encoder.spec().name;
  store.dim = encoder.spec().dim;
  store.coords = grid.coords;
  store.grid_params = grid.params;
  store.level0_patch_extent = grid.level0_patch_extent;
  store.matrix.resize(static_cast<Eigen::Index>(grid.coords.size()), store.dim);

  const size_t n = grid.coords.size();
  const size_t chunk = static_cast<size_t>(std::max(1, config.sub_batch));
  std::vector<RasterImage> batch;
  for (size_t start = 0; start < n; start += chunk) {
    const size_t end = std::min(n, start + chunk);
    batch.clear();
    for (size_t i = start; i < end; ++i) batch.push_back(LoadPatch(slide, grid, i));
    const FeatureMatrix rows = encoder.Encode(batch);
    if (rows.rows() != static_cast<Eigen::Index>(end - start) || rows.cols() != store.dim) {
      Fail(ErrorCode::kExternalEncoderFailure, "encoder returned a wrongly shaped batch");
    }
    store.matrix.middleRows(static_cast<Eigen::Index>(start), rows.rows()) = rows;
  }
  SaveFeatures(store, output);
  return static_cast<int64_t>(n);
}

}  // namespace

BatchReport RunBatch(const std::vector<std::filesystem::path>& slides,
                     const PipelineConfig& config, int workers,
                     const EncoderRegistry& registry) {
  if (workers < 1) Fail(ErrorCode::kInvalidArgument, "workers must be >= 1");
  config.patch.Validate();
  config.seg.Validate();
  const EncoderSpec& spec = registry.Spec(config.encoder);
  if (spec.kind != EncoderKind::kPatch) {
    Fail(ErrorCode::kUnknownEncoder, config.encoder + " is not a patch encoder");
  }
  if (spec.expected_patch_size > 0 && spec.expected_patch_size != config.patch.patch_size) {
    Fail(ErrorCode::kSizeMismatch, config.encoder + " expects " +
                                       std::to_string(spec.expected_patch_size) + " px patches");
  }
  std::filesystem::create_directories(config.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  BatchReport report;
  report.slides.resize(slides.size());
  std::atomic<size_t> next{0};
  std::mutex mu;  // guards the report counters

  auto worker = [&] {
    std::unique_ptr<PatchEncoder> encoder;
    for (size_t i = next++; i < slides.size(); i = next++) {
      const auto s0 = std::chrono::steady_clock::now();
      SlideOutcome out;
      out.input = slides[i];
      out.output = FeaturePathFor(config.out_dir, slides[i]);
      try {
        if (config.skip_existing && ValidFeatureFile(out.output)) {
          out.status = SlideStatus::kSkippedExisting;
        } else {
          if (!encoder) encoder = registry.MakePatch(config.encoder);
          out.n_patches = ExtractSlide(slides[i], out.output, config, *encoder);
          out.status = SlideStatus::kDone;
        }
      } catch (const Error& e) {
        out.status = SlideStatus::kFailed;
        out.reason = std::string(ErrorCodeName(e.code()));
        out.message = e.what();
      } catch (const std::exception& e) {
        out.status = SlideStatus::kFailed;
        out.reason = "Internal";
        out.message = e.what();
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
      std::lock_guard<std::mutex> lock(mu);
      switch (out.status) {
        case SlideStatus::kDone: ++report.done; break;
        case SlideStatus::kSkippedExisting: ++report.skipped_existing; break;
        case SlideStatus::kFailed: ++report.failed; break;
      }
      report.slides[i] = std::move(out);
    }
  };

  const int n_threads = static_cast<int>(std::min<size_t>(static_cast<size_t>(workers),
                                                          std::max<size_t>(1, slides.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace pathforge
