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

// Patch and slide encoders behind one interface, the FSTR feature store and
// the resumable batch runner.

#ifndef PATHFORGE_FEATURE_ENGINE_H_
#define PATHFORGE_FEATURE_ENGINE_H_

#include <Eigen/Core>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pathforge/patch_grid.h"
#include "pathforge/raster.h"
#include "pathforge/tissue_seg.h"

namespace pathforge {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class EncoderKind { kPatch, kSlide };
enum class EncoderProvider { kBuiltinStub, kExternalProcess };

struct EncoderSpec {
  std::string name;
  EncoderKind kind = EncoderKind::kPatch;
  int dim = 0;  // for pass-through slide encoders, 0 means "input dim"
  EncoderProvider provider = EncoderProvider::kBuiltinStub;
  int expected_patch_size = 0;  // 0 accepts any square size
};

/// Features of one slide: row i belongs to coords[i].
struct FeatureStore {
  std::string slide_id;
  std::string encoder_name;
  int dim = 0;
  std::vector<PatchCoord> coords;
  FeatureMatrix matrix;
  /// Echo of the grid that produced the coordinates.
  PatchParams grid_params;
  int64_t level0_patch_extent = 0;

  int64_t count() const { return static_cast<int64_t>(coords.size()); }
  bool operator==(const FeatureStore& o) const;
};

class PatchEncoder {
 public:
  virtual ~PatchEncoder() = default;
  virtual const EncoderSpec& spec() const = 0;
  /// One row per patch; row i depends only on patches[i]. Throws
  /// SizeMismatch or ExternalEncoderFailure.
  virtual FeatureMatrix Encode(const std::vector<RasterImage>& patches) = 0;
};

class SlideEncoder {
 public:
  virtual ~SlideEncoder() = default;
  virtual const EncoderSpec& spec() const = 0;
  virtual Eigen::VectorXf Encode(const FeatureStore& features) = 0;
};

/// Name -> factory table. Instances are created per caller so each batch
/// worker owns its encoder (and, for external encoders, its child process).
class EncoderRegistry {
 public:
  using PatchFactory = std::function<std::unique_ptr<PatchEncoder>()>;
  using SlideFactory = std::function<std::unique_ptr<SlideEncoder>()>;

  /// "stub-stats-64", "stub-proj-32" and "mean-pool".
  static EncoderRegistry WithBuiltins();

  void AddPatch(const EncoderSpec& spec, PatchFactory factory);
  void AddSlide(const EncoderSpec& spec, SlideFactory factory);
  /// Patch encoder served by a child process speaking ENC1 on stdio.
  void AddExternal(const std::string& name, int dim, int patch_size,
                   std::vector<std::string> argv);

  bool Contains(const std::string& name) const;
  /// Throws UnknownEncoder listing the registered names.
  const EncoderSpec& Spec(const std::string& name) const;
  std::unique_ptr<PatchEncoder> MakePatch(const std::string& name) const;
  std::unique_ptr<SlideEncoder> MakeSlide(const std::string& name) const;
  std::vector<std::string> Names() const;

 private:
  struct Entry {
    EncoderSpec spec;
    PatchFactory patch;
    SlideFactory slide;
  };
  const Entry& Find(const std::string& name) const;
  std::map<std::string, Entry> entries_;
};

/// Single-patch stub-stats-64 features. Layout, all in [0, 1]:
///   [0, 12)   per channel: mean, std, skew proxy, edge energy
///   [12, 60)  per channel: 16-bin intensity histogram / area
///   [60, 64)  gray texture: contrast, homogeneity, energy, entropy
std::vector<float> StubStatsFeatures(const RasterImage& patch);
inline constexpr int kStubStatsDim = 64;

/// Device slot of the calling thread. External encoder children spawned on
/// this thread receive it as the SLOT_ID environment variable.
void SetThreadSlotId(std::optional<int> slot);
std::optional<int> ThreadSlotId();

/// ENC1 child-process encoder. The child is spawned on first use and
/// inherits the environment; `extra_env` entries are added to it.
class ExternalProcessEncoder : public PatchEncoder {
 public:
  ExternalProcessEncoder(EncoderSpec spec, std::vector<std::string> argv,
                         std::map<std::string, std::string> extra_env = {},
                         std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~ExternalProcessEncoder() override;
  ExternalProcessEncoder(const ExternalProcessEncoder&) = delete;
  ExternalProcessEncoder& operator=(const ExternalProcessEncoder&) = delete;

  const EncoderSpec& spec() const override { return spec_; }
  FeatureMatrix Encode(const std::vector<RasterImage>& patches) override;

 private:
  void Start();
  void Stop();
  void WriteAll(const void* data, size_t n);
  void ReadAll(void* data, size_t n);
  [[noreturn]] void Broken(const std::string& why);

  EncoderSpec spec_;
  std::vector<std::string> argv_;
  std::map<std::string, std::string> extra_env_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

enum class PoolMethod { kMean };

/// Row mean accumulated in double. Throws EmptyStore.
Eigen::VectorXf PoolSlide(const FeatureStore& features,
                          PoolMethod method = PoolMethod::kMean);

/// Mean of slide vectors. Throws EmptyStore or DimMismatch.
Eigen::VectorXf AggregatePatient(const std::vector<Eigen::VectorXf>& slides);

/// FSTR: "FSTR" | u32 version | u32 header length | header JSON |
/// count x (i64 x, i64 y) | count x dim float32.
void SaveFeatures(const FeatureStore& store, const std::filesystem::path& path);
FeatureStore LoadFeatures(const std::filesystem::path& path);
/// Cheap check used for resumability: magic, version, header and file size.
bool ValidFeatureFile(const std::filesystem::path& path);

struct PipelineConfig {
  SegParams seg;
  PatchParams patch;
  std::string encoder = "stub-stats-64";
  std::filesystem::path out_dir;
  int sub_batch = 64;  // patches per Encode call
  bool skip_existing = true;
  std::optional<double> mpp_override;
};

enum class SlideStatus { kDone, kSkippedExisting, kFailed };
std::string_view SlideStatusName(SlideStatus status);

struct SlideOutcome {
  std::filesystem::path input;
  std::filesystem::path output;
  SlideStatus status = SlideStatus::kFailed;
  std::string reason;   // error code name for failures
  std::string message;  // full error text for failures
  int64_t n_patches = 0;
  double seconds = 0;
};

struct BatchReport {
  std::vector<SlideOutcome> slides;  // input order
  int done = 0;
  int skipped_existing = 0;
  int failed = 0;
  double wall_seconds = 0;
};

/// `<out_dir>/<stem>.fstr` for an input slide.
std::filesystem::path FeaturePathFor(const std::filesystem::path& out_dir,
                                     const std::filesystem::path& slide);

/// Segment, plan, encode and store each slide on a pool of `workers`
/// threads. A failing slide is recorded and never aborts the batch.
BatchReport RunBatch(const std::vector<std::filesystem::path>& slides,
                     const PipelineConfig& config, int workers,
                     const EncoderRegistry& registry = EncoderRegistry::WithBuiltins());

}  // namespace pathforge

#endif  // PATHFORGE_FEATURE_ENGINE_H_
