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

#include "pathforge/cli.h"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pathforge/eval_suite.h"
#include "pathforge/feature_engine.h"
#include "pathforge/patch_grid.h"
#include "pathforge/slide_io.h"
#include "pathforge/sweep.h"
#include "pathforge/synth.h"
#include "pathforge/task_splits.h"
#include "pathforge/tissue_seg.h"

namespace pathforge {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::set<std::string> kSubcommands = {"segment", "patch",  "extract", "make-task", "run",
                                            "sweep",   "status", "gather",  "synth"};

// Everything a subcommand handler may need besides its own flags.
struct Context {
  fs::path out_dir = ".";
  bool json_errors = false;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  fs::path Resolve(const fs::path& p) const { return p.is_absolute() ? p : out_dir / p; }
};

void ReportError(const Context& ctx, std::string_view code, const std::string& message,
                 int exit_code, const std::string& usage = "") {
  if (ctx.json_errors) {
    json j = {{"error", code}, {"message", message}, {"exit_code", exit_code}};
    *ctx.err << j.dump() << "\n";
    return;
  }
  *ctx.err << "error: " << code << ": " << message << "\n";
  if (!usage.empty()) *ctx.err << usage;
}

int DefaultWorkers() {
  const char* env = std::getenv("PATHFORGE_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  int v = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto [ptr, ec] = std::from_chars(env, end, v);
  if (ec != std::errc() || ptr != end || v < 1) {
    Fail(ErrorCode::kInvalidArgument,
         "PATHFORGE_WORKERS must be a positive integer, got '" + std::string(env) + "'");
  }
  return v;
}

std::vector<fs::path> ExpandSlides(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> slides;
  for (const fs::path& p : inputs) {
    if (!fs::is_directory(p)) {
      slides.push_back(p);
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(p)) {
      const std::string ext = entry.path().extension().string();
      if (entry.is_regular_file() && (ext == ".spyr" || ext == ".png")) found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    slides.insert(slides.end(), found.begin(), found.end());
  }
  if (slides.empty()) Fail(ErrorCode::kInvalidArgument, "no slides given");
  return slides;
}

std::optional<double> OptionalMpp(double mpp) {
  if (mpp > 0) return mpp;
  return std::nullopt;
}

// --- segment -------------------------------------------------------------

struct SegmentArgs {
  fs::path slide;
  fs::path mask_out;
  fs::path geojson_out;
  double mpp = 0;
  int thumb_max_dim = SegParams{}.thumb_max_dim;
  int threshold = -1;
  bool skip_existing = true;
};

int RunSegment(const Context& ctx, const SegmentArgs& a) {
  const fs::path slide_path = ctx.Resolve(a.slide);
  const std::string stem = slide_path.stem().string();
  const fs::path mask_out = ctx.Resolve(a.mask_out.empty() ? fs::path(stem + ".mask.png") : a.mask_out);
  const fs::path geo_out = ctx.Resolve(a.geojson_out.empty() ? fs::path(stem + ".geojson") : a.geojson_out);
  if (a.skip_existing && fs::exists(mask_out) && fs::exists(geo_out)) {
    *ctx.out << "segment " << stem << ": skipped (outputs exist)\n";
    return kExitOk;
  }
  const SlidePyramid slide = OpenSlide(slide_path, OptionalMpp(a.mpp));
  SegParams params;
  params.thumb_max_dim = a.thumb_max_dim;
  if (a.threshold >= 0) params.fixed_threshold = a.threshold;
  const TissueMask mask = SegmentTissue(slide, params);
  const TissuePolygons polys = MaskToPolygons(mask);
  if (mask_out.has_parent_path()) fs::create_directories(mask_out.parent_path());
  if (geo_out.has_parent_path()) fs::create_directories(geo_out.parent_path());
  SaveMask(mask, mask_out);
  ExportGeoJson(polys, geo_out);
  int64_t tissue = 0;
  for (uint8_t v : mask.mask.data) tissue += v != 0;
  *ctx.out << "segment " << stem << ": " << polys.polygons.size() << " polygons, tissue fraction "
           << std::fixed << std::setprecision(4)
           << static_cast<double>(tissue) / static_cast<double>(mask.mask.data.size()) << "\n";
  return kExitOk;
}

// --- patch ---------------------------------------------------------------

struct PatchArgs {
  fs::path slide;
  fs::path mask;
  fs::path output;
  double mpp = 0;
  int patch_size = PatchParams{}.patch_size;
  double mag = PatchParams{}.target_magnification;
  int overlap = 0;
  double min_tissue = PatchParams{}.min_tissue_frac;
  bool skip_existing = true;
};

int RunPatch(const Context& ctx, const PatchArgs& a) {
  const fs::path slide_path = ctx.Resolve(a.slide);
  const std::string stem = slide_path.stem().string();
  const fs::path out = ctx.Resolve(a.output.empty() ? fs::path(stem + ".pgrd") : a.output);
  if (a.skip_existing && fs::exists(out)) {
    *ctx.out << "patch " << stem << ": skipped (output exists)\n";
    return kExitOk;
  }
  const SlidePyramid slide = OpenSlide(slide_path, OptionalMpp(a.mpp));
  const TissueMask mask = a.mask.empty() ? SegmentTissue(slide, SegParams{}) : LoadMask(ctx.Resolve(a.mask));
  PatchParams params;
  params.patch_size = a.patch_size;
  params.target_magnification = a.mag;
  params.overlap = a.overlap;
  params.min_tissue_frac = a.min_tissue;
  const PatchGrid grid = PlanGrid(slide, mask, InferMagnification(slide, OptionalMpp(a.mpp)), params);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  SaveGrid(grid, out);
  *ctx.out << "patch " << stem << ": " << grid.coords.size() << " patches, read level "
           << grid.read_level << " -> " << out.string() << "\n";
  return kExitOk;
}

// --- extract -------------------------------------------------------------

struct ExtractArgs {
  std::vector<fs::path> slides;
  fs::path features_dir;
  std::string encoder = "stub-stats-64";
  int workers = 0;
  bool skip_existing = true;
  int patch_size = PatchParams{}.patch_size;
  double mag = PatchParams{}.target_magnification;
  double min_tissue = PatchParams{}.min_tissue_frac;
  int sub_batch = 64;
  double mpp = 0;
};

int RunExtract(const Context& ctx, const ExtractArgs& a) {
  std::vector<fs::path> inputs;
  for (const fs::path& p : a.slides) inputs.push_back(ctx.Resolve(p));
  PipelineConfig config;
  config.encoder = a.encoder;
  config.out_dir = ctx.Resolve(a.features_dir.empty() ? fs::path("features") / a.encoder : a.features_dir);
  config.skip_existing = a.skip_existing;
  config.patch.patch_size = a.patch_size;
  config.patch.target_magnification = a.mag;
  config.patch.min_tissue_frac = a.min_tissue;
  config.sub_batch = a.sub_batch;
  config.mpp_override = OptionalMpp(a.mpp);
  const int workers = a.workers > 0 ? a.workers : DefaultWorkers();
  const BatchReport report = RunBatch(ExpandSlides(inputs), config, workers);
  for (const SlideOutcome& s : report.slides) {
    if (s.status == SlideStatus::kFailed) {
      ReportError(ctx, s.reason, s.input.string() + ": " + s.message, kExitRuntime);
    }
  }
  *ctx.out << "extract: " << report.done << " done, " << report.skipped_existing << " skipped, "
           << report.failed << " failed -> " << config.out_dir.string() << "\n";
  return report.failed > 0 ? kExitRuntime : kExitOk;
}

// --- make-task -----------------------------------------------------------

struct MakeTaskArgs {
  fs::path labels;
  fs::path output;
  std::string task_id;
  std::string level = "patient";
  std::string label_kind;
  std::vector<std::string> classes;
  std::string metric;
  std::string scheme = "kfold";
  int folds = 5;
  uint64_t seed = 0;
  bool no_stratify = false;
};

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

int RunMakeTask(const Context& ctx, const MakeTaskArgs& a) {
  const fs::path labels_path = ctx.Resolve(a.labels);
  std::ifstream in(labels_path);
  if (!in) Fail(ErrorCode::kMissingFile, "cannot open labels file " + labels_path.string());
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kSchemaError, "labels file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = SplitCsvLine(line);
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"patient_id", "slide_id"}) {
    if (!col.count(need)) Fail(ErrorCode::kSchemaError, std::string("labels file lacks column ") + need);
  }
  const bool has_time = col.count("time") && col.count("event");
  LabelKind kind = has_time ? LabelKind::kSurvival : LabelKind::kCategorical;
  if (!a.label_kind.empty()) kind = ParseLabelKind(a.label_kind);
  const bool survival = kind == LabelKind::kSurvival;
  if (survival && !has_time) Fail(ErrorCode::kSchemaError, "survival tasks need time and event columns");
  if (!survival && !col.count("label")) Fail(ErrorCode::kSchemaError, "labels file lacks column label");

  // Patients in first-seen order; slides keep file order.
  std::vector<PatientRecord> patients;
  std::map<std::string, size_t> index;
  int64_t n_slides = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = SplitCsvLine(line);
    if (cells.size() != header.size()) {
      Fail(ErrorCode::kSchemaError, "labels line " + std::to_string(line_no) + " has " +
                                        std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(header.size()));
    }
    const std::string& pid = cells[col["patient_id"]];
    auto [it, inserted] = index.emplace(pid, patients.size());
    if (inserted) {
      PatientRecord r;
      r.patient_id = pid;
      if (survival) {
        try {
          r.time = std::stod(cells[col["time"]]);
          r.event = std::stoi(cells[col["event"]]);
        } catch (const std::exception&) {
          Fail(ErrorCode::kSchemaError, "labels line " + std::to_string(line_no) + " has a bad time/event");
        }
      } else {
        r.label = cells[col["label"]];
      }
      patients.push_back(r);
    }
    patients[it->second].slide_ids.push_back(cells[col["slide_id"]]);
    ++n_slides;
  }

  TaskSpec spec;
  spec.task_id = a.task_id.empty() ? labels_path.stem().string() : a.task_id;
  spec.level = ParseTaskLevel(a.level);
  spec.label_kind = kind;
  if (!survival) {
    if (!a.classes.empty()) {
      spec.classes = a.classes;
    } else {
      std::set<std::string> seen;
      for (const PatientRecord& p : patients) seen.insert(p.label);
      spec.classes.assign(seen.begin(), seen.end());
    }
  }
  spec.n_samples = spec.level == TaskLevel::kPatient ? static_cast<int64_t>(patients.size()) : n_slides;
  spec.n_folds = a.folds;
  if (!a.metric.empty()) {
    spec.metric = ParseMetric(a.metric);
  } else {
    spec.metric = survival ? Metric::kCIndex : kind == LabelKind::kOrdinal ? Metric::kQwk : Metric::kAuroc;
  }
  spec.split_scheme = ParseSplitScheme(a.scheme);
  spec.stratified = !a.no_stratify;
  spec.seed = a.seed;

  SplitOptions o;
  o.scheme = spec.split_scheme;
  o.n_folds = a.folds;
  o.seed = a.seed;
  o.stratify = spec.stratified;
  o.survival = survival;
  const SplitTable table = GenerateSplits(patients, o);
  const fs::path dir = ctx.Resolve(a.output.empty() ? fs::path("tasks") / spec.task_id : a.output);
  fs::create_directories(dir);
  WriteTask(spec, table, dir / "task.csv", dir / "task.yaml");
  const std::vector<std::string> warnings = ValidateTask(spec, table);
  for (const std::string& w : warnings) *ctx.err << "warning: " << w << "\n";
  *ctx.out << "make-task " << spec.task_id << ": " << patients.size() << " patients, " << n_slides
           << " slides, " << a.folds << " folds -> " << dir.string() << "\n";
  return kExitOk;
}

// --- run -----------------------------------------------------------------

struct RunArgs {
  fs::path task;
  fs::path features;
  std::string model;
  std::string framework = "probe";
  std::vector<std::string> hyper;
  uint64_t seed = 0;
  fs::path output;
};

std::map<std::string, std::string> ParseHyperFlags(const std::vector<std::string>& flags) {
  std::map<std::string, std::string> values;
  for (const std::string& f : flags) {
    const size_t eq = f.find('=');
    if (eq == std::string::npos || eq == 0) {
      Fail(ErrorCode::kInvalidArgument, "--hyper expects key=value, got '" + f + "'");
    }
    values[f.substr(0, eq)] = f.substr(eq + 1);
  }
  return values;
}

int RunRun(const Context& ctx, const RunArgs& a) {
  const auto [csv, yaml] = TaskFiles(ctx.Resolve(a.task));
  const ParsedTask task = ParseTask(csv, yaml);
  const fs::path feature_dir = ctx.Resolve(a.features);
  const std::string model = a.model.empty() ? feature_dir.filename().string() : a.model;
  const Framework framework = ParseFramework(a.framework);
  EvalHyper base;
  base.seed = a.seed;
  const EvalHyper hyper = ApplyHyper(base, ParseHyperFlags(a.hyper));
  const FeatureSet features = LoadFeatureSet(feature_dir, framework == Framework::kMil);
  const EvalResult r = EvaluateTask(task.spec, task.table, features, framework, hyper, model);

  const fs::path dir = ctx.Resolve(a.output.empty() ? fs::path("runs") : a.output);
  fs::create_directories(dir);
  const std::string stem = task.spec.task_id + "__" + model + "__" + std::string(Name(framework));
  std::ofstream(dir / (stem + ".csv")) << EvalResultCsv(r, true);
  std::ofstream(dir / (stem + ".json")) << EvalResultJson(r, hyper);
  *ctx.out << stem << ": " << Name(r.metric) << " " << std::fixed << std::setprecision(4) << r.mean
           << " +/- " << r.std << " over " << r.fold_values.size() << " folds\n";
  return kExitOk;
}

// --- sweep / status / gather -------------------------------------------

struct SweepArgs {
  fs::path config;
  int workers = 0;
  bool retry_failed = false;
  int64_t max_dispatch = -1;
};

int RunSweepCommand(const Context& ctx, const SweepArgs& a) {
  SweepConfig config = LoadSweepConfig(ctx.Resolve(a.config));
  if (a.workers > 0) {
    config.workers = a.workers;
  } else if (std::getenv("PATHFORGE_WORKERS") != nullptr) {
    config.workers = DefaultWorkers();
  }
  config.Validate();
  const ExperimentMatrix matrix = EnumerateMatrix(config);
  ScheduleOptions o;
  o.workers = config.workers;
  o.slots = config.device_slots;
  o.max_dispatch = a.max_dispatch;
  o.retry_failed = a.retry_failed;
  const ScheduleReport rep = Schedule(matrix, LedgerPath(config.out_dir), o, MakeEvalRunner(config));
  *ctx.out << "sweep: " << matrix.experiments.size() << " experiments (" << matrix.filtered_incompatible
           << " incompatible pairs filtered); executed " << rep.executed << ", succeeded "
           << rep.succeeded << ", failed " << rep.failed << ", already done " << rep.skipped_done
           << ", not dispatched " << rep.not_dispatched << "\n";
  return rep.failed > 0 ? kExitRuntime : kExitOk;
}

int RunStatus(const Context& ctx, const fs::path& sweep_dir, bool as_json) {
  const StatusSnapshot s = SweepStatus(LedgerPath(ctx.Resolve(sweep_dir)));
  auto count = [&](ExperimentStatus st) {
    const auto it = s.counts.find(st);
    return it == s.counts.end() ? int64_t{0} : it->second;
  };
  if (as_json) {
    json j = {{"total", s.total}, {"events", s.events}, {"mean_duration", s.mean_duration},
              {"eta_seconds", s.eta_seconds}};
    for (ExperimentStatus st : {ExperimentStatus::kPending, ExperimentStatus::kRunning,
                                ExperimentStatus::kDone, ExperimentStatus::kFailed}) {
      j["counts"][std::string(Name(st))] = count(st);
    }
    for (const auto& [slot, cap] : s.slot_capacity) {
      const auto it = s.slot_running.find(slot);
      j["slots"].push_back({{"slot_id", slot},
                            {"capacity", cap},
                            {"running", it == s.slot_running.end() ? int64_t{0} : it->second}});
    }
    *ctx.out << j.dump() << "\n";
    return kExitOk;
  }
  *ctx.out << "total " << s.total << ": pending " << count(ExperimentStatus::kPending) << ", running "
           << count(ExperimentStatus::kRunning) << ", done " << count(ExperimentStatus::kDone)
           << ", failed " << count(ExperimentStatus::kFailed) << "\n";
  for (const auto& [slot, cap] : s.slot_capacity) {
    const auto it = s.slot_running.find(slot);
    *ctx.out << "slot " << slot << ": " << (it == s.slot_running.end() ? 0 : it->second) << "/"
             << cap << " busy\n";
  }
  if (s.eta_seconds < 0) {
    *ctx.out << "eta: unknown\n";
  } else {
    *ctx.out << "eta: " << std::fixed << std::setprecision(1) << s.eta_seconds << " s\n";
  }
  return kExitOk;
}

int RunGather(const Context& ctx, const fs::path& sweep_dir) {
  const GatherSummary g = GatherResults(ctx.Resolve(sweep_dir));
  *ctx.out << "gather: " << g.fold_rows << " fold rows, " << g.summary_rows << " summary rows, "
           << g.failed_rows << " failed -> " << g.path.string() << "\n";
  return kExitOk;
}

// --- synth ---------------------------------------------------------------

int RunSynth(const Context& ctx, const CohortParams& p, const fs::path& output) {
  const fs::path dir = ctx.Resolve(output);
  const CohortSummary c = GenerateCohort(p, dir);
  *ctx.out << "synth: " << c.slides.size() << " slides -> " << (dir / "slides").string() << ", task "
           << c.task_yaml.string() << "\n";
  return kExitOk;
}

// The first argument that is neither a global flag nor its value.
std::optional<std::string> FirstPositional(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--out-dir") {
      ++i;
      continue;
    }
    if (!a.empty() && a[0] == '-') continue;
    return a;
  }
  return std::nullopt;
}

}  // namespace

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMissingFile:
    case ErrorCode::kSchemaError:
    case ErrorCode::kLeakageError:
    case ErrorCode::kLabelConflict:
    case ErrorCode::kRatioWarning:
    case ErrorCode::kTooFewSamples:
    case ErrorCode::kClassStarvation:
    case ErrorCode::kUnknownEncoder:
    case ErrorCode::kUnknownMagnification:
    case ErrorCode::kMagnificationUnavailable:
    case ErrorCode::kMalformedGeoJson:
    case ErrorCode::kUnsupportedGeometry:
    case ErrorCode::kIncompatibleFramework:
    case ErrorCode::kMissingFeatures:
    case ErrorCode::kEmptyMatrix:
    case ErrorCode::kTaskParseFailure:
    case ErrorCode::kMissingLedger:
    case ErrorCode::kUnknownSubcommand:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

int Dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  ctx.json_errors = std::find(args.begin(), args.end(), "--json") != args.end();

  CLI::App app{"Whole-slide image feature extraction and benchmarking", "pathforge"};
  app.require_subcommand(1);
  std::string out_dir = ".";
  bool json_flag = false;
  app.add_option("--out-dir", out_dir, "Base directory; relative paths resolve against it");
  app.add_flag("--json", json_flag, "Print errors (and status) as JSON");

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Tissue mask and GeoJSON contours for one slide");
  segment->add_option("--slide", seg.slide, "Slide (.spyr or .png)")->required();
  segment->add_option("--mask-out", seg.mask_out, "Mask PNG (default <stem>.mask.png)");
  segment->add_option("--geojson-out", seg.geojson_out, "GeoJSON (default <stem>.geojson)");
  segment->add_option("--mpp", seg.mpp, "Override level-0 microns per pixel");
  segment->add_option("--thumb-max-dim", seg.thumb_max_dim, "Thumbnail size")->check(CLI::PositiveNumber);
  segment->add_option("--threshold", seg.threshold, "Fixed saturation threshold")->check(CLI::Range(0, 255));
  segment->add_flag("--skip-existing,!--no-skip-existing", seg.skip_existing, "Keep existing outputs");

  PatchArgs pat;
  auto* patch = app.add_subcommand("patch", "Plan the patch grid of one slide");
  patch->add_option("--slide", pat.slide, "Slide (.spyr or .png)")->required();
  patch->add_option("--mask", pat.mask, "Mask PNG from segment (default: segment now)");
  patch->add_option("--output", pat.output, "Grid file (default <stem>.pgrd)");
  patch->add_option("--mpp", pat.mpp, "Override level-0 microns per pixel");
  patch->add_option("--patch-size", pat.patch_size, "Patch side at the target magnification")
      ->check(CLI::PositiveNumber);
  patch->add_option("--mag", pat.mag, "Target magnification")->check(CLI::PositiveNumber);
  patch->add_option("--overlap", pat.overlap, "Overlap in target pixels")->check(CLI::NonNegativeNumber);
  patch->add_option("--min-tissue", pat.min_tissue, "Minimum tissue fraction")->check(CLI::Range(0.0, 1.0));
  patch->add_flag("--skip-existing,!--no-skip-existing", pat.skip_existing, "Keep existing outputs");

  ExtractArgs ext;
  auto* extract = app.add_subcommand("extract", "Segment, patch and encode slides");
  extract->add_option("--slides", ext.slides, "Slides or directories of slides")->required();
  extract->add_option("--features-dir", ext.features_dir, "Output (default features/<encoder>)");
  extract->add_option("--encoder", ext.encoder, "Encoder name");
  extract->add_option("--workers", ext.workers, "Worker threads (default $PATHFORGE_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  extract->add_flag("--skip-existing,!--no-skip-existing", ext.skip_existing, "Skip valid outputs");
  extract->add_option("--patch-size", ext.patch_size, "Patch side")->check(CLI::PositiveNumber);
  extract->add_option("--mag", ext.mag, "Target magnification")->check(CLI::PositiveNumber);
  extract->add_option("--min-tissue", ext.min_tissue, "Minimum tissue fraction")->check(CLI::Range(0.0, 1.0));
  extract->add_option("--sub-batch", ext.sub_batch, "Patches per encoder call")->check(CLI::PositiveNumber);
  extract->add_option("--mpp", ext.mpp, "Override level-0 microns per pixel");

  MakeTaskArgs mt;
  auto* make_task = app.add_subcommand("make-task", "Generate splits and write a task");
  make_task->add_option("--labels", mt.labels,
                        "CSV with patient_id,slide_id and label, or time,event")->required();
  make_task->add_option("--output", mt.output, "Task directory (default tasks/<task-id>)");
  make_task->add_option("--task-id", mt.task_id, "Task id (default: labels file stem)");
  make_task->add_option("--level", mt.level, "patient or slide");
  make_task->add_option("--label-kind", mt.label_kind, "categorical, ordinal or survival");
  make_task->add_option("--classes", mt.classes, "Class order (ordinal grade order)")->delimiter(',');
  make_task->add_option("--metric", mt.metric, "Task metric");
  make_task->add_option("--scheme", mt.scheme, "kfold or monte_carlo");
  make_task->add_option("--folds", mt.folds, "Number of folds")->check(CLI::PositiveNumber);
  make_task->add_option("--seed", mt.seed, "Split seed");
  make_task->add_flag("--no-stratify", mt.no_stratify, "Disable stratification");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Evaluate one task with one framework");
  run->add_option("--task", run_args.task, "Task directory or YAML")->required();
  run->add_option("--features", run_args.features, "Directory of .fstr files")->required();
  run->add_option("--model", run_args.model, "Model name (default: features directory name)");
  run->add_option("--framework", run_args.framework, "probe, cox, mil or retrieval");
  run->add_option("--hyper", run_args.hyper, "key=value hyperparameter (repeatable)");
  run->add_option("--seed", run_args.seed, "Seed");
  run->add_option("--output", run_args.output, "Result directory (default runs)");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep from a YAML config");
  sweep->add_option("--config", sw.config, "Sweep YAML")->required();
  sweep->add_option("--workers", sw.workers, "Override worker count")->check(CLI::PositiveNumber);
  sweep->add_flag("--retry-failed", sw.retry_failed, "Re-run experiments that failed before");
  sweep->add_option("--max-dispatch", sw.max_dispatch, "Stop after this many dispatches");

  fs::path status_dir = ".";
  auto* status = app.add_subcommand("status", "Progress of a sweep");
  status->add_option("--sweep-dir", status_dir, "Sweep output directory");

  fs::path gather_dir = ".";
  auto* gather = app.add_subcommand("gather", "Collect sweep results into results.csv");
  gather->add_option("--sweep-dir", gather_dir, "Sweep output directory");

  CohortParams cohort;
  fs::path synth_out = "cohort";
  auto* synth = app.add_subcommand("synth", "Synthetic slides and a task with planted signal");
  synth->add_option("--slides", cohort.n_slides, "Number of slides")->check(CLI::PositiveNumber);
  synth->add_option("--classes", cohort.n_classes, "Number of classes");
  synth->add_option("--seed", cohort.seed, "Seed");
  synth->add_option("--size", cohort.slide_size, "Level-0 side in pixels");
  synth->add_option("--base-mag", cohort.base_magnification, "Scan magnification");
  synth->add_option("--signal", cohort.signal_fraction, "Fraction of cells with class signal")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--survival", cohort.survival, "Survival labels instead of classes");
  synth->add_option("--slides-per-patient", cohort.slides_per_patient, "Slides per patient")
      ->check(CLI::PositiveNumber);
  synth->add_option("--folds", cohort.n_folds, "Folds of the generated task")->check(CLI::PositiveNumber);
  synth->add_option("--output", synth_out, "Cohort directory");

  if (const auto first = FirstPositional(args); first && !kSubcommands.count(*first)) {
    ReportError(ctx, ErrorCodeName(ErrorCode::kUnknownSubcommand), "unknown subcommand '" + *first + "'",
                kExitValidation, app.help());
    return kExitValidation;
  }

  try {
    // CLI11 consumes arguments back to front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string usage = app.help();
    for (CLI::App* sub : app.get_subcommands()) usage = sub->help();
    ReportError(ctx, "InvalidArgument", e.what(), kExitValidation, usage);
    return kExitValidation;
  }
  ctx.out_dir = out_dir;

  try {
    if (*segment) return RunSegment(ctx, seg);
    if (*patch) return RunPatch(ctx, pat);
    if (*extract) return RunExtract(ctx, ext);
    if (*make_task) return RunMakeTask(ctx, mt);
    if (*run) return RunRun(ctx, run_args);
    if (*sweep) return RunSweepCommand(ctx, sw);
    if (*status) return RunStatus(ctx, status_dir, json_flag);
    if (*gather) return RunGather(ctx, gather_dir);
    if (*synth) return RunSynth(ctx, cohort, synth_out);
  } catch (const Error& e) {
    const int code = ExitCodeFor(e.code());
    ReportError(ctx, ErrorCodeName(e.code()), e.detail(), code);
    return code;
  } catch (const std::exception& e) {
    ReportError(ctx, "Internal", e.what(), kExitRuntime);
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace pathforge
