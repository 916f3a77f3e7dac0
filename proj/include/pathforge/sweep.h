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

// Experiment sweeps: matrix enumeration, slot-balanced scheduling over a
// worker pool, a JSONL run ledger, progress snapshots and result gathering.

#ifndef PATHFORGE_SWEEP_H_
#define PATHFORGE_SWEEP_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pathforge/eval_suite.h"
#include "pathforge/task_splits.h"

namespace pathforge {

struct DeviceSlot {
  int slot_id = 0;
  int capacity = 1;
};

using HyperValues = std::map<std::string, std::string>;

struct SweepConfig {
  std::vector<std::string> models;
  /// Task locations: a directory holding task.{csv,yaml}, or a YAML path
  /// whose CSV sits next to it with the same stem.
  std::vector<std::filesystem::path> tasks;
  std::vector<Framework> frameworks;
  /// Per framework: key -> candidate values; combos are the cartesian
  /// product in key order. Frameworks without an entry get one empty combo.
  std::map<Framework, std::map<std::string, std::vector<std::string>>> hyper_grids;
  std::vector<DeviceSlot> device_slots = {{0, 1}};
  int workers = 1;
  std::filesystem::path out_dir;
  /// Features for model M are read from <features_root>/M/*.fstr.
  std::filesystem::path features_root;

  /// Throws InvalidArgument on empty axes, bad capacities or workers < 1.
  void Validate() const;
};

/// Relative paths in the YAML resolve against the file's directory.
/// Throws MissingFile, SchemaError or InvalidArgument.
SweepConfig LoadSweepConfig(const std::filesystem::path& yaml_path);

/// (csv, yaml) for a task location.
std::pair<std::filesystem::path, std::filesystem::path> TaskFiles(
    const std::filesystem::path& task);

struct Experiment {
  std::string exp_id;
  std::string model;
  std::string task;  // task location as configured
  std::string task_id;
  Framework framework = Framework::kLinearProbe;
  HyperValues hyper;
};

struct ExperimentMatrix {
  std::vector<Experiment> experiments;
  int64_t filtered_incompatible = 0;
};

/// 16 hex digits of FNV-1a over the axis values; order-free in `hyper`.
std::string ExperimentId(const std::string& model, const std::string& task, Framework framework,
                         const HyperValues& hyper);

/// Nested in axis order: models, tasks, frameworks, hyper combos.
/// Throws TaskParseFailure or EmptyMatrix.
ExperimentMatrix EnumerateMatrix(const SweepConfig& config);

struct RunOutcome {
  std::string metric_name;
  std::vector<double> fold_values;
};

/// Runs one experiment on the given slot. Throwing marks it failed.
using ExperimentRunner = std::function<RunOutcome(const Experiment&, int slot_id)>;

struct ScheduleOptions {
  int workers = 1;
  std::vector<DeviceSlot> slots = {{0, 1}};
  /// Stop handing out work after this many dispatches (< 0: no limit).
  /// Used to simulate a killed sweep.
  int64_t max_dispatch = -1;
  bool retry_failed = false;
};

struct ScheduleReport {
  int64_t executed = 0;
  int64_t succeeded = 0;
  int64_t failed = 0;
  int64_t skipped_done = 0;
  int64_t not_dispatched = 0;
};

/// Workers pull experiments FIFO; each run holds a token from the least
/// loaded slot (running / capacity, ties to the lowest slot id). Every
/// transition is appended to the ledger before the next one can happen, so
/// a killed sweep resumes with done work untouched; runs left "running" by
/// a crash are closed as failed(interrupted) and retried.
ScheduleReport Schedule(const ExperimentMatrix& matrix, const std::filesystem::path& ledger_path,
                        const ScheduleOptions& options, const ExperimentRunner& runner);

/// Evaluates with EvaluateTask on features from config.features_root and
/// writes results/<exp_id>.{csv,json} under config.out_dir.
ExperimentRunner MakeEvalRunner(const SweepConfig& config);

/// Enumerate + schedule with the ledger at <out_dir>/ledger.jsonl.
ScheduleReport RunSweep(const SweepConfig& config, const ExperimentRunner& runner,
                        int64_t max_dispatch = -1);

std::filesystem::path LedgerPath(const std::filesystem::path& out_dir);

enum class ExperimentStatus { kPending, kRunning, kDone, kFailed };
std::string_view Name(ExperimentStatus s);

struct StatusSnapshot {
  int64_t total = 0;
  std::map<ExperimentStatus, int64_t> counts;
  std::map<int, int64_t> slot_running;  // current occupancy per slot
  std::map<int, int> slot_capacity;
  double mean_duration = 0;  // seconds, over done runs
  double eta_seconds = -1;   // -1 when no run has finished yet
  int64_t events = 0;
};

/// Read-only fold of the ledger. Throws MissingLedger.
StatusSnapshot SweepStatus(const std::filesystem::path& ledger_path);

struct GatherSummary {
  std::filesystem::path path;
  int64_t fold_rows = 0;
  int64_t summary_rows = 0;
  int64_t failed_rows = 0;
};

/// Writes <out_dir>/results.csv: exp_id, model, task, framework, fold,
/// metric_name, value, status, std, hyper. One row per fold of every done
/// experiment, then one "summary" row (value = mean, std filled) per done
/// experiment, and one status=failed row per failed experiment.
/// Throws MissingLedger or NoResults.
GatherSummary GatherResults(const std::filesystem::path& out_dir);

}  // namespace pathforge

#endif  // PATHFORGE_SWEEP_H_
