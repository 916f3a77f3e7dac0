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

// Task artifacts: a per-slide split CSV plus a metadata YAML.

#ifndef PATHFORGE_TASK_SPLITS_H_
#define PATHFORGE_TASK_SPLITS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pathforge {

enum class TaskLevel { kPatient, kSlide };
enum class LabelKind { kCategorical, kOrdinal, kSurvival };
enum class Metric { kBalancedAccuracy, kAuroc, kQwk, kCIndex };
enum class SplitScheme { kKFold, kMonteCarlo, kOfficialSingle };

std::string_view Name(TaskLevel v);
std::string_view Name(LabelKind v);
std::string_view Name(Metric v);
std::string_view Name(SplitScheme v);
/// Inverse of Name; throw SchemaError on unknown text.
TaskLevel ParseTaskLevel(std::string_view s);
LabelKind ParseLabelKind(std::string_view s);
Metric ParseMetric(std::string_view s);
SplitScheme ParseSplitScheme(std::string_view s);

bool MetricCompatible(Metric metric, LabelKind kind);

struct TaskSpec {
  std::string task_id;
  TaskLevel level = TaskLevel::kPatient;
  LabelKind label_kind = LabelKind::kCategorical;
  /// Class names; for ordinal tasks the order is the grade order. Empty for
  /// survival.
  std::vector<std::string> classes;
  int64_t n_samples = 0;  // patients or slides, following `level`
  int n_folds = 1;
  Metric metric = Metric::kAuroc;
  SplitScheme split_scheme = SplitScheme::kKFold;
  bool stratified = true;
  uint64_t seed = 0;

  bool operator==(const TaskSpec&) const = default;
};

enum class Assignment : uint8_t { kTrain, kTest };

struct SplitRow {
  std::string patient_id;
  std::string slide_id;
  std::string label;  // categorical / ordinal
  double time = 0;    // survival
  int event = 0;      // survival, 0 or 1
  std::vector<Assignment> folds;

  bool operator==(const SplitRow&) const = default;
};

struct SplitTable {
  bool survival = false;
  std::vector<SplitRow> rows;

  int n_folds() const { return rows.empty() ? 0 : static_cast<int>(rows[0].folds.size()); }
  /// Stratum of a row: the label, or the event indicator for survival.
  std::string StratumOf(const SplitRow& row) const;
  bool operator==(const SplitTable&) const = default;
};

struct ParsedTask {
  TaskSpec spec;
  SplitTable table;
  /// Non-fatal findings, e.g. RatioWarning messages.
  std::vector<std::string> warnings;
};

/// Parses and fully validates a task. Violations throw SchemaError,
/// LeakageError or LabelConflict with CSV line numbers. Ratio deviations are
/// returned as warnings, or thrown as RatioWarning when `strict_ratio`.
ParsedTask ParseTask(const std::filesystem::path& csv_path,
                     const std::filesystem::path& yaml_path, bool strict_ratio = false);

/// The invariant checks ParseTask runs, usable on in-memory tables.
/// Returns warnings; throws like ParseTask.
std::vector<std::string> ValidateTask(const TaskSpec& spec, const SplitTable& table,
                                      bool strict_ratio = false);

/// Validates, then writes both files. Throws IoFailure on write errors.
void WriteTask(const TaskSpec& spec, const SplitTable& table,
               const std::filesystem::path& csv_path, const std::filesystem::path& yaml_path);

struct PatientRecord {
  std::string patient_id;
  std::vector<std::string> slide_ids;
  std::string label;
  double time = 0;
  int event = 0;
};

struct SplitOptions {
  SplitScheme scheme = SplitScheme::kKFold;
  int n_folds = 5;
  uint64_t seed = 0;
  bool stratify = true;
  bool survival = false;  // stratify on the event indicator
};

/// kfold: seeded near-equal test blocks, each patient tested once.
/// monte_carlo: n_folds independent 80:20 draws with test = max(1,
/// round(0.2 n)). Stratified allocation is largest-remainder per class.
/// Throws TooFewSamples or ClassStarvation.
SplitTable GenerateSplits(const std::vector<PatientRecord>& patients,
                          const SplitOptions& options);

/// Keeps fold `fold` (0-based) only, with exactly `k_shots` train patients
/// per stratum drawn without replacement; other train patients are dropped
/// and the test side is untouched. Throws TooFewSamples.
SplitTable FewShotSubsample(const SplitTable& table, int fold, int k_shots, uint64_t seed);

}  // namespace pathforge

#endif  // PATHFORGE_TASK_SPLITS_H_
