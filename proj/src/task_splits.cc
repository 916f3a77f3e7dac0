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

#include "pathforge/task_splits.h"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "pathforge/error.h"
#include "pathforge/rng.h"

namespace pathforge {
namespace {

template <typename E, size_t N>
std::string_view Lookup(E v, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [e, s] : table) {
    if (e == v) return s;
  }
  return "unknown";
}

template <typename E, size_t N>
E Reverse(std::string_view s, const std::pair<E, std::string_view> (&table)[N],
          std::string_view what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  Fail(ErrorCode::kSchemaError, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::pair<TaskLevel, std::string_view> kLevels[] = {
    {TaskLevel::kPatient, "patient"}, {TaskLevel::kSlide, "slide"}};
constexpr std::pair<LabelKind, std::string_view> kKinds[] = {
    {LabelKind::kCategorical, "categorical"},
    {LabelKind::kOrdinal, "ordinal"},
    {LabelKind::kSurvival, "survival"}};
constexpr std::pair<Metric, std::string_view> kMetrics[] = {
    {Metric::kBalancedAccuracy, "balanced_accuracy"},
    {Metric::kAuroc, "auroc"},
    {Metric::kQwk, "qwk"},
    {Metric::kCIndex, "c_index"}};
constexpr std::pair<SplitScheme, std::string_view> kSchemes[] = {
    {SplitScheme::kKFold, "kfold"},
    {SplitScheme::kMonteCarlo, "monte_carlo"},
    {SplitScheme::kOfficialSingle, "official_single"}};

int LineOf(size_t row_index) { return static_cast<int>(row_index) + 2; }  // 1-based, after header

std::string FormatDouble(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double ParseDouble(std::string_view s, int line, std::string_view column) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    Fail(ErrorCode::kSchemaError, "line " + std::to_string(line) + ": bad " +
                                      std::string(column) + " '" + std::string(s) + "'");
  }
  return v;
}

// Minimal CSV: comma separated, optional double-quoted fields with "" escapes.
std::vector<std::string> SplitCsvLine(const std::string& line, int line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) Fail(ErrorCode::kSchemaError, "line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string FoldName(int k) { return "fold_" + std::to_string(k + 1); }

}  // namespace

std::string_view Name(TaskLevel v) { return Lookup(v, kLevels); }
std::string_view Name(LabelKind v) { return Lookup(v, kKinds); }
std::string_view Name(Metric v) { return Lookup(v, kMetrics); }
std::string_view Name(SplitScheme v) { return Lookup(v, kSchemes); }
TaskLevel ParseTaskLevel(std::string_view s) { return Reverse(s, kLevels, "level"); }
LabelKind ParseLabelKind(std::string_view s) { return Reverse(s, kKinds, "label_kind"); }
Metric ParseMetric(std::string_view s) { return Reverse(s, kMetrics, "metric"); }
SplitScheme ParseSplitScheme(std::string_view s) { return Reverse(s, kSchemes, "split_scheme"); }

bool MetricCompatible(Metric metric, LabelKind kind) {
  switch (kind) {
    case LabelKind::kSurvival: return metric == Metric::kCIndex;
    case LabelKind::kOrdinal: return metric == Metric::kQwk;
    case LabelKind::kCategorical:
      return metric == Metric::kAuroc || metric == Metric::kBalancedAccuracy;
  }
  return false;
}

std::string SplitTable::StratumOf(const SplitRow& row) const {
  return survival ? std::to_string(row.event) : row.label;
}

// --- Validation -------------------------------------------------------------

std::vector<std::string> ValidateTask(const TaskSpec& spec, const SplitTable& table,
                                      bool strict_ratio) {
  auto schema = [](const std::string& msg) { Fail(ErrorCode::kSchemaError, msg); };
  if (spec.task_id.empty()) schema("task_id is empty");
  if (spec.n_folds < 1) schema("n_folds must be >= 1");
  if (!MetricCompatible(spec.metric, spec.label_kind)) {
    schema("metric " + std::string(Name(spec.metric)) + " is incompatible with " +
           std::string(Name(spec.label_kind)) + " labels");
  }
  const bool survival = spec.label_kind == LabelKind::kSurvival;
  if (survival != table.survival) schema("label columns do not match label_kind");
  if (!survival) {
    if (spec.classes.empty()) schema("classes must be listed for " + std::string(Name(spec.label_kind)));
    if (std::set<std::string>(spec.classes.begin(), spec.classes.end()).size() != spec.classes.size()) {
      schema("duplicate class names");
    }
  } else if (!spec.classes.empty()) {
    schema("survival tasks take no classes");
  }
  if (table.rows.empty()) schema("task has no rows");

  const std::set<std::string> classes(spec.classes.begin(), spec.classes.end());
  std::unordered_map<std::string, size_t> slide_rows;
  // patient -> first row index, used for leakage and label checks.
  std::unordered_map<std::string, size_t> patient_first;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const SplitRow& r = table.rows[i];
    const std::string at = "line " + std::to_string(LineOf(i)) + ": ";
    if (r.patient_id.empty() || r.slide_id.empty()) schema(at + "empty patient_id or slide_id");
    if (static_cast<int>(r.folds.size()) != spec.n_folds) {
      schema(at + "has " + std::to_string(r.folds.size()) + " fold columns, task declares " +
             std::to_string(spec.n_folds));
    }
    if (!slide_rows.emplace(r.slide_id, i).second) {
      schema(at + "duplicate slide_id " + r.slide_id + " (first on line " +
             std::to_string(LineOf(slide_rows[r.slide_id])) + ")");
    }
    if (survival) {
      if (!(r.time >= 0) || !std::isfinite(r.time)) schema(at + "time must be finite and >= 0");
      if (r.event != 0 && r.event != 1) schema(at + "event must be 0 or 1");
    } else if (!classes.count(r.label)) {
      schema(at + "label '" + r.label + "' is not a declared class");
    }

    const auto [it, fresh] = patient_first.emplace(r.patient_id, i);
    if (fresh) continue;
    const SplitRow& first = table.rows[it->second];
    for (int k = 0; k < spec.n_folds; ++k) {
      if (first.folds[static_cast<size_t>(k)] != r.folds[static_cast<size_t>(k)]) {
        Fail(ErrorCode::kLeakageError,
             "patient " + r.patient_id + " is in both train and test of " + FoldName(k) +
                 " (lines " + std::to_string(LineOf(it->second)) + " and " +
                 std::to_string(LineOf(i)) + ")");
      }
    }
    if (spec.level == TaskLevel::kPatient) {
      const bool same = survival ? (first.time == r.time && first.event == r.event)
                                 : first.label == r.label;
      if (!same) {
        Fail(ErrorCode::kLabelConflict,
             "patient " + r.patient_id + " has different labels on lines " +
                 std::to_string(LineOf(it->second)) + " and " + std::to_string(LineOf(i)));
      }
    }
  }

  const int64_t n_patients = static_cast<int64_t>(patient_first.size());
  const int64_t n_units =
      spec.level == TaskLevel::kPatient ? n_patients : static_cast<int64_t>(table.rows.size());
  if (spec.n_samples != n_units) {
    schema("n_samples is " + std::to_string(spec.n_samples) + " but the CSV has " +
           std::to_string(n_units) + " " + std::string(Name(spec.level)) + "s");
  }

  std::vector<std::string> warnings;
  if (spec.split_scheme != SplitScheme::kOfficialSingle) {
    // Ratio is measured in patients, the unit folds are drawn over.
    for (int k = 0; k < spec.n_folds; ++k) {
      int64_t test = 0;
      for (const auto& [pid, idx] : patient_first) {
        test += table.rows[idx].folds[static_cast<size_t>(k)] == Assignment::kTest;
      }
      const double expected = 0.2 * static_cast<double>(n_patients);
      if (std::abs(static_cast<double>(test) - expected) > 1.0) {
        const std::string msg = FoldName(k) + ": " + std::to_string(test) + " of " +
                                std::to_string(n_patients) +
                                " patients in test, expected 20% +/- 1";
        if (strict_ratio) Fail(ErrorCode::kRatioWarning, msg);
        warnings.push_back("RatioWarning: " + msg);
      }
    }
  }
  return warnings;
}

// --- Parse / write ----------------------------------------------------------

ParsedTask ParseTask(const std::filesystem::path& csv_path,
                     const std::filesystem::path& yaml_path, bool strict_ratio) {
  if (!std::filesystem::exists(csv_path)) {
    Fail(ErrorCode::kMissingFile, csv_path.string() + " not found");
  }
  if (!std::filesystem::exists(yaml_path)) {
    Fail(ErrorCode::kMissingFile, yaml_path.string() + " not found");
  }

  ParsedTask out;
  TaskSpec& spec = out.spec;
  try {
    const YAML::Node y = YAML::LoadFile(yaml_path.string());
    auto need = [&](const char* key) {
      const YAML::Node n = y[key];
      if (!n) Fail(ErrorCode::kSchemaError, std::string("YAML is missing '") + key + "'");
      return n;
    };
    spec.task_id = need("task_id").as<std::string>();
    spec.level = ParseTaskLevel(need("level").as<std::string>());
    spec.label_kind = ParseLabelKind(need("label_kind").as<std::string>());
    if (const YAML::Node c = y["classes"]) {
      if (!c.IsSequence()) Fail(ErrorCode::kSchemaError, "classes must be a list");
      for (const auto& item : c) spec.classes.push_back(item.as<std::string>());
    }
    spec.n_samples = need("n_samples").as<int64_t>();
    spec.n_folds = need("n_folds").as<int>();
    spec.metric = ParseMetric(need("metric").as<std::string>());
    spec.split_scheme = ParseSplitScheme(need("split_scheme").as<std::string>());
    spec.stratified = y["stratified"] ? y["stratified"].as<bool>() : false;
    spec.seed = y["seed"] ? y["seed"].as<uint64_t>() : 0;
  } catch (const YAML::Exception& e) {
    Fail(ErrorCode::kSchemaError, yaml_path.string() + ": " + e.what());
  }

  std::ifstream in(csv_path);
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kSchemaError, "empty CSV");
  auto strip = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  strip(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);  // UTF-8 BOM
  const std::vector<std::string> header = SplitCsvLine(line, 1);
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < header.size(); ++i) {
    if (!col.emplace(header[i], i).second) {
      Fail(ErrorCode::kSchemaError, "duplicate column " + header[i]);
    }
  }
  const bool survival = spec.label_kind == LabelKind::kSurvival;
  std::vector<std::string> required = {"patient_id", "slide_id"};
  if (survival) {
    required.insert(required.end(), {"time", "event"});
  } else {
    required.push_back("label");
  }
  for (int k = 0; k < spec.n_folds; ++k) required.push_back(FoldName(k));
  for (const auto& name : required) {
    if (!col.count(name)) Fail(ErrorCode::kSchemaError, "CSV is missing column '" + name + "'");
  }
  if (col.count(FoldName(spec.n_folds))) {
    Fail(ErrorCode::kSchemaError, "CSV has more fold columns than n_folds");
  }

  out.table.survival = survival;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip(line);
    if (line.empty()) continue;
    if (line_no != LineOf(out.table.rows.size())) {
      Fail(ErrorCode::kSchemaError, "line " + std::to_string(line_no) + ": blank lines inside the table");
    }
    const std::vector<std::string> f = SplitCsvLine(line, line_no);
    if (f.size() != header.size()) {
      Fail(ErrorCode::kSchemaError, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, got " +
                                        std::to_string(f.size()));
    }
    SplitRow r;
    r.patient_id = f[col["patient_id"]];
    r.slide_id = f[col["slide_id"]];
    if (survival) {
      r.time = ParseDouble(f[col["time"]], line_no, "time");
      const std::string& ev = f[col["event"]];
      if (ev != "0" && ev != "1") {
        Fail(ErrorCode::kSchemaError, "line " + std::to_string(line_no) + ": event must be 0 or 1");
      }
      r.event = ev == "1";
    } else {
      r.label = f[col["label"]];
    }
    for (int k = 0; k < spec.n_folds; ++k) {
      const std::string& v = f[col[FoldName(k)]];
      if (v == "train") {
        r.folds.push_back(Assignment::kTrain);
      } else if (v == "test") {
        r.folds.push_back(Assignment::kTest);
      } else {
        Fail(ErrorCode::kSchemaError, "line " + std::to_string(line_no) + ": " + FoldName(k) +
                                          " must be train or test, got '" + v + "'");
      }
    }
    out.table.rows.push_back(std::move(r));
  }
  out.warnings = ValidateTask(spec, out.table, strict_ratio);
  return out;
}

void WriteTask(const TaskSpec& spec, const SplitTable& table,
               const std::filesystem::path& csv_path, const std::filesystem::path& yaml_path) {
  ValidateTask(spec, table);
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  if (yaml_path.has_parent_path()) std::filesystem::create_directories(yaml_path.parent_path());

  std::ostringstream csv;
  csv << "patient_id,slide_id," << (table.survival ? "time,event" : "label");
  for (int k = 0; k < spec.n_folds; ++k) csv << ',' << FoldName(k);
  csv << '\n';
  for (const SplitRow& r : table.rows) {
    csv << CsvField(r.patient_id) << ',' << CsvField(r.slide_id) << ',';
    if (table.survival) {
      csv << FormatDouble(r.time) << ',' << r.event;
    } else {
      csv << CsvField(r.label);
    }
    for (Assignment a : r.folds) csv << ',' << (a == Assignment::kTrain ? "train" : "test");
    csv << '\n';
  }

  YAML::Emitter y;
  y << YAML::BeginMap;
  y << YAML::Key << "task_id" << YAML::Value << spec.task_id;
  y << YAML::Key << "level" << YAML::Value << std::string(Name(spec.level));
  y << YAML::Key << "label_kind" << YAML::Value << std::string(Name(spec.label_kind));
  y << YAML::Key << "classes" << YAML::Value << YAML::Flow << spec.classes;
  y << YAML::Key << "n_samples" << YAML::Value << spec.n_samples;
  y << YAML::Key << "n_folds" << YAML::Value << spec.n_folds;
  y << YAML::Key << "metric" << YAML::Value << std::string(Name(spec.metric));
  y << YAML::Key << "split_scheme" << YAML::Value << std::string(Name(spec.split_scheme));
  y << YAML::Key << "stratified" << YAML::Value << spec.stratified;
  y << YAML::Key << "seed" << YAML::Value << spec.seed;
  y << YAML::EndMap;

  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
    if (!out.flush()) Fail(ErrorCode::kIoFailure, "cannot write " + p.string());
  };
  write(csv_path, csv.str());
  write(yaml_path, std::string(y.c_str()) + "\n");
}

// --- Generation -------------------------------------------------------------

namespace {

// Patient indices grouped by stratum, strata in sorted order.
std::vector<std::vector<size_t>> Strata(const std::vector<PatientRecord>& patients,
                                        const SplitOptions& o) {
  std::map<std::string, std::vector<size_t>> by;
  for (size_t i = 0; i < patients.size(); ++i) {
    const std::string key =
        !o.stratify ? std::string() : o.survival ? std::to_string(patients[i].event) : patients[i].label;
    by[key].push_back(i);
  }
  std::vector<std::vector<size_t>> out;
  for (auto& [k, v] : by) out.push_back(std::move(v));
  return out;
}

SplitTable Expand(const std::vector<PatientRecord>& patients,
                  const std::vector<std::vector<Assignment>>& folds, bool survival) {
  SplitTable t;
  t.survival = survival;
  for (size_t i = 0; i < patients.size(); ++i) {
    for (const auto& slide : patients[i].slide_ids) {
      SplitRow r;
      r.patient_id = patients[i].patient_id;
      r.slide_id = slide;
      r.label = survival ? std::string() : patients[i].label;
      r.time = survival ? patients[i].time : 0;
      r.event = survival ? patients[i].event : 0;
      r.folds = folds[i];
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

}  // namespace

SplitTable GenerateSplits(const std::vector<PatientRecord>& patients,
                          const SplitOptions& o) {
  const size_t n = patients.size();
  if (n < 2) Fail(ErrorCode::kTooFewSamples, "need at least 2 patients");
  if (o.n_folds < 1) Fail(ErrorCode::kInvalidArgument, "n_folds must be >= 1");
  if (o.scheme == SplitScheme::kOfficialSingle) {
    Fail(ErrorCode::kInvalidArgument, "official splits are ingested, never generated");
  }
  std::set<std::string> ids;
  for (const auto& p : patients) {
    if (!ids.insert(p.patient_id).second) {
      Fail(ErrorCode::kInvalidArgument, "duplicate patient " + p.patient_id);
    }
    if (p.slide_ids.empty()) Fail(ErrorCode::kInvalidArgument, p.patient_id + " has no slides");
  }

  const auto strata = Strata(patients, o);
  std::vector<std::vector<Assignment>> folds(
      n, std::vector<Assignment>(static_cast<size_t>(o.n_folds), Assignment::kTrain));

  if (o.scheme == SplitScheme::kKFold) {
    if (static_cast<size_t>(o.n_folds) > n) {
      Fail(ErrorCode::kTooFewSamples, std::to_string(n) + " patients cannot fill " +
                                          std::to_string(o.n_folds) + " folds");
    }
    if (o.n_folds < 2) Fail(ErrorCode::kInvalidArgument, "kfold needs n_folds >= 2");
    // Per-stratum seeded shuffles, concatenated and dealt round robin, so
    // both block sizes and per-stratum counts differ by at most one.
    std::vector<size_t> order;
    for (size_t s = 0; s < strata.size(); ++s) {
      if (o.stratify && strata[s].size() < static_cast<size_t>(o.n_folds)) {
        Fail(ErrorCode::kClassStarvation,
             "stratum '" + (o.survival ? std::to_string(patients[strata[s][0]].event)
                                       : patients[strata[s][0]].label) +
                 "' has " + std::to_string(strata[s].size()) + " patients for " +
                 std::to_string(o.n_folds) + " folds");
      }
      std::vector<size_t> members = strata[s];
      Rng rng = Rng::Derive(o.seed, s);
      rng.Shuffle(members);
      order.insert(order.end(), members.begin(), members.end());
    }
    for (size_t i = 0; i < order.size(); ++i) {
      folds[order[i]][i % static_cast<size_t>(o.n_folds)] = Assignment::kTest;
    }
    return Expand(patients, folds, o.survival);
  }

  // Monte Carlo.
  for (const auto& s : strata) {
    if (o.stratify && s.size() < 2) {
      Fail(ErrorCode::kClassStarvation,
           "stratum '" + (o.survival ? std::to_string(patients[s[0]].event) : patients[s[0]].label) +
               "' has fewer than 2 patients");
    }
  }
  const int64_t n_test = std::max<int64_t>(1, std::llround(0.2 * static_cast<double>(n)));
  for (int k = 0; k < o.n_folds; ++k) {
    Rng rng = Rng::Derive(o.seed, static_cast<uint64_t>(k));
    // Largest-remainder allocation of n_test over strata (exact integers);
    // equal remainders are ordered by a seeded shuffle.
    std::vector<int64_t> alloc(strata.size());
    std::vector<int64_t> rem(strata.size());
    int64_t assigned = 0;
    for (size_t s = 0; s < strata.size(); ++s) {
      const int64_t num = n_test * static_cast<int64_t>(strata[s].size());
      alloc[s] = num / static_cast<int64_t>(n);
      rem[s] = num % static_cast<int64_t>(n);
      assigned += alloc[s];
    }
    std::vector<size_t> by_rem(strata.size());
    std::iota(by_rem.begin(), by_rem.end(), 0);
    rng.Shuffle(by_rem);
    std::stable_sort(by_rem.begin(), by_rem.end(),
                     [&](size_t a, size_t b) { return rem[a] > rem[b]; });
    for (size_t i = 0; assigned < n_test; ++i, ++assigned) ++alloc[by_rem[i % by_rem.size()]];

    for (size_t s = 0; s < strata.size(); ++s) {
      std::vector<size_t> members = strata[s];
      rng.Shuffle(members);
      for (int64_t j = 0; j < alloc[s]; ++j) {
        folds[members[static_cast<size_t>(j)]][static_cast<size_t>(k)] = Assignment::kTest;
      }
    }
  }
  return Expand(patients, folds, o.survival);
}

SplitTable FewShotSubsample(const SplitTable& table, int fold, int k_shots, uint64_t seed) {
  if (fold < 0 || fold >= table.n_folds()) {
    Fail(ErrorCode::kInvalidArgument, "fold " + std::to_string(fold) + " out of range");
  }
  if (k_shots < 1) Fail(ErrorCode::kInvalidArgument, "k_shots must be >= 1");
  const auto f = static_cast<size_t>(fold);

  // Train patients per stratum, in first-appearance order.
  std::map<std::string, std::vector<std::string>> train;
  for (const SplitRow& r : table.rows) train[table.StratumOf(r)];
  std::set<std::string> seen;
  for (const SplitRow& r : table.rows) {
    if (r.folds[f] != Assignment::kTrain || !seen.insert(r.patient_id).second) continue;
    train[table.StratumOf(r)].push_back(r.patient_id);
  }
  std::set<std::string> keep;
  uint64_t stream = 0;
  for (auto& [stratum, ids] : train) {
    if (ids.size() < static_cast<size_t>(k_shots)) {
      Fail(ErrorCode::kTooFewSamples, "stratum '" + stratum + "' has " +
                                          std::to_string(ids.size()) + " train patients, " +
                                          std::to_string(k_shots) + " requested");
    }
    Rng rng = Rng::Derive(seed, stream++);
    rng.Shuffle(ids);
    keep.insert(ids.begin(), ids.begin() + k_shots);
  }

  SplitTable out;
  out.survival = table.survival;
  for (const SplitRow& r : table.rows) {
    if (r.folds[f] == Assignment::kTrain && !keep.count(r.patient_id)) continue;
    SplitRow copy = r;
    copy.folds = {r.folds[f]};
    out.rows.push_back(std::move(copy));
  }
  return out;
}

}  // namespace pathforge
