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

#include "pathforge/sweep.h"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <condition_variable>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "binary_io.h"
#include "json.hpp"
#include "pathforge/error.h"
#include "pathforge/feature_engine.h"

namespace pathforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double NowSeconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string FormatDouble(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string HyperText(const HyperValues& hyper) {
  std::string out;
  for (const auto& [k, v] : hyper) {
    if (!out.empty()) out += ';';
    out += k + "=" + v;
  }
  return out;
}

void ValidateSlots(const std::vector<DeviceSlot>& slots) {
  if (slots.empty()) Fail(ErrorCode::kInvalidArgument, "no device slots");
  std::set<int> ids;
  for (const DeviceSlot& s : slots) {
    if (s.capacity < 1) {
      Fail(ErrorCode::kInvalidArgument,
           "slot " + std::to_string(s.slot_id) + " has capacity < 1");
    }
    if (!ids.insert(s.slot_id).second) {
      Fail(ErrorCode::kInvalidArgument, "duplicate slot id " + std::to_string(s.slot_id));
    }
  }
}

std::vector<HyperValues> HyperCombos(const std::map<std::string, std::vector<std::string>>& grid) {
  std::vector<HyperValues> combos = {{}};
  for (const auto& [key, values] : grid) {
    if (values.empty()) Fail(ErrorCode::kInvalidArgument, "hyper grid '" + key + "' is empty");
    std::vector<HyperValues> next;
    for (const HyperValues& base : combos) {
      for (const std::string& v : values) {
        HyperValues h = base;
        h[key] = v;
        next.push_back(std::move(h));
      }
    }
    combos = std::move(next);
  }
  return combos;
}

// --- Ledger -------------------------------------------------------------------

std::vector<json> ReadLedger(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kMissingLedger, "no ledger at " + path.string());
  std::vector<json> events;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      events.push_back(json::parse(lines[i]));
    } catch (const json::exception&) {
      // A torn final line is what a crash mid-append leaves behind.
      if (i + 1 == lines.size()) break;
      Fail(ErrorCode::kSchemaError,
           "ledger " + path.string() + " line " + std::to_string(i + 1) + " is not JSON");
    }
  }
  return events;
}

struct ExpState {
  Experiment exp;
  int attempt = 0;
  ExperimentStatus status = ExperimentStatus::kPending;
  int slot = -1;
  std::string reason;
  double duration = 0;
  std::string metric;
  std::vector<double> values;
};

struct LedgerState {
  std::vector<std::string> order;  // first appearance
  std::map<std::string, ExpState> exps;
  std::vector<DeviceSlot> slots;
  int64_t events = 0;
};

LedgerState FoldLedger(const std::vector<json>& events) {
  LedgerState st;
  st.events = static_cast<int64_t>(events.size());
  for (const json& e : events) {
    const std::string transition = e.value("transition", "");
    if (transition == "start") {
      st.slots.clear();
      for (const json& s : e.at("slots")) {
        st.slots.push_back({s.at("slot_id").get<int>(), s.at("capacity").get<int>()});
      }
      continue;
    }
    const std::string id = e.at("exp_id").get<std::string>();
    auto [it, fresh] = st.exps.try_emplace(id);
    ExpState& x = it->second;
    if (fresh) st.order.push_back(id);
    x.attempt = e.value("attempt", x.attempt);
    if (transition == "pending") {
      x.status = ExperimentStatus::kPending;
      x.exp.exp_id = id;
      x.exp.model = e.value("model", x.exp.model);
      x.exp.task = e.value("task", x.exp.task);
      x.exp.task_id = e.value("task_id", x.exp.task_id);
      if (e.contains("framework")) x.exp.framework = ParseFramework(e.at("framework").get<std::string>());
      if (e.contains("hyper")) x.exp.hyper = e.at("hyper").get<HyperValues>();
      x.slot = -1;
    } else if (transition == "running") {
      x.status = ExperimentStatus::kRunning;
      x.slot = e.at("slot").get<int>();
    } else if (transition == "done") {
      x.status = ExperimentStatus::kDone;
      x.duration = e.value("duration", 0.0);
      x.metric = e.value("metric", "");
      x.values = e.value("fold_values", std::vector<double>{});
    } else if (transition == "failed") {
      x.status = ExperimentStatus::kFailed;
      x.duration = e.value("duration", 0.0);
      x.reason = e.value("reason", "");
    } else {
      Fail(ErrorCode::kSchemaError, "unknown ledger transition '" + transition + "'");
    }
  }
  return st;
}

// Append-only JSONL writer; every line is flushed before Append returns.
class LedgerWriter {
 public:
  LedgerWriter(const fs::path& path, int64_t next_seq) : seq_(next_seq) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // A torn tail line is a crash mid-append; drop it so the ledger stays
    // line-parseable once new events follow.
    if (fs::exists(path) && fs::file_size(path) > 0) {
      const std::vector<uint8_t> bytes = internal::ReadWholeFile(path);
      size_t keep = bytes.size();
      while (keep > 0 && bytes[keep - 1] != '\n') --keep;
      if (keep != bytes.size()) fs::resize_file(path, keep);
    }
    out_.open(path, std::ios::app);
    if (!out_) Fail(ErrorCode::kIoFailure, "cannot append to " + path.string());
  }

  void Append(json event) {
    event["ts"] = NowSeconds();
    event["seq"] = seq_++;
    out_ << event.dump() << '\n';
    out_.flush();
    if (!out_) Fail(ErrorCode::kIoFailure, "ledger write failed");
  }

 private:
  std::ofstream out_;
  int64_t seq_;
};

json PendingEvent(const Experiment& exp, int attempt) {
  return {{"exp_id", exp.exp_id},     {"transition", "pending"},
          {"attempt", attempt},       {"model", exp.model},
          {"task", exp.task},         {"task_id", exp.task_id},
          {"framework", std::string(Name(exp.framework))}, {"hyper", exp.hyper}};
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void SweepConfig::Validate() const {
  if (models.empty()) Fail(ErrorCode::kInvalidArgument, "sweep has no models");
  if (tasks.empty()) Fail(ErrorCode::kInvalidArgument, "sweep has no tasks");
  if (frameworks.empty()) Fail(ErrorCode::kInvalidArgument, "sweep has no frameworks");
  if (workers < 1) Fail(ErrorCode::kInvalidArgument, "workers must be >= 1");
  ValidateSlots(device_slots);
}

SweepConfig LoadSweepConfig(const fs::path& yaml_path) {
  if (!fs::exists(yaml_path)) {
    Fail(ErrorCode::kMissingFile, "sweep config " + yaml_path.string() + " does not exist");
  }
  const fs::path base = yaml_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  SweepConfig c;
  try {
    const YAML::Node y = YAML::LoadFile(yaml_path.string());
    for (const auto& m : y["models"]) c.models.push_back(m.as<std::string>());
    for (const auto& t : y["tasks"]) c.tasks.push_back(resolve(t.as<std::string>()));
    for (const auto& f : y["frameworks"]) c.frameworks.push_back(ParseFramework(f.as<std::string>()));
    if (const YAML::Node grids = y["hyper_grids"]) {
      for (const auto& fw : grids) {
        auto& grid = c.hyper_grids[ParseFramework(fw.first.as<std::string>())];
        for (const auto& kv : fw.second) {
          auto& values = grid[kv.first.as<std::string>()];
          if (kv.second.IsSequence()) {
            for (const auto& v : kv.second) values.push_back(v.as<std::string>());
          } else {
            values.push_back(kv.second.as<std::string>());
          }
        }
      }
    }
    if (const YAML::Node slots = y["device_slots"]) {
      c.device_slots.clear();
      for (const auto& s : slots) {
        c.device_slots.push_back({s["slot_id"].as<int>(), s["capacity"].as<int>()});
      }
    }
    if (const YAML::Node w = y["workers"]) c.workers = w.as<int>();
    c.out_dir = resolve(y["out_dir"] ? y["out_dir"].as<std::string>() : std::string("sweep_out"));
    c.features_root =
        resolve(y["features_root"] ? y["features_root"].as<std::string>() : std::string("features"));
  } catch (const YAML::Exception& e) {
    Fail(ErrorCode::kSchemaError, yaml_path.string() + ": " + e.what());
  }
  c.Validate();
  return c;
}

std::pair<fs::path, fs::path> TaskFiles(const fs::path& task) {
  if (fs::is_directory(task)) return {task / "task.csv", task / "task.yaml"};
  fs::path csv = task;
  csv.replace_extension(".csv");
  return {csv, task};
}

std::string ExperimentId(const std::string& model, const std::string& task, Framework framework,
                         const HyperValues& hyper) {
  const std::string key = model + '\x1f' + task + '\x1f' + std::string(Name(framework)) + '\x1f' +
                          HyperText(hyper);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentMatrix EnumerateMatrix(const SweepConfig& config) {
  config.Validate();
  struct TaskInfo {
    std::string task_id;
    LabelKind kind;
  };
  std::vector<TaskInfo> infos;
  for (const fs::path& t : config.tasks) {
    const auto [csv, yaml] = TaskFiles(t);
    try {
      const ParsedTask parsed = ParseTask(csv, yaml);
      infos.push_back({parsed.spec.task_id, parsed.spec.label_kind});
    } catch (const Error& e) {
      Fail(ErrorCode::kTaskParseFailure, t.string() + ": " + e.what());
    }
  }
  std::map<Framework, std::vector<HyperValues>> combos;
  for (Framework f : config.frameworks) {
    const auto it = config.hyper_grids.find(f);
    combos[f] = it == config.hyper_grids.end() ? std::vector<HyperValues>{{}} : HyperCombos(it->second);
  }

  ExperimentMatrix m;
  std::set<std::string> seen;
  for (const std::string& model : config.models) {
    for (size_t t = 0; t < config.tasks.size(); ++t) {
      for (Framework f : config.frameworks) {
        for (const HyperValues& h : combos[f]) {
          if (!FrameworkCompatible(f, infos[t].kind)) {
            ++m.filtered_incompatible;
            continue;
          }
          Experiment e;
          e.model = model;
          e.task = config.tasks[t].lexically_normal().string();
          e.task_id = infos[t].task_id;
          e.framework = f;
          e.hyper = h;
          e.exp_id = ExperimentId(e.model, e.task, f, h);
          if (!seen.insert(e.exp_id).second) {
            Fail(ErrorCode::kInvalidArgument, "duplicate experiment " + e.model + "/" + e.task +
                                                  "/" + std::string(Name(f)) + " " +
                                                  HyperText(h));
          }
          m.experiments.push_back(std::move(e));
        }
      }
    }
  }
  if (m.experiments.empty()) {
    Fail(ErrorCode::kEmptyMatrix, "every (framework, task) pair was incompatible (" +
                                      std::to_string(m.filtered_incompatible) + " dropped)");
  }
  return m;
}

ScheduleReport Schedule(const ExperimentMatrix& matrix, const fs::path& ledger_path,
                        const ScheduleOptions& options, const ExperimentRunner& runner) {
  if (options.workers < 1) Fail(ErrorCode::kInvalidArgument, "workers must be >= 1");
  ValidateSlots(options.slots);

  LedgerState prior;
  if (fs::exists(ledger_path)) prior = FoldLedger(ReadLedger(ledger_path));
  LedgerWriter ledger(ledger_path, prior.events);
  json start = {{"transition", "start"}, {"workers", options.workers}, {"slots", json::array()}};
  for (const DeviceSlot& s : options.slots) {
    start["slots"].push_back({{"slot_id", s.slot_id}, {"capacity", s.capacity}});
  }
  ledger.Append(start);

  ScheduleReport report;
  std::vector<size_t> todo;
  std::vector<int> attempt(matrix.experiments.size(), 1);
  for (size_t i = 0; i < matrix.experiments.size(); ++i) {
    const Experiment& exp = matrix.experiments[i];
    const auto it = prior.exps.find(exp.exp_id);
    if (it == prior.exps.end()) {
      ledger.Append(PendingEvent(exp, 1));
      todo.push_back(i);
      continue;
    }
    const ExpState& x = it->second;
    attempt[i] = x.attempt;
    switch (x.status) {
      case ExperimentStatus::kDone:
        ++report.skipped_done;
        break;
      case ExperimentStatus::kPending:
        todo.push_back(i);
        break;
      case ExperimentStatus::kRunning:
        ledger.Append({{"exp_id", exp.exp_id}, {"transition", "failed"}, {"attempt", x.attempt},
                       {"slot", x.slot}, {"reason", "interrupted"}});
        [[fallthrough]];
      case ExperimentStatus::kFailed:
        if (x.status == ExperimentStatus::kRunning || options.retry_failed ||
            x.reason == "interrupted") {
          attempt[i] = x.attempt + 1;
          ledger.Append(PendingEvent(exp, attempt[i]));
          todo.push_back(i);
        }
        break;
    }
  }

  std::mutex mu;
  std::condition_variable slot_freed;
  std::map<int, int> running;
  for (const DeviceSlot& s : options.slots) running[s.slot_id] = 0;
  size_t next = 0;
  int64_t dispatched = 0;

  auto acquire = [&](size_t i) {
    std::unique_lock lock(mu);
    const DeviceSlot* pick = nullptr;
    slot_freed.wait(lock, [&] {
      pick = nullptr;
      for (const DeviceSlot& s : options.slots) {
        const int r = running[s.slot_id];
        if (r >= s.capacity) continue;
        // r / cap < best_r / best_cap, exactly; equal loads keep the lower id.
        if (!pick || static_cast<int64_t>(r) * pick->capacity <
                         static_cast<int64_t>(running[pick->slot_id]) * s.capacity ||
            (static_cast<int64_t>(r) * pick->capacity ==
                 static_cast<int64_t>(running[pick->slot_id]) * s.capacity &&
             s.slot_id < pick->slot_id)) {
          pick = &s;
        }
      }
      return pick != nullptr;
    });
    ++running[pick->slot_id];
    ledger.Append({{"exp_id", matrix.experiments[i].exp_id},
                   {"transition", "running"},
                   {"attempt", attempt[i]},
                   {"slot", pick->slot_id}});
    return pick->slot_id;
  };

  auto worker = [&] {
    for (;;) {
      size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= todo.size()) return;
        if (options.max_dispatch >= 0 && dispatched >= options.max_dispatch) return;
        i = todo[next++];
        ++dispatched;
      }
      const Experiment& exp = matrix.experiments[i];
      const int slot = acquire(i);
      SetThreadSlotId(slot);
      const auto t0 = std::chrono::steady_clock::now();
      json done = {{"exp_id", exp.exp_id}, {"attempt", attempt[i]}, {"slot", slot}};
      bool ok = false;
      try {
        const RunOutcome outcome = runner(exp, slot);
        done["transition"] = "done";
        done["metric"] = outcome.metric_name;
        done["fold_values"] = outcome.fold_values;
        ok = true;
      } catch (const Error& e) {
        done["transition"] = "failed";
        done["reason"] = std::string(ErrorCodeName(e.code())) + ": " + e.detail();
      } catch (const std::exception& e) {
        done["transition"] = "failed";
        done["reason"] = e.what();
      }
      done["duration"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      {
        std::lock_guard lock(mu);
        ledger.Append(done);  // written before the token is returned
        --running[slot];
        ++report.executed;
        ++(ok ? report.succeeded : report.failed);
      }
      slot_freed.notify_all();
    }
  };

  std::vector<std::thread> pool;
  for (int w = 0; w < options.workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  report.not_dispatched = static_cast<int64_t>(todo.size()) - dispatched;
  return report;
}

fs::path LedgerPath(const fs::path& out_dir) { return out_dir / "ledger.jsonl"; }

ExperimentRunner MakeEvalRunner(const SweepConfig& config) {
  struct Cache {
    std::mutex mu;
    std::map<std::string, std::shared_ptr<const FeatureSet>> features;
    std::map<std::string, std::shared_ptr<const ParsedTask>> tasks;
  };
  auto cache = std::make_shared<Cache>();
  const bool need_bags = std::find(config.frameworks.begin(), config.frameworks.end(),
                                   Framework::kMil) != config.frameworks.end();
  const fs::path features_root = config.features_root;
  const fs::path results = config.out_dir / "results";
  return [=](const Experiment& exp, int) {
    std::shared_ptr<const FeatureSet> features;
    std::shared_ptr<const ParsedTask> task;
    {
      // Loads happen under the lock so each is done once.
      std::lock_guard lock(cache->mu);
      auto& f = cache->features[exp.model];
      if (!f) f = std::make_shared<const FeatureSet>(LoadFeatureSet(features_root / exp.model, need_bags));
      features = f;
      auto& t = cache->tasks[exp.task];
      if (!t) {
        const auto [csv, yaml] = TaskFiles(exp.task);
        t = std::make_shared<const ParsedTask>(ParseTask(csv, yaml));
      }
      task = t;
    }
    const EvalHyper hyper = ApplyHyper({}, exp.hyper);
    const EvalResult r =
        EvaluateTask(task->spec, task->table, *features, exp.framework, hyper, exp.model);
    std::error_code ec;
    fs::create_directories(results, ec);
    const std::string csv = EvalResultCsv(r, true);
    const std::string sidecar = EvalResultJson(r, hyper);
    internal::AtomicWrite(results / (exp.exp_id + ".csv"), {csv.begin(), csv.end()});
    internal::AtomicWrite(results / (exp.exp_id + ".json"), {sidecar.begin(), sidecar.end()});
    return RunOutcome{std::string(Name(r.metric)), r.fold_values};
  };
}

ScheduleReport RunSweep(const SweepConfig& config, const ExperimentRunner& runner,
                        int64_t max_dispatch) {
  const ExperimentMatrix matrix = EnumerateMatrix(config);
  ScheduleOptions o;
  o.workers = config.workers;
  o.slots = config.device_slots;
  o.max_dispatch = max_dispatch;
  return Schedule(matrix, LedgerPath(config.out_dir), o, runner);
}

std::string_view Name(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::kPending: return "pending";
    case ExperimentStatus::kRunning: return "running";
    case ExperimentStatus::kDone: return "done";
    case ExperimentStatus::kFailed: return "failed";
  }
  return "?";
}

StatusSnapshot SweepStatus(const fs::path& ledger_path) {
  if (!fs::exists(ledger_path)) {
    Fail(ErrorCode::kMissingLedger, "no ledger at " + ledger_path.string());
  }
  const LedgerState st = FoldLedger(ReadLedger(ledger_path));
  StatusSnapshot snap;
  snap.events = st.events;
  snap.total = static_cast<int64_t>(st.exps.size());
  for (ExperimentStatus s : {ExperimentStatus::kPending, ExperimentStatus::kRunning,
                             ExperimentStatus::kDone, ExperimentStatus::kFailed}) {
    snap.counts[s] = 0;
  }
  int capacity = 0;
  for (const DeviceSlot& s : st.slots) {
    snap.slot_capacity[s.slot_id] = s.capacity;
    snap.slot_running[s.slot_id] = 0;
    capacity += s.capacity;
  }
  double total_duration = 0;
  for (const auto& [id, x] : st.exps) {
    ++snap.counts[x.status];
    if (x.status == ExperimentStatus::kRunning) ++snap.slot_running[x.slot];
    if (x.status == ExperimentStatus::kDone) total_duration += x.duration;
  }
  const int64_t done = snap.counts[ExperimentStatus::kDone];
  if (done > 0) {
    snap.mean_duration = total_duration / static_cast<double>(done);
    const int64_t remaining =
        snap.counts[ExperimentStatus::kPending] + snap.counts[ExperimentStatus::kRunning];
    snap.eta_seconds =
        snap.mean_duration * static_cast<double>(remaining) / std::max(1, capacity);
  }
  return snap;
}

GatherSummary GatherResults(const fs::path& out_dir) {
  const LedgerState st = FoldLedger(ReadLedger(LedgerPath(out_dir)));
  GatherSummary g;
  g.path = out_dir / "results.csv";
  std::ostringstream out;
  out << "exp_id,model,task,framework,fold,metric_name,value,status,std,hyper\n";
  std::ostringstream summary, failed;
  for (const std::string& id : st.order) {
    const ExpState& x = st.exps.at(id);
    const std::string prefix = id + "," + CsvField(x.exp.model) + "," + CsvField(x.exp.task_id) +
                               "," + std::string(Name(x.exp.framework)) + ",";
    const std::string hyper = CsvField(HyperText(x.exp.hyper));
    if (x.status == ExperimentStatus::kDone) {
      double sum = 0;
      for (size_t f = 0; f < x.values.size(); ++f) {
        out << prefix << f << "," << x.metric << "," << FormatDouble(x.values[f]) << ",done,,"
            << hyper << "\n";
        sum += x.values[f];
        ++g.fold_rows;
      }
      const double n = static_cast<double>(x.values.size());
      const double mean = n > 0 ? sum / n : 0.0;
      double ss = 0;
      for (double v : x.values) ss += (v - mean) * (v - mean);
      const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
      summary << prefix << "summary," << x.metric << "," << FormatDouble(mean) << ",done,"
              << FormatDouble(sd) << "," << hyper << "\n";
      ++g.summary_rows;
    } else if (x.status == ExperimentStatus::kFailed) {
      failed << prefix << ",,,failed,," << hyper << "\n";
      ++g.failed_rows;
    }
  }
  if (g.summary_rows == 0) Fail(ErrorCode::kNoResults, "no finished experiments in " + out_dir.string());
  out << summary.str() << failed.str();
  const std::string text = out.str();
  internal::AtomicWrite(g.path, {text.begin(), text.end()});
  return g;
}

}  // namespace pathforge
