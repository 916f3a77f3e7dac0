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

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "doctest.h"
#include "oracles.h"
#include "pathforge/sweep.h"
#include "sweep_fixtures.h"
#include "test_util.h"

namespace pathforge {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using testing::WriteToyTask;

// Deterministic pseudo-results keyed by experiment id.
RunOutcome HashOutcome(const Experiment& e) {
  RunOutcome o;
  o.metric_name = "auroc";
  uint64_t h = std::stoull(e.exp_id, nullptr, 16);
  for (int f = 0; f < 5; ++f) {
    h = h * 6364136223846793005ULL + 1442695040888963407ULL;
    o.fold_values.push_back(static_cast<double>(h >> 11) * 0x1.0p-53);
  }
  return o;
}

struct RecordingRunner {
  std::mutex mu;
  std::vector<std::string> order;
  std::chrono::microseconds nap{0};

  ExperimentRunner Get() {
    return [this](const Experiment& e, int) {
      if (nap.count() > 0) std::this_thread::sleep_for(nap);
      std::lock_guard lock(mu);
      order.push_back(e.exp_id);
      return HashOutcome(e);
    };
  }
};

SweepConfig ToyConfig(const fs::path& root, int n_models, int n_tasks,
                      std::vector<Framework> frameworks) {
  SweepConfig c;
  for (int m = 0; m < n_models; ++m) c.models.push_back("model" + std::to_string(m));
  for (int t = 0; t < n_tasks; ++t) {
    const fs::path dir = root / "tasks" / ("task" + std::to_string(t));
    if (!fs::exists(dir / "task.yaml")) WriteToyTask(root / "tasks", "task" + std::to_string(t), 10, false, 7 + t);
    c.tasks.push_back(dir);
  }
  c.frameworks = std::move(frameworks);
  c.out_dir = root / "out";
  return c;
}

TEST_CASE("matrix enumeration counts") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 1, 1, {Framework::kLinearProbe});
  CHECK(EnumerateMatrix(c).experiments.size() == 1);

  c = ToyConfig(dir.path(), 2, 3, {Framework::kLinearProbe, Framework::kRetrieval});
  c.hyper_grids[Framework::kLinearProbe]["lambda"] = {"1e-4", "1e-3", "1e-2", "1e-1"};
  c.hyper_grids[Framework::kRetrieval]["k"] = {"1", "5"};
  c.hyper_grids[Framework::kRetrieval]["space"] = {"cosine", "euclidean"};
  const ExperimentMatrix m = EnumerateMatrix(c);
  CHECK(m.experiments.size() == 48);
  std::set<std::string> ids;
  for (const Experiment& e : m.experiments) ids.insert(e.exp_id);
  CHECK(ids.size() == 48);
  // Axis order: models outermost, hyper combos innermost.
  CHECK(m.experiments.front().model == "model0");
  CHECK(m.experiments[1].hyper.at("lambda") == "1e-3");
  CHECK(m.experiments.back().model == "model1");

  // Pure function of the axis values.
  const ExperimentMatrix again = EnumerateMatrix(c);
  for (size_t i = 0; i < m.experiments.size(); ++i) {
    CHECK(again.experiments[i].exp_id == m.experiments[i].exp_id);
  }
  CHECK(ExperimentId("a", "t", Framework::kMil, {{"x", "1"}, {"y", "2"}}) ==
        ExperimentId("a", "t", Framework::kMil, {{"y", "2"}, {"x", "1"}}));
  CHECK(ExperimentId("a", "t", Framework::kMil, {}) != ExperimentId("a", "t", Framework::kCox, {}));
}

TEST_CASE("incompatible pairs are filtered; errors") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 1, 2, {Framework::kLinearProbe, Framework::kCox});
  c.tasks.push_back(WriteToyTask(dir.path() / "tasks", "surv", 20, true, 3));
  const ExperimentMatrix m = EnumerateMatrix(c);
  // 2 categorical x probe + survival x cox.
  CHECK(m.experiments.size() == 3);
  CHECK(m.filtered_incompatible == 3);

  c.frameworks = {Framework::kMil};
  c.tasks = {c.tasks.back()};
  CHECK_ERROR_CODE(EnumerateMatrix(c), ErrorCode::kEmptyMatrix);

  c.tasks = {dir / "nowhere"};
  CHECK_ERROR_CODE(EnumerateMatrix(c), ErrorCode::kTaskParseFailure);

  c.models.clear();
  CHECK_ERROR_CODE(EnumerateMatrix(c), ErrorCode::kInvalidArgument);
}

TEST_CASE("750-experiment stub sweep respects slot capacity and resumes") {
  TempDir dir;
  const SweepConfig c = ToyConfig(dir.path(), 5, 50,
                                  {Framework::kLinearProbe, Framework::kMil, Framework::kRetrieval});
  const ExperimentMatrix m = EnumerateMatrix(c);
  REQUIRE(m.experiments.size() == 750);

  ScheduleOptions o;
  o.workers = 4;
  o.slots = {{0, 2}, {1, 2}};
  RecordingRunner first;
  first.nap = std::chrono::microseconds(300);
  const fs::path ledger = dir / "out" / "ledger.jsonl";

  // Kill after 100 dispatches.
  o.max_dispatch = 100;
  const ScheduleReport killed = Schedule(m, ledger, o, first.Get());
  CHECK(killed.executed == 100);
  CHECK(killed.not_dispatched == 650);
  StatusSnapshot mid = SweepStatus(ledger);
  CHECK(mid.counts[ExperimentStatus::kDone] == 100);
  CHECK(mid.counts[ExperimentStatus::kPending] == 650);

  o.max_dispatch = -1;
  RecordingRunner second;
  second.nap = first.nap;
  const ScheduleReport resumed = Schedule(m, ledger, o, second.Get());
  CHECK(resumed.executed == 650);
  CHECK(resumed.skipped_done == 100);
  std::set<std::string> a(first.order.begin(), first.order.end());
  std::set<std::string> b(second.order.begin(), second.order.end());
  CHECK(a.size() == 100);
  CHECK(b.size() == 650);
  for (const std::string& id : a) CHECK(b.count(id) == 0);

  const oracle::LedgerReplay replay = oracle::ReplayLedger(ledger.string(), {{0, 2}, {1, 2}});
  CHECK_MESSAGE(replay.ok, replay.problem);
  CHECK(replay.max_running.at(0) <= 2);
  CHECK(replay.max_running.at(1) <= 2);
  CHECK(replay.history.size() == 750);

  StatusSnapshot done = SweepStatus(ledger);
  CHECK(done.counts[ExperimentStatus::kDone] == 750);
  CHECK(done.eta_seconds == 0.0);

  const GatherSummary g = GatherResults(dir / "out");
  CHECK(g.fold_rows == 3750);
  CHECK(g.summary_rows == 750);
  std::ifstream in(g.path);
  int64_t lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 1 + 3750 + 750);

  // A third run finds nothing to do.
  RecordingRunner third;
  CHECK(Schedule(m, ledger, o, third.Get()).executed == 0);
}

TEST_CASE("one worker and one slot run in enumeration order") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 2, 3, {Framework::kLinearProbe, Framework::kRetrieval});
  const ExperimentMatrix m = EnumerateMatrix(c);
  RecordingRunner r;
  Schedule(m, dir / "ledger.jsonl", {}, r.Get());
  REQUIRE(r.order.size() == m.experiments.size());
  for (size_t i = 0; i < m.experiments.size(); ++i) CHECK(r.order[i] == m.experiments[i].exp_id);
}

TEST_CASE("results do not depend on worker count") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 2, 4, {Framework::kLinearProbe, Framework::kRetrieval});
  const ExperimentMatrix m = EnumerateMatrix(c);
  std::map<std::string, std::string> rows[2];
  int idx = 0;
  for (int workers : {1, 8}) {
    const fs::path out = dir / ("w" + std::to_string(workers));
    ScheduleOptions o;
    o.workers = workers;
    o.slots = {{0, 3}, {1, 1}};
    RecordingRunner r;
    Schedule(m, LedgerPath(out), o, r.Get());
    GatherResults(out);
    std::ifstream in(out / "results.csv");
    std::string line;
    while (std::getline(in, line)) rows[idx][line] = line;
    ++idx;
  }
  CHECK(rows[0] == rows[1]);
}

TEST_CASE("failures are recorded and never block others") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 1, 6, {Framework::kLinearProbe, Framework::kRetrieval});
  const ExperimentMatrix m = EnumerateMatrix(c);
  REQUIRE(m.experiments.size() == 12);
  std::set<std::string> bad = {m.experiments[2].exp_id, m.experiments[7].exp_id};
  ScheduleOptions o;
  o.workers = 3;
  o.slots = {{0, 2}};
  const ScheduleReport rep = Schedule(m, LedgerPath(dir / "out"), o, [&](const Experiment& e, int) {
    if (bad.count(e.exp_id)) Fail(ErrorCode::kSingleClass, "planted failure");
    return HashOutcome(e);
  });
  CHECK(rep.succeeded == 10);
  CHECK(rep.failed == 2);
  const GatherSummary g = GatherResults(dir / "out");
  CHECK(g.summary_rows == 10);
  CHECK(g.failed_rows == 2);
  CHECK(g.fold_rows == 50);
  std::ifstream in(g.path);
  std::string line;
  int flagged = 0;
  while (std::getline(in, line)) {
    if (line.find(",failed,") != std::string::npos) {
      ++flagged;
      CHECK(line.find(",,,failed,") != std::string::npos);  // empty fold/metric/value
    }
  }
  CHECK(flagged == 2);

  // Failed runs stay failed on resume unless retried.
  CHECK(Schedule(m, LedgerPath(dir / "out"), o, [](const Experiment& e, int) {
          return HashOutcome(e);
        }).executed == 0);
  o.retry_failed = true;
  CHECK(Schedule(m, LedgerPath(dir / "out"), o, [](const Experiment& e, int) {
          return HashOutcome(e);
        }).executed == 2);
  CHECK(SweepStatus(LedgerPath(dir / "out")).counts[ExperimentStatus::kDone] == 12);
  CHECK(oracle::ReplayLedger(LedgerPath(dir / "out").string(), {{0, 2}}).ok);
}

TEST_CASE("a crash mid-run is closed and retried") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 1, 3, {Framework::kLinearProbe});
  const ExperimentMatrix m = EnumerateMatrix(c);
  const fs::path ledger = LedgerPath(dir / "out");
  ScheduleOptions o;
  o.max_dispatch = 0;  // only pending events
  Schedule(m, ledger, o, [](const Experiment& e, int) { return HashOutcome(e); });
  CHECK(SweepStatus(ledger).counts[ExperimentStatus::kPending] == 3);
  {
    // Simulate a process that died while running experiment 1, in the
    // middle of writing its next event.
    std::ofstream out(ledger, std::ios::app);
    out << R"({"exp_id":")" << m.experiments[1].exp_id
        << R"(","transition":"running","attempt":1,"slot":0,"ts":0,"seq":4})" << "\n";
    out << R"({"exp_id":"trunc)";
  }
  StatusSnapshot snap = SweepStatus(ledger);
  CHECK(snap.counts[ExperimentStatus::kRunning] == 1);
  CHECK(snap.slot_running[0] == 1);

  o.max_dispatch = -1;
  RecordingRunner r;
  CHECK(Schedule(m, ledger, o, r.Get()).executed == 3);
  const oracle::LedgerReplay replay = oracle::ReplayLedger(ledger.string(), {{0, 1}});
  CHECK_MESSAGE(replay.ok, replay.problem);
  CHECK(replay.history.at(m.experiments[1].exp_id) ==
        std::vector<std::string>{"pending", "running", "failed", "pending", "running", "done"});
  CHECK(SweepStatus(ledger).counts[ExperimentStatus::kDone] == 3);
}

TEST_CASE("status recount matches every ledger prefix") {
  TempDir dir;
  SweepConfig c = ToyConfig(dir.path(), 2, 3, {Framework::kLinearProbe, Framework::kRetrieval});
  const ExperimentMatrix m = EnumerateMatrix(c);
  const fs::path ledger = LedgerPath(dir / "out");
  ScheduleOptions o;
  o.workers = 2;
  o.slots = {{0, 1}, {1, 1}};
  Schedule(m, ledger, o, [](const Experiment& e, int) { return HashOutcome(e); });
  std::vector<std::string> lines;
  {
    std::ifstream in(ledger);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  for (size_t cut = 1; cut <= lines.size(); cut += 3) {
    const fs::path prefix = dir / "prefix.jsonl";
    {
      std::ofstream out(prefix, std::ios::trunc);
      for (size_t i = 0; i < cut; ++i) out << lines[i] << "\n";
    }
    std::map<std::string, std::string> last;
    for (size_t i = 0; i < cut; ++i) {
      const auto e = nlohmann::json::parse(lines[i]);
      if (e["transition"] != "start") last[e["exp_id"]] = e["transition"];
    }
    std::map<std::string, int64_t> expect;
    for (const auto& [id, t] : last) ++expect[t];
    const StatusSnapshot s = SweepStatus(prefix);
    CHECK(s.total == static_cast<int64_t>(last.size()));
    for (ExperimentStatus st : {ExperimentStatus::kPending, ExperimentStatus::kRunning,
                                ExperimentStatus::kDone, ExperimentStatus::kFailed}) {
      CHECK(s.counts.at(st) == expect[std::string(Name(st))]);
    }
  }
  CHECK_ERROR_CODE(SweepStatus(dir / "absent.jsonl"), ErrorCode::kMissingLedger);
  fs::create_directories(dir / "empty");
  {
    std::ofstream(LedgerPath(dir / "empty")) << "";
  }
  CHECK_ERROR_CODE(GatherResults(dir / "empty"), ErrorCode::kNoResults);
}

TEST_CASE("sweep config yaml and the evaluation runner") {
  TempDir dir;
  WriteToyTask(dir.path() / "tasks", "t0", 20, false, 1);
  WriteToyTask(dir.path() / "tasks", "t1", 20, false, 2);
  testing::WriteToyFeatures(dir / "feats" / "toy-a", 20, 6, 3);
  testing::WriteToyFeatures(dir / "feats" / "toy-b", 20, 4, 4);
  testing::WriteText(dir / "sweep.yaml", R"(models: [toy-a, toy-b]
tasks: [tasks/t0, tasks/t1/task.yaml]
frameworks: [probe, retrieval, mil]
hyper_grids:
  probe: {lambda: ["1e-3", "1e-1|1"]}
  retrieval: {k: [1, 3]}
  mil: {epochs: 5}
device_slots:
  - {slot_id: 0, capacity: 1}
  - {slot_id: 1, capacity: 2}
workers: 3
out_dir: out
features_root: feats
)");
  const SweepConfig c = LoadSweepConfig(dir / "sweep.yaml");
  CHECK(c.models.size() == 2);
  CHECK(c.device_slots.size() == 2);
  CHECK(c.workers == 3);
  CHECK(c.out_dir == dir / "out");
  const ExperimentMatrix m = EnumerateMatrix(c);
  CHECK(m.experiments.size() == 2 * 2 * (2 + 2 + 1));

  const ScheduleReport rep = RunSweep(c, MakeEvalRunner(c));
  CHECK(rep.succeeded == 20);
  CHECK(fs::exists(dir / "out" / "results" / (m.experiments[0].exp_id + ".json")));
  const GatherSummary g = GatherResults(c.out_dir);
  CHECK(g.summary_rows == 20);
  CHECK(g.fold_rows == 100);

  CHECK_ERROR_CODE(LoadSweepConfig(dir / "missing.yaml"), ErrorCode::kMissingFile);
  testing::WriteText(dir / "bad.yaml", "models: [a]\ntasks: [x]\nframeworks: [probe]\n"
                                       "device_slots: [{slot_id: 0, capacity: 0}]\n");
  CHECK_ERROR_CODE(LoadSweepConfig(dir / "bad.yaml"), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace pathforge
