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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "pathforge/error.h"
#include "pathforge/eval_suite.h"

namespace pathforge {
namespace {

// Pair counts are exact integers; both forms divide by a power-of-two
// multiple of the same count, so the result matches (c + 0.5 t) / pairs.
double HalfCredit(uint64_t concordant, uint64_t tied, uint64_t pairs) {
  return (2.0 * static_cast<double>(concordant) + static_cast<double>(tied)) /
         (2.0 * static_cast<double>(pairs));
}

void RequireSameSize(size_t a, size_t b, const char* what) {
  if (a != b) {
    Fail(ErrorCode::kInvalidArgument, std::string(what) + ": length mismatch (" +
                                          std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Fenwick tree over risk ranks.
class CountTree {
 public:
  explicit CountTree(size_t n) : tree_(n + 1, 0) {}
  void Add(size_t rank) {
    for (size_t i = rank + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Number of inserted ranks < rank.
  uint64_t Below(size_t rank) const {
    uint64_t s = 0;
    for (size_t i = rank; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<uint64_t> tree_;
};

}  // namespace

double MetricAuroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  RequireSameSize(scores.size(), labels.size(), "auroc");
  uint64_t pos = 0, neg = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      Fail(ErrorCode::kInvalidArgument, "auroc labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i])) Fail(ErrorCode::kNonFinite, "auroc score is not finite");
    (labels[i] == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) Fail(ErrorCode::kSingleClass, "auroc needs both classes");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  uint64_t concordant = 0, tied = 0, neg_below = 0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    uint64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? gp : gn)++;
      ++j;
    }
    concordant += gp * neg_below;
    tied += gp * gn;
    neg_below += gn;
    i = j;
  }
  return HalfCredit(concordant, tied, pos * neg);
}

double MetricAurocMacro(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
  RequireSameSize(static_cast<size_t>(scores.rows()), labels.size(), "auroc");
  std::set<int> present;
  for (int y : labels) {
    if (y < 0 || y >= scores.cols()) {
      Fail(ErrorCode::kInvalidArgument, "label " + std::to_string(y) + " has no score column");
    }
    present.insert(y);
  }
  if (present.size() < 2) Fail(ErrorCode::kSingleClass, "auroc needs at least two classes");
  double sum = 0;
  std::vector<double> column(labels.size());
  std::vector<int> binary(labels.size());
  for (int c : present) {
    for (size_t i = 0; i < labels.size(); ++i) {
      column[i] = scores(static_cast<Eigen::Index>(i), c);
      binary[i] = labels[i] == c ? 1 : 0;
    }
    sum += MetricAuroc(column, binary);
  }
  return sum / static_cast<double>(present.size());
}

double MetricBalancedAccuracy(const std::vector<int>& pred, const std::vector<int>& labels,
                              int k_classes) {
  RequireSameSize(pred.size(), labels.size(), "balanced accuracy");
  if (labels.empty()) Fail(ErrorCode::kEmptyClass, "no samples");
  std::set<int> classes;
  if (k_classes > 0) {
    for (int c = 0; c < k_classes; ++c) classes.insert(c);
  } else {
    classes.insert(labels.begin(), labels.end());
  }
  std::vector<std::pair<uint64_t, uint64_t>> recall;  // (hits, total)
  for (int c : classes) {
    uint64_t total = 0, hit = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      ++total;
      if (pred[i] == c) ++hit;
    }
    if (total == 0) Fail(ErrorCode::kEmptyClass, "class " + std::to_string(c) + " has no samples");
    recall.emplace_back(hit, total);
  }
  for (int y : labels) {
    if (!classes.count(y)) {
      Fail(ErrorCode::kInvalidArgument, "label " + std::to_string(y) + " outside [0, k)");
    }
  }
  // Exact fraction over the lcm of class sizes, so the one division rounds
  // correctly (7/12 comes out as 7.0 / 12.0). Float sum when it won't fit.
  constexpr uint64_t kExact = uint64_t{1} << 53;
  const uint64_t k = recall.size();
  uint64_t lcm = 1;
  bool exact = true;
  for (const auto& [hit, total] : recall) {
    lcm = lcm / std::gcd(lcm, total) * total;
    if (lcm >= kExact / k) {
      exact = false;
      break;
    }
  }
  if (exact) {
    uint64_t num = 0;
    for (const auto& [hit, total] : recall) num += hit * (lcm / total);
    return static_cast<double>(num) / static_cast<double>(lcm * k);
  }
  double sum = 0;
  for (const auto& [hit, total] : recall) sum += static_cast<double>(hit) / static_cast<double>(total);
  return sum / static_cast<double>(k);
}

double MetricQwk(const std::vector<int>& pred, const std::vector<int>& labels, int k_classes) {
  RequireSameSize(pred.size(), labels.size(), "qwk");
  if (k_classes < 1) Fail(ErrorCode::kInvalidArgument, "qwk needs k >= 1");
  if (labels.empty()) Fail(ErrorCode::kDegenerateMarginals, "no ratings");
  const size_t k = static_cast<size_t>(k_classes);
  std::vector<double> observed(k * k, 0.0), hist_true(k, 0.0), hist_pred(k, 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k_classes || pred[i] < 0 || pred[i] >= k_classes) {
      Fail(ErrorCode::kInvalidArgument, "rating outside [0, " + std::to_string(k_classes) + ")");
    }
    observed[static_cast<size_t>(labels[i]) * k + static_cast<size_t>(pred[i])] += 1;
    hist_true[static_cast<size_t>(labels[i])] += 1;
    hist_pred[static_cast<size_t>(pred[i])] += 1;
  }
  if (k == 1) Fail(ErrorCode::kDegenerateMarginals, "a single rating level");
  const double n = static_cast<double>(labels.size());
  const double scale = static_cast<double>((k - 1) * (k - 1));
  double num = 0, den = 0;
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = 0; j < k; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / scale;
      num += w * observed[i * k + j];
      den += w * hist_true[i] * hist_pred[j] / n;
    }
  }
  if (den == 0) Fail(ErrorCode::kDegenerateMarginals, "expected disagreement is zero");
  return 1.0 - num / den;
}

double MetricCIndex(const std::vector<double>& risk, const std::vector<double>& time,
                    const std::vector<int>& event) {
  RequireSameSize(risk.size(), time.size(), "c-index");
  RequireSameSize(risk.size(), event.size(), "c-index");
  const size_t n = risk.size();
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(risk[i]) || !std::isfinite(time[i])) {
      Fail(ErrorCode::kNonFinite, "c-index input is not finite");
    }
  }
  // Dense ranks of risk.
  std::vector<double> sorted_risk(risk);
  std::sort(sorted_risk.begin(), sorted_risk.end());
  sorted_risk.erase(std::unique(sorted_risk.begin(), sorted_risk.end()), sorted_risk.end());
  std::vector<size_t> rank(n);
  for (size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<size_t>(
        std::lower_bound(sorted_risk.begin(), sorted_risk.end(), risk[i]) - sorted_risk.begin());
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return time[a] > time[b]; });

  // Walk time groups from the latest; the tree holds every subject with a
  // strictly later time.
  CountTree tree(sorted_risk.size());
  uint64_t inserted = 0, concordant = 0, tied = 0, pairs = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && time[order[j]] == time[order[i]]) ++j;
    for (size_t g = i; g < j; ++g) {
      const size_t s = order[g];
      if (!event[s]) continue;
      const uint64_t below = tree.Below(rank[s]);
      const uint64_t at_or_below = tree.Below(rank[s] + 1);
      concordant += below;
      tied += at_or_below - below;
      pairs += inserted;
    }
    for (size_t g = i; g < j; ++g) tree.Add(rank[order[g]]);
    inserted += j - i;
    i = j;
  }
  if (pairs == 0) Fail(ErrorCode::kNoComparablePairs, "no comparable pairs");
  return HalfCredit(concordant, tied, pairs);
}

}  // namespace pathforge
