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
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "pathforge/error.h"
#include "pathforge/eval_suite.h"
#include "pathforge/rng.h"

namespace pathforge {
namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr double kMinSigma = 1e-12;

std::string FormatDouble(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double ParseDouble(const std::string& key, const std::string& text) {
  double v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    Fail(ErrorCode::kInvalidArgument, "hyperparameter " + key + ": bad number '" + text + "'");
  }
  return v;
}

int ParseInt(const std::string& key, const std::string& text) {
  const double v = ParseDouble(key, text);
  if (v != std::floor(v) || v < 0 || v > 1e9) {
    Fail(ErrorCode::kInvalidArgument, "hyperparameter " + key + ": expected an integer");
  }
  return static_cast<int>(v);
}

// One evaluation unit: a patient (patient-level tasks) or a slide.
struct Sample {
  std::string id;
  std::vector<std::string> slides;
  int label = 0;
  double time = 0;
  int event = 0;
  std::vector<Assignment> folds;
};

std::vector<Sample> BuildSamples(const TaskSpec& spec, const SplitTable& table) {
  std::vector<Sample> samples;
  std::unordered_map<std::string, size_t> index;
  for (const SplitRow& row : table.rows) {
    const std::string& key = spec.level == TaskLevel::kPatient ? row.patient_id : row.slide_id;
    auto [it, fresh] = index.emplace(key, samples.size());
    if (fresh) {
      Sample s;
      s.id = key;
      if (!table.survival) {
        const auto c = std::find(spec.classes.begin(), spec.classes.end(), row.label);
        if (c == spec.classes.end()) {
          Fail(ErrorCode::kSchemaError, "label '" + row.label + "' is not a declared class");
        }
        s.label = static_cast<int>(c - spec.classes.begin());
      }
      s.time = row.time;
      s.event = row.event;
      s.folds = row.folds;
      samples.push_back(std::move(s));
    }
    samples[it->second].slides.push_back(row.slide_id);
  }
  return samples;
}

const Eigen::VectorXf& SlideVector(const FeatureSet& features, const Sample& s,
                                   const std::string& slide) {
  const auto it = features.slide_vectors.find(slide);
  if (it == features.slide_vectors.end()) {
    Fail(ErrorCode::kMissingFeatures, "slide " + slide + " (sample " + s.id + ") has no features");
  }
  return it->second;
}

MatrixXd SampleMatrix(const std::vector<Sample>& samples, const FeatureSet& features) {
  MatrixXd X;
  for (size_t i = 0; i < samples.size(); ++i) {
    std::vector<Eigen::VectorXf> vectors;
    for (const std::string& slide : samples[i].slides) {
      vectors.push_back(SlideVector(features, samples[i], slide));
    }
    const Eigen::VectorXf v = AggregatePatient(vectors);
    if (i == 0) X.resize(static_cast<Index>(samples.size()), v.size());
    if (v.size() != X.cols()) Fail(ErrorCode::kDimMismatch, "feature dims differ across slides");
    X.row(static_cast<Index>(i)) = v.cast<double>().transpose();
  }
  return X;
}

std::vector<MatrixXd> SampleBags(const std::vector<Sample>& samples, const FeatureSet& features) {
  std::vector<MatrixXd> bags;
  for (const Sample& s : samples) {
    std::vector<const FeatureMatrix*> parts;
    Index rows = 0;
    for (const std::string& slide : s.slides) {
      const auto it = features.slide_bags.find(slide);
      if (it == features.slide_bags.end()) {
        Fail(ErrorCode::kMissingFeatures, "slide " + slide + " (sample " + s.id + ") has no bag");
      }
      parts.push_back(&it->second);
      rows += it->second.rows();
    }
    MatrixXd bag(rows, parts.front()->cols());
    Index at = 0;
    for (const FeatureMatrix* p : parts) {
      if (p->cols() != bag.cols()) Fail(ErrorCode::kDimMismatch, "bag dims differ");
      bag.middleRows(at, p->rows()) = p->cast<double>();
      at += p->rows();
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

// Train-fold z-score; columns with sigma < kMinSigma are dropped.
struct Standardizer {
  std::vector<Index> keep;
  VectorXd mean, sd;

  static Standardizer Fit(const std::vector<const MatrixXd*>& blocks) {
    Standardizer s;
    const Index d = blocks.front()->cols();
    VectorXd sum = VectorXd::Zero(d);
    double n = 0;
    for (const MatrixXd* b : blocks) {
      sum += b->colwise().sum().transpose();
      n += static_cast<double>(b->rows());
    }
    const VectorXd mean = sum / n;
    VectorXd var = VectorXd::Zero(d);
    for (const MatrixXd* b : blocks) {
      var += (b->rowwise() - mean.transpose()).array().square().matrix().colwise().sum().transpose();
    }
    var /= n;
    for (Index j = 0; j < d; ++j) {
      if (std::sqrt(var(j)) >= kMinSigma) s.keep.push_back(j);
    }
    s.mean.resize(static_cast<Index>(s.keep.size()));
    s.sd.resize(static_cast<Index>(s.keep.size()));
    for (size_t i = 0; i < s.keep.size(); ++i) {
      s.mean(static_cast<Index>(i)) = mean(s.keep[i]);
      s.sd(static_cast<Index>(i)) = std::sqrt(var(s.keep[i]));
    }
    return s;
  }

  MatrixXd Apply(const MatrixXd& X) const {
    MatrixXd out(X.rows(), static_cast<Index>(keep.size()));
    for (size_t i = 0; i < keep.size(); ++i) {
      const Index c = static_cast<Index>(i);
      out.col(c) = (X.col(keep[i]).array() - mean(c)) / sd(c);
    }
    return out;
  }
};

MatrixXd Rows(const MatrixXd& X, const std::vector<size_t>& idx) {
  MatrixXd out(static_cast<Index>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Index>(i)) = X.row(static_cast<Index>(idx[i]));
  }
  return out;
}

std::vector<int> Argmax(const MatrixXd& proba) {
  std::vector<int> out(static_cast<size_t>(proba.rows()));
  for (Index i = 0; i < proba.rows(); ++i) {
    Index arg = 0;
    proba.row(i).maxCoeff(&arg);
    out[static_cast<size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

double ScoreClassification(Metric metric, const MatrixXd& proba, const std::vector<int>& pred,
                           const std::vector<int>& labels, int k) {
  switch (metric) {
    case Metric::kAuroc:
      if (k == 2) {
        std::vector<double> pos(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) pos[i] = proba(static_cast<Index>(i), 1);
        return MetricAuroc(pos, labels);
      }
      return MetricAurocMacro(proba, labels);
    case Metric::kBalancedAccuracy:
      return MetricBalancedAccuracy(pred, labels, 0);
    case Metric::kQwk:
      return MetricQwk(pred, labels, k);
    case Metric::kCIndex:
      break;
  }
  Fail(ErrorCode::kIncompatibleFramework, "c_index needs a survival framework");
}

}  // namespace

std::string_view Name(Framework f) {
  switch (f) {
    case Framework::kLinearProbe: return "probe";
    case Framework::kCox: return "cox";
    case Framework::kMil: return "mil";
    case Framework::kRetrieval: return "retrieval";
  }
  return "?";
}

Framework ParseFramework(std::string_view s) {
  for (Framework f : {Framework::kLinearProbe, Framework::kCox, Framework::kMil,
                      Framework::kRetrieval}) {
    if (Name(f) == s) return f;
  }
  Fail(ErrorCode::kInvalidArgument,
       "unknown framework '" + std::string(s) + "' (known: probe, cox, mil, retrieval)");
}

bool FrameworkCompatible(Framework f, LabelKind kind) {
  return (kind == LabelKind::kSurvival) == (f == Framework::kCox);
}

EvalHyper ApplyHyper(EvalHyper h, const std::map<std::string, std::string>& values) {
  for (const auto& [key, text] : values) {
    if (key == "lambda") {
      h.lambda_grid.clear();
      std::stringstream ss(text);
      std::string part;
      while (std::getline(ss, part, '|')) {
        const double v = ParseDouble(key, part);
        if (v < 0) Fail(ErrorCode::kInvalidArgument, "lambda must be >= 0");
        h.lambda_grid.push_back(v);
      }
      if (h.lambda_grid.empty()) Fail(ErrorCode::kInvalidArgument, "empty lambda grid");
    } else if (key == "cox_ridge") {
      h.cox_ridge = ParseDouble(key, text);
      if (h.cox_ridge < 0) Fail(ErrorCode::kInvalidArgument, "cox_ridge must be >= 0");
    } else if (key == "d_att") {
      h.mil_d_att = ParseInt(key, text);
    } else if (key == "lr") {
      h.mil_lr = ParseDouble(key, text);
    } else if (key == "epochs") {
      h.mil_epochs = ParseInt(key, text);
    } else if (key == "k") {
      h.retrieval_k = ParseInt(key, text);
    } else if (key == "space") {
      h.retrieval_space = ParseMetricSpace(text);
    } else if (key == "seed") {
      h.seed = static_cast<uint64_t>(ParseInt(key, text));
    } else {
      Fail(ErrorCode::kInvalidArgument, "unknown hyperparameter '" + key + "'");
    }
  }
  return h;
}

FeatureSet LoadFeatureSet(const fs::path& dir, bool with_bags) {
  if (!fs::is_directory(dir)) Fail(ErrorCode::kMissingFile, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".fstr") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  FeatureSet set;
  for (const fs::path& p : files) {
    FeatureStore store = LoadFeatures(p);
    if (set.slide_vectors.count(store.slide_id)) {
      Fail(ErrorCode::kInvalidArgument, "slide " + store.slide_id + " appears twice in " +
                                            dir.string());
    }
    set.slide_vectors[store.slide_id] = PoolSlide(store);
    if (with_bags) set.slide_bags[store.slide_id] = std::move(store.matrix);
  }
  return set;
}

EvalResult EvaluateTask(const TaskSpec& spec, const SplitTable& table, const FeatureSet& features,
                        Framework framework, const EvalHyper& hyper,
                        const std::string& model_name) {
  if (!FrameworkCompatible(framework, spec.label_kind)) {
    Fail(ErrorCode::kIncompatibleFramework, std::string(Name(framework)) + " cannot evaluate a " +
                                                std::string(Name(spec.label_kind)) + " task");
  }
  if (!MetricCompatible(spec.metric, spec.label_kind)) {
    Fail(ErrorCode::kSchemaError, "metric does not fit the label kind");
  }
  const std::vector<Sample> samples = BuildSamples(spec, table);
  if (samples.empty()) Fail(ErrorCode::kInvalidArgument, "task has no rows");
  const bool mil = framework == Framework::kMil;
  MatrixXd X;
  std::vector<MatrixXd> bags;
  if (mil) {
    bags = SampleBags(samples, features);
  } else {
    X = SampleMatrix(samples, features);
  }
  const int k = static_cast<int>(spec.classes.size());

  EvalResult result;
  result.task_id = spec.task_id;
  result.model_name = model_name;
  result.framework = framework;
  result.metric = spec.metric;
  result.metadata["standardization"] = "train-fold z-score, sigma < 1e-12 dropped";
  result.metadata["level"] = std::string(Name(spec.level));
  if (framework == Framework::kCox) result.metadata["ties"] = "breslow";
  if (spec.metric == Metric::kAuroc && k > 2) {
    result.metadata["multiclass_auroc"] = "macro one-vs-rest";
  }
  if (framework == Framework::kLinearProbe && hyper.lambda_grid.size() > 1) {
    result.metadata["lambda_selection"] = "5-fold internal cv, held-out log-loss";
  }
  if (framework == Framework::kRetrieval) result.metadata["neighbor_ties"] = "ascending train index";

  const int n_folds = table.n_folds();
  for (int f = 0; f < n_folds; ++f) {
    std::vector<size_t> train, test;
    for (size_t i = 0; i < samples.size(); ++i) {
      (samples[i].folds[static_cast<size_t>(f)] == Assignment::kTrain ? train : test).push_back(i);
    }
    if (train.empty() || test.empty()) {
      Fail(ErrorCode::kInvalidArgument, "fold_" + std::to_string(f) + " has an empty side");
    }
    const uint64_t fold_seed = Rng::Derive(hyper.seed, static_cast<uint64_t>(f)).Next();
    const std::string tag = "fold_" + std::to_string(f);
    std::vector<int> y_train, y_test;
    for (size_t i : train) y_train.push_back(samples[i].label);
    for (size_t i : test) y_test.push_back(samples[i].label);

    double value = 0;
    if (mil) {
      std::vector<const MatrixXd*> blocks;
      for (size_t i : train) blocks.push_back(&bags[i]);
      const Standardizer z = Standardizer::Fit(blocks);
      std::vector<MatrixXd> tr, te;
      for (size_t i : train) tr.push_back(z.Apply(bags[i]));
      for (size_t i : test) te.push_back(z.Apply(bags[i]));
      MilOptions o;
      o.d_att = hyper.mil_d_att;
      o.lr = hyper.mil_lr;
      o.epochs = hyper.mil_epochs;
      o.seed = fold_seed;
      o.n_classes = k;
      const MilModel model = FinetuneMil(tr, y_train, o);
      MatrixXd proba(static_cast<Index>(te.size()), k);
      for (size_t i = 0; i < te.size(); ++i) {
        proba.row(static_cast<Index>(i)) = model.PredictProba(te[i]).transpose();
      }
      value = ScoreClassification(spec.metric, proba, Argmax(proba), y_test, k);
    } else {
      const MatrixXd Xtr_raw = Rows(X, train);
      const Standardizer z = Standardizer::Fit({&Xtr_raw});
      const MatrixXd Xtr = z.Apply(Xtr_raw);
      const MatrixXd Xte = z.Apply(Rows(X, test));
      if (framework == Framework::kCox) {
        std::vector<double> t_tr, t_te;
        std::vector<int> e_tr, e_te;
        for (size_t i : train) {
          t_tr.push_back(samples[i].time);
          e_tr.push_back(samples[i].event);
        }
        for (size_t i : test) {
          t_te.push_back(samples[i].time);
          e_te.push_back(samples[i].event);
        }
        CoxOptions o;
        o.ridge = hyper.cox_ridge;
        const CoxModel model = CoxFit(Xtr, t_tr, e_tr, o);
        const VectorXd risk = model.Risk(Xte);
        value = MetricCIndex(std::vector<double>(risk.data(), risk.data() + risk.size()), t_te,
                             e_te);
        result.metadata[tag + "_converged"] = model.converged ? "true" : "false";
      } else if (framework == Framework::kLinearProbe) {
        ProbeOptions o;
        o.lambda_grid = hyper.lambda_grid;
        o.seed = fold_seed;
        o.n_classes = k;
        const ProbeModel model = TrainLinearProbe(Xtr, y_train, o);
        const MatrixXd proba = model.PredictProba(Xte);
        value = ScoreClassification(spec.metric, proba, Argmax(proba), y_test, k);
        result.metadata[tag + "_lambda"] = FormatDouble(model.lambda);
      } else {
        const int kk = std::min<int>(hyper.retrieval_k, static_cast<int>(Xtr.rows()));
        const RetrievalResult r =
            RetrievalEval(Xtr, y_train, Xte, y_test, kk, hyper.retrieval_space);
        // k-NN vote; ties go to the class seen first in neighbor order.
        MatrixXd proba = MatrixXd::Zero(Xte.rows(), k);
        std::vector<int> pred(r.neighbors.size());
        for (size_t q = 0; q < r.neighbors.size(); ++q) {
          for (int j : r.neighbors[q]) proba(static_cast<Index>(q), y_train[static_cast<size_t>(j)]) += 1.0 / kk;
          const double top = proba.row(static_cast<Index>(q)).maxCoeff();
          for (int j : r.neighbors[q]) {
            const int c = y_train[static_cast<size_t>(j)];
            if (proba(static_cast<Index>(q), c) == top) {
              pred[q] = c;
              break;
            }
          }
        }
        value = ScoreClassification(spec.metric, proba, pred, y_test, k);
        result.metadata[tag + "_top_k_accuracy"] = FormatDouble(r.top_k_accuracy);
        result.metadata[tag + "_map_at_k"] = FormatDouble(r.map_at_k);
      }
    }
    result.metadata[tag + "_seed"] = std::to_string(fold_seed);
    result.fold_values.push_back(value);
  }

  double sum = 0;
  for (double v : result.fold_values) sum += v;
  result.mean = sum / static_cast<double>(result.fold_values.size());
  if (result.fold_values.size() > 1) {
    double ss = 0;
    for (double v : result.fold_values) ss += (v - result.mean) * (v - result.mean);
    result.std = std::sqrt(ss / static_cast<double>(result.fold_values.size() - 1));
  }
  return result;
}

std::string EvalResultCsv(const EvalResult& r, bool with_header) {
  std::string out;
  if (with_header) out += "task_id,model,framework,fold,metric,value\n";
  for (size_t f = 0; f < r.fold_values.size(); ++f) {
    out += r.task_id + "," + r.model_name + "," + std::string(Name(r.framework)) + "," +
           std::to_string(f) + "," + std::string(Name(r.metric)) + "," +
           FormatDouble(r.fold_values[f]) + "\n";
  }
  return out;
}

std::string EvalResultJson(const EvalResult& r, const EvalHyper& h) {
  json j;
  j["task_id"] = r.task_id;
  j["model"] = r.model_name;
  j["framework"] = std::string(Name(r.framework));
  j["metric"] = std::string(Name(r.metric));
  j["fold_values"] = r.fold_values;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["hyper"] = {{"lambda_grid", h.lambda_grid},
                {"cox_ridge", h.cox_ridge},
                {"d_att", h.mil_d_att},
                {"lr", h.mil_lr},
                {"epochs", h.mil_epochs},
                {"k", h.retrieval_k},
                {"space", std::string(Name(h.retrieval_space))},
                {"seed", h.seed}};
  j["metadata"] = r.metadata;
  return j.dump(2) + "\n";
}

}  // namespace pathforge
