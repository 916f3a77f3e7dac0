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

// Evaluation frameworks (linear probe, Cox regression, attention MIL, case
// retrieval) and the canonical task metrics.

#ifndef PATHFORGE_EVAL_SUITE_H_
#define PATHFORGE_EVAL_SUITE_H_

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pathforge/feature_engine.h"
#include "pathforge/task_splits.h"

namespace pathforge {

// --- Metrics ------------------------------------------------------------------

/// Binary AUROC, Mann-Whitney form with exact pair counts. labels are 0/1.
/// Throws SingleClass.
double MetricAuroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Macro one-vs-rest AUROC over the classes present in `labels`; scores is
/// n x k. Throws SingleClass when fewer than two classes are present.
double MetricAurocMacro(const Eigen::MatrixXd& scores, const std::vector<int>& labels);

/// Mean per-class recall over classes [0, k); k = 0 uses the classes that
/// occur in `labels`. Throws EmptyClass.
double MetricBalancedAccuracy(const std::vector<int>& pred, const std::vector<int>& labels,
                              int k_classes = 0);

/// Quadratic weighted kappa on ratings in [0, k). Throws DegenerateMarginals.
double MetricQwk(const std::vector<int>& pred, const std::vector<int>& labels, int k_classes);

/// Harrell's C with half credit for tied risks; O(n log n). Throws
/// NoComparablePairs.
double MetricCIndex(const std::vector<double>& risk, const std::vector<double>& time,
                    const std::vector<int>& event);

// --- Linear probe -------------------------------------------------------------

struct ProbeOptions {
  std::vector<double> lambda_grid = {1e-4};
  uint64_t seed = 0;
  int max_iter = 5000;
  double tol = 1e-7;  // relative objective change
  int n_classes = 0;  // 0: 1 + max label
};

struct ProbeModel {
  Eigen::MatrixXd W;  // k x dim
  Eigen::VectorXd b;  // k
  double lambda = 0;
  int iterations = 0;
  double final_objective = 0;
  std::vector<double> objective_trace;  // one entry per accepted step

  Eigen::MatrixXd PredictProba(const Eigen::MatrixXd& X) const;
  std::vector<int> Predict(const Eigen::MatrixXd& X) const;
};

/// Mean cross-entropy + (lambda/2) ||W||^2 and, optionally, its gradient.
double ProbeObjective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                      const Eigen::MatrixXd& W, const Eigen::VectorXd& b, double lambda,
                      Eigen::MatrixXd* grad_W = nullptr, Eigen::VectorXd* grad_b = nullptr);

/// Gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking. A multi-value lambda grid is resolved by 5-fold internal
/// cross-validation on (X, y). Throws SingleClass or NonFinite.
ProbeModel TrainLinearProbe(const Eigen::MatrixXd& X, const std::vector<int>& y,
                            const ProbeOptions& options = {});

// --- Cox ----------------------------------------------------------------------

struct CoxOptions {
  double ridge = 1e-4;
  double tol = 1e-6;  // max-norm of the gradient
  int max_iter = 300;
  double max_beta = 50;
};

struct CoxModel {
  Eigen::VectorXd beta;
  bool converged = false;
  int n_iter = 0;
  double grad_norm = 0;  // max-norm at the returned beta
  double log_likelihood = 0;  // penalized, Breslow

  Eigen::VectorXd Risk(const Eigen::MatrixXd& X) const { return X * beta; }
};

/// Breslow partial log-likelihood minus (ridge/2)||beta||^2, with its
/// gradient and the Hessian of the negative (positive semi-definite).
double CoxLogLikelihood(const Eigen::MatrixXd& X, const std::vector<double>& time,
                        const std::vector<int>& event, const Eigen::VectorXd& beta,
                        double ridge, Eigen::VectorXd* grad = nullptr,
                        Eigen::MatrixXd* neg_hessian = nullptr);

/// Damped Newton. Throws NoEvents, or Divergence when the likelihood keeps
/// rising while ||beta||_inf passes max_beta (monotone likelihood).
CoxModel CoxFit(const Eigen::MatrixXd& X, const std::vector<double>& time,
                const std::vector<int>& event, const CoxOptions& options = {});

// --- Attention MIL ------------------------------------------------------------

struct MilOptions {
  int d_att = 32;
  double lr = 2e-3;
  int epochs = 40;
  int batch_bags = 8;
  double weight_decay = 1e-4;
  uint64_t seed = 0;
  int n_classes = 0;  // 0: 1 + max label
};

struct MilModel {
  Eigen::MatrixXd V;   // d_att x dim
  Eigen::VectorXd w;   // d_att
  Eigen::MatrixXd Wc;  // k x dim
  Eigen::VectorXd bc;  // k
  int steps = 0;
  /// Largest |sum(attention) - 1| seen on any bag at any training step.
  double max_attention_sum_error = 0;

  Eigen::VectorXd Attention(const Eigen::MatrixXd& bag) const;
  Eigen::VectorXd Pooled(const Eigen::MatrixXd& bag) const;
  Eigen::VectorXd PredictProba(const Eigen::MatrixXd& bag) const;
};

struct MilGrad {
  Eigen::MatrixXd V;
  Eigen::VectorXd w;
  Eigen::MatrixXd Wc;
  Eigen::VectorXd bc;
};

/// Mean bag cross-entropy + (weight_decay/2)(||V||^2 + ||w||^2 + ||Wc||^2)
/// and, optionally, its gradient.
double MilLoss(const MilModel& model, const std::vector<Eigen::MatrixXd>& bags,
               const std::vector<int>& labels, double weight_decay, MilGrad* grad = nullptr);

/// Seeded mini-batch Adam over bags. Throws EmptyBag or NonFinite.
MilModel FinetuneMil(const std::vector<Eigen::MatrixXd>& bags, const std::vector<int>& labels,
                     const MilOptions& options = {});

// --- Retrieval ----------------------------------------------------------------

enum class MetricSpace { kCosine, kEuclidean };
std::string_view Name(MetricSpace space);
MetricSpace ParseMetricSpace(std::string_view s);

/// Indices of the k nearest train rows for each query row, nearest first,
/// equal distances ordered by ascending train index. Throws DimMismatch or
/// KTooLarge.
std::vector<std::vector<int>> NearestNeighbors(const Eigen::MatrixXd& train,
                                               const Eigen::MatrixXd& queries, int k,
                                               MetricSpace space);

struct RetrievalResult {
  double top_k_accuracy = 0;
  double map_at_k = 0;  // AP@k normalised by min(k, relevant items)
  std::vector<std::vector<int>> neighbors;
};

RetrievalResult RetrievalEval(const Eigen::MatrixXd& train, const std::vector<int>& train_labels,
                              const Eigen::MatrixXd& test, const std::vector<int>& test_labels,
                              int k, MetricSpace space);

// --- Task evaluation ----------------------------------------------------------

enum class Framework { kLinearProbe, kCox, kMil, kRetrieval };
std::string_view Name(Framework f);
Framework ParseFramework(std::string_view s);
bool FrameworkCompatible(Framework f, LabelKind kind);

/// Hyperparameters for every framework; each framework reads its own.
struct EvalHyper {
  std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  double cox_ridge = 1e-4;
  int mil_d_att = 32;
  double mil_lr = 2e-3;
  int mil_epochs = 40;
  int retrieval_k = 5;
  MetricSpace retrieval_space = MetricSpace::kCosine;
  uint64_t seed = 0;
};

/// Applies "key=value" overrides (lambda, cox_ridge, d_att, lr, epochs, k,
/// space, seed). `lambda` takes a '|' separated grid. Throws InvalidArgument.
EvalHyper ApplyHyper(EvalHyper base, const std::map<std::string, std::string>& values);

/// Slide-level features: pooled vectors and, for MIL, patch bags.
struct FeatureSet {
  std::map<std::string, Eigen::VectorXf> slide_vectors;
  std::map<std::string, FeatureMatrix> slide_bags;
};

/// Reads every `*.fstr` in `dir`, keyed by slide id.
FeatureSet LoadFeatureSet(const std::filesystem::path& dir, bool with_bags);

struct EvalResult {
  std::string task_id;
  std::string model_name;
  Framework framework = Framework::kLinearProbe;
  Metric metric = Metric::kAuroc;
  std::vector<double> fold_values;
  double mean = 0;
  double std = 0;  // sample standard deviation, 0 for one fold
  std::map<std::string, std::string> metadata;
};

/// Fits on each fold's train rows (features standardised with train
/// statistics) and scores the test rows with the task's metric. Patient
/// tasks average slide vectors per patient (MIL concatenates bags).
/// Throws MissingFeatures or IncompatibleFramework.
EvalResult EvaluateTask(const TaskSpec& spec, const SplitTable& table, const FeatureSet& features,
                        Framework framework, const EvalHyper& hyper,
                        const std::string& model_name = "");

/// One CSV row per fold: task_id,model,framework,fold,metric,value.
std::string EvalResultCsv(const EvalResult& result, bool with_header);
/// JSON sidecar with hyperparameters, design choices, seeds and fold values.
std::string EvalResultJson(const EvalResult& result, const EvalHyper& hyper);

}  // namespace pathforge

#endif  // PATHFORGE_EVAL_SUITE_H_
