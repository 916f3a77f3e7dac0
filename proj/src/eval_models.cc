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

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "pathforge/error.h"
#include "pathforge/eval_suite.h"
#include "pathforge/rng.h"

namespace pathforge {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Row-wise log-softmax in place.
void LogSoftmaxRows(MatrixXd& logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    logits.row(i).array() -= lse;
  }
}

VectorXd Softmax(const VectorXd& v) {
  const double m = v.maxCoeff();
  VectorXd e = (v.array() - m).exp();
  return e / e.sum();
}

int InferClasses(const std::vector<int>& y, int requested) {
  int k = requested;
  for (int v : y) {
    if (v < 0) Fail(ErrorCode::kInvalidArgument, "negative class label");
    if (requested > 0 && v >= requested) {
      Fail(ErrorCode::kInvalidArgument, "label " + std::to_string(v) + " outside [0, k)");
    }
    if (requested == 0) k = std::max(k, v + 1);
  }
  return k;
}

bool AllFinite(const MatrixXd& m) { return m.allFinite(); }

// --- Probe --------------------------------------------------------------------

struct ProbeFit {
  MatrixXd W;
  VectorXd b;
  int iterations = 0;
  std::vector<double> trace;
};

ProbeFit FitProbe(const MatrixXd& X, const std::vector<int>& y, int k, double lambda,
                  uint64_t seed, int max_iter, double tol) {
  Rng rng(seed);
  ProbeFit fit;
  fit.W.resize(k, X.cols());
  for (Index r = 0; r < fit.W.rows(); ++r) {
    for (Index c = 0; c < fit.W.cols(); ++c) fit.W(r, c) = 0.01 * rng.Normal();
  }
  fit.b = VectorXd::Zero(k);

  MatrixXd gW, gW_next, W_next;
  VectorXd gb, gb_next, b_next;
  double f = ProbeObjective(X, y, fit.W, fit.b, lambda, &gW, &gb);
  if (!std::isfinite(f)) Fail(ErrorCode::kNonFinite, "probe objective is not finite");
  fit.trace.push_back(f);
  // Diagonal preconditioner: the ridge term gives W curvature ~lambda while
  // the unpenalized bias keeps ~1, so W steps are scaled by 1/(1+lambda).
  const double pw = 1.0 / (1.0 + lambda);
  double alpha = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const double g2 = pw * gW.squaredNorm() + gb.squaredNorm();
    if (g2 == 0) break;
    double step = alpha, f_next = 0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      W_next = fit.W - (step * pw) * gW;
      b_next = fit.b - step * gb;
      f_next = ProbeObjective(X, y, W_next, b_next, lambda, &gW_next, &gb_next);
      if (std::isfinite(f_next) && f_next <= f - 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    // Barzilai-Borwein trial step, measured in the preconditioned metric.
    const double sy = ((W_next - fit.W).cwiseProduct(gW_next - gW)).sum() +
                      (b_next - fit.b).dot(gb_next - gb);
    const double ss = (W_next - fit.W).squaredNorm() / pw + (b_next - fit.b).squaredNorm();
    alpha = sy > 0 ? std::clamp(ss / sy, 1e-10, 1e10) : std::min(2 * step, 1e10);
    const double rel = (f - f_next) / std::max(std::abs(f), 1e-300);
    fit.W.swap(W_next);
    fit.b.swap(b_next);
    gW.swap(gW_next);
    gb.swap(gb_next);
    f = f_next;
    fit.trace.push_back(f);
    ++fit.iterations;
    if (rel < tol) break;
  }
  if (!AllFinite(fit.W) || !fit.b.allFinite()) {
    Fail(ErrorCode::kNonFinite, "probe parameters are not finite");
  }
  return fit;
}

MatrixXd Rows(const MatrixXd& X, const std::vector<size_t>& idx) {
  MatrixXd out(static_cast<Index>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = X.row(static_cast<Index>(idx[i]));
  return out;
}

template <typename T>
std::vector<T> Pick(const std::vector<T>& v, const std::vector<size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(v[i]);
  return out;
}

// Internal stratified CV on the training data only; mean held-out log-loss.
double SelectLambda(const MatrixXd& X, const std::vector<int>& y, int k,
                    const ProbeOptions& options) {
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  size_t smallest = y.size();
  for (const auto& [c, members] : by_class) smallest = std::min(smallest, members.size());
  const size_t n_inner = std::min<size_t>(5, smallest);
  if (n_inner < 2) return options.lambda_grid.front();

  std::vector<int> fold_of(y.size());
  Rng rng = Rng::Derive(options.seed, 0x1a4bda);
  size_t dealt = 0;
  for (auto& [c, members] : by_class) {
    rng.Shuffle(members);
    for (size_t i : members) fold_of[i] = static_cast<int>(dealt++ % n_inner);
  }

  double best_loss = std::numeric_limits<double>::infinity();
  double best = options.lambda_grid.front();
  for (double lambda : options.lambda_grid) {
    double total = 0;
    for (size_t f = 0; f < n_inner; ++f) {
      std::vector<size_t> tr, va;
      for (size_t i = 0; i < y.size(); ++i) {
        (fold_of[i] == static_cast<int>(f) ? va : tr).push_back(i);
      }
      const ProbeFit fit = FitProbe(Rows(X, tr), Pick(y, tr), k, lambda, options.seed,
                                    options.max_iter, options.tol);
      MatrixXd logits = (Rows(X, va) * fit.W.transpose()).rowwise() + fit.b.transpose();
      LogSoftmaxRows(logits);
      double loss = 0;
      for (size_t i = 0; i < va.size(); ++i) loss -= logits(static_cast<Index>(i), y[va[i]]);
      total += loss / static_cast<double>(va.size());
    }
    const double mean = total / static_cast<double>(n_inner);
    if (mean < best_loss) {
      best_loss = mean;
      best = lambda;
    }
  }
  return best;
}

}  // namespace

double ProbeObjective(const MatrixXd& X, const std::vector<int>& y, const MatrixXd& W,
                      const VectorXd& b, double lambda, MatrixXd* grad_W, VectorXd* grad_b) {
  const Index n = X.rows();
  MatrixXd logp = (X * W.transpose()).rowwise() + b.transpose();
  LogSoftmaxRows(logp);
  double loss = 0;
  for (Index i = 0; i < n; ++i) loss -= logp(i, y[static_cast<size_t>(i)]);
  loss /= static_cast<double>(n);
  loss += 0.5 * lambda * W.squaredNorm();
  if (grad_W || grad_b) {
    MatrixXd G = logp.array().exp();
    for (Index i = 0; i < n; ++i) G(i, y[static_cast<size_t>(i)]) -= 1.0;
    G /= static_cast<double>(n);
    if (grad_W) *grad_W = G.transpose() * X + lambda * W;
    if (grad_b) *grad_b = G.colwise().sum().transpose();
  }
  return loss;
}

MatrixXd ProbeModel::PredictProba(const MatrixXd& X) const {
  MatrixXd logp = (X * W.transpose()).rowwise() + b.transpose();
  LogSoftmaxRows(logp);
  return logp.array().exp();
}

std::vector<int> ProbeModel::Predict(const MatrixXd& X) const {
  const MatrixXd p = PredictProba(X);
  std::vector<int> out(static_cast<size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i) {
    Index arg = 0;
    p.row(i).maxCoeff(&arg);
    out[static_cast<size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

ProbeModel TrainLinearProbe(const MatrixXd& X, const std::vector<int>& y,
                            const ProbeOptions& options) {
  if (static_cast<size_t>(X.rows()) != y.size()) {
    Fail(ErrorCode::kInvalidArgument, "X rows and labels differ in length");
  }
  if (y.empty()) Fail(ErrorCode::kInvalidArgument, "no training samples");
  if (!X.allFinite()) Fail(ErrorCode::kNonFinite, "probe features are not finite");
  if (options.lambda_grid.empty()) Fail(ErrorCode::kInvalidArgument, "empty lambda grid");
  for (double l : options.lambda_grid) {
    if (!(l >= 0) || !std::isfinite(l)) Fail(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  }
  const int k = InferClasses(y, options.n_classes);
  if (std::set<int>(y.begin(), y.end()).size() < 2) {
    Fail(ErrorCode::kSingleClass, "all training labels are equal");
  }
  if (static_cast<int64_t>(y.size()) < k) {
    Fail(ErrorCode::kInvalidArgument, "fewer samples than classes");
  }
  const double lambda = options.lambda_grid.size() > 1
                            ? SelectLambda(X, y, k, options)
                            : options.lambda_grid.front();
  ProbeFit fit = FitProbe(X, y, k, lambda, options.seed, options.max_iter, options.tol);
  ProbeModel model;
  model.W = std::move(fit.W);
  model.b = std::move(fit.b);
  model.lambda = lambda;
  model.iterations = fit.iterations;
  model.final_objective = fit.trace.back();
  model.objective_trace = std::move(fit.trace);
  return model;
}

// --- Cox ----------------------------------------------------------------------

double CoxLogLikelihood(const MatrixXd& X, const std::vector<double>& time,
                        const std::vector<int>& event, const VectorXd& beta, double ridge,
                        VectorXd* grad, MatrixXd* neg_hessian) {
  const Index n = X.rows(), d = X.cols();
  const VectorXd eta = X * beta;
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return time[static_cast<size_t>(a)] > time[static_cast<size_t>(b)];
  });

  double s0 = 0, ll = 0;
  VectorXd s1 = VectorXd::Zero(d);
  MatrixXd s2;
  if (neg_hessian) s2 = MatrixXd::Zero(d, d);
  if (grad) *grad = VectorXd::Zero(d);
  if (neg_hessian) *neg_hessian = MatrixXd::Zero(d, d);

  // Breslow: every event at time t shares the risk set {j : t_j >= t}.
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    const double t = time[static_cast<size_t>(order[i])];
    while (j < order.size() && time[static_cast<size_t>(order[j])] == t) {
      const Index s = order[j];
      const double w = std::exp(eta(s) - shift);
      s0 += w;
      s1 += w * X.row(s).transpose();
      if (neg_hessian) s2.noalias() += w * X.row(s).transpose() * X.row(s);
      ++j;
    }
    const VectorXd mean = s1 / s0;
    for (size_t g = i; g < j; ++g) {
      const Index s = order[g];
      if (!event[static_cast<size_t>(s)]) continue;
      ll += eta(s) - (shift + std::log(s0));
      if (grad) *grad += X.row(s).transpose() - mean;
      if (neg_hessian) *neg_hessian += s2 / s0 - mean * mean.transpose();
    }
    i = j;
  }
  ll -= 0.5 * ridge * beta.squaredNorm();
  if (grad) *grad -= ridge * beta;
  if (neg_hessian) neg_hessian->diagonal().array() += ridge;
  return ll;
}

CoxModel CoxFit(const MatrixXd& X, const std::vector<double>& time,
                const std::vector<int>& event, const CoxOptions& options) {
  const size_t n = static_cast<size_t>(X.rows());
  if (time.size() != n || event.size() != n) {
    Fail(ErrorCode::kInvalidArgument, "X, time and event differ in length");
  }
  if (!(options.ridge >= 0)) Fail(ErrorCode::kInvalidArgument, "ridge must be >= 0");
  if (!X.allFinite()) Fail(ErrorCode::kNonFinite, "cox covariates are not finite");
  for (double t : time) {
    if (!std::isfinite(t)) Fail(ErrorCode::kNonFinite, "survival time is not finite");
  }
  if (std::none_of(event.begin(), event.end(), [](int e) { return e != 0; })) {
    Fail(ErrorCode::kNoEvents, "no events among " + std::to_string(n) + " subjects");
  }

  const Index d = X.cols();
  CoxModel model;
  model.beta = VectorXd::Zero(d);
  VectorXd g, prev_step;
  MatrixXd H;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const double ll = CoxLogLikelihood(X, time, event, model.beta, options.ridge, &g, &H);
    model.log_likelihood = ll;
    model.grad_norm = d > 0 ? g.lpNorm<Eigen::Infinity>() : 0.0;
    model.n_iter = iter;

    // Newton step on the well-curved eigendirections. Where curvature has
    // vanished numerically, keep moving as the previous step did (the
    // separation path) or fall back to the gradient; a constant covariate
    // without ridge has neither and stays put.
    VectorXd step = VectorXd::Zero(d);
    if (d > 0) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H);
      const VectorXd& ev = eig.eigenvalues();
      const MatrixXd& vecs = eig.eigenvectors();
      const double cutoff = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
      const VectorXd proj = vecs.transpose() * g;
      const VectorXd prev_proj =
          prev_step.size() == d ? VectorXd(vecs.transpose() * prev_step) : VectorXd::Zero(d);
      VectorXd scaled = VectorXd::Zero(d);
      for (Index i = 0; i < d; ++i) {
        if (ev(i) > cutoff) {
          scaled(i) = proj(i) / ev(i);
        } else if (std::abs(prev_proj(i)) > 1e-3) {
          scaled(i) = prev_proj(i);
        } else {
          scaled(i) = proj(i);
        }
      }
      step = vecs * scaled;
    }
    if (model.grad_norm < options.tol && (d == 0 || step.lpNorm<Eigen::Infinity>() < 1e-3)) {
      model.converged = true;
      return model;
    }

    double scale = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      const VectorXd trial = model.beta + scale * step;
      const double ll_trial = CoxLogLikelihood(X, time, event, trial, options.ridge);
      if (std::isfinite(ll_trial) && ll_trial >= ll - 1e-12 * (1.0 + std::abs(ll))) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) return model;
    prev_step = scale * step;
    model.beta += prev_step;
    if (model.beta.lpNorm<Eigen::Infinity>() > options.max_beta) {
      Fail(ErrorCode::kDivergence,
           "coefficients passed " + std::to_string(options.max_beta) +
               " while the partial likelihood kept rising (monotone likelihood, e.g. perfect "
               "separation)");
    }
  }
  const double ll = CoxLogLikelihood(X, time, event, model.beta, options.ridge, &g);
  model.log_likelihood = ll;
  model.grad_norm = d > 0 ? g.lpNorm<Eigen::Infinity>() : 0.0;
  model.n_iter = options.max_iter;
  return model;
}

// --- MIL ----------------------------------------------------------------------

namespace {

// Loss and gradient over bags[idx]; tracks the attention-sum error.
double MilLossOver(const MilModel& m, const std::vector<MatrixXd>& bags,
                   const std::vector<int>& labels, const std::vector<size_t>& idx,
                   double weight_decay, MilGrad* grad, double* att_error) {
  if (grad) {
    grad->V = MatrixXd::Zero(m.V.rows(), m.V.cols());
    grad->w = VectorXd::Zero(m.w.size());
    grad->Wc = MatrixXd::Zero(m.Wc.rows(), m.Wc.cols());
    grad->bc = VectorXd::Zero(m.bc.size());
  }
  double loss = 0;
  for (size_t bi : idx) {
    const MatrixXd& h = bags[bi];
    const MatrixXd U = (h * m.V.transpose()).array().tanh();  // n x d_att
    const VectorXd a = Softmax(U * m.w);
    if (att_error) *att_error = std::max(*att_error, std::abs(a.sum() - 1.0));
    const VectorXd z = h.transpose() * a;
    const VectorXd logits = m.Wc * z + m.bc;
    const VectorXd p = Softmax(logits);
    const int y = labels[bi];
    loss -= std::log(std::max(p(y), std::numeric_limits<double>::min()));
    if (!grad) continue;
    VectorXd dlogits = p;
    dlogits(y) -= 1.0;
    grad->Wc += dlogits * z.transpose();
    grad->bc += dlogits;
    const VectorXd dz = m.Wc.transpose() * dlogits;
    const VectorXd da = h * dz;
    const VectorXd ds = a.array() * (da.array() - a.dot(da));
    grad->w += U.transpose() * ds;
    const MatrixXd dpre =
        (ds * m.w.transpose()).array() * (1.0 - U.array().square());  // n x d_att
    grad->V += dpre.transpose() * h;
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  loss *= inv;
  loss += 0.5 * weight_decay * (m.V.squaredNorm() + m.w.squaredNorm() + m.Wc.squaredNorm());
  if (grad) {
    grad->V = grad->V * inv + weight_decay * m.V;
    grad->w = grad->w * inv + weight_decay * m.w;
    grad->Wc = grad->Wc * inv + weight_decay * m.Wc;
    grad->bc *= inv;
  }
  return loss;
}

template <typename T>
void AdamUpdate(T& param, const T& g, T& m1, T& m2, double lr, int t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m1 = b1 * m1 + (1 - b1) * g;
  m2 = b2 * m2 + (1 - b2) * g.cwiseProduct(g);
  const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
  param.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
}

}  // namespace

VectorXd MilModel::Attention(const MatrixXd& bag) const {
  if (bag.rows() == 0) Fail(ErrorCode::kEmptyBag, "bag has no patches");
  const MatrixXd U = (bag * V.transpose()).array().tanh();
  return Softmax(U * w);
}

VectorXd MilModel::Pooled(const MatrixXd& bag) const { return bag.transpose() * Attention(bag); }

VectorXd MilModel::PredictProba(const MatrixXd& bag) const {
  return Softmax(Wc * Pooled(bag) + bc);
}

double MilLoss(const MilModel& model, const std::vector<MatrixXd>& bags,
               const std::vector<int>& labels, double weight_decay, MilGrad* grad) {
  if (bags.empty() || bags.size() != labels.size()) {
    Fail(ErrorCode::kInvalidArgument, "bags and labels must be non-empty and equal in length");
  }
  std::vector<size_t> idx(bags.size());
  std::iota(idx.begin(), idx.end(), 0);
  return MilLossOver(model, bags, labels, idx, weight_decay, grad, nullptr);
}

MilModel FinetuneMil(const std::vector<MatrixXd>& bags, const std::vector<int>& labels,
                     const MilOptions& options) {
  if (bags.size() != labels.size()) {
    Fail(ErrorCode::kInvalidArgument, "bags and labels differ in length");
  }
  if (bags.empty()) Fail(ErrorCode::kInvalidArgument, "no training bags");
  if (options.d_att < 1 || options.epochs < 0 || options.batch_bags < 1 || !(options.lr > 0)) {
    Fail(ErrorCode::kInvalidArgument, "bad MIL hyperparameters");
  }
  const Index dim = bags[0].cols();
  for (size_t i = 0; i < bags.size(); ++i) {
    if (bags[i].rows() == 0) Fail(ErrorCode::kEmptyBag, "bag " + std::to_string(i) + " is empty");
    if (bags[i].cols() != dim) Fail(ErrorCode::kDimMismatch, "bags differ in feature dim");
    if (!bags[i].allFinite()) Fail(ErrorCode::kNonFinite, "bag features are not finite");
  }
  const int k = std::max(2, InferClasses(labels, options.n_classes));

  Rng rng(options.seed);
  MilModel m;
  auto normal = [&](Index r, Index c, double sd) {
    MatrixXd out(r, c);
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) out(i, j) = sd * rng.Normal();
    }
    return out;
  };
  m.V = normal(options.d_att, dim, 1.0 / std::sqrt(static_cast<double>(std::max<Index>(dim, 1))));
  m.w = normal(options.d_att, 1, 1.0 / std::sqrt(static_cast<double>(options.d_att))).col(0);
  m.Wc = normal(k, dim, 0.01);
  m.bc = VectorXd::Zero(k);

  MilGrad g, m1, m2;
  m1.V = MatrixXd::Zero(m.V.rows(), m.V.cols());
  m1.w = VectorXd::Zero(m.w.size());
  m1.Wc = MatrixXd::Zero(m.Wc.rows(), m.Wc.cols());
  m1.bc = VectorXd::Zero(k);
  m2 = m1;

  std::vector<size_t> order(bags.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(options.batch_bags);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.Shuffle(order);
    for (size_t start = 0; start < order.size(); start += batch) {
      const std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(order.size(), start + batch)));
      const double loss = MilLossOver(m, bags, labels, idx, options.weight_decay, &g,
                                      &m.max_attention_sum_error);
      ++m.steps;
      AdamUpdate(m.V, g.V, m1.V, m2.V, options.lr, m.steps);
      AdamUpdate(m.w, g.w, m1.w, m2.w, options.lr, m.steps);
      AdamUpdate(m.Wc, g.Wc, m1.Wc, m2.Wc, options.lr, m.steps);
      AdamUpdate(m.bc, g.bc, m1.bc, m2.bc, options.lr, m.steps);
      if (!std::isfinite(loss) || !m.V.allFinite() || !m.w.allFinite() || !m.Wc.allFinite() ||
          !m.bc.allFinite()) {
        Fail(ErrorCode::kNonFinite, "MIL training diverged at step " + std::to_string(m.steps) +
                                        " (learning rate too high?)");
      }
    }
  }
  return m;
}

// --- Retrieval ----------------------------------------------------------------

std::string_view Name(MetricSpace space) {
  return space == MetricSpace::kCosine ? "cosine" : "euclidean";
}

MetricSpace ParseMetricSpace(std::string_view s) {
  if (s == "cosine") return MetricSpace::kCosine;
  if (s == "euclidean") return MetricSpace::kEuclidean;
  Fail(ErrorCode::kInvalidArgument, "unknown metric space '" + std::string(s) + "'");
}

std::vector<std::vector<int>> NearestNeighbors(const MatrixXd& train, const MatrixXd& queries,
                                               int k, MetricSpace space) {
  if (train.cols() != queries.cols()) {
    Fail(ErrorCode::kDimMismatch, "train dim " + std::to_string(train.cols()) +
                                      " vs query dim " + std::to_string(queries.cols()));
  }
  if (k < 1) Fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (k > train.rows()) {
    Fail(ErrorCode::kKTooLarge, "k=" + std::to_string(k) + " exceeds " +
                                    std::to_string(train.rows()) + " train items");
  }
  const Index m = train.rows();
  VectorXd train_norm(m);
  for (Index j = 0; j < m; ++j) train_norm(j) = train.row(j).norm();

  std::vector<std::vector<int>> out(static_cast<size_t>(queries.rows()));
  std::vector<std::pair<double, int>> dist(static_cast<size_t>(m));
  for (Index q = 0; q < queries.rows(); ++q) {
    const double qn = queries.row(q).norm();
    for (Index j = 0; j < m; ++j) {
      double d;
      if (space == MetricSpace::kEuclidean) {
        d = (train.row(j) - queries.row(q)).squaredNorm();
      } else {
        const double denom = qn * train_norm(j);
        d = denom > 0 ? 1.0 - train.row(j).dot(queries.row(q)) / denom : 1.0;
      }
      dist[static_cast<size_t>(j)] = {d, static_cast<int>(j)};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    auto& row = out[static_cast<size_t>(q)];
    for (int i = 0; i < k; ++i) row.push_back(dist[static_cast<size_t>(i)].second);
  }
  return out;
}

RetrievalResult RetrievalEval(const MatrixXd& train, const std::vector<int>& train_labels,
                              const MatrixXd& test, const std::vector<int>& test_labels, int k,
                              MetricSpace space) {
  if (static_cast<size_t>(train.rows()) != train_labels.size() ||
      static_cast<size_t>(test.rows()) != test_labels.size()) {
    Fail(ErrorCode::kInvalidArgument, "features and labels differ in length");
  }
  if (test.rows() == 0) Fail(ErrorCode::kInvalidArgument, "no query items");
  RetrievalResult result;
  result.neighbors = NearestNeighbors(train, test, k, space);
  std::map<int, int> per_label;
  for (int y : train_labels) ++per_label[y];
  double hits_total = 0, ap_total = 0;
  for (size_t q = 0; q < result.neighbors.size(); ++q) {
    const int y = test_labels[q];
    int hits = 0;
    double precision_sum = 0;
    for (size_t i = 0; i < result.neighbors[q].size(); ++i) {
      if (train_labels[static_cast<size_t>(result.neighbors[q][i])] != y) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    if (hits > 0) hits_total += 1;
    const auto it = per_label.find(y);
    const int relevant = std::min(k, it == per_label.end() ? 0 : it->second);
    if (relevant > 0) ap_total += precision_sum / relevant;
  }
  const double n = static_cast<double>(result.neighbors.size());
  result.top_k_accuracy = hits_total / n;
  result.map_at_k = ap_total / n;
  return result;
}

}  // namespace pathforge
