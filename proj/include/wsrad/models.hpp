#pragma once

// Class-weighted binary classifiers over ±1 labels: L2 logistic regression
// (Newton), linear SVM (SMO on the dual) and a Gini random forest.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/parallel.hpp"
#include "wsrad/pls.hpp"

namespace wsrad {

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;

  double of(double label) const { return label > 0 ? positive : negative; }
  static ClassWeights uniform() { return {}; }
};

namespace detail {

inline void check_training_shapes(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw InvalidArgument("classifier: label count does not match rows");
  if (X.rows() < 2 || X.cols() < 1) throw InvalidArgument("classifier: need at least 2 rows and 1 column");
  for (double v : y)
    if (v != 1.0 && v != -1.0) throw InvalidArgument("classifier: labels must be +1 or -1");
}

}  // namespace detail

/// Balanced weights n / (2 n_c).
inline ClassWeights compute_class_weights(const Vector& y) {
  double npos = 0, nneg = 0;
  for (double v : y) (v > 0 ? npos : nneg) += 1;
  if (npos == 0 || nneg == 0) throw InvalidArgument("class weights: both classes must be present");
  const double n = npos + nneg;
  return {n / (2 * npos), n / (2 * nneg)};
}

enum class ClassifierKind { LR, SVM, RF };

inline std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::LR: return "LR";
    case ClassifierKind::SVM: return "SVM";
    case ClassifierKind::RF: return "RF";
  }
  return "?";
}

inline ClassifierKind parse_classifier(std::string_view s) {
  if (s == "LR") return ClassifierKind::LR;
  if (s == "SVM") return ClassifierKind::SVM;
  if (s == "RF") return ClassifierKind::RF;
  throw FormatError("unknown classifier '" + std::string(s) + "'");
}

struct LinearModel {
  Vector beta;
  double intercept = 0.0;
  bool converged = false;
  double final_gradient_norm = 0.0;
  int iterations = 0;

  Vector decision(const Matrix& X) const {
    if (X.cols() != beta.size()) throw InvalidArgument("linear model: column count mismatch");
    return (X * beta).array() + intercept;
  }
};

// ---------------------------------------------------------------------------
// Logistic regression

struct LrConfig {
  double lambda = 1.0;
  double tol = 1e-8;
  int max_iter = 1000;
};

namespace detail {

// log(1 + exp(-m)) without overflow.
inline double log1pexp_neg(double m) { return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Weighted negative log-likelihood plus (lambda/2)|beta|^2; intercept unpenalized.
inline double lr_objective(const Matrix& X, const Vector& y, const ClassWeights& w, double lambda, const Vector& beta,
                           double intercept) {
  const Vector f = (X * beta).array() + intercept;
  double s = 0.5 * lambda * beta.squaredNorm();
  for (Eigen::Index i = 0; i < y.size(); ++i) s += w.of(y(i)) * detail::log1pexp_neg(y(i) * f(i));
  return s;
}

/// Gradient of lr_objective; the last entry is the intercept component.
inline Vector lr_gradient(const Matrix& X, const Vector& y, const ClassWeights& w, double lambda, const Vector& beta,
                          double intercept) {
  const Vector f = (X * beta).array() + intercept;
  Vector r(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) r(i) = -w.of(y(i)) * y(i) * detail::sigmoid(-y(i) * f(i));
  Vector g(beta.size() + 1);
  g.head(beta.size()) = X.transpose() * r + lambda * beta;
  g(beta.size()) = r.sum();
  return g;
}

/// Damped Newton with backtracking; the result is flagged when the gradient
/// infinity-norm does not reach cfg.tol within cfg.max_iter steps.
inline LinearModel lr_train(const Matrix& X, const Vector& y, const ClassWeights& w, const LrConfig& cfg = {}) {
  detail::check_training_shapes(X, y);
  if (cfg.lambda < 0) throw InvalidArgument("lr: lambda must be >= 0");
  const auto n = X.rows(), p = X.cols();
  Matrix Xa(n, p + 1);
  Xa.leftCols(p) = X;
  Xa.col(p).setOnes();
  Vector theta = Vector::Zero(p + 1);
  auto objective = [&](const Vector& t) { return lr_objective(X, y, w, cfg.lambda, t.head(p), t(p)); };
  LinearModel m;
  double obj = objective(theta);
  for (m.iterations = 0; m.iterations < cfg.max_iter; ++m.iterations) {
    const Vector g = lr_gradient(X, y, w, cfg.lambda, theta.head(p), theta(p));
    m.final_gradient_norm = g.cwiseAbs().maxCoeff();
    if (m.final_gradient_norm <= cfg.tol) {
      m.converged = true;
      break;
    }
    const Vector f = Xa * theta;
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = detail::sigmoid(f(i));
      d(i) = w.of(y(i)) * s * (1 - s);
    }
    Matrix H = Xa.transpose() * d.asDiagonal() * Xa;
    H.diagonal().head(p).array() += cfg.lambda;
    // Tiny ridge keeps the solve defined for separable data with lambda = 0.
    H.diagonal().array() += 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
    Vector step = H.ldlt().solve(-g);
    if (!step.allFinite() || step.dot(g) >= 0) step = -g;
    double t = 1.0;
    Vector next = theta + step;
    double next_obj = objective(next);
    while (next_obj > obj + 1e-4 * t * g.dot(step) && t > 1e-12) {
      t *= 0.5;
      next = theta + t * step;
      next_obj = objective(next);
    }
    if (next_obj > obj) break;  // no descent possible at working precision
    theta = next;
    obj = next_obj;
  }
  if (!m.converged) {
    m.final_gradient_norm = lr_gradient(X, y, w, cfg.lambda, theta.head(p), theta(p)).cwiseAbs().maxCoeff();
    m.converged = m.final_gradient_norm <= cfg.tol;
  }
  m.beta = theta.head(p);
  m.intercept = theta(p);
  return m;
}

inline Vector lr_score(const LinearModel& m, const Matrix& X) {
  return m.decision(X).unaryExpr([](double z) { return detail::sigmoid(z); });
}

// ---------------------------------------------------------------------------
// Linear SVM

struct SvmConfig {
  double C = 1.0;
  double tol = 1e-8;
  int max_iter = 1000000;
};

/// Primal objective (1/2)|beta|^2 + C sum w_i hinge(y_i f_i).
inline double svm_objective(const Matrix& X, const Vector& y, const ClassWeights& w, double C, const Vector& beta,
                            double intercept) {
  const Vector f = (X * beta).array() + intercept;
  double s = 0.5 * beta.squaredNorm();
  for (Eigen::Index i = 0; i < y.size(); ++i) s += C * w.of(y(i)) * std::max(0.0, 1.0 - y(i) * f(i));
  return s;
}

/// SMO on the box-constrained dual with maximal-violating-pair selection
/// (lowest index wins ties), so the iteration order is fully deterministic.
inline LinearModel svm_train(const Matrix& X, const Vector& y, const ClassWeights& w, const SvmConfig& cfg = {}) {
  detail::check_training_shapes(X, y);
  if (cfg.C <= 0) throw InvalidArgument("svm: C must be > 0");
  const auto n = X.rows();
  const Matrix K = X * X.transpose();
  Vector alpha = Vector::Zero(n), grad = -Vector::Ones(n);  // gradient of the dual (minimization form)
  Vector upper(n);
  for (Eigen::Index i = 0; i < n; ++i) upper(i) = cfg.C * w.of(y(i));
  auto in_up = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) < upper(t)) || (y(t) < 0 && alpha(t) > 0); };
  auto in_low = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < upper(t)); };

  LinearModel m;
  for (m.iterations = 0; m.iterations < cfg.max_iter; ++m.iterations) {
    Eigen::Index i = -1, j = -1;
    double gmax = -INFINITY, gmin = INFINITY;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y(t) * grad(t);
      if (in_up(t) && v > gmax) gmax = v, i = t;
      if (in_low(t) && v < gmin) gmin = v, j = t;
    }
    m.final_gradient_norm = gmax - gmin;
    if (i < 0 || j < 0 || gmax - gmin <= cfg.tol) {
      m.converged = true;
      break;
    }
    const double eta = std::max(K(i, i) + K(j, j) - 2 * K(i, j), 1e-12);
    // Move along y_i e_i - y_j e_j, clipped to both boxes.
    double delta = (gmax - gmin) / eta;
    delta = std::min(delta, y(i) > 0 ? upper(i) - alpha(i) : alpha(i));
    delta = std::min(delta, y(j) > 0 ? alpha(j) : upper(j) - alpha(j));
    const double di = y(i) * delta, dj = -y(j) * delta;
    alpha(i) += di;
    alpha(j) += dj;
    alpha(i) = std::clamp(alpha(i), 0.0, upper(i));
    alpha(j) = std::clamp(alpha(j), 0.0, upper(j));
    grad += y(i) * di * y.cwiseProduct(K.col(i)) + y(j) * dj * y.cwiseProduct(K.col(j));
  }

  m.beta = X.transpose() * alpha.cwiseProduct(y);
  // Bias from free vectors; midpoint of the KKT interval otherwise.
  double sum = 0, lb = -INFINITY, ub = INFINITY;
  int free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double v = -y(t) * grad(t);
    if (alpha(t) > 0 && alpha(t) < upper(t)) {
      sum += v;
      ++free;
    }
    if (in_up(t)) lb = std::max(lb, v);
    if (in_low(t)) ub = std::min(ub, v);
  }
  if (free > 0)
    m.intercept = sum / free;
  else
    m.intercept = std::isfinite(lb) && std::isfinite(ub) ? 0.5 * (lb + ub) : (std::isfinite(lb) ? lb : ub);
  return m;
}

inline Vector svm_score(const LinearModel& m, const Matrix& X) { return m.decision(X); }

// ---------------------------------------------------------------------------
// Random forest

struct RfConfig {
  int n_trees = 100;
  std::uint64_t seed = 0;
  int min_leaf = 1;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // weighted positive fraction
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(at)];
      at = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(at)].value;
  }
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  Eigen::Index n_features = 0;
};

namespace detail {

struct TreeBuilder {
  const Matrix& X;
  const Vector& y;
  const std::vector<double>& weight;  // class weight x bootstrap multiplicity, per row
  int mtry;
  int min_leaf;
  std::mt19937_64& rng;
  DecisionTree tree;

  static double gini(double pos, double tot) {
    if (tot <= 0) return 0.0;
    const double p = pos / tot;
    return 1.0 - p * p - (1 - p) * (1 - p);
  }

  int build(std::vector<Eigen::Index>& rows) {
    double pos = 0, tot = 0;
    for (auto r : rows) {
      tot += weight[static_cast<std::size_t>(r)];
      if (y(r) > 0) pos += weight[static_cast<std::size_t>(r)];
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.back().value = tot > 0 ? pos / tot : 0.0;
    if (pos == 0 || pos == tot || rows.size() < 2 * static_cast<std::size_t>(min_leaf)) return id;

    // Draw features in random order; constant ones don't count towards mtry.
    std::vector<int> order(static_cast<std::size_t>(X.cols()));
    std::iota(order.begin(), order.end(), 0);
    int evaluated = 0;
    bool found = false;
    double best_imp = INFINITY, best_thr = 0;
    int best_f = -1;
    std::vector<std::pair<double, Eigen::Index>> vals(rows.size());
    for (std::size_t k = 0; k < order.size() && evaluated < mtry; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, order.size() - 1);
      std::swap(order[k], order[pick(rng)]);
      const int f = order[k];
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {X(rows[i], f), rows[i]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      ++evaluated;
      double lpos = 0, ltot = 0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        const double wi = weight[static_cast<std::size_t>(vals[i].second)];
        ltot += wi;
        if (y(vals[i].second) > 0) lpos += wi;
        if (vals[i].first == vals[i + 1].first) continue;
        if (i + 1 < static_cast<std::size_t>(min_leaf) || vals.size() - i - 1 < static_cast<std::size_t>(min_leaf))
          continue;
        const double imp = ltot * gini(lpos, ltot) + (tot - ltot) * gini(pos - lpos, tot - ltot);
        const double thr = 0.5 * (vals[i].first + vals[i + 1].first);
        if (!found || imp < best_imp || (imp == best_imp && (f < best_f || (f == best_f && thr < best_thr)))) {
          found = true;
          best_imp = imp;
          best_f = f;
          best_thr = thr;
        }
      }
    }
    if (!found) return id;
    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (X(r, best_f) <= best_thr ? left : right).push_back(r);
    std::vector<Eigen::Index>().swap(rows);
    const int l = build(left);
    const int r = build(right);
    auto& nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = best_f;
    nd.threshold = best_thr;
    nd.left = l;
    nd.right = r;
    return id;
  }
};

}  // namespace detail

/// Tree t draws its bootstrap sample and feature candidates from a stream
/// seeded by derive_seed(seed, t), so any thread count gives the same forest.
inline RandomForest rf_train(const Matrix& X, const Vector& y, const ClassWeights& w, const RfConfig& cfg = {},
                             unsigned threads = 1) {
  detail::check_training_shapes(X, y);
  if (cfg.n_trees < 1) throw InvalidArgument("rf: n_trees must be >= 1");
  if (cfg.min_leaf < 1) throw InvalidArgument("rf: min_leaf must be >= 1");
  const auto n = static_cast<std::size_t>(X.rows());
  const int mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(X.cols())))));
  RandomForest forest;
  forest.n_features = X.cols();
  forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(forest.trees.size(), threads, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(cfg.seed, t));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<double> mult(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) mult[draw(rng)] += 1;
    std::vector<double> weight(n);
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < n; ++i) {
      weight[i] = mult[i] * w.of(y(static_cast<Eigen::Index>(i)));
      if (mult[i] > 0) rows.push_back(static_cast<Eigen::Index>(i));
    }
    detail::TreeBuilder b{X, y, weight, mtry, cfg.min_leaf, rng, {}};
    b.build(rows);
    forest.trees[t] = std::move(b.tree);
  });
  return forest;
}

inline Vector rf_score(const RandomForest& f, const Matrix& X) {
  if (X.cols() != f.n_features) throw InvalidArgument("rf: column count mismatch");
  Vector s = Vector::Zero(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (const auto& t : f.trees) s(i) += t.predict(X.row(i));
    s(i) /= static_cast<double>(f.trees.size());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Uniform front end

struct ClassifierConfig {
  LrConfig lr;
  SvmConfig svm;
  RfConfig rf;
};

struct TrainedClassifier {
  ClassifierKind kind = ClassifierKind::LR;
  LinearModel linear;
  RandomForest forest;
  ClassifierConfig config;

  /// Ranking scores: probabilities for LR and RF, signed margins for SVM.
  Vector score(const Matrix& X) const {
    switch (kind) {
      case ClassifierKind::LR: return lr_score(linear, X);
      case ClassifierKind::SVM: return svm_score(linear, X);
      case ClassifierKind::RF: return rf_score(forest, X);
    }
    return {};
  }

  double threshold() const { return kind == ClassifierKind::SVM ? 0.0 : 0.5; }

  bool converged() const { return kind == ClassifierKind::RF || linear.converged; }
};

inline TrainedClassifier train_classifier(ClassifierKind kind, const Matrix& X, const Vector& y, const ClassWeights& w,
                                          const ClassifierConfig& cfg = {}, unsigned threads = 1) {
  TrainedClassifier c;
  c.kind = kind;
  c.config = cfg;
  switch (kind) {
    case ClassifierKind::LR: c.linear = lr_train(X, y, w, cfg.lr); break;
    case ClassifierKind::SVM: c.linear = svm_train(X, y, w, cfg.svm); break;
    case ClassifierKind::RF: c.forest = rf_train(X, y, w, cfg.rf, threads); break;
  }
  if (!c.converged()) {
    std::ostringstream msg;
    msg << to_string(kind) << " did not converge (gradient norm " << std::scientific << std::setprecision(3)
        << c.linear.final_gradient_norm << ")";
    log_warning(msg.str());
  }
  return c;
}

}  // namespace wsrad
