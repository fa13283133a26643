#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "wsrad/models.hpp"

using namespace wsrad;

namespace {

std::vector<int> to_labels(const Vector& y) {
  std::vector<int> out;
  for (double v : y) out.push_back(v > 0 ? 1 : -1);
  return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

struct Blobs {
  Matrix X;
  Vector y;
};

Blobs blobs(std::uint64_t seed, int npos, int nneg, double sep, int p = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Blobs b{Matrix(npos + nneg, p), Vector(npos + nneg)};
  for (int i = 0; i < npos + nneg; ++i) {
    b.y(i) = i < npos ? 1.0 : -1.0;
    for (int j = 0; j < p; ++j) b.X(i, j) = g(rng) + (j == 0 ? 0.5 * sep * b.y(i) : 0.0);
  }
  return b;
}

// Minimum of f over a box by repeated grid refinement around the incumbent.
template <class F>
double grid_search_min(F f, std::array<double, 3> center, double half_width) {
  double best = f(center[0], center[1], center[2]);
  for (int round = 0; round < 40; ++round) {
    const int steps = 20;
    std::array<double, 3> arg = center;
    for (int a = -steps; a <= steps; ++a)
      for (int b = -steps; b <= steps; ++b)
        for (int c = -steps; c <= steps; ++c) {
          const double x = center[0] + half_width * a / steps, y = center[1] + half_width * b / steps,
                       z = center[2] + half_width * c / steps;
          const double v = f(x, y, z);
          if (v < best) best = v, arg = {x, y, z};
        }
    center = arg;
    half_width *= 0.5;
  }
  return best;
}

}  // namespace

TEST(ClassWeights, BalancedScheme) {
  Vector y(285);
  for (int i = 0; i < 285; ++i) y(i) = i < 210 ? 1.0 : -1.0;
  const auto w = compute_class_weights(y);
  EXPECT_DOUBLE_EQ(w.positive, 285.0 / 420.0);
  EXPECT_NEAR(w.positive, 0.67857, 1e-5);
  EXPECT_DOUBLE_EQ(w.negative, 1.9);

  Vector even(100);
  for (int i = 0; i < 100; ++i) even(i) = i % 2 ? 1.0 : -1.0;
  EXPECT_EQ(compute_class_weights(even).positive, 1.0);
  EXPECT_EQ(compute_class_weights(even).negative, 1.0);
  EXPECT_THROW(compute_class_weights(Vector::Ones(5)), InvalidArgument);
}

TEST(Lr, SeparableLineIsRankedPerfectly) {
  Matrix X(20, 1);
  Vector y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = -1.0 + 2.0 * (i + 0.5) / 20.0;
    y(i) = X(i, 0) > 0 ? 1.0 : -1.0;
  }
  const auto m = lr_train(X, y, ClassWeights::uniform());
  EXPECT_TRUE(m.converged);
  const Vector p = lr_score(m, X);
  for (int i = 1; i < 20; ++i) EXPECT_GT(p(i), p(i - 1));
  for (double v : p) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(oracle::auc_all_pairs(to_std(p), to_labels(y)), 1.0);
}

TEST(Lr, NoSignalGivesWeightedPrior) {
  Matrix X = Matrix::Constant(40, 3, 2.5);
  Vector y(40);
  for (int i = 0; i < 40; ++i) y(i) = i < 30 ? 1.0 : -1.0;
  const auto plain = lr_train(X, y, ClassWeights::uniform());
  EXPECT_LE(plain.beta.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(lr_score(plain, X)(0), 0.75, 1e-6);
  const auto balanced = lr_train(X, y, compute_class_weights(y));
  EXPECT_NEAR(lr_score(balanced, X)(0), 0.5, 1e-6);
}

TEST(Lr, GradientMatchesFiniteDifferences) {
  const auto b = blobs(5, 30, 12, 1.0, 4);
  const auto w = compute_class_weights(b.y);
  const auto m = lr_train(b.X, b.y, w);
  ASSERT_TRUE(m.converged);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 4; ++trial) {
    Vector beta = m.beta;
    double b0 = m.intercept;
    if (trial > 0) {
      for (auto& v : beta) v += g(rng);
      b0 += g(rng);
    }
    const Vector grad = lr_gradient(b.X, b.y, w, 1.0, beta, b0);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k <= beta.size(); ++k) {
      Vector bp = beta, bm = beta;
      double ip = b0, im = b0;
      if (k < beta.size()) {
        bp(k) += h;
        bm(k) -= h;
      } else {
        ip += h;
        im -= h;
      }
      const double fd = (lr_objective(b.X, b.y, w, 1.0, bp, ip) - lr_objective(b.X, b.y, w, 1.0, bm, im)) / (2 * h);
      EXPECT_NEAR(grad(k), fd, 1e-5) << "trial " << trial << " k " << k;
    }
  }
  EXPECT_LE(lr_gradient(b.X, b.y, w, 1.0, m.beta, m.intercept).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lr, NonConvergenceIsFlagged) {
  const auto b = blobs(6, 20, 20, 1.0);
  LrConfig cfg;
  cfg.max_iter = 1;
  const auto m = lr_train(b.X, b.y, ClassWeights::uniform(), cfg);
  EXPECT_FALSE(m.converged);
  EXPECT_GT(m.final_gradient_norm, cfg.tol);
  EXPECT_EQ(m.beta.size(), 2);
}

TEST(Lr, ClassWeightingRaisesMinorityRecall) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto b = blobs(seed, 180, 20, 1.5);
    auto recall = [&](const LinearModel& m) {
      const Vector p = lr_score(m, b.X);
      int hit = 0;
      for (int i = 180; i < 200; ++i) hit += p(i) < 0.5;
      return hit / 20.0;
    };
    EXPECT_GE(recall(lr_train(b.X, b.y, compute_class_weights(b.y))), recall(lr_train(b.X, b.y, ClassWeights::uniform())));
  }
}

TEST(Svm, TwoPointMaxMargin) {
  Matrix X(2, 1);
  X << -1, 1;
  const Vector y = (Vector(2) << -1, 1).finished();
  SvmConfig cfg;
  cfg.C = 1e6;
  const auto m = svm_train(X, y, ClassWeights::uniform(), cfg);
  EXPECT_TRUE(m.converged);
  EXPECT_LE(std::fabs(m.intercept), 1e-3);
  EXPECT_NEAR(m.beta(0), 1.0, 1e-6);
  const Vector s = svm_score(m, X);
  EXPECT_LT(s(0), 0);
  EXPECT_GT(s(1), 0);
}

TEST(Svm, SeparableBlobsAucOne) {
  const auto b = blobs(8, 40, 25, 8.0);
  const auto m = svm_train(b.X, b.y, compute_class_weights(b.y));
  EXPECT_TRUE(m.converged);
  EXPECT_EQ(oracle::auc_all_pairs(to_std(svm_score(m, b.X)), to_labels(b.y)), 1.0);
}

TEST(Svm, ObjectiveMatchesGridSearch) {
  Matrix X(4, 2);
  X << 0.0, 1.0, 1.0, 2.0, 2.0, 0.5, 3.0, 1.5;
  const Vector y = (Vector(4) << -1, -1, 1, 1).finished();
  for (double C : {0.1, 1.0, 10.0}) {
    const ClassWeights w{0.8, 1.3};
    SvmConfig cfg;
    cfg.C = C;
    const auto m = svm_train(X, y, w, cfg);
    const double ours = svm_objective(X, y, w, C, m.beta, m.intercept);
    const double grid = grid_search_min(
        [&](double a, double b, double c) { return svm_objective(X, y, w, C, Vector{{a, b}}, c); }, {0, 0, 0}, 8.0);
    EXPECT_LE(std::fabs(ours - grid) / grid, 1e-3) << "C=" << C << " ours " << ours << " grid " << grid;
  }
}

TEST(Svm, AllBoundedStillHasFiniteBias) {
  const auto b = blobs(9, 15, 15, 0.1);
  SvmConfig cfg;
  cfg.C = 1e-4;
  const auto m = svm_train(b.X, b.y, ClassWeights::uniform(), cfg);
  EXPECT_TRUE(std::isfinite(m.intercept));
  EXPECT_TRUE(m.beta.allFinite());
}

TEST(Rf, XorIsShattered) {
  Matrix X(4, 2);
  X << 0, 0, 1, 1, 0, 1, 1, 0;
  const Vector y = (Vector(4) << -1, -1, 1, 1).finished();
  RfConfig cfg;
  cfg.seed = 17;
  const auto f = rf_train(X, y, ClassWeights::uniform(), cfg);
  ASSERT_EQ(f.trees.size(), 100u);
  const Vector s = rf_score(f, X);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(s(i) >= 0.5, y(i) > 0) << i << " " << s(i);
}

TEST(Rf, PureSetGivesExactLeaves) {
  Matrix X(6, 2);
  X << 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 2, 3;
  const auto f = rf_train(X, Vector::Ones(6), ClassWeights::uniform(), {5, 1, 1});
  for (const auto& t : f.trees) {
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].value, 1.0);
  }
}

TEST(Rf, SeedDeterminismAcrossThreadCounts) {
  const auto b = blobs(10, 50, 30, 1.0, 6);
  const auto w = compute_class_weights(b.y);
  RfConfig cfg;
  cfg.n_trees = 40;
  cfg.seed = 123;
  const auto a = rf_train(b.X, b.y, w, cfg, 1);
  const auto c = rf_train(b.X, b.y, w, cfg, 4);
  ASSERT_EQ(a.trees.size(), c.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    ASSERT_EQ(a.trees[t].nodes.size(), c.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      EXPECT_EQ(a.trees[t].nodes[k].feature, c.trees[t].nodes[k].feature);
      EXPECT_EQ(a.trees[t].nodes[k].threshold, c.trees[t].nodes[k].threshold);
      EXPECT_EQ(a.trees[t].nodes[k].value, c.trees[t].nodes[k].value);
    }
  }
  EXPECT_EQ(rf_score(a, b.X), rf_score(c, b.X));
  cfg.seed = 124;
  EXPECT_NE(rf_score(rf_train(b.X, b.y, w, cfg), b.X), rf_score(a, b.X));
}

TEST(Rf, StructuralInvariants) {
  const auto b = blobs(11, 40, 40, 0.5, 9);
  const auto f = rf_train(b.X, b.y, compute_class_weights(b.y), {20, 5, 1});
  for (const auto& t : f.trees)
    for (const auto& nd : t.nodes) {
      EXPECT_GE(nd.value, 0.0);
      EXPECT_LE(nd.value, 1.0);
      if (nd.feature >= 0) {
        EXPECT_LT(nd.feature, 9);
        EXPECT_GT(nd.left, 0);
        EXPECT_GT(nd.right, 0);
      }
    }
  for (double s : rf_score(f, b.X)) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_THROW(rf_score(f, Matrix::Zero(2, 8)), InvalidArgument);
}

TEST(Classifier, UniformFrontEnd) {
  const auto b = blobs(12, 30, 10, 4.0, 3);
  const auto w = compute_class_weights(b.y);
  for (auto kind : {ClassifierKind::LR, ClassifierKind::SVM, ClassifierKind::RF}) {
    const auto c = train_classifier(kind, b.X, b.y, w);
    EXPECT_TRUE(c.converged());
    const Vector s = c.score(b.X);
    EXPECT_EQ(s.size(), 40);
    EXPECT_GE(oracle::auc_all_pairs(to_std(s), to_labels(b.y)), 0.95) << to_string(kind);
    EXPECT_EQ(parse_classifier(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_classifier("KNN"), FormatError);
  EXPECT_THROW(lr_train(b.X, Vector::Zero(40), w), InvalidArgument);
}
