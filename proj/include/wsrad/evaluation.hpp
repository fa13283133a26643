#pragma once

// Stratified splitting, ROC/AUC, threshold metrics and resampling consensus
// clustering. Labels are ±1 with +1 the positive (HGG) class.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/parallel.hpp"
#include "wsrad/pls.hpp"

namespace wsrad {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
};

/// Per class, round(n_c * fraction) members drawn by a seeded shuffle go to test.
inline Split stratified_split(const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0 && test_fraction < 1)) throw InvalidArgument("split: test_fraction must be in (0, 1)");
  Split s;
  s.seed = seed;
  s.test_fraction = test_fraction;
  for (int cls : {1, -1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if ((labels[i] > 0) == (cls > 0)) idx.push_back(i);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * test_fraction));
    if (n_test == 0 || n_test >= idx.size())
      throw InvalidArgument(std::string("split: class ") + (cls > 0 ? "+1" : "-1") + " with " +
                            std::to_string(idx.size()) + " members cannot be placed on both sides");
    std::mt19937_64 rng(derive_seed(seed, cls > 0 ? 1 : 2));
    std::shuffle(idx.begin(), idx.end(), rng);
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;

  /// Trapezoidal area under the emitted points.
  double trapezoid_area() const {
    double a = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
      a += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
    return a;
  }
};

namespace detail {

inline void check_scores(const std::vector<double>& scores, const std::vector<int>& labels, long& npos, long& nneg) {
  if (scores.size() != labels.size()) throw InvalidArgument("roc: scores and labels differ in length");
  npos = nneg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw InvalidArgument("roc: non-finite score");
    (labels[i] > 0 ? npos : nneg)++;
  }
  if (npos == 0 || nneg == 0) throw InvalidArgument("roc: both classes must be present");
}

}  // namespace detail

/// ROC points at every distinct score threshold (score >= t predicts positive)
/// and the tie-aware rank AUC, computed from exact integer pair counts.
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long npos = 0, nneg = 0;
  detail::check_scores(scores, labels, npos, nneg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  long tp = 0, fp = 0;
  std::int64_t twice_concordant = 0;  // 2 * (concordant + ties / 2)
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    long gp = 0, gn = 0;
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] > 0 ? gp : gn)++;
    // Negatives in this group are outranked by all earlier positives and tie with the group's.
    twice_concordant += static_cast<std::int64_t>(gn) * (2 * tp + gp);
    tp += gp;
    fp += gn;
    roc.points.push_back({t, static_cast<double>(fp) / static_cast<double>(nneg),
                          static_cast<double>(tp) / static_cast<double>(npos)});
  }
  roc.auc = (static_cast<double>(twice_concordant) * 0.5) / (static_cast<double>(npos) * static_cast<double>(nneg));
  return roc;
}

inline RocCurve roc_auc(const Vector& scores, const std::vector<int>& labels) {
  return roc_auc(std::vector<double>(scores.data(), scores.data() + scores.size()), labels);
}

/// threshold, fpr, tpr per row; the first row uses "inf".
inline void write_roc_tsv(std::ostream& out, const RocCurve& roc) {
  out << "threshold\tfpr\ttpr\n" << std::setprecision(17);
  for (const auto& p : roc.points) {
    if (std::isinf(p.threshold))
      out << "inf";
    else
      out << p.threshold;
    out << '\t' << p.fpr << '\t' << p.tpr << '\n';
  }
}

struct Metrics {
  double accuracy = 0, sensitivity = 0, specificity = 0, auc = 0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Metrics classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                      double threshold) {
  Metrics m;
  m.auc = roc_auc(scores, labels).auc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold, pos = labels[i] > 0;
    if (pred && pos) ++m.tp;
    if (pred && !pos) ++m.fp;
    if (!pred && !pos) ++m.tn;
    if (!pred && pos) ++m.fn;
  }
  m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.specificity = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(scores.size());
  return m;
}

// ---------------------------------------------------------------------------
// Consensus clustering

struct KMeansResult {
  std::vector<int> assignment;
  double inertia = 0.0;
};

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` by inertia.
inline KMeansResult kmeans(const Matrix& X, int k, int restarts, std::mt19937_64& rng, int max_iter = 100) {
  const auto n = X.rows();
  if (k < 1 || k > n) throw InvalidArgument("kmeans: k must be in [1, n]");
  KMeansResult best;
  best.inertia = INFINITY;
  for (int rep = 0; rep < restarts; ++rep) {
    Matrix C(k, X.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    C.row(0) = X.row(first(rng));
    Vector d2 = (X.rowwise() - C.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng), acc = 0;
        for (pick = 0; pick < n - 1; ++pick) {
          acc += d2(pick);
          if (acc > r) break;
        }
      } else {
        pick = first(rng);
      }
      C.row(c) = X.row(pick);
      d2 = d2.cwiseMin((X.rowwise() - C.row(c)).rowwise().squaredNorm());
    }
    std::vector<int> a(static_cast<std::size_t>(n), -1);
    double inertia = 0;
    for (int it = 0; it < max_iter; ++it) {
      bool changed = false;
      inertia = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int arg = 0;
        double dmin = INFINITY;
        for (int c = 0; c < k; ++c) {
          const double d = (X.row(i) - C.row(c)).squaredNorm();
          if (d < dmin) dmin = d, arg = c;
        }
        inertia += dmin;
        if (a[static_cast<std::size_t>(i)] != arg) a[static_cast<std::size_t>(i)] = arg, changed = true;
      }
      if (!changed) break;
      Matrix sum = Matrix::Zero(k, X.cols());
      std::vector<int> cnt(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sum.row(a[static_cast<std::size_t>(i)]) += X.row(i);
        ++cnt[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (cnt[static_cast<std::size_t>(c)] > 0) C.row(c) = sum.row(c) / cnt[static_cast<std::size_t>(c)];
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = a;
    }
  }
  return best;
}

/// Average-linkage agglomeration on a dissimilarity matrix, cut at k groups.
/// Groups are numbered by their smallest member index.
inline std::vector<int> average_linkage_cut(const Matrix& D, int k) {
  const auto n = static_cast<std::size_t>(D.rows());
  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = {i};
  Matrix link = D;  // average dissimilarity between live groups
  std::vector<bool> live(n, true);
  for (std::size_t remaining = n; remaining > static_cast<std::size_t>(k); --remaining) {
    std::size_t ba = 0, bb = 0;
    double best = INFINITY;
    for (std::size_t a = 0; a < n; ++a) {
      if (!live[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b)
        if (live[b] && link(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) < best)
          best = link(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), ba = a, bb = b;
    }
    const double na = static_cast<double>(groups[ba].size()), nb = static_cast<double>(groups[bb].size());
    for (std::size_t c = 0; c < n; ++c) {
      if (!live[c] || c == ba || c == bb) continue;
      const auto ia = static_cast<Eigen::Index>(ba), ib = static_cast<Eigen::Index>(bb), ic = static_cast<Eigen::Index>(c);
      const double v = (na * link(ia, ic) + nb * link(ib, ic)) / (na + nb);
      link(ia, ic) = link(ic, ia) = v;
    }
    groups[ba].insert(groups[ba].end(), groups[bb].begin(), groups[bb].end());
    live[bb] = false;
  }
  std::vector<int> out(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out[i] >= 0) continue;
    for (std::size_t g = 0; g < n; ++g)
      if (live[g] && std::find(groups[g].begin(), groups[g].end(), i) != groups[g].end()) {
        for (auto m : groups[g]) out[m] = next;
        break;
      }
    ++next;
  }
  return out;
}

struct ConsensusConfig {
  int k = 2;
  int n_resamples = 200;
  double sample_fraction = 0.8;
  int restarts = 10;
  std::uint64_t seed = 0;
};

struct ConsensusMatrix {
  Matrix M;           // co-clustered / co-sampled
  Matrix cosampled;   // co-sampling counts
  std::vector<int> assignment;
  std::vector<std::string> warnings;
};

inline ConsensusMatrix consensus_cluster(const Matrix& X, const ConsensusConfig& cfg, unsigned threads = 1) {
  const auto n = X.rows();
  if (cfg.k < 2) throw InvalidArgument("consensus: k must be >= 2");
  if (cfg.k > n) throw InvalidArgument("consensus: k exceeds the number of rows");
  if (cfg.n_resamples < 1) throw InvalidArgument("consensus: n_resamples must be >= 1");
  if (!(cfg.sample_fraction > 0 && cfg.sample_fraction <= 1)) throw InvalidArgument("consensus: bad sample_fraction");
  const auto m = std::max<Eigen::Index>(cfg.k, static_cast<Eigen::Index>(std::llround(cfg.sample_fraction * static_cast<double>(n))));

  struct Run {
    std::vector<Eigen::Index> rows;
    std::vector<int> labels;
  };
  std::vector<Run> runs(static_cast<std::size_t>(cfg.n_resamples));
  parallel_for(runs.size(), threads, [&](std::size_t r) {
    std::mt19937_64 rng(derive_seed(cfg.seed, r));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
    Matrix sub(m, X.cols());
    for (Eigen::Index i = 0; i < m; ++i) sub.row(i) = X.row(idx[static_cast<std::size_t>(i)]);
    runs[r] = {idx, kmeans(sub, cfg.k, cfg.restarts, rng).assignment};
  });

  ConsensusMatrix out;
  Matrix together = Matrix::Zero(n, n);
  out.cosampled = Matrix::Zero(n, n);
  for (const auto& run : runs)
    for (std::size_t a = 0; a < run.rows.size(); ++a)
      for (std::size_t b = a + 1; b < run.rows.size(); ++b) {
        const auto i = run.rows[a], j = run.rows[b];
        out.cosampled(i, j) += 1;
        if (run.labels[a] == run.labels[b]) together(i, j) += 1;
      }
  out.M = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.M(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out.cosampled(j, i) = out.cosampled(i, j);
      out.M(i, j) = out.M(j, i) = out.cosampled(i, j) > 0 ? together(i, j) / out.cosampled(i, j) : 0.0;
    }
  }
  out.assignment = average_linkage_cut(Matrix::Ones(n, n) - out.M, cfg.k);

  // Fewer distinct rows than clusters means the partition carries no structure.
  std::vector<Eigen::Index> distinct;
  for (Eigen::Index i = 0; i < n && static_cast<int>(distinct.size()) < cfg.k; ++i) {
    bool seen = false;
    for (auto d : distinct) seen = seen || X.row(i) == X.row(d);
    if (!seen) distinct.push_back(i);
  }
  if (static_cast<int>(distinct.size()) < cfg.k)
    out.warnings.push_back("consensus: degenerate input, fewer distinct rows than clusters");
  return out;
}

struct ClusterAccuracy {
  double positive = 0;  // fraction of +1 samples in the cluster mapped to +1
  double negative = 0;
  double overall = 0;
  int positive_cluster = 0;
};

/// Best of the two cluster-to-class mappings for a 2-cluster assignment.
inline ClusterAccuracy cluster_accuracy(const std::vector<int>& assignment, const std::vector<int>& labels) {
  if (assignment.size() != labels.size()) throw InvalidArgument("cluster_accuracy: length mismatch");
  for (int a : assignment)
    if (a != 0 && a != 1) throw InvalidArgument("cluster_accuracy: only 2-cluster assignments are supported");
  ClusterAccuracy best;
  best.overall = -1;
  for (int pc : {0, 1}) {
    long pos = 0, neg = 0, pos_hit = 0, neg_hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] > 0) {
        ++pos;
        pos_hit += assignment[i] == pc;
      } else {
        ++neg;
        neg_hit += assignment[i] != pc;
      }
    }
    const double overall = static_cast<double>(pos_hit + neg_hit) / static_cast<double>(labels.size());
    if (overall > best.overall) {
      best.overall = overall;
      best.positive = pos ? static_cast<double>(pos_hit) / static_cast<double>(pos) : 0.0;
      best.negative = neg ? static_cast<double>(neg_hit) / static_cast<double>(neg) : 0.0;
      best.positive_cluster = pc;
    }
  }
  return best;
}

}  // namespace wsrad
