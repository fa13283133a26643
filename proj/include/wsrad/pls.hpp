#pragma once

// Partial least squares (NIPALS, single response) for supervised
// dimensionality reduction, and the two-stage multimodal fusion built on it.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "wsrad/common.hpp"

namespace wsrad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct PlsModel {
  int k = 0;            // achieved component count
  int requested_k = 0;  // not serialized
  Vector means;
  Vector scales;
  Matrix W;  // p x k weights
  Matrix P;  // p x k X-loadings
  Vector q;  // k y-loadings
  Matrix R;  // p x k rotation W (P^T W)^-1
  Matrix train_scores;  // n x k, not serialized

  bool early_stopped() const { return k < requested_k; }
  Eigen::Index n_features() const { return means.size(); }

  Matrix standardize(const Matrix& X) const {
    if (X.cols() != means.size())
      throw InvalidArgument("pls: expected " + std::to_string(means.size()) + " columns, got " +
                            std::to_string(X.cols()));
    return (X.rowwise() - means.transpose()).array().rowwise() / scales.transpose().array();
  }
};

namespace detail {

inline void check_labels(const Vector& y) {
  bool pos = false, neg = false;
  for (double v : y) (v > 0 ? pos : neg) = true;
  if (!pos || !neg) throw InvalidArgument("pls: both classes must be present");
}

}  // namespace detail

/// Fits up to k components; stops early once the deflated cross-covariance
/// norm drops below 1e-12.
inline PlsModel pls_fit(const Matrix& X, const Vector& y, int k) {
  if (k < 1) throw InvalidArgument("pls: k must be >= 1");
  if (X.rows() < 2) throw InvalidArgument("pls: need at least 2 samples");
  if (y.size() != X.rows()) throw InvalidArgument("pls: label count does not match rows");
  detail::check_labels(y);
  const auto n = X.rows(), p = X.cols();

  PlsModel m;
  m.requested_k = k;
  m.means = X.colwise().mean().transpose();
  m.scales.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt((X.col(j).array() - m.means(j)).square().sum() / static_cast<double>(n - 1));
    const double peak = X.col(j).cwiseAbs().maxCoeff();
    // Constant columns (up to rounding in the mean) keep unit scale.
    m.scales(j) = sd > 1e-12 * peak ? sd : 1.0;
  }
  Matrix Xd = m.standardize(X);
  Vector yd = y.array() - y.mean();

  const int kmax = static_cast<int>(std::min<Eigen::Index>(k, std::min(n - 1, p)));
  m.W.resize(p, kmax);
  m.P.resize(p, kmax);
  m.q.resize(kmax);
  m.train_scores.resize(n, kmax);
  int a = 0;
  for (; a < kmax; ++a) {
    Vector w = Xd.transpose() * yd;
    const double wn = w.norm();
    if (wn < 1e-12) break;
    w /= wn;
    const Vector t = Xd * w;
    const double tt = t.squaredNorm();
    if (tt <= 0) break;
    const Vector pl = Xd.transpose() * t / tt;
    const double ql = yd.dot(t) / tt;
    Xd -= t * pl.transpose();
    yd -= ql * t;
    m.W.col(a) = w;
    m.P.col(a) = pl;
    m.q(a) = ql;
    m.train_scores.col(a) = t;
  }
  m.k = a;
  m.W.conservativeResize(p, a);
  m.P.conservativeResize(p, a);
  m.q.conservativeResize(a);
  m.train_scores.conservativeResize(n, a);
  if (a == 0) throw InvalidArgument("pls: features carry no covariance with the labels");
  m.R = m.W * (m.P.transpose() * m.W).partialPivLu().inverse();
  return m;
}

inline Matrix pls_transform(const PlsModel& m, const Matrix& X) { return m.standardize(X) * m.R; }

// Flat little-endian f64 stream: k, p, means, scales, W, P, q, R (matrices column-major).
inline void save_pls(const PlsModel& m, std::ostream& out) {
  static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");
  auto put = [&](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto put_all = [&](const auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) put(a.data()[i]);
  };
  put(m.k);
  put(static_cast<double>(m.n_features()));
  put_all(m.means);
  put_all(m.scales);
  put_all(m.W);
  put_all(m.P);
  put_all(m.q);
  put_all(m.R);
  if (!out) throw IoError("pls: write failed");
}

inline PlsModel load_pls(std::istream& in) {
  auto get = [&] {
    double v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("pls: truncated model stream");
    return v;
  };
  auto get_all = [&](auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = get();
  };
  PlsModel m;
  const double k = get(), p = get();
  if (k < 0 || p < 1 || k != std::floor(k) || p != std::floor(p) || k > p)
    throw FormatError("pls: bad model dimensions");
  m.k = m.requested_k = static_cast<int>(k);
  const auto pi = static_cast<Eigen::Index>(p);
  m.means.resize(pi);
  m.scales.resize(pi);
  m.W.resize(pi, m.k);
  m.P.resize(pi, m.k);
  m.q.resize(m.k);
  m.R.resize(pi, m.k);
  get_all(m.means);
  get_all(m.scales);
  get_all(m.W);
  get_all(m.P);
  get_all(m.q);
  get_all(m.R);
  return m;
}

/// Per-block PLS followed by PLS on the concatenated block scores.
struct FusionModel {
  std::vector<PlsModel> blocks;
  PlsModel final_stage;

  Eigen::Index intermediate_width() const {
    Eigen::Index w = 0;
    for (const auto& b : blocks) w += b.k;
    return w;
  }

  Matrix stage1(const std::vector<Matrix>& xs) const {
    if (xs.size() != blocks.size()) throw InvalidArgument("fusion: block count mismatch");
    Matrix out(xs.empty() ? 0 : xs[0].rows(), intermediate_width());
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i].rows() != out.rows()) throw InvalidArgument("fusion: blocks have different row counts");
      out.middleCols(col, blocks[i].k) = pls_transform(blocks[i], xs[i]);
      col += blocks[i].k;
    }
    return out;
  }

  Matrix transform(const std::vector<Matrix>& xs) const { return pls_transform(final_stage, stage1(xs)); }
};

struct FusionResult {
  FusionModel model;
  Matrix intermediate;  // n x sum of block widths
  Matrix scores;        // n x final width
};

inline FusionResult fuse_multimodal(const std::vector<Matrix>& blocks, const Vector& y, int k) {
  if (blocks.empty()) throw InvalidArgument("fusion: no blocks");
  for (const auto& b : blocks)
    if (b.rows() != blocks[0].rows()) throw InvalidArgument("fusion: blocks have different row counts");
  FusionResult r;
  for (const auto& b : blocks) r.model.blocks.push_back(pls_fit(b, y, k));
  r.intermediate = r.model.stage1(blocks);
  r.model.final_stage = pls_fit(r.intermediate, y, k);
  r.scores = pls_transform(r.model.final_stage, r.intermediate);
  return r;
}

}  // namespace wsrad
