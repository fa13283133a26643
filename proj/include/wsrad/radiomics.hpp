#pragma once

// Classical radiomics: first-order statistics and 2D texture matrices
// (GLCM, GLRLM, GLSZM, GLDM) computed per slice and summed over slices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/features.hpp"
#include "wsrad/image.hpp"
#include "wsrad/region.hpp"

namespace wsrad {

/// Gray levels 1..n_levels per masked pixel; 0 marks pixels outside the mask.
struct QuantizedRegion {
  int n_levels = 0;
  double min = 0.0;
  double max = 0.0;
  std::vector<Image2D<int>> slices;
};

/// Equal-width binning of the masked intensities over [min, max]; max falls in the top bin.
inline QuantizedRegion quantize(const MaskedRegion& region, int n_bins = 32) {
  if (n_bins < 2) throw InvalidArgument("quantize: n_bins must be >= 2");
  if (region.pixel_count() == 0) throw EmptyRegionError("quantize: empty region");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : region.slices)
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      if (s.mask.values()[i]) {
        lo = std::min(lo, s.image.values()[i]);
        hi = std::max(hi, s.image.values()[i]);
      }
  QuantizedRegion q;
  q.n_levels = n_bins;
  q.min = lo;
  q.max = hi;
  const double width = (hi - lo) / n_bins;
  for (const auto& s : region.slices) {
    Image2D<int> lv(s.mask.rows(), s.mask.cols(), 0);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (!s.mask.values()[i]) continue;
      int level = 1;
      if (width > 0) level = std::min(n_bins, static_cast<int>(std::floor((s.image.values()[i] - lo) / width)) + 1);
      lv.values()[i] = level;
    }
    q.slices.push_back(std::move(lv));
  }
  return q;
}

// ---------------------------------------------------------------------------
// First-order

inline FeatureVector first_order_features(const MaskedRegion& region) {
  std::vector<double> x;
  for (const auto& s : region.slices)
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      if (s.mask.values()[i]) x.push_back(s.image.values()[i]);
  if (x.empty()) throw EmptyRegionError("first_order_features: empty region");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0, m3 = 0, m4 = 0, mad = 0, energy = 0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    mad += std::fabs(d);
    energy += v * v;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double skew = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  const double kurt = m2 > 0 ? m4 / (m2 * m2) : 0.0;

  constexpr int kBins = 32;
  std::array<double, kBins> hist{};
  const double width = (*mx - *mn) / kBins;
  for (double v : x) {
    int b = width > 0 ? std::min(kBins - 1, static_cast<int>(std::floor((v - *mn) / width))) : 0;
    hist[static_cast<std::size_t>(b)] += 1;
  }
  double entropy = 0;
  for (double c : hist)
    if (c > 0) entropy -= (c / n) * std::log2(c / n);

  FeatureVector fv;
  fv.push("FO.mean", mean);
  fv.push("FO.variance", m2);
  fv.push("FO.skewness", skew);
  fv.push("FO.kurtosis", kurt);
  fv.push("FO.energy", energy);
  fv.push("FO.entropy", entropy);
  fv.push("FO.minimum", *mn);
  fv.push("FO.maximum", *mx);
  fv.push("FO.range", *mx - *mn);
  fv.push("FO.mean_absolute_deviation", mad);
  return fv;
}

// ---------------------------------------------------------------------------
// Texture matrices

struct Offset {
  int dr;
  int dc;
};

/// 0, 45, 90 and 135 degrees at distance 1 (row axis points down).
inline constexpr std::array<Offset, 4> kDirections{{{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};

inline std::vector<int> all_directions() { return {0, 1, 2, 3}; }

/// Dense row-major count matrix.
struct CountMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> counts;

  CountMatrix() = default;
  CountMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), counts(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return counts[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
  double total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }
  friend bool operator==(const CountMatrix&, const CountMatrix&) = default;
};

namespace detail {

inline bool inside(const Image2D<int>& lv, long r, long c) {
  return r >= 0 && c >= 0 && r < static_cast<long>(lv.rows()) && c < static_cast<long>(lv.cols()) &&
         lv(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) > 0;
}

inline int level_at(const Image2D<int>& lv, long r, long c) {
  return lv(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

}  // namespace detail

/// Symmetric co-occurrence counts for one direction; entry (i-1, j-1) counts level pair (i, j).
inline CountMatrix glcm_counts(const QuantizedRegion& q, int direction) {
  const auto [dr, dc] = kDirections[static_cast<std::size_t>(direction)];
  CountMatrix m(static_cast<std::size_t>(q.n_levels), static_cast<std::size_t>(q.n_levels));
  for (const auto& lv : q.slices)
    for (long r = 0; r < static_cast<long>(lv.rows()); ++r)
      for (long c = 0; c < static_cast<long>(lv.cols()); ++c) {
        if (!detail::inside(lv, r, c) || !detail::inside(lv, r + dr, c + dc)) continue;
        const auto i = static_cast<std::size_t>(detail::level_at(lv, r, c) - 1);
        const auto j = static_cast<std::size_t>(detail::level_at(lv, r + dr, c + dc) - 1);
        m(i, j) += 1;
        m(j, i) += 1;
      }
  return m;
}

/// Run-length counts for one direction; entry (i-1, len-1).
inline CountMatrix glrlm_counts(const QuantizedRegion& q, int direction) {
  const auto [dr, dc] = kDirections[static_cast<std::size_t>(direction)];
  std::size_t max_run = 1;
  for (const auto& lv : q.slices) max_run = std::max({max_run, lv.rows(), lv.cols()});
  CountMatrix m(static_cast<std::size_t>(q.n_levels), max_run);
  for (const auto& lv : q.slices)
    for (long r = 0; r < static_cast<long>(lv.rows()); ++r)
      for (long c = 0; c < static_cast<long>(lv.cols()); ++c) {
        if (!detail::inside(lv, r, c)) continue;
        const int level = detail::level_at(lv, r, c);
        // Only count from the first pixel of each run.
        if (detail::inside(lv, r - dr, c - dc) && detail::level_at(lv, r - dr, c - dc) == level) continue;
        std::size_t len = 1;
        while (detail::inside(lv, r + dr * static_cast<long>(len), c + dc * static_cast<long>(len)) &&
               detail::level_at(lv, r + dr * static_cast<long>(len), c + dc * static_cast<long>(len)) == level)
          ++len;
        m(static_cast<std::size_t>(level - 1), len - 1) += 1;
      }
  return m;
}

/// Zone counts over 8-connected equal-level components; entry (i-1, size-1).
inline CountMatrix glszm_counts(const QuantizedRegion& q) {
  std::size_t max_zone = 1;
  for (const auto& lv : q.slices) max_zone = std::max(max_zone, lv.size());
  CountMatrix m(static_cast<std::size_t>(q.n_levels), max_zone);
  for (const auto& lv : q.slices) {
    const std::size_t n = lv.size(), cols = lv.cols();
    // Union-find over pixel indices.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (long r = 0; r < static_cast<long>(lv.rows()); ++r)
      for (long c = 0; c < static_cast<long>(cols); ++c) {
        if (!detail::inside(lv, r, c)) continue;
        const int level = detail::level_at(lv, r, c);
        // Half of the 8-neighborhood suffices for undirected unions.
        for (auto [dr, dc] : kDirections) {
          const long rr = r + dr, cc = c + dc;
          if (detail::inside(lv, rr, cc) && detail::level_at(lv, rr, cc) == level) {
            const auto a = find(static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c));
            const auto b = find(static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(cc));
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
          }
        }
      }
    std::vector<std::size_t> size(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      if (lv.values()[i] > 0) ++size[find(i)];
    for (std::size_t i = 0; i < n; ++i)
      if (size[i] > 0) m(static_cast<std::size_t>(lv.values()[i] - 1), size[i] - 1) += 1;
  }
  return m;
}

/// Dependence counts (equal-level 8-neighbors inside the mask); entry (i-1, d), d in 0..8.
inline CountMatrix gldm_counts(const QuantizedRegion& q) {
  CountMatrix m(static_cast<std::size_t>(q.n_levels), 9);
  for (const auto& lv : q.slices)
    for (long r = 0; r < static_cast<long>(lv.rows()); ++r)
      for (long c = 0; c < static_cast<long>(lv.cols()); ++c) {
        if (!detail::inside(lv, r, c)) continue;
        const int level = detail::level_at(lv, r, c);
        std::size_t d = 0;
        for (long dr = -1; dr <= 1; ++dr)
          for (long dc = -1; dc <= 1; ++dc)
            if ((dr || dc) && detail::inside(lv, r + dr, c + dc) && detail::level_at(lv, r + dr, c + dc) == level) ++d;
        m(static_cast<std::size_t>(level - 1), d) += 1;
      }
  return m;
}

struct TextureMatrices {
  std::array<CountMatrix, 4> glcm;  // normalized probabilities per direction
  std::array<CountMatrix, 4> glrlm;
  CountMatrix glszm;
  CountMatrix gldm;
};

inline CountMatrix normalized(CountMatrix m) {
  const double t = m.total();
  if (t > 0)
    for (auto& v : m.counts) v /= t;
  return m;
}

inline TextureMatrices texture_matrices(const QuantizedRegion& q) {
  TextureMatrices t;
  for (int d = 0; d < 4; ++d) {
    t.glcm[static_cast<std::size_t>(d)] = normalized(glcm_counts(q, d));
    t.glrlm[static_cast<std::size_t>(d)] = glrlm_counts(q, d);
  }
  t.glszm = glszm_counts(q);
  t.gldm = gldm_counts(q);
  return t;
}

// ---------------------------------------------------------------------------
// Texture features

inline FeatureVector glcm_features(const QuantizedRegion& q, const std::vector<int>& directions = all_directions()) {
  std::array<double, 5> acc{};
  int used = 0;
  for (int d : directions) {
    const auto counts = glcm_counts(q, d);
    if (counts.total() == 0) continue;
    const auto p = normalized(counts);
    const std::size_t n = p.rows;
    double mux = 0, muy = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        mux += static_cast<double>(i + 1) * p(i, j);
        muy += static_cast<double>(j + 1) * p(i, j);
      }
    double auto_corr = 0, prominence = 0, contrast = 0, varx = 0, vary = 0, entropy = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double pij = p(i, j);
        if (pij == 0) continue;
        const double a = static_cast<double>(i + 1), b = static_cast<double>(j + 1);
        auto_corr += a * b * pij;
        prominence += std::pow(a + b - mux - muy, 4) * pij;
        contrast += (a - b) * (a - b) * pij;
        varx += (a - mux) * (a - mux) * pij;
        vary += (b - muy) * (b - muy) * pij;
        entropy -= pij * std::log2(pij);
      }
    const double sd = std::sqrt(varx * vary);
    // Flat co-occurrence: perfectly correlated by convention.
    const double correlation = sd > 0 ? (auto_corr - mux * muy) / sd : 1.0;
    acc[0] += auto_corr;
    acc[1] += prominence;
    acc[2] += contrast;
    acc[3] += correlation;
    acc[4] += entropy;
    ++used;
  }
  FeatureVector fv;
  if (used == 0) fv.warnings.push_back("GLCM: region has no co-occurring pixel pairs");
  const double w = used ? 1.0 / used : 0.0;
  fv.push("GLCM.autocorrelation", acc[0] * w);
  fv.push("GLCM.cluster_prominence", acc[1] * w);
  fv.push("GLCM.contrast", acc[2] * w);
  fv.push("GLCM.correlation", acc[3] * w);
  fv.push("GLCM.joint_entropy", acc[4] * w);
  return fv;
}

inline FeatureVector glrlm_features(const QuantizedRegion& q, const std::vector<int>& directions = all_directions()) {
  double lglre = 0, sre = 0, lre = 0;
  int used = 0;
  for (int d : directions) {
    const auto m = glrlm_counts(q, d);
    const double runs = m.total();
    if (runs == 0) continue;
    double a = 0, b = 0, c = 0;
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t r = 0; r < m.cols; ++r) {
        const double v = m(i, r);
        if (v == 0) continue;
        const double lvl = static_cast<double>(i + 1), len = static_cast<double>(r + 1);
        a += v / (lvl * lvl);
        b += v / (len * len);
        c += v * len * len;
      }
    lglre += a / runs;
    sre += b / runs;
    lre += c / runs;
    ++used;
  }
  const double w = used ? 1.0 / used : 0.0;
  FeatureVector fv;
  fv.push("GLRLM.low_gray_level_run_emphasis", lglre * w);
  fv.push("GLRLM.short_run_emphasis", sre * w);
  fv.push("GLRLM.long_run_emphasis", lre * w);
  return fv;
}

inline FeatureVector glszm_features(const QuantizedRegion& q) {
  const auto m = glszm_counts(q);
  const double zones = m.total();
  double salgle = 0, lahgle = 0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t s = 0; s < m.cols; ++s) {
      const double v = m(i, s);
      if (v == 0) continue;
      const double lvl2 = static_cast<double>((i + 1) * (i + 1)), sz2 = static_cast<double>((s + 1) * (s + 1));
      salgle += v / (lvl2 * sz2);
      lahgle += v * lvl2 * sz2;
    }
  FeatureVector fv;
  fv.push("GLSZM.small_area_low_gray_level_emphasis", zones > 0 ? salgle / zones : 0.0);
  fv.push("GLSZM.large_area_high_gray_level_emphasis", zones > 0 ? lahgle / zones : 0.0);
  return fv;
}

inline FeatureVector gldm_features(const QuantizedRegion& q) {
  const auto m = gldm_counts(q);
  const double pixels = m.total();
  double ldlgle = 0, sde = 0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t d = 0; d < m.cols; ++d) {
      const double v = m(i, d);
      if (v == 0) continue;
      const double lvl2 = static_cast<double>((i + 1) * (i + 1)), dep2 = static_cast<double>((d + 1) * (d + 1));
      ldlgle += v * dep2 / lvl2;
      sde += v / dep2;
    }
  FeatureVector fv;
  fv.push("GLDM.large_dependence_low_gray_level_emphasis", pixels > 0 ? ldlgle / pixels : 0.0);
  fv.push("GLDM.small_dependence_emphasis", pixels > 0 ? sde / pixels : 0.0);
  return fv;
}

/// The 22 classical features in fixed order: FO, GLCM, GLRLM, GLSZM, GLDM.
inline FeatureVector classic_feature_vector(const MaskedRegion& region, int n_bins = 32) {
  const auto q = quantize(region, n_bins);
  FeatureVector fv = first_order_features(region);
  fv.append(glcm_features(q));
  fv.append(glrlm_features(q));
  fv.append(glszm_features(q));
  fv.append(gldm_features(q));
  return fv;
}

}  // namespace wsrad
