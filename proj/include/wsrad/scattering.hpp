#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <utility>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/features.hpp"
#include "wsrad/fft.hpp"
#include "wsrad/filterbank.hpp"
#include "wsrad/image.hpp"
#include "wsrad/region.hpp"

namespace wsrad {

struct PathStep {
  int j = 0;
  int l = 0;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// Sequence of (scale, rotation) steps with strictly increasing scales.
struct ScatteringPath {
  std::vector<PathStep> steps;

  std::size_t order() const { return steps.size(); }

  std::string name() const {
    switch (steps.size()) {
      case 0: return "S0";
      case 1: return "S1[j=" + std::to_string(steps[0].j) + ",l=" + std::to_string(steps[0].l) + "]";
      default: {
        std::string s = "S" + std::to_string(steps.size()) + "[";
        for (std::size_t k = 0; k < steps.size(); ++k) {
          if (k) s += "|";
          s += "j" + std::to_string(k) + "=" + std::to_string(steps[k].j) + ",l" + std::to_string(k) + "=" +
               std::to_string(steps[k].l);
        }
        return s + "]";
      }
    }
  }

  friend bool operator==(const ScatteringPath&, const ScatteringPath&) = default;
};

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

/// Closed-form path count sum_{m<=M} L^m C(J, m).
inline std::uint64_t path_count(int J, int L, int M) {
  std::uint64_t total = 0, lm = 1;
  for (int m = 0; m <= M; ++m) {
    total += lm * binomial(J, m);
    lm *= static_cast<std::uint64_t>(L);
  }
  return total;
}

/// All paths of order 0..M ordered by order, then scales, then rotations.
inline std::vector<ScatteringPath> enumerate_paths(int J, int L, int M) {
  if (M < 0) throw InvalidArgument("enumerate_paths: M must be >= 0");
  if (M > J) throw InvalidArgument("enumerate_paths: M=" + std::to_string(M) + " exceeds J=" + std::to_string(J));
  if (J < 0 || L < 1) throw InvalidArgument("enumerate_paths: need J >= 0 and L >= 1");
  std::vector<ScatteringPath> out;
  out.push_back({});
  for (int m = 1; m <= M; ++m) {
    // Scale combinations j_0 < ... < j_{m-1} in lexicographic order.
    std::vector<int> js(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) js[static_cast<std::size_t>(k)] = k;
    while (true) {
      std::vector<int> ls(static_cast<std::size_t>(m), 0);
      while (true) {
        ScatteringPath p;
        for (int k = 0; k < m; ++k) p.steps.push_back({js[static_cast<std::size_t>(k)], ls[static_cast<std::size_t>(k)]});
        out.push_back(std::move(p));
        int k = m - 1;
        while (k >= 0 && ++ls[static_cast<std::size_t>(k)] == L) ls[static_cast<std::size_t>(k--)] = 0;
        if (k < 0) break;
      }
      int k = m - 1;
      while (k >= 0 && js[static_cast<std::size_t>(k)] == J - m + k) --k;
      if (k < 0) break;
      ++js[static_cast<std::size_t>(k)];
      for (int t = k + 1; t < m; ++t) js[static_cast<std::size_t>(t)] = js[static_cast<std::size_t>(t - 1)] + 1;
    }
  }
  return out;
}

struct ScatteringConfig {
  FilterBankParams filters;
  int M = 2;
  double epsilon = 1e-6;

  void validate() const {
    filters.validate();
    if (M < 0) throw InvalidArgument("scattering: M must be >= 0");
    if (M > filters.J) throw InvalidArgument("scattering: M must not exceed J");
    if (!(epsilon > 0)) throw InvalidArgument("scattering: epsilon must be > 0");
  }
};

struct ScatteringMaps {
  std::vector<ScatteringPath> paths;
  std::vector<Image> coefficients;  // S per path, cropped to the input dims
  // Propagators U per path on the padded grid (empty entry for order 0);
  // filled only when requested.
  std::vector<Image> propagators;
  Image padded_input;  // filled alongside propagators
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Padded side: next power of two >= side + 2^(J+1).
inline std::size_t padded_side(std::size_t side, int J) { return next_pow2(side + (std::size_t{1} << (J + 1))); }

namespace detail {

// Whole-sample symmetric reflection, valid for any offset.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return m < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(m) : static_cast<std::size_t>(period - 1 - m);
}

inline std::size_t pad_offset(std::size_t side, std::size_t padded) { return (padded - side) / 2; }

}  // namespace detail

/// Reflect-pads `image` onto a rows x cols grid, centered.
inline Image reflect_pad(const Image& image, std::size_t rows, std::size_t cols) {
  const std::size_t r0 = detail::pad_offset(image.rows(), rows), c0 = detail::pad_offset(image.cols(), cols);
  Image out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t sr = detail::reflect_index(static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(r0), image.rows());
    for (std::size_t c = 0; c < cols; ++c)
      out(r, c) = image(sr, detail::reflect_index(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(c0), image.cols()));
  }
  return out;
}

/// Runs the order-M cascade on one image. Each S map is the parent
/// propagator (or the image, for order 0) low-passed by phi; each U is the
/// modulus of the parent filtered by the path's last wavelet.
inline ScatteringMaps scatter(const Image& image, const FilterBank& bank, int M, bool keep_propagators = false) {
  if (image.empty()) throw InvalidArgument("scatter: empty image");
  if (image.rows() > bank.rows || image.cols() > bank.cols)
    throw InvalidArgument("scatter: image " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                          " exceeds filter bank grid " + std::to_string(bank.rows) + "x" + std::to_string(bank.cols));
  if (M < 0 || M > bank.J()) throw InvalidArgument("scatter: unsupported order M=" + std::to_string(M));
  for (double v : image.values())
    if (!std::isfinite(v)) throw InvalidArgument("scatter: image contains non-finite values");

  const std::size_t R = bank.rows, C = bank.cols, N = R * C;
  const auto fft = Fft2D::get(R, C);
  const std::size_t r0 = detail::pad_offset(image.rows(), R), c0 = detail::pad_offset(image.cols(), C);
  const Image padded = reflect_pad(image, R, C);

  auto to_spectrum = [&](const Image& x) {
    std::vector<cplx> buf(N);
    for (std::size_t i = 0; i < N; ++i) buf[i] = x.values()[i];
    fft->forward(buf);
    return buf;
  };
  // |IFFT(spec * filter)| on the padded grid.
  auto propagate = [&](const std::vector<cplx>& spec, const std::vector<double>& filter) {
    std::vector<cplx> buf(N);
    for (std::size_t i = 0; i < N; ++i) buf[i] = spec[i] * filter[i];
    fft->inverse(buf);
    Image u(R, C);
    for (std::size_t i = 0; i < N; ++i) u.values()[i] = std::abs(buf[i]);
    return u;
  };
  // Re(IFFT(spec * phi)) cropped to the input window.
  auto lowpass = [&](const std::vector<cplx>& spec) {
    std::vector<cplx> buf(N);
    for (std::size_t i = 0; i < N; ++i) buf[i] = spec[i] * bank.phi[i];
    fft->inverse(buf);
    Image s(image.rows(), image.cols());
    for (std::size_t r = 0; r < image.rows(); ++r)
      for (std::size_t c = 0; c < image.cols(); ++c) s(r, c) = buf[(r + r0) * C + (c + c0)].real();
    return s;
  };

  ScatteringMaps out;
  out.paths = enumerate_paths(bank.J(), bank.L(), M);
  out.coefficients.resize(out.paths.size());
  if (keep_propagators) {
    out.propagators.resize(out.paths.size());
    out.padded_input = padded;
  }

  const auto x_hat = to_spectrum(padded);
  out.coefficients[0] = lowpass(x_hat);

  // Paths arrive ordered by order, so every parent spectrum exists before
  // its children need it. Only orders below M are ever parents.
  std::map<std::vector<std::pair<int, int>>, std::vector<cplx>> parent_spectra;
  auto key_of = [](const ScatteringPath& path, std::size_t len) {
    std::vector<std::pair<int, int>> key;
    for (std::size_t k = 0; k < len; ++k) key.emplace_back(path.steps[k].j, path.steps[k].l);
    return key;
  };
  for (std::size_t p = 1; p < out.paths.size(); ++p) {
    const auto& path = out.paths[p];
    const std::size_t m = path.order();
    const auto [j, l] = path.steps.back();
    const auto& parent = m == 1 ? x_hat : parent_spectra.at(key_of(path, m - 1));
    Image u = propagate(parent, bank.wavelet(j, l));
    auto u_hat = to_spectrum(u);
    out.coefficients[p] = lowpass(u_hat);
    if (keep_propagators) out.propagators[p] = std::move(u);
    if (static_cast<int>(m) < M) parent_spectra.emplace(key_of(path, m), std::move(u_hat));
  }
  return out;
}

/// Log-average pooling accumulator: sums ln(epsilon + S) over masked pixels
/// across any number of slices.
class LogPool {
 public:
  LogPool(std::size_t n_paths, double epsilon) : sums_(n_paths, 0.0), epsilon_(epsilon) {}

  void add(const ScatteringMaps& maps, const Mask& mask) {
    if (maps.coefficients.size() != sums_.size()) throw InvalidArgument("pool: path count mismatch");
    for (std::size_t p = 0; p < sums_.size(); ++p) {
      const auto& s = maps.coefficients[p];
      if (s.rows() != mask.rows() || s.cols() != mask.cols()) throw InvalidArgument("pool: mask dims differ from map dims");
      double acc = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (mask.values()[i]) acc += std::log(epsilon_ + s.values()[i]);
      sums_[p] += acc;
    }
    count_ += count_true(mask);
  }

  std::size_t count() const { return count_; }

  FeatureVector finish(const std::vector<ScatteringPath>& paths) const {
    if (count_ == 0) throw EmptyRegionError("pool: empty mask");
    FeatureVector fv;
    for (std::size_t p = 0; p < sums_.size(); ++p) fv.push(paths[p].name(), sums_[p] / static_cast<double>(count_));
    return fv;
  }

 private:
  std::vector<double> sums_;
  double epsilon_;
  std::size_t count_ = 0;
};

/// Mean over masked pixels of ln(epsilon + S), one value per path.
inline FeatureVector pool_features(const ScatteringMaps& maps, const Mask& mask, double epsilon = 1e-6) {
  LogPool pool(maps.paths.size(), epsilon);
  pool.add(maps, mask);
  return pool.finish(maps.paths);
}

/// Scatters every slice of a region on its padded grid and pools over all
/// masked pixels of all slices.
inline FeatureVector scattering_features(const MaskedRegion& region, const ScatteringConfig& cfg,
                                         FilterBankCache& cache) {
  cfg.validate();
  if (region.slices.empty()) throw EmptyRegionError("scattering_features: empty region");
  const int J = cfg.filters.J;
  LogPool pool(path_count(J, cfg.filters.L, cfg.M), cfg.epsilon);
  std::vector<ScatteringPath> paths;
  for (const auto& s : region.slices) {
    if (count_true(s.mask) == 0) continue;
    auto bank = cache.get(cfg.filters, padded_side(s.image.rows(), J), padded_side(s.image.cols(), J));
    auto maps = scatter(s.image, *bank, cfg.M);
    pool.add(maps, s.mask);
    if (paths.empty()) paths = std::move(maps.paths);
  }
  return pool.finish(paths);
}

inline FeatureVector scattering_features(const MaskedRegion& region, const ScatteringConfig& cfg) {
  FilterBankCache cache;
  return scattering_features(region, cfg, cache);
}

}  // namespace wsrad
