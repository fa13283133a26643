#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "wsrad/common.hpp"

namespace wsrad {

struct FilterBankParams {
  int J = 2;
  int L = 4;
  double sigma0 = 0.8;
  double xi0 = 3.0 * std::numbers::pi / 4.0;
  std::optional<double> slant;  // defaults to 4 / L

  double effective_slant() const { return slant.value_or(4.0 / static_cast<double>(L)); }

  void validate() const {
    if (J < 1) throw InvalidArgument("filter bank: J must be >= 1");
    if (L < 1) throw InvalidArgument("filter bank: L must be >= 1");
    if (!(sigma0 > 0)) throw InvalidArgument("filter bank: sigma0 must be > 0");
    if (!(xi0 > 0 && xi0 < std::numbers::pi)) throw InvalidArgument("filter bank: xi0 must lie in (0, pi)");
    if (!(effective_slant() > 0)) throw InvalidArgument("filter bank: slant must be > 0");
  }

  friend bool operator==(const FilterBankParams&, const FilterBankParams&) = default;
};

/// Frequency-domain Morlet wavelets psi[j][l] and Gaussian lowpass phi at
/// scale 2^J on a rows x cols periodic grid. Bin (r, c) holds frequency
/// (2*pi*kc/cols, 2*pi*kr/rows) with k folded into [-n/2, n/2).
struct FilterBank {
  std::size_t rows = 0;
  std::size_t cols = 0;
  FilterBankParams params;
  std::vector<std::vector<double>> psi;  // index j * L + l
  std::vector<double> phi;
  double normalization = 1.0;  // factor applied to every wavelet

  int J() const { return params.J; }
  int L() const { return params.L; }
  const std::vector<double>& wavelet(int j, int l) const { return psi[static_cast<std::size_t>(j * params.L + l)]; }
  std::vector<double>& wavelet(int j, int l) { return psi[static_cast<std::size_t>(j * params.L + l)]; }
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

inline double bin_frequency(std::size_t k, std::size_t n) {
  const auto half = static_cast<std::ptrdiff_t>(n / 2);
  auto kk = static_cast<std::ptrdiff_t>(k);
  if (kk >= half) kk -= static_cast<std::ptrdiff_t>(n);
  return 2.0 * std::numbers::pi * static_cast<double>(kk) / static_cast<double>(n);
}

// Index of the bin holding -omega for bin k on an n-point axis.
inline std::size_t negated_bin(std::size_t k, std::size_t n) { return k == 0 ? 0 : n - k; }

constexpr int kAliases = 2;  // periodize over 2*pi*k, |k| <= kAliases per axis

// Sum over aliases of exp(-q(w + 2 pi k) / 2), q(v) = v^T S v.
inline double periodized_gaussian(double wx, double wy, double sxx, double sxy, double syy) {
  double acc = 0.0;
  for (int ky = -kAliases; ky <= kAliases; ++ky)
    for (int kx = -kAliases; kx <= kAliases; ++kx) {
      const double vx = wx + 2.0 * std::numbers::pi * kx;
      const double vy = wy + 2.0 * std::numbers::pi * ky;
      acc += std::exp(-0.5 * (sxx * vx * vx + 2.0 * sxy * vx * vy + syy * vy * vy));
    }
  return acc;
}

}  // namespace detail

/// Per-bin Littlewood-Paley energy |phi|^2 + 1/2 sum_{j,l} (|psi(w)|^2 + |psi(-w)|^2).
struct LittlewoodPaley {
  std::vector<double> energy;
  double max = 0.0;
};

inline LittlewoodPaley littlewood_paley(const FilterBank& bank) {
  const std::size_t R = bank.rows, C = bank.cols;
  LittlewoodPaley lp;
  lp.energy.assign(R * C, 0.0);
  for (std::size_t i = 0; i < R * C; ++i) lp.energy[i] = bank.phi[i] * bank.phi[i];
  for (const auto& f : bank.psi)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const double a = f[r * C + c];
        const double b = f[detail::negated_bin(r, R) * C + detail::negated_bin(c, C)];
        lp.energy[r * C + c] += 0.5 * (a * a + b * b);
      }
  lp.max = *std::max_element(lp.energy.begin(), lp.energy.end());
  return lp;
}

inline FilterBank build_filter_bank(const FilterBankParams& params, std::size_t rows, std::size_t cols) {
  params.validate();
  const std::size_t min_side = std::size_t{1} << (params.J + 1);
  if (!detail::is_pow2(rows) || !detail::is_pow2(cols))
    throw InvalidArgument("filter bank: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " is not a power of two per axis");
  if (rows < min_side || cols < min_side)
    throw InvalidArgument("filter bank: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " too small for J=" + std::to_string(params.J) + " (need >= " + std::to_string(min_side) +
                          ")");

  FilterBank bank;
  bank.rows = rows;
  bank.cols = cols;
  bank.params = params;
  const double slant = params.effective_slant();
  const std::size_t n = rows * cols;

  // Lowpass: isotropic Gaussian, spatial width sigma0 * 2^J, unit DC gain.
  {
    const double s = params.sigma0 * std::ldexp(1.0, params.J);
    const double q = s * s;
    bank.phi.resize(n);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        bank.phi[r * cols + c] = detail::periodized_gaussian(detail::bin_frequency(c, cols),
                                                             detail::bin_frequency(r, rows), q, 0.0, q);
    const double dc = bank.phi[0];
    for (auto& v : bank.phi) v /= dc;
  }

  bank.psi.resize(static_cast<std::size_t>(params.J * params.L));
  for (int j = 0; j < params.J; ++j) {
    const double sigma = params.sigma0 * std::ldexp(1.0, j);
    const double xi = params.xi0 * std::ldexp(1.0, -j);
    for (int l = 0; l < params.L; ++l) {
      const double theta = 2.0 * std::numbers::pi * l / params.L;
      const double ct = std::cos(theta), st = std::sin(theta);
      // Quadratic form sigma^2 * R diag(1, 1/slant^2) R^T: narrow across the
      // wave direction, width 1/sigma along it.
      const double a = sigma * sigma, b = sigma * sigma / (slant * slant);
      const double sxx = a * ct * ct + b * st * st;
      const double syy = a * st * st + b * ct * ct;
      const double sxy = (a - b) * ct * st;
      const double cx = xi * ct, cy = xi * st;
      const double gabor_dc = detail::periodized_gaussian(-cx, -cy, sxx, sxy, syy);
      const double env_dc = detail::periodized_gaussian(0.0, 0.0, sxx, sxy, syy);
      const double k = gabor_dc / env_dc;
      auto& f = bank.wavelet(j, l);
      f.resize(n);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const double wx = detail::bin_frequency(c, cols), wy = detail::bin_frequency(r, rows);
          f[r * cols + c] = detail::periodized_gaussian(wx - cx, wy - cy, sxx, sxy, syy) -
                            k * detail::periodized_gaussian(wx, wy, sxx, sxy, syy);
        }
      f[0] = 0.0;
    }
  }

  // Largest uniform wavelet gain keeping |phi|^2 + gain^2 * W <= 1 on every bin.
  FilterBank probe = bank;
  std::fill(probe.phi.begin(), probe.phi.end(), 0.0);
  const auto wavelet_energy = littlewood_paley(probe).energy;
  double gain2 = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    if (wavelet_energy[i] > 0.0)
      gain2 = std::min(gain2, (1.0 - bank.phi[i] * bank.phi[i]) / wavelet_energy[i]);
  if (gain2 < 1.0) {
    bank.normalization = std::sqrt(std::max(gain2, 0.0));
    for (auto& f : bank.psi)
      for (auto& v : f) v *= bank.normalization;
  }
  return bank;
}

/// Thread-safe cache of immutable banks keyed by (params, grid shape).
class FilterBankCache {
 public:
  std::shared_ptr<const FilterBank> get(const FilterBankParams& params, std::size_t rows, std::size_t cols) {
    const Key key{params.J, params.L, params.sigma0, params.xi0, params.effective_slant(), rows, cols};
    {
      std::lock_guard lock(mu_);
      if (auto it = banks_.find(key); it != banks_.end()) return it->second;
    }
    auto bank = std::make_shared<const FilterBank>(build_filter_bank(params, rows, cols));
    std::lock_guard lock(mu_);
    return banks_.try_emplace(key, std::move(bank)).first->second;
  }

 private:
  using Key = std::tuple<int, int, double, double, double, std::size_t, std::size_t>;
  std::mutex mu_;
  std::map<Key, std::shared_ptr<const FilterBank>> banks_;
};

}  // namespace wsrad
