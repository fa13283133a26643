#pragma once

// Local perturbations (block rotation, block swap, Rayleigh noise) and the
// relative feature-change metric used to compare feature robustness.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/features.hpp"
#include "wsrad/image.hpp"
#include "wsrad/radiomics.hpp"
#include "wsrad/region.hpp"
#include "wsrad/scattering.hpp"

namespace wsrad {

struct BlockPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const BlockPos&, const BlockPos&) = default;
};

namespace detail {

inline void check_block(const Image& img, BlockPos at, std::size_t size, const char* what) {
  if (size == 0 || at.row + size > img.rows() || at.col + size > img.cols())
    throw InvalidArgument(std::string(what) + ": block at (" + std::to_string(at.row) + ", " + std::to_string(at.col) +
                          ") of size " + std::to_string(size) + " is outside the image");
}

}  // namespace detail

/// Reverses a size x size block along both axes.
inline Image rotate_block_180(Image img, BlockPos at, std::size_t size) {
  detail::check_block(img, at, size, "rotate_block_180");
  const Image copy = img;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      img(at.row + r, at.col + c) = copy(at.row + size - 1 - r, at.col + size - 1 - c);
  return img;
}

inline bool blocks_overlap(BlockPos a, BlockPos b, std::size_t size) {
  auto apart = [&](std::size_t x, std::size_t y) { return x + size <= y || y + size <= x; };
  return !(apart(a.row, b.row) || apart(a.col, b.col));
}

inline Image swap_blocks(Image img, BlockPos a, BlockPos b, std::size_t size) {
  detail::check_block(img, a, size, "swap_blocks");
  detail::check_block(img, b, size, "swap_blocks");
  if (blocks_overlap(a, b, size)) throw InvalidArgument("swap_blocks: blocks overlap");
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) std::swap(img(a.row + r, a.col + c), img(b.row + r, b.col + c));
  return img;
}

/// Adds sigma * sqrt(-2 ln(1 - u)) with u ~ U[0, 1) to every pixel.
inline Image add_rayleigh_noise(Image img, double sigma, std::uint64_t seed) {
  if (!(sigma > 0)) throw InvalidArgument("add_rayleigh_noise: sigma must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : img.values()) v += sigma * std::sqrt(-2.0 * std::log1p(-u(rng)));
  return img;
}

struct FeatureChange {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// Mean of |B_i - A_i| / |A_i| over features with |A_i| > guard.
inline FeatureChange feature_change(const FeatureVector& before, const FeatureVector& after, double guard = 1e-12) {
  if (before.size() != after.size()) throw InvalidArgument("feature_change: vectors differ in length");
  FeatureChange fc;
  double sum = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double a = before.values[i];
    if (!(std::fabs(a) > guard)) {
      ++fc.excluded;
      continue;
    }
    sum += std::fabs(after.values[i] - a) / std::fabs(a);
    ++fc.used;
  }
  if (fc.used == 0) throw InvalidArgument("feature_change: every feature is below the guard");
  fc.value = sum / static_cast<double>(fc.used);
  return fc;
}

// ---------------------------------------------------------------------------
// Invariance experiment

enum class PerturbationKind { Identity, RotateBlock, SwapBlocks, RayleighNoise };

inline std::string_view to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::Identity: return "identity";
    case PerturbationKind::RotateBlock: return "rotate_block_180";
    case PerturbationKind::SwapBlocks: return "swap_blocks";
    case PerturbationKind::RayleighNoise: return "rayleigh_noise";
  }
  return "?";
}

struct InvarianceConfig {
  ScatteringConfig scattering;
  int n_bins = 32;
  std::size_t block = 11;
  double noise_fraction = 0.05;  // Rayleigh sigma as a fraction of the region's intensity range
  double guard = 1e-12;
  std::optional<BlockPos> block_a;  // defaults to the block centered on the mask centroid
  std::optional<BlockPos> block_b;  // defaults to the nearest in-mask neighbor of block_a
};

struct InvarianceRow {
  PerturbationKind perturbation;
  std::string family;  // "WS", "classic", or a classic prefix such as "GLCM"
  double change;       // NaN when every feature of the family is below the guard
  std::size_t used;
  std::size_t excluded;
};

struct InvarianceReport {
  BlockPos block_a;
  BlockPos block_b;
  double noise_sigma = 0.0;
  std::vector<InvarianceRow> rows;

  double change(PerturbationKind p, const std::string& family) const {
    for (const auto& r : rows)
      if (r.perturbation == p && r.family == family) return r.change;
    throw InvalidArgument("no invariance row for " + std::string(to_string(p)) + "/" + family);
  }
};

namespace detail {

inline bool block_in_mask(const Mask& m, BlockPos at, std::size_t size) {
  if (at.row + size > m.rows() || at.col + size > m.cols()) return false;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      if (!m(at.row + r, at.col + c)) return false;
  return true;
}

inline BlockPos centroid_block(const Mask& m, std::size_t size) {
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (m(r, c)) sr += static_cast<double>(r), sc += static_cast<double>(c), ++n;
  if (n == 0) throw EmptyRegionError("invariance: empty mask");
  auto origin = [&](double centre, std::size_t limit) {
    const double o = std::round(centre - static_cast<double>(size - 1) / 2);
    return static_cast<std::size_t>(std::clamp(o, 0.0, static_cast<double>(limit - std::min(limit, size))));
  };
  return {origin(sr / static_cast<double>(n), m.rows()), origin(sc / static_cast<double>(n), m.cols())};
}

inline BlockPos neighbor_block(const Mask& m, BlockPos a, std::size_t size) {
  const auto s = static_cast<long>(size);
  for (auto [dr, dc] : {std::pair{0L, s}, {0L, -s}, {s, 0L}, {-s, 0L}}) {
    const long r = static_cast<long>(a.row) + dr, c = static_cast<long>(a.col) + dc;
    if (r < 0 || c < 0) continue;
    const BlockPos b{static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
    if (block_in_mask(m, b, size)) return b;
  }
  throw InvalidArgument("invariance: region too small for two adjacent " + std::to_string(size) + "x" +
                        std::to_string(size) + " blocks");
}

inline std::string family_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace detail

/// Extracts classical and scattering features from image/mask before and
/// after each perturbation and tabulates the change per feature family.
inline InvarianceReport run_invariance_experiment(const Image& image, const Mask& mask, const InvarianceConfig& cfg,
                                                  const std::vector<PerturbationKind>& perturbations,
                                                  std::uint64_t seed) {
  if (image.rows() != mask.rows() || image.cols() != mask.cols())
    throw InvalidArgument("invariance: image and mask dims differ");
  InvarianceReport rep;
  rep.block_a = cfg.block_a.value_or(detail::centroid_block(mask, cfg.block));
  if (!detail::block_in_mask(mask, rep.block_a, cfg.block))
    throw InvalidArgument("invariance: block does not lie inside the region");
  const bool needs_b = std::find(perturbations.begin(), perturbations.end(), PerturbationKind::SwapBlocks) !=
                       perturbations.end();
  rep.block_b = cfg.block_b ? *cfg.block_b : (needs_b ? detail::neighbor_block(mask, rep.block_a, cfg.block) : rep.block_a);

  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < image.size(); ++i)
    if (mask.values()[i]) lo = std::min(lo, image.values()[i]), hi = std::max(hi, image.values()[i]);
  rep.noise_sigma = cfg.noise_fraction * (hi - lo);

  FilterBankCache cache;
  auto extract = [&](const Image& img) {
    const auto region = region_from_image(img, mask);
    return std::pair{scattering_features(region, cfg.scattering, cache), classic_feature_vector(region, cfg.n_bins)};
  };
  const auto [ws0, cl0] = extract(image);

  auto add_row = [&](PerturbationKind p, const std::string& family, const FeatureVector& a, const FeatureVector& b) {
    InvarianceRow row{p, family, std::numeric_limits<double>::quiet_NaN(), 0, a.size()};
    bool any = false;
    for (double v : a.values) any = any || std::fabs(v) > cfg.guard;
    if (any) {
      const auto fc = feature_change(a, b, cfg.guard);
      row.change = fc.value;
      row.used = fc.used;
      row.excluded = fc.excluded;
    }
    rep.rows.push_back(row);
  };

  for (std::size_t k = 0; k < perturbations.size(); ++k) {
    const auto p = perturbations[k];
    Image moved = image;
    switch (p) {
      case PerturbationKind::Identity: break;
      case PerturbationKind::RotateBlock: moved = rotate_block_180(image, rep.block_a, cfg.block); break;
      case PerturbationKind::SwapBlocks: moved = swap_blocks(image, rep.block_a, rep.block_b, cfg.block); break;
      case PerturbationKind::RayleighNoise:
        moved = add_rayleigh_noise(image, rep.noise_sigma > 0 ? rep.noise_sigma : cfg.noise_fraction,
                                   derive_seed(seed, k));
        break;
    }
    const auto [ws1, cl1] = extract(moved);
    add_row(p, "WS", ws0, ws1);
    add_row(p, "classic", cl0, cl1);
    // Per classic family, in feature order.
    std::vector<std::string> families;
    for (const auto& n : cl0.names)
      if (families.empty() || families.back() != detail::family_of(n)) families.push_back(detail::family_of(n));
    for (const auto& fam : families) {
      FeatureVector a, b;
      for (std::size_t i = 0; i < cl0.size(); ++i)
        if (detail::family_of(cl0.names[i]) == fam) a.push(cl0.names[i], cl0.values[i]), b.push(cl1.names[i], cl1.values[i]);
      add_row(p, fam, a, b);
    }
  }
  return rep;
}

}  // namespace wsrad
