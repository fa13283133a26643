#pragma once

// Seeded synthetic images used by the invariance experiment, the end-to-end
// cohort generator and the test suites.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/image.hpp"

namespace wsrad::synthetic {

/// Sinusoidal stripes: offset + amplitude * cos(2 pi (x cos a + y sin a) / period).
inline Image stripes(std::size_t rows, std::size_t cols, double angle, double period, double amplitude = 100.0,
                     double offset = 500.0) {
  Image img(rows, cols);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      img(r, c) = offset + amplitude * std::cos(2.0 * std::numbers::pi *
                                                (static_cast<double>(c) * ca + static_cast<double>(r) * sa) / period);
  return img;
}

/// Stripes whose wave vector is snapped to whole cycles across the grid, so
/// the pattern is periodic and circular shifts are exact translations.
inline Image grid_stripes(std::size_t rows, std::size_t cols, double angle, double period, double amplitude = 100.0,
                          double offset = 500.0) {
  const double kx = std::round(static_cast<double>(cols) * std::cos(angle) / period);
  const double ky = std::round(static_cast<double>(rows) * std::sin(angle) / period);
  Image img(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      img(r, c) = offset + amplitude * std::cos(2.0 * std::numbers::pi *
                                                (kx * static_cast<double>(c) / static_cast<double>(cols) +
                                                 ky * static_cast<double>(r) / static_cast<double>(rows)));
  return img;
}

/// Separable Gaussian blur with periodic boundaries.
inline Image blur(const Image& in, double sigma) {
  if (sigma <= 0) return in;
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const auto R = static_cast<long>(in.rows()), C = static_cast<long>(in.cols());
  Image tmp(in.rows(), in.cols()), out(in.rows(), in.cols());
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * in(static_cast<std::size_t>(r), static_cast<std::size_t>(((c + i) % C + C) % C));
      tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp(static_cast<std::size_t>(((r + i) % R + R) % R), static_cast<std::size_t>(c));
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  return out;
}

enum class TextureKind { Stripes, Blobs, Mixed, Checker, Waves };

/// Seeded, grid-periodic texture of one of several families, intensities
/// roughly in [200, 800].
inline Image texture(std::size_t rows, std::size_t cols, std::uint64_t seed, TextureKind kind) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto noise = [&](double sigma, double amp) {
    Image w(rows, cols);
    for (auto& v : w.values()) v = n01(rng);
    Image b = blur(w, sigma);
    double ss = 0;
    for (double v : b.values()) ss += v * v;
    const double scale = amp / std::sqrt(ss / static_cast<double>(b.size()));
    for (auto& v : b.values()) v *= scale;
    return b;
  };
  Image img(rows, cols, 500.0);
  auto add = [&](const Image& o) {
    for (std::size_t i = 0; i < img.size(); ++i) img.values()[i] += o.values()[i];
  };
  switch (kind) {
    case TextureKind::Stripes:
      add(grid_stripes(rows, cols, std::numbers::pi * u(rng), 6.0 + 6.0 * u(rng), 120.0, 0.0));
      add(noise(1.0, 15.0));
      break;
    case TextureKind::Blobs:
      add(noise(2.0 + 2.0 * u(rng), 120.0));
      break;
    case TextureKind::Mixed:
      add(grid_stripes(rows, cols, std::numbers::pi * u(rng), 8.0 + 8.0 * u(rng), 80.0, 0.0));
      add(noise(1.5, 60.0));
      break;
    case TextureKind::Checker: {
      const double period = 8.0 + 8.0 * u(rng);
      add(grid_stripes(rows, cols, 0.0, period, 70.0, 0.0));
      Image s2 = grid_stripes(rows, cols, std::numbers::pi / 2, period, 70.0, 0.0);
      add(s2);
      add(noise(1.0, 20.0));
      break;
    }
    case TextureKind::Waves:
      for (int k = 0; k < 4; ++k) add(grid_stripes(rows, cols, std::numbers::pi * u(rng), 5.0 + 15.0 * u(rng), 40.0, 0.0));
      add(noise(1.0, 10.0));
      break;
  }
  return img;
}

inline Image circular_shift(const Image& in, long dr, long dc) {
  const auto R = static_cast<long>(in.rows()), C = static_cast<long>(in.cols());
  Image out(in.rows(), in.cols());
  for (long r = 0; r < R; ++r)
    for (long c = 0; c < C; ++c)
      out(static_cast<std::size_t>(((r + dr) % R + R) % R), static_cast<std::size_t>(((c + dc) % C + C) % C)) =
          in(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  return out;
}

/// Filled disk mask centered in a rows x cols grid.
inline Mask disk_mask(std::size_t rows, std::size_t cols, double radius) {
  Mask m(rows, cols, 0);
  const double cr = (static_cast<double>(rows) - 1) / 2, cc = (static_cast<double>(cols) - 1) / 2;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (std::hypot(static_cast<double>(r) - cr, static_cast<double>(c) - cc) <= radius) m(r, c) = 1;
  return m;
}

}  // namespace wsrad::synthetic
