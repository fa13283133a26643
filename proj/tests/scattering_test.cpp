#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <tuple>

#include "wsrad/scattering.hpp"
#include "wsrad/synthetic.hpp"

using namespace wsrad;

namespace {

FilterBankParams params(int J, int L) {
  FilterBankParams p;
  p.J = J;
  p.L = L;
  return p;
}

// Brute-force path list: all scale tuples with strictly increasing entries,
// all rotation tuples, in (order, scales, rotations) order.
std::vector<std::vector<std::pair<int, int>>> brute_paths(int J, int L, int M) {
  std::vector<std::vector<std::pair<int, int>>> out{{}};
  if (M >= 1)
    for (int j = 0; j < J; ++j)
      for (int l = 0; l < L; ++l) out.push_back({{j, l}});
  if (M >= 2)
    for (int j0 = 0; j0 < J; ++j0)
      for (int j1 = j0 + 1; j1 < J; ++j1)
        for (int l0 = 0; l0 < L; ++l0)
          for (int l1 = 0; l1 < L; ++l1) out.push_back({{j0, l0}, {j1, l1}});
  return out;
}

double norm2(const Image& x) {
  double s = 0;
  for (double v : x.values()) s += v * v;
  return std::sqrt(s);
}

double relative_l2(const FeatureVector& a, const FeatureVector& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    den += a.values[i] * a.values[i];
  }
  return std::sqrt(num / den);
}

FeatureVector full_image_features(const Image& img, int J, int L, int M) {
  const std::size_t R = padded_side(img.rows(), J), C = padded_side(img.cols(), J);
  const auto bank = build_filter_bank(params(J, L), R, C);
  return pool_features(scatter(img, bank, M), Mask(img.rows(), img.cols(), 1));
}

}  // namespace

TEST(Paths, DefaultConfigurationHas25Paths) {
  const auto paths = enumerate_paths(2, 4, 2);
  ASSERT_EQ(paths.size(), 25u);
  std::array<int, 3> by_order{};
  for (const auto& p : paths) ++by_order[p.order()];
  EXPECT_EQ(by_order, (std::array<int, 3>{1, 8, 16}));
  EXPECT_EQ(paths[0].name(), "S0");
  EXPECT_EQ(paths[1].name(), "S1[j=0,l=0]");
  EXPECT_EQ(paths[9].name(), "S2[j0=0,l0=0|j1=1,l1=0]");
  EXPECT_EQ(paths[24].name(), "S2[j0=0,l0=3|j1=1,l1=3]");
}

TEST(Paths, SmallCasesAndErrors) {
  EXPECT_EQ(enumerate_paths(3, 2, 2).size(), 19u);
  for (int J = 0; J <= 4; ++J) {
    const auto p = enumerate_paths(J, 5, 0);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(p[0].steps.empty());
  }
  EXPECT_THROW(enumerate_paths(2, 4, 3), InvalidArgument);
  EXPECT_EQ(enumerate_paths(3, 2, 3).size(), path_count(3, 2, 3));
}

TEST(Paths, ClosedFormMatchesBruteForce) {
  for (int J = 0; J <= 6; ++J)
    for (int L = 1; L <= 8; ++L)
      for (int M = 0; M <= std::min(2, J); ++M) {
        const auto got = enumerate_paths(J, L, M);
        const auto want = brute_paths(J, L, M);
        ASSERT_EQ(got.size(), want.size()) << J << " " << L << " " << M;
        ASSERT_EQ(path_count(J, L, M), want.size());
        std::set<std::string> names;
        for (std::size_t i = 0; i < got.size(); ++i) {
          ASSERT_EQ(got[i].steps.size(), want[i].size());
          for (std::size_t k = 0; k < want[i].size(); ++k) {
            EXPECT_EQ(got[i].steps[k].j, want[i][k].first);
            EXPECT_EQ(got[i].steps[k].l, want[i][k].second);
          }
          names.insert(got[i].name());
        }
        EXPECT_EQ(names.size(), got.size());
      }
}

TEST(Scatter, ConstantImageIsAnnihilated) {
  const double c = 437.25;
  const Image img(40, 36, c);
  const auto bank = build_filter_bank(params(3, 4), padded_side(40, 3), padded_side(36, 3));
  const auto maps = scatter(img, bank, 2);
  ASSERT_EQ(maps.coefficients.size(), path_count(3, 4, 2));
  for (double v : maps.coefficients[0].values()) EXPECT_NEAR(v, c, 1e-9 * c);
  for (std::size_t p = 1; p < maps.paths.size(); ++p)
    for (double v : maps.coefficients[p].values()) ASSERT_LE(std::fabs(v), 1e-9 * c);
}

TEST(Scatter, NonNegativeAndSameDims) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  Image img(33, 47);
  for (auto& v : img.values()) v = u(rng);
  const auto bank = build_filter_bank(params(3, 6), padded_side(33, 3), padded_side(47, 3));
  const auto maps = scatter(img, bank, 2);
  for (std::size_t p = 0; p < maps.paths.size(); ++p) {
    EXPECT_EQ(maps.coefficients[p].rows(), 33u);
    EXPECT_EQ(maps.coefficients[p].cols(), 47u);
    if (p == 0) continue;
    for (double v : maps.coefficients[p].values()) ASSERT_GE(v, -1e-12);
  }
}

TEST(Scatter, CascadeIsNonExpansive) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto img = synthetic::texture(48, 48, seed, static_cast<synthetic::TextureKind>(seed % 5));
    const auto bank = build_filter_bank(params(3, 4), 64, 64);
    const auto maps = scatter(img, bank, 2, true);
    const double input_norm = norm2(maps.padded_input);
    std::map<std::pair<int, int>, double> first;
    for (std::size_t p = 1; p < maps.paths.size(); ++p) {
      const auto& path = maps.paths[p];
      const double n = norm2(maps.propagators[p]);
      if (path.order() == 1) {
        EXPECT_LE(n, input_norm * (1 + 1e-9));
        first[{path.steps[0].j, path.steps[0].l}] = n;
      } else {
        EXPECT_LE(n, first.at({path.steps[0].j, path.steps[0].l}) * (1 + 1e-9));
      }
    }
  }
}

TEST(Scatter, StripeShiftRobustness) {
  const auto img = synthetic::grid_stripes(64, 64, std::numbers::pi / 6, 7.0);
  const auto a = full_image_features(img, 3, 4, 2);
  const auto b = full_image_features(synthetic::circular_shift(img, 2, 2), 3, 4, 2);
  EXPECT_LE(relative_l2(a, b), 0.05);
}

TEST(Scatter, Deterministic) {
  const auto img = synthetic::texture(40, 40, 5, synthetic::TextureKind::Mixed);
  const auto a = full_image_features(img, 2, 4, 2);
  const auto b = full_image_features(img, 2, 4, 2);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.names, b.names);
}

TEST(Scatter, RejectsOversizedImage) {
  const auto bank = build_filter_bank(params(2, 4), 16, 16);
  EXPECT_THROW(scatter(Image(17, 8, 1.0), bank, 2), InvalidArgument);
  EXPECT_THROW(scatter(Image(8, 8, 1.0), bank, 3), InvalidArgument);
}

TEST(Pool, AnalyticConstants) {
  ScatteringMaps maps;
  maps.paths = enumerate_paths(1, 1, 0);
  maps.coefficients = {Image(4, 4, 1.0)};
  Mask mask(4, 4, 0);
  for (int i = 0; i < 5; ++i) mask.values()[static_cast<std::size_t>(i)] = 1;
  EXPECT_NEAR(pool_features(maps, mask, 1e-6).values[0], std::log(1 + 1e-6), 1e-15);
  EXPECT_NEAR(pool_features(maps, mask, 1e-6).values[0], 9.999995e-7, 1e-12);

  maps.coefficients = {Image(4, 4, 0.0)};
  EXPECT_NEAR(pool_features(maps, mask, 1e-6).values[0], -13.815510557964274, 1e-12);
  EXPECT_THROW(pool_features(maps, Mask(4, 4, 0)), EmptyRegionError);
  EXPECT_THROW(pool_features(maps, Mask(3, 4, 1)), InvalidArgument);
}

TEST(Pool, MatchesNaiveLoop) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 10);
  ScatteringMaps maps;
  maps.paths = enumerate_paths(2, 2, 1);
  Mask mask(9, 11, 0);
  for (std::size_t i = 0; i < mask.size(); i += 2) mask.values()[i] = 1;
  for (std::size_t p = 0; p < maps.paths.size(); ++p) {
    Image m(9, 11);
    for (auto& v : m.values()) v = u(rng);
    maps.coefficients.push_back(m);
  }
  const auto fv = pool_features(maps, mask, 1e-6);
  for (std::size_t p = 0; p < maps.paths.size(); ++p) {
    double s = 0;
    int n = 0;
    for (std::size_t r = 0; r < 9; ++r)
      for (std::size_t c = 0; c < 11; ++c)
        if (mask(r, c)) {
          s += std::log(1e-6 + maps.coefficients[p](r, c));
          ++n;
        }
    EXPECT_NEAR(fv.values[p], s / n, 1e-12);
    EXPECT_EQ(fv.names[p], maps.paths[p].name());
  }
}

TEST(RegionFeatures, MultiSlicePoolingWeightsByPixelCount) {
  ScatteringConfig cfg;
  cfg.filters = params(2, 4);
  MaskedRegion region;
  for (std::uint64_t s = 0; s < 2; ++s) {
    RegionSlice sl;
    sl.image = synthetic::texture(20 + 6 * s, 24, s + 1, synthetic::TextureKind::Blobs);
    sl.mask = synthetic::disk_mask(20 + 6 * s, 24, 6.0 + 3.0 * static_cast<double>(s));
    region.slices.push_back(sl);
  }
  const auto fv = scattering_features(region, cfg);
  ASSERT_EQ(fv.size(), 25u);
  std::vector<double> sums(25, 0.0);
  std::size_t total = 0;
  for (const auto& sl : region.slices) {
    const auto bank = build_filter_bank(cfg.filters, padded_side(sl.image.rows(), 2), padded_side(sl.image.cols(), 2));
    const auto maps = scatter(sl.image, bank, 2);
    const auto per = pool_features(maps, sl.mask);
    const auto n = count_true(sl.mask);
    for (std::size_t p = 0; p < 25; ++p) sums[p] += per.values[p] * static_cast<double>(n);
    total += n;
  }
  for (std::size_t p = 0; p < 25; ++p) EXPECT_NEAR(fv.values[p], sums[p] / static_cast<double>(total), 1e-12);
}

TEST(Scatter, TextureSuiteShiftRobustness) {
  constexpr int J = 3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto img = synthetic::texture(64, 64, 100 + seed, static_cast<synthetic::TextureKind>(seed));
    const auto base = full_image_features(img, J, 4, 2);
    for (long shift : {1L, 2L, 4L}) {
      const auto moved = full_image_features(synthetic::circular_shift(img, shift, -shift), J, 4, 2);
      EXPECT_LE(relative_l2(base, moved), 0.05) << "seed " << seed << " shift " << shift;
    }
  }
}
