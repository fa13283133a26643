#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wsrad/radiomics.hpp"
#include "wsrad/synthetic.hpp"

using namespace wsrad;

namespace {

MaskedRegion region_of(const Image& img, const Mask& mask) {
  MaskedRegion r;
  r.slices.push_back({0, 0, 0, img, mask});
  return r;
}

MaskedRegion full_region(const Image& img) { return region_of(img, Mask(img.rows(), img.cols(), 1)); }

QuantizedRegion levels_of(std::vector<std::vector<int>> rows, int n_levels) {
  QuantizedRegion q;
  q.n_levels = n_levels;
  Image2D<int> lv(rows.size(), rows[0].size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) lv(r, c) = rows[r][c];
  q.slices.push_back(lv);
  return q;
}

Image2D<int> rotate90(const Image2D<int>& in) {
  Image2D<int> out(in.cols(), in.rows(), 0);
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t c = 0; c < in.cols(); ++c) out(in.cols() - 1 - c, r) = in(r, c);
  return out;
}

}  // namespace

TEST(Quantize, SmallExamples) {
  Image img(1, 4);
  img.values()[0] = 0, img.values()[1] = 1, img.values()[2] = 2, img.values()[3] = 3;
  const auto q = quantize(full_region(img), 2);
  EXPECT_EQ(q.slices[0].storage(), (std::vector<int>{1, 1, 2, 2}));
  EXPECT_EQ(q.min, 0.0);
  EXPECT_EQ(q.max, 3.0);

  const auto c = quantize(full_region(Image(3, 3, 7.5)), 32);
  for (int v : c.slices[0].values()) EXPECT_EQ(v, 1);

  EXPECT_THROW(quantize(full_region(img), 1), InvalidArgument);
  EXPECT_THROW(quantize(region_of(img, Mask(1, 4, 0)), 8), EmptyRegionError);
}

TEST(Quantize, MatchesDirectHistogram) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 11.0);
  Image img(25, 40);
  for (auto& v : img.values()) v = u(rng);
  const auto q = quantize(full_region(img), 32);
  const auto [mn, mx] = std::minmax_element(img.values().begin(), img.values().end());
  std::vector<int> want(32, 0), got(32, 0);
  for (double v : img.values()) {
    int b = 0;
    while (b < 31 && v >= *mn + (b + 1) * (*mx - *mn) / 32) ++b;
    ++want[static_cast<std::size_t>(b)];
  }
  for (int v : q.slices[0].values()) {
    ASSERT_GE(v, 1);
    ASSERT_LE(v, 32);
    ++got[static_cast<std::size_t>(v - 1)];
  }
  EXPECT_EQ(got, want);
}

TEST(FirstOrder, HandExamples) {
  const auto c = first_order_features(full_region(Image(2, 3, 5.0)));
  EXPECT_EQ(c.at("FO.mean"), 5.0);
  EXPECT_EQ(c.at("FO.variance"), 0.0);
  EXPECT_EQ(c.at("FO.range"), 0.0);
  EXPECT_EQ(c.at("FO.entropy"), 0.0);
  EXPECT_TRUE(c.all_finite());

  Image img(2, 2);
  img.values()[0] = 1, img.values()[1] = 2, img.values()[2] = 3, img.values()[3] = 4;
  const auto f = first_order_features(full_region(img));
  EXPECT_DOUBLE_EQ(f.at("FO.mean"), 2.5);
  EXPECT_DOUBLE_EQ(f.at("FO.variance"), 1.25);
  EXPECT_DOUBLE_EQ(f.at("FO.range"), 3.0);
  EXPECT_DOUBLE_EQ(f.at("FO.energy"), 30.0);
  EXPECT_DOUBLE_EQ(f.at("FO.mean_absolute_deviation"), 1.0);
  EXPECT_DOUBLE_EQ(f.at("FO.skewness"), 0.0);
  EXPECT_DOUBLE_EQ(f.at("FO.entropy"), 2.0);
  EXPECT_EQ(f.size(), 10u);
}

TEST(FirstOrder, NormalSampleMoments) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  Image img(100, 100);
  for (auto& v : img.values()) v = n01(rng);
  const auto f = first_order_features(full_region(img));
  EXPECT_NEAR(f.at("FO.skewness"), 0.0, 0.1);
  EXPECT_NEAR(f.at("FO.kurtosis"), 3.0, 0.2);
}

TEST(Glcm, TwoByTwoHorizontal) {
  const auto q = levels_of({{1, 1}, {1, 2}}, 2);
  const auto p = normalized(glcm_counts(q, 0));
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(p(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(p(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(glcm_features(q, {0}).at("GLCM.autocorrelation"), 1.5);
}

TEST(Glcm, ConstantRegion) {
  const auto q = quantize(full_region(Image(5, 6, 3.0)), 32);
  const auto f = glcm_features(q);
  EXPECT_DOUBLE_EQ(f.at("GLCM.autocorrelation"), 1.0);
  EXPECT_DOUBLE_EQ(f.at("GLCM.contrast"), 0.0);
  EXPECT_DOUBLE_EQ(f.at("GLCM.cluster_prominence"), 0.0);
  EXPECT_DOUBLE_EQ(f.at("GLCM.correlation"), 1.0);
  EXPECT_TRUE(f.warnings.empty());
}

TEST(Glcm, NoPairsWarns) {
  const auto q = levels_of({{1, 0, 2}}, 2);
  auto f = glcm_features(q, {2, 3});
  ASSERT_EQ(f.warnings.size(), 1u);
  for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(Glcm, ProbabilityAxioms) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = oracle::random_quantized(seed, 12, 14, 5);
    for (int d = 0; d < 4; ++d) {
      const auto p = normalized(glcm_counts(q, d));
      EXPECT_NEAR(p.total(), 1.0, 1e-12);
      for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) {
          EXPECT_GE(p(i, j), 0.0);
          EXPECT_EQ(p(i, j), p(j, i));
        }
    }
    EXPECT_GE(glcm_features(q).at("GLCM.joint_entropy"), 0.0);
  }
}

TEST(Glrlm, RowExamples) {
  const auto one = levels_of({{1, 1, 1, 1}}, 2);
  const auto f = glrlm_features(one, {0});
  EXPECT_DOUBLE_EQ(f.at("GLRLM.low_gray_level_run_emphasis"), 1.0);
  EXPECT_DOUBLE_EQ(f.at("GLRLM.long_run_emphasis"), 16.0);
  EXPECT_DOUBLE_EQ(f.at("GLRLM.short_run_emphasis"), 1.0 / 16);

  const auto two = levels_of({{1, 1, 2, 2}}, 2);
  const auto m = glrlm_counts(two, 0);
  EXPECT_EQ(m(0, 1), 1.0);
  EXPECT_EQ(m(1, 1), 1.0);
  EXPECT_EQ(m.total(), 2.0);
  EXPECT_DOUBLE_EQ(glrlm_features(two, {0}).at("GLRLM.short_run_emphasis"), 0.25);
}

TEST(Glszm, HandExamples) {
  const auto zone = levels_of({{2, 0, 0}, {0, 2, 2}}, 2);
  const auto f = glszm_features(zone);
  EXPECT_DOUBLE_EQ(f.at("GLSZM.small_area_low_gray_level_emphasis"), 1.0 / 36);
  EXPECT_DOUBLE_EQ(f.at("GLSZM.large_area_high_gray_level_emphasis"), 36.0);

  const auto pair = levels_of({{1, 0, 1}}, 2);
  const auto g = glszm_features(pair);
  EXPECT_DOUBLE_EQ(g.at("GLSZM.small_area_low_gray_level_emphasis"), 1.0);
  EXPECT_DOUBLE_EQ(g.at("GLSZM.large_area_high_gray_level_emphasis"), 1.0);
  EXPECT_EQ(glszm_counts(pair).total(), 2.0);
}

TEST(Gldm, HandExamples) {
  const auto block = levels_of({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}, 1);
  const auto m = gldm_counts(block);
  EXPECT_EQ(m(0, 8), 1.0);
  EXPECT_EQ(m(0, 3), 4.0);
  EXPECT_EQ(m(0, 5), 4.0);
  EXPECT_EQ(m.total(), 9.0);

  const auto single = levels_of({{0, 0}, {0, 1}}, 2);
  EXPECT_EQ(gldm_counts(single)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(gldm_features(single).at("GLDM.large_dependence_low_gray_level_emphasis"), 1.0);
  EXPECT_DOUBLE_EQ(gldm_features(single).at("GLDM.small_dependence_emphasis"), 1.0);
}

TEST(TextureMatrices, MatchBruteForceOracles) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SCOPED_TRACE(::testing::Message() << "seed " << seed);
    const auto q = oracle::random_quantized(1000 + seed, 16, 16, 1 + static_cast<int>(seed % 6));
    for (int d = 0; d < 4; ++d) {
      const auto counts = glcm_counts(q, d);
      const auto want = oracle::glcm_pairs(q, d);
      oracle::Inventory got;
      for (std::size_t i = 0; i < counts.rows; ++i)
        for (std::size_t j = 0; j < counts.cols; ++j)
          if (counts(i, j) != 0) got[{static_cast<int>(i + 1), static_cast<int>(j + 1)}] = std::lround(counts(i, j));
      EXPECT_EQ(got, want);
      long pairs = 0;
      for (auto& [k, v] : want) pairs += v;
      const auto p = normalized(counts);
      for (auto& [k, v] : want)
        EXPECT_NEAR(p(static_cast<std::size_t>(k.first - 1), static_cast<std::size_t>(k.second - 1)),
                    static_cast<double>(v) / static_cast<double>(pairs), 1e-12);
      EXPECT_EQ(oracle::inventory(glrlm_counts(q, d), 1), oracle::glrlm_runs(q, d));
    }
    EXPECT_EQ(oracle::inventory(glszm_counts(q), 1), oracle::glszm_zones(q));
    EXPECT_EQ(oracle::inventory(gldm_counts(q), 0), oracle::gldm_dependence(q));
  }
}

TEST(ClassicVector, CountNamesAndDeterminism) {
  const auto img = synthetic::texture(24, 24, 3, synthetic::TextureKind::Blobs);
  const auto region = region_of(img, synthetic::disk_mask(24, 24, 9));
  const auto a = classic_feature_vector(region);
  const auto b = classic_feature_vector(region);
  ASSERT_EQ(a.size(), 22u);
  EXPECT_EQ(a.names.front(), "FO.mean");
  EXPECT_EQ(a.names[10], "GLCM.autocorrelation");
  EXPECT_EQ(a.names.back(), "GLDM.small_dependence_emphasis");
  EXPECT_EQ(a.values, b.values);
  EXPECT_TRUE(a.all_finite());

  const auto c = classic_feature_vector(full_region(Image(4, 4, -2.0)));
  EXPECT_EQ(c.size(), 22u);
  EXPECT_TRUE(c.all_finite());
}

TEST(ClassicVector, FiniteOnTinyRegions) {
  Mask m(5, 5, 0);
  m(2, 2) = 1;
  const auto f = classic_feature_vector(region_of(Image(5, 5, 1.0), m));
  EXPECT_TRUE(f.all_finite());
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(ClassicVector, QuarterTurnInvariance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto q = oracle::random_quantized(50 + seed, 11, 17, 4);
    QuantizedRegion r = q;
    r.slices[0] = rotate90(q.slices[0]);
    const auto a = glcm_features(q), b = glcm_features(r);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12 * (1 + std::fabs(a.values[i])));
    const auto c = glrlm_features(q), d = glrlm_features(r);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.values[i], d.values[i], 1e-12 * (1 + std::fabs(c.values[i])));
    EXPECT_EQ(glszm_features(q).values, glszm_features(r).values);
    EXPECT_EQ(gldm_features(q).values, gldm_features(r).values);
  }
}

TEST(ClassicVector, SlicesSumBeforeNormalization) {
  auto q = oracle::random_quantized(9, 8, 8, 3);
  const auto second = oracle::random_quantized(10, 6, 9, 3);
  q.slices.push_back(second.slices[0]);
  for (int d = 0; d < 4; ++d) {
    QuantizedRegion a = q, b = q;
    a.slices.resize(1);
    b.slices.erase(b.slices.begin());
    const auto both = glcm_counts(q, d), ca = glcm_counts(a, d), cb = glcm_counts(b, d);
    for (std::size_t i = 0; i < both.counts.size(); ++i) EXPECT_EQ(both.counts[i], ca.counts[i] + cb.counts[i]);
  }
}
