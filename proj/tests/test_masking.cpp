#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>

#include "diffscore/masking.hpp"

namespace ds = diffscore;

namespace {

double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double binomial_pmf(int n, int k, double p) {
  return std::tgamma(n + 1) / (std::tgamma(k + 1) * std::tgamma(n - k + 1)) * std::pow(p, k) * std::pow(1 - p, n - k);
}

ds::Vocabulary tiny_vocab() { return ds::Vocabulary({"the", "Paris", "ran", "a"}); }

}  // namespace

TEST(TimestepGrid, RightEndpoints) {
  EXPECT_EQ(ds::timestep_grid(1).values, std::vector<double>{1.0});
  EXPECT_EQ(ds::timestep_grid(4).values, (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
  auto g = ds::timestep_grid(10);
  ASSERT_EQ(g.count(), 10u);
  EXPECT_DOUBLE_EQ(g.values.front(), 0.1);
  EXPECT_EQ(g.values.back(), 1.0);
  for (std::size_t k = 1; k < g.count(); ++k) EXPECT_LT(g.values[k - 1], g.values[k]);
}

TEST(TimestepGrid, ZeroIsAnError) {
  EXPECT_THROW(ds::timestep_grid(0), ds::Error);
}

TEST(SampleMask, FullMaskAtOne) {
  auto p = ds::sample_mask(4, 1.0, ds::MaskingStrategy::random, nullptr, 9);
  EXPECT_EQ(p.positions, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(SampleMask, TinyRateMasksExactlyOne) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto p = ds::sample_mask(4, 1e-12, ds::MaskingStrategy::random, nullptr, s);
    ASSERT_EQ(p.size(), 1u);
    ASSERT_LT(p.positions[0], 4u);
  }
}

TEST(SampleMask, SortedUniqueAndDeterministic) {
  for (std::uint64_t s = 0; s < 500; ++s) {
    auto p = ds::sample_mask(9, 0.3, ds::MaskingStrategy::random, nullptr, s);
    ASSERT_FALSE(p.positions.empty());
    ASSERT_TRUE(std::is_sorted(p.positions.begin(), p.positions.end()));
    ASSERT_EQ(std::adjacent_find(p.positions.begin(), p.positions.end()), p.positions.end());
    ASSERT_EQ(p.positions, ds::sample_mask(9, 0.3, ds::MaskingStrategy::random, nullptr, s).positions);
  }
}

TEST(SampleMask, MaskCountFollowsConditionedBinomial) {
  const int n = 6, draws = 100000;
  std::vector<double> observed(n, 0.0), expected(n);
  for (int i = 0; i < draws; ++i) {
    auto p = ds::sample_mask(n, 0.5, ds::MaskingStrategy::random, nullptr, ds::derive_seed(2024, i));
    observed[p.size() - 1] += 1;
  }
  const double nonempty = 1.0 - std::pow(0.5, n);
  for (int k = 1; k <= n; ++k) expected[k - 1] = draws * binomial_pmf(n, k, 0.5) / nonempty;
  EXPECT_GT(chi_square_p(observed, expected), 0.01);
}

// At a low rate most independent draws come out empty, so this exercises the
// redraw path: the pattern law must still be the conditioned Bernoulli law.
TEST(SampleMask, PatternLawAtLowRateMatchesConditionedBernoulli) {
  const int n = 3, draws = 100000;
  const double t = 0.25;
  std::vector<double> observed(7, 0.0), expected(7);
  for (int i = 0; i < draws; ++i) {
    auto p = ds::sample_mask(n, t, ds::MaskingStrategy::random, nullptr, ds::derive_seed(77, i));
    unsigned bits = 0;
    for (auto pos : p.positions) bits |= 1u << pos;
    observed[bits - 1] += 1;
  }
  const double nonempty = 1.0 - std::pow(1 - t, n);
  for (unsigned bits = 1; bits < 8; ++bits) {
    const int m = __builtin_popcount(bits);
    expected[bits - 1] = draws * std::pow(t, m) * std::pow(1 - t, n - m) / nonempty;
  }
  EXPECT_GT(chi_square_p(observed, expected), 0.01);
}

TEST(SampleMask, PositionMarginalIsConditionalRate) {
  const int n = 5, draws = 40000;
  const double t = 0.2;
  std::vector<double> hits(n, 0.0);
  for (int i = 0; i < draws; ++i) {
    for (auto pos : ds::sample_mask(n, t, ds::MaskingStrategy::random, nullptr, ds::derive_seed(3, i)).positions) {
      hits[pos] += 1;
    }
  }
  const double expected = t / (1.0 - std::pow(1 - t, n));
  const double se = std::sqrt(expected * (1 - expected) / draws);
  for (double h : hits) EXPECT_NEAR(h / draws, expected, 5 * se);
}

TEST(SampleMask, ContentStrategyOnlyMasksEligible) {
  auto v = tiny_vocab();
  ds::TokenSequence seq{{0, 1, 2, 0, 3}};
  auto classes = ds::classify_tokens(seq, v, {"the", "a"});
  for (std::uint64_t s = 0; s < 300; ++s) {
    auto p = ds::sample_mask(5, 0.6, ds::MaskingStrategy::content, &classes, s);
    for (auto pos : p.positions) ASSERT_TRUE(pos == 1 || pos == 2);
    auto e = ds::sample_mask(5, 0.6, ds::MaskingStrategy::entity, &classes, s);
    ASSERT_EQ(e.positions, std::vector<std::size_t>{1});
  }
}

TEST(SampleMask, StrategyErrors) {
  auto v = tiny_vocab();
  ds::TokenSequence stops{{0, 3}};
  auto classes = ds::classify_tokens(stops, v, {"the", "a"});
  try {
    ds::sample_mask(2, 0.5, ds::MaskingStrategy::content, &classes, 1);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::NoEligiblePositions);
  }
  try {
    ds::sample_mask(2, 0.5, ds::MaskingStrategy::entity, nullptr, 1);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::MissingClassMap);
  }
}

TEST(ApplyMask, ReplacesOnlyPatternPositions) {
  ds::Vocabulary v({"a", "b", "c"});
  ds::TokenSequence seq{{0, 1, 2}};
  EXPECT_EQ(ds::apply_mask(seq, {{1}, 3}, v).ids, (std::vector<ds::TokenId>{0, 3, 2}));
  EXPECT_EQ(ds::apply_mask(seq, {{}, 3}, v), seq);
  EXPECT_EQ(ds::apply_mask(seq, {{0, 1, 2}, 3}, v).ids, (std::vector<ds::TokenId>{3, 3, 3}));
  EXPECT_EQ(seq.ids, (std::vector<ds::TokenId>{0, 1, 2}));
  EXPECT_THROW(ds::apply_mask(seq, {{0}, 4}, v), ds::Error);
}

TEST(EnumeratePatterns, SingleToken) {
  auto ps = ds::enumerate_patterns(1, 0.5);
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0].pattern.positions, std::vector<std::size_t>{0});
  EXPECT_EQ(ps[0].probability, 1.0);
}

TEST(EnumeratePatterns, TwoTokensHalfRate) {
  auto ps = ds::enumerate_patterns(2, 0.5);
  ASSERT_EQ(ps.size(), 3u);
  for (const auto& p : ps) EXPECT_NEAR(p.probability, 1.0 / 3.0, 1e-15);
}

TEST(EnumeratePatterns, HandEnumerationUpToFour) {
  for (std::size_t L = 1; L <= 4; ++L) {
    for (double t : {0.1, 0.25, 0.5, 0.9, 1.0}) {
      auto ps = ds::enumerate_patterns(L, t);
      ASSERT_EQ(ps.size(), (1u << L) - 1);
      double nonempty = 0.0;
      for (unsigned bits = 1; bits < (1u << L); ++bits) {
        nonempty += std::pow(t, __builtin_popcount(bits)) * std::pow(1 - t, L - __builtin_popcount(bits));
      }
      double sum = 0.0;
      for (const auto& p : ps) {
        const auto m = p.pattern.size();
        EXPECT_NEAR(p.probability, std::pow(t, m) * std::pow(1 - t, L - m) / nonempty, 1e-14);
        sum += p.probability;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(EnumeratePatterns, NormalizedForLongerSequences) {
  for (std::size_t L : {5u, 9u, 13u}) {
    double sum = 0.0;
    for (const auto& p : ds::enumerate_patterns(L, 0.3)) sum += p.probability;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(EnumeratePatterns, LengthGuard) {
  try {
    ds::enumerate_patterns(21, 0.5);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::SequenceTooLong);
  }
}

TEST(ClassifyTokens, Rules) {
  auto v = tiny_vocab();
  ds::TokenSequence seq{{0, 1, 2}};
  auto m = ds::classify_tokens(seq, v, {"the"});
  EXPECT_EQ(m.classes, (std::vector<ds::TokenClass>{ds::TokenClass::function, ds::TokenClass::entity,
                                                    ds::TokenClass::content}));
  auto none = ds::classify_tokens(seq, v, {});
  for (auto c : none.classes) EXPECT_NE(c, ds::TokenClass::function);
}

TEST(Stopwords, PackagedListLoads) {
  auto words = ds::load_stopwords(std::string(DIFFSCORE_DATA_DIR) + "/stopwords.txt");
  EXPECT_TRUE(words.count("the"));
  EXPECT_FALSE(words.count("council"));
}
