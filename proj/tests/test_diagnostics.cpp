#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "diffscore/diagnostics.hpp"

namespace ds = diffscore;

namespace {

std::string perturb(const std::string& text, ds::PerturbationConfig p, std::uint64_t seed = 0) {
  ds::Rng rng(seed);
  return ds::perturb_text(text, p, rng);
}

}  // namespace

TEST(PositionalBias, HandExample) {
  std::vector<ds::PositionScores> seqs{{-1.0, -2.0}, {-3.0, -4.0}};
  auto r = ds::positional_bias(seqs, 64);
  EXPECT_EQ(r.per_position_mean, (std::vector<double>{-2.0, -3.0}));
  EXPECT_DOUBLE_EQ(r.per_position_std[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(r.mean_positional_std, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(r.cov, 0.5 / 2.5);
  EXPECT_EQ(r.positions_covered, 2u);
}

TEST(PositionalBias, FlatProfileHasZeroCov) {
  std::vector<ds::PositionScores> flat{{-2.0, -2.0}, {-2.0, -2.0}};
  EXPECT_EQ(ds::positional_bias(flat, 64).cov, 0.0);
}

TEST(PositionalBias, RaggedSequences) {
  std::vector<ds::PositionScores> seqs{{-1.0, -1.0, -1.0}, {-2.0, -2.0}};
  auto r = ds::positional_bias(seqs, 64);
  EXPECT_EQ(r.per_position_count, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_TRUE(std::isnan(r.per_position_std[2]));
  EXPECT_EQ(r.per_position_mean[2], -1.0);
}

TEST(PositionalBias, GapsAndTruncation) {
  std::vector<ds::PositionScores> seqs{{-1.0, std::nullopt, -3.0, -9.0}, {-1.0, std::nullopt, -5.0}};
  auto r = ds::positional_bias(seqs, 3);
  ASSERT_EQ(r.per_position_mean.size(), 3u);
  EXPECT_TRUE(std::isnan(r.per_position_mean[1]));
  EXPECT_EQ(r.per_position_count[1], 0u);
  EXPECT_EQ(r.positions_covered, 2u);
  // means -1 and -4: population std 1.5 over |mean| 2.5
  EXPECT_DOUBLE_EQ(r.cov, 1.5 / 2.5);
}

TEST(PositionalBias, Errors) {
  std::vector<ds::PositionScores> one{{-1.0}};
  EXPECT_THROW(ds::positional_bias(one, 8), ds::Error);
  std::vector<ds::PositionScores> empty{{std::nullopt}, {std::nullopt}};
  EXPECT_THROW(ds::positional_bias(empty, 8), ds::Error);
}

TEST(DirectionalConsistency, RatioOfGeometricMeans) {
  std::map<std::string, double> scores{{"f1", -1.0}, {"r1", -2.0}, {"f2", -3.0}, {"r2", -3.0}, {"f3", -0.5}, {"r3", -4.0}};
  std::vector<std::pair<std::string, std::string>> pairs{{"f1", "r1"}, {"f2", "r2"}, {"r3", "f3"}};
  auto rep = ds::directional_consistency([&](const std::string& s) { return scores.at(s); }, pairs);
  ASSERT_EQ(rep.consistency.size(), 3u);
  EXPECT_DOUBLE_EQ(rep.consistency[0], std::exp(-2.0) / std::exp(-1.0));
  EXPECT_EQ(rep.consistency[1], 1.0);
  EXPECT_DOUBLE_EQ(rep.consistency[2], std::exp(-4.0) / std::exp(-0.5));
  EXPECT_DOUBLE_EQ(rep.mean_consistency, (rep.consistency[0] + 1.0 + rep.consistency[2]) / 3.0);
  EXPECT_TRUE(rep.rank_defined);
  EXPECT_EQ(rep.pair_count, 3u);
}

TEST(DirectionalConsistency, SymmetricScorerIsFullyConsistent) {
  auto pairs = ds::generate_reversal_pairs(ds::default_relation_templates(), ds::default_subjects(),
                                           ds::default_objects(), 20, 1);
  auto rep = ds::directional_consistency([](const std::string&) { return -2.0; }, pairs);
  EXPECT_EQ(rep.mean_consistency, 1.0);
  EXPECT_EQ(rep.std_consistency, 0.0);
  EXPECT_FALSE(rep.rank_defined);
}

TEST(ReversalPairs, FilledDistinctAndDeterministic) {
  auto tpl = ds::default_relation_templates();
  auto subj = ds::default_subjects();
  auto obj = ds::default_objects();
  auto a = ds::generate_reversal_pairs(tpl, subj, obj, 200, 4);
  EXPECT_EQ(a, ds::generate_reversal_pairs(tpl, subj, obj, 200, 4));
  EXPECT_NE(a, ds::generate_reversal_pairs(tpl, subj, obj, 200, 5));
  std::set<std::pair<std::string, std::string>> seen(a.begin(), a.end());
  EXPECT_EQ(seen.size(), 200u);
  for (const auto& [f, r] : a) {
    EXPECT_EQ(f.find('{'), std::string::npos);
    EXPECT_EQ(r.find('{'), std::string::npos);
    EXPECT_NE(r.find(" by "), std::string::npos);
  }
}

TEST(ReversalPairs, Fill) {
  std::vector<ds::RelationTemplate> tpl{{"{X} met {Y}", "{Y} was met by {X}"}};
  std::vector<std::string> s{"Ann"}, o{"Bo"};
  auto p = ds::generate_reversal_pairs(tpl, s, o, 1, 0);
  EXPECT_EQ(p[0].first, "Ann met Bo");
  EXPECT_EQ(p[0].second, "Bo was met by Ann");
  EXPECT_THROW(ds::generate_reversal_pairs(tpl, s, o, 2, 0), ds::Error);
  try {
    ds::generate_reversal_pairs({}, s, o, 1, 0);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::EmptyTemplates);
  }
}

TEST(FluentIrrelevant, IsADerangement) {
  std::vector<ds::TextRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back({"s" + std::to_string(i), "c" + std::to_string(i)});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto out = ds::make_fluent_irrelevant(recs, seed);
    std::multiset<std::string> cands;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      EXPECT_EQ(out[i].source, recs[i].source);
      EXPECT_NE(out[i].candidate, recs[i].candidate);
      cands.insert(out[i].candidate);
    }
    std::multiset<std::string> orig;
    for (const auto& r : recs) orig.insert(r.candidate);
    EXPECT_EQ(cands, orig);
  }
}

TEST(FluentIrrelevant, TwoRecordsSwap) {
  std::vector<ds::TextRecord> recs{{"s0", "c0"}, {"s1", "c1"}};
  auto out = ds::make_fluent_irrelevant(recs, 9);
  EXPECT_EQ(out[0], (ds::TextRecord{"s0", "c1"}));
  EXPECT_EQ(out[1], (ds::TextRecord{"s1", "c0"}));
  std::vector<ds::TextRecord> one{{"s", "c"}};
  try {
    ds::make_fluent_irrelevant(one, 0);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::TooFewRecords);
  }
}

TEST(FluentIrrelevant, UniformOverDerangements) {
  // three records have two derangements: (1 2 0) and (2 0 1)
  std::vector<ds::TextRecord> recs{{"s0", "c0"}, {"s1", "c1"}, {"s2", "c2"}};
  int first = 0;
  const int trials = 4000;
  for (int seed = 0; seed < trials; ++seed) first += ds::make_fluent_irrelevant(recs, seed)[0].candidate == "c1";
  EXPECT_NEAR(first / static_cast<double>(trials), 0.5, 4.0 * 0.5 / std::sqrt(trials));
}

TEST(Perturb, AdjacentSwaps) {
  ds::PerturbationConfig p;
  p.swap_rate = 1.0;
  EXPECT_EQ(perturb("a b c d", p), "b a d c");
  EXPECT_EQ(perturb("a b c", p), "b a c");
  EXPECT_EQ(perturb("a , b c", p), "a , c b");
}

TEST(Perturb, Substitution) {
  ds::PerturbationConfig p;
  p.substitution_rate = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto toks = ds::split_tokens(perturb("the cat sat in the hat", p, seed), ds::TokenizerRule::whitespace);
    ASSERT_EQ(toks.size(), 6u);
    EXPECT_NE(toks[0], "the");
    EXPECT_TRUE(toks[0] == "a" || toks[0] == "an");
    EXPECT_EQ(toks[1], "cat");
    EXPECT_NE(toks[3], "in");
    EXPECT_TRUE(ds::detail::member(p.preposition_set, toks[3]));
  }
}

TEST(Perturb, RepetitionAndDeletion) {
  ds::PerturbationConfig rep;
  rep.repetition_rate = 1.0;
  EXPECT_EQ(perturb("a b", rep), "a a b b");
  ds::PerturbationConfig del;
  del.deletion_rate = 1.0;
  EXPECT_EQ(perturb("x y z", del), "x");
  EXPECT_EQ(perturb("x y z", ds::PerturbationConfig{}), "x y z");
  EXPECT_THROW(perturb("   ", ds::PerturbationConfig{}), ds::Error);
}

TEST(DisfluentRelevant, KeepsSourcesAndIsSeeded) {
  std::vector<ds::TextRecord> recs{{"s0", "the cat sat on the mat"}, {"s1", "a dog ran to the park"}};
  ds::PerturbationConfig p;
  p.swap_rate = p.substitution_rate = p.repetition_rate = p.deletion_rate = 0.3;
  p.seed = 4;
  auto a = ds::make_disfluent_relevant(recs, p);
  EXPECT_EQ(a, ds::make_disfluent_relevant(recs, p));
  EXPECT_EQ(a[0].source, "s0");
  EXPECT_EQ(a[1].source, "s1");
  p.deletion_rate = 1.5;
  EXPECT_THROW(ds::make_disfluent_relevant(recs, p), ds::Error);
}

TEST(AdversarialReport, UniformBackendHasZeroPmi) {
  ds::Vocabulary v({"a", "b", "c"});
  ds::UniformDenoiser u(v);
  std::vector<ds::TokenRecord> orig{{{{0}}, {{1, 2}}}, {{{1}}, {{2, 0}}}, {{{2}}, {{0, 1, 1}}}};
  std::vector<ds::TokenRecord> fi{{{{0}}, {{2, 0}}}, {{{1}}, {{0, 1, 1}}}, {{{2}}, {{1, 2}}}};
  std::vector<ds::TokenRecord> dr{{{{0}}, {{2, 1}}}, {{{1}}, {{2}}}, {{{2}}, {{0, 0, 1, 1}}}};
  ds::EstimatorConfig cfg;
  cfg.K = 6;
  cfg.T = 3;
  auto rep = ds::pmi_adversarial_report(u, orig, fi, dr, cfg);
  ASSERT_EQ(rep.variants.size(), 3u);
  EXPECT_EQ(rep.variants[1].name, "fluent_irrelevant");
  for (const auto& var : rep.variants) {
    EXPECT_EQ(var.pmi.mean, 0.0);
    EXPECT_EQ(var.conditional.mean, -std::log(3.0));
  }
  EXPECT_EQ(rep.comparisons.size(), 9u);
  EXPECT_EQ(rep.comparisons[2].column, "pmi");
  EXPECT_EQ(rep.comparisons[2].p_value, 1.0);

  dr[1].source = ds::TokenSequence{{0}};
  try {
    ds::pmi_adversarial_report(u, orig, fi, dr, cfg);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::MismatchedSources);
  }
}
