#pragma once

// Positional bias, directional consistency and adversarial dataset
// construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/numeric.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/scoring.hpp"
#include "diffscore/stats.hpp"
#include "diffscore/text.hpp"

namespace diffscore {

// ---------------------------------------------------------------------------
// Positional bias

struct PositionalBiasReport {
  std::vector<double> per_position_mean;  // NaN where no sequence covers the position
  std::vector<double> per_position_std;   // sample std; NaN with fewer than 2 samples
  std::vector<std::size_t> per_position_count;
  double mean_positional_std = 0.0;
  // Std(per-position means) / |Mean(per-position means)| over covered positions.
  double cov = 0.0;
  std::size_t positions_covered = 0;
};

using PositionScores = std::vector<std::optional<double>>;

// `per_sequence[j][n]` is the score of position n in sequence j (empty when
// the scorer produced none). Positions at or beyond `max_position` are ignored.
inline PositionalBiasReport positional_bias(std::span<const PositionScores> per_sequence, std::size_t max_position) {
  if (per_sequence.size() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 sequences");
  std::size_t width = 0;
  for (const auto& s : per_sequence) width = std::max(width, s.size());
  width = std::min(width, max_position);

  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  PositionalBiasReport rep;
  rep.per_position_mean.assign(width, kNaN);
  rep.per_position_std.assign(width, kNaN);
  rep.per_position_count.assign(width, 0);

  std::vector<double> means, stds, column;
  for (std::size_t n = 0; n < width; ++n) {
    column.clear();
    for (const auto& s : per_sequence) {
      if (n < s.size() && s[n]) column.push_back(*s[n]);
    }
    rep.per_position_count[n] = column.size();
    if (column.empty()) continue;
    rep.per_position_mean[n] = mean_of(column);
    means.push_back(rep.per_position_mean[n]);
    if (column.size() >= 2) {
      rep.per_position_std[n] = stddev_of(column, 1);
      stds.push_back(rep.per_position_std[n]);
    }
  }
  rep.positions_covered = means.size();
  if (means.empty()) throw Error(ErrorKind::InsufficientData, "no position has any score");
  rep.mean_positional_std = stds.empty() ? 0.0 : mean_of(stds);
  const double spread = stddev_of(means, 0);
  const double centre = std::abs(mean_of(means));
  rep.cov = spread == 0.0 ? 0.0 : (centre == 0.0 ? std::numeric_limits<double>::infinity() : spread / centre);
  return rep;
}

// ---------------------------------------------------------------------------
// Directional consistency

struct DirectionalReport {
  double mean_consistency = 0.0;
  double std_consistency = 0.0;
  // Spearman between forward and reverse scores; NaN when undefined.
  double rank_correlation = std::numeric_limits<double>::quiet_NaN();
  bool rank_defined = false;
  std::size_t pair_count = 0;
  std::vector<double> consistency;
  std::vector<double> forward_scores;
  std::vector<double> reverse_scores;
};

using TextScorer = std::function<double(const std::string&)>;

// Per pair: min(g_f, g_r) / max(g_f, g_r) with g = exp(score), the geometric
// mean token probability, so the ratio lies in (0, 1].
inline DirectionalReport directional_consistency(const TextScorer& scorer,
                                                 std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.size() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 pairs");
  DirectionalReport rep;
  rep.pair_count = pairs.size();
  for (const auto& [fwd, rev] : pairs) {
    const double sf = scorer(fwd);
    const double sr = scorer(rev);
    rep.forward_scores.push_back(sf);
    rep.reverse_scores.push_back(sr);
    // exp(min - max) == min(g)/max(g) without underflow for long texts.
    rep.consistency.push_back(std::exp(std::min(sf, sr) - std::max(sf, sr)));
  }
  rep.mean_consistency = mean_of(rep.consistency);
  rep.std_consistency = stddev_of(rep.consistency, 1);
  if (auto rho = spearman_rho(rep.forward_scores, rep.reverse_scores)) {
    rep.rank_correlation = *rho;
    rep.rank_defined = true;
  }
  return rep;
}

struct RelationTemplate {
  std::string forward;  // with {X} and {Y} placeholders, e.g. "{X} authored {Y}"
  std::string reverse;  // e.g. "{Y} was authored by {X}"
};

namespace detail {

inline std::string fill(std::string pattern, const std::string& x, const std::string& y) {
  for (auto [key, value] : {std::pair<std::string, const std::string*>{"{X}", &x}, {"{Y}", &y}}) {
    for (std::size_t pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key, pos + value->size())) {
      pattern.replace(pos, key.size(), *value);
    }
  }
  return pattern;
}

}  // namespace detail

// n distinct (template, subject, object) instantiations drawn without
// replacement.
inline std::vector<std::pair<std::string, std::string>> generate_reversal_pairs(
    std::span<const RelationTemplate> templates, std::span<const std::string> subjects,
    std::span<const std::string> objects, std::size_t n, std::uint64_t seed) {
  if (templates.empty()) throw Error(ErrorKind::EmptyTemplates, "no relation templates");
  if (subjects.empty() || objects.empty()) throw Error(ErrorKind::InsufficientData, "entity lists must be non-empty");
  const std::size_t total = templates.size() * subjects.size() * objects.size();
  if (n > total) {
    throw Error(ErrorKind::InsufficientData, "only " + std::to_string(total) + " distinct pairs can be generated");
  }
  std::vector<std::size_t> combos(total);
  for (std::size_t i = 0; i < total; ++i) combos[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(combos[i], combos[i + rng.index(total - i)]);

  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = combos[i];
    const auto& obj = objects[c % objects.size()];
    c /= objects.size();
    const auto& subj = subjects[c % subjects.size()];
    const auto& tpl = templates[c / subjects.size()];
    out.emplace_back(detail::fill(tpl.forward, subj, obj), detail::fill(tpl.reverse, subj, obj));
  }
  return out;
}

// Fictional entities and relations for the reversal study.
inline std::vector<RelationTemplate> default_relation_templates() {
  return {{"{X} authored {Y}", "{Y} was authored by {X}"},
          {"{X} founded {Y}", "{Y} was founded by {X}"},
          {"{X} designed {Y}", "{Y} was designed by {X}"},
          {"{X} directed {Y}", "{Y} was directed by {X}"},
          {"{X} composed {Y}", "{Y} was composed by {X}"}};
}

inline std::vector<std::string> default_subjects() {
  const std::vector<std::string> first{"Daphne", "Orin", "Maren", "Tobias", "Liora", "Cassius", "Ilse", "Bram"};
  const std::vector<std::string> last{"Barrington", "Vell", "Quist", "Harrow", "Oduya", "Lindqvist", "Marsh", "Tenby"};
  std::vector<std::string> out;
  for (const auto& f : first) {
    for (const auto& l : last) out.push_back(f + " " + l);
  }
  return out;
}

inline std::vector<std::string> default_objects() {
  return {"Silent Harbor",   "Glass Orchard", "Northern Lantern", "Copper Meridian", "Hollow Crown",
          "Amber Station",   "Velvet Archive", "Iron Sonata",     "Pale Compass",    "Winter Atlas"};
}

// ---------------------------------------------------------------------------
// Adversarial constructions

struct TextRecord {
  std::string source;
  std::string candidate;

  friend bool operator==(const TextRecord&, const TextRecord&) = default;
};

// Candidates permuted by a uniformly random derangement: no record keeps its
// own candidate.
inline std::vector<TextRecord> make_fluent_irrelevant(std::span<const TextRecord> records, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 2) throw Error(ErrorKind::TooFewRecords, "a derangement needs at least 2 records");
  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    bool fixed_point = false;
    for (std::size_t i = 0; i < n && !fixed_point; ++i) fixed_point = perm[i] == i;
    if (!fixed_point) break;
  }
  std::vector<TextRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({records[i].source, records[perm[i]].candidate});
  return out;
}

struct PerturbationConfig {
  double swap_rate = 0.0;
  double substitution_rate = 0.0;
  double repetition_rate = 0.0;
  double deletion_rate = 0.0;
  std::vector<std::string> article_set{"a", "an", "the"};
  std::vector<std::string> preposition_set{"in", "on", "at", "of", "to", "for", "with", "by", "from"};
  // Swaps never cross these tokens (clause boundary approximation).
  std::vector<std::string> punctuation_set{".", ",", ";", ":", "!", "?"};
  std::uint64_t seed = 0;
};

inline void validate(const PerturbationConfig& p) {
  for (double r : {p.swap_rate, p.substitution_rate, p.repetition_rate, p.deletion_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::InvalidConfig, "perturbation rates must lie in [0, 1]");
  }
}

namespace detail {

inline bool member(const std::vector<std::string>& set, const std::string& tok) {
  return std::find(set.begin(), set.end(), tok) != set.end();
}

inline void substitute_from(const std::vector<std::string>& set, std::string& tok, Rng& rng) {
  if (set.size() < 2) return;
  const auto self = static_cast<std::size_t>(std::find(set.begin(), set.end(), tok) - set.begin());
  std::size_t pick = rng.index(set.size() - 1);
  if (pick >= self) ++pick;
  tok = set[pick];
}

inline std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

}  // namespace detail

// Applied in order per candidate: adjacent swaps (left-to-right,
// non-overlapping), article/preposition substitution, in-place repetition,
// deletion. Deletion never removes every token: if all are drawn, the first
// survives.
inline std::string perturb_text(const std::string& text, const PerturbationConfig& p, Rng& rng) {
  auto toks = split_tokens(text, TokenizerRule::whitespace);
  if (toks.empty()) throw Error(ErrorKind::EmptyCandidate, "cannot perturb an empty candidate");

  for (std::size_t i = 0; i + 1 < toks.size();) {
    const bool blocked = detail::member(p.punctuation_set, toks[i]) || detail::member(p.punctuation_set, toks[i + 1]);
    if (!blocked && rng.bernoulli(p.swap_rate)) {
      std::swap(toks[i], toks[i + 1]);
      i += 2;
    } else {
      ++i;
    }
  }
  for (auto& tok : toks) {
    if (detail::member(p.article_set, tok)) {
      if (rng.bernoulli(p.substitution_rate)) detail::substitute_from(p.article_set, tok, rng);
    } else if (detail::member(p.preposition_set, tok)) {
      if (rng.bernoulli(p.substitution_rate)) detail::substitute_from(p.preposition_set, tok, rng);
    }
  }
  std::vector<std::string> repeated;
  repeated.reserve(toks.size() * 2);
  for (auto& tok : toks) {
    repeated.push_back(tok);
    if (rng.bernoulli(p.repetition_rate)) repeated.push_back(tok);
  }
  std::vector<std::string> kept;
  kept.reserve(repeated.size());
  for (auto& tok : repeated) {
    if (!rng.bernoulli(p.deletion_rate)) kept.push_back(tok);
  }
  if (kept.empty()) kept.push_back(repeated.front());
  return detail::join(kept);
}

inline std::vector<TextRecord> make_disfluent_relevant(std::span<const TextRecord> records, const PerturbationConfig& p) {
  validate(p);
  std::vector<TextRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng rng(derive_seed(p.seed, i));
    out.push_back({records[i].source, perturb_text(records[i].candidate, p, rng)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// PMI decomposition over adversarial variants

struct TokenRecord {
  TokenSequence source;
  TokenSequence candidate;
};

struct ColumnSummary {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> values;
};

struct VariantSummary {
  std::string name;
  ColumnSummary conditional, marginal, pmi;
};

struct VariantComparison {
  std::string variant_a, variant_b, column;
  double U = 0.0;
  double p_value = 1.0;
};

struct AdversarialReport {
  std::vector<VariantSummary> variants;
  std::vector<VariantComparison> comparisons;
};

template <Denoiser D>
AdversarialReport pmi_adversarial_report(const D& denoiser, std::span<const TokenRecord> original,
                                         std::span<const TokenRecord> fluent_irrelevant,
                                         std::span<const TokenRecord> disfluent_relevant, const EstimatorConfig& cfg) {
  const std::array<std::pair<const char*, std::span<const TokenRecord>>, 3> sets{
      {{"original", original}, {"fluent_irrelevant", fluent_irrelevant}, {"disfluent_relevant", disfluent_relevant}}};
  for (const auto& [name, recs] : sets) {
    if (recs.empty()) throw Error(ErrorKind::InsufficientData, std::string(name) + " has no records");
    if (recs.size() != original.size()) throw Error(ErrorKind::MismatchedSources, std::string(name) + " size differs");
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (!(recs[i].source == original[i].source)) {
        throw Error(ErrorKind::MismatchedSources, std::string(name) + " record " + std::to_string(i));
      }
    }
  }

  AdversarialReport rep;
  for (const auto& [name, recs] : sets) {
    VariantSummary v;
    v.name = name;
    for (const auto& r : recs) {
      const auto pmi = score_pmi(denoiser, r.candidate, r.source, cfg);
      v.conditional.values.push_back(pmi.conditional);
      v.marginal.values.push_back(pmi.marginal);
      v.pmi.values.push_back(pmi.pmi);
    }
    for (auto* col : {&v.conditional, &v.marginal, &v.pmi}) {
      col->mean = mean_of(col->values);
      col->std = stddev_of(col->values, 1);
    }
    rep.variants.push_back(std::move(v));
  }
  for (std::size_t a = 0; a < rep.variants.size(); ++a) {
    for (std::size_t b = a + 1; b < rep.variants.size(); ++b) {
      const auto& va = rep.variants[a];
      const auto& vb = rep.variants[b];
      const std::array<std::tuple<const char*, const ColumnSummary*, const ColumnSummary*>, 3> cols{
          {{"conditional", &va.conditional, &vb.conditional},
           {"marginal", &va.marginal, &vb.marginal},
           {"pmi", &va.pmi, &vb.pmi}}};
      for (const auto& [col, ca, cb] : cols) {
        const auto mw = mann_whitney_u(ca->values, cb->values);
        rep.comparisons.push_back({va.name, vb.name, col, mw.U, mw.p_value});
      }
    }
  }
  return rep;
}

}  // namespace diffscore
