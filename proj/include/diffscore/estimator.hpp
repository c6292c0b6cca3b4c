#pragma once

// Monte-Carlo reconstruction score
//
//   S(y | x) = 1/K * sum_k w(t_k) * sum_{i masked} log p(y_i | x, y_{t_k})
//
// with w = 1/|masked| (mlp) or w = 1/(t_k * |y|) (elbo). The K samples are
// spread round-robin over the grid t = 1/T, 2/T, ..., 1, which is the
// stratified version of drawing t uniformly on (0, 1]. exact_estimate()
// replaces the inner expectation over masking patterns with a full
// enumeration and is the reference the sampler is tested against.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "diffscore/denoiser.hpp"
#include "diffscore/error.hpp"
#include "diffscore/masking.hpp"
#include "diffscore/numeric.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/text.hpp"

namespace diffscore {

enum class Weighting { mlp, elbo };

inline const char* to_string(Weighting w) { return w == Weighting::mlp ? "mlp" : "elbo"; }
inline const char* to_string(MaskingStrategy s) {
  switch (s) {
    case MaskingStrategy::random: return "random";
    case MaskingStrategy::content: return "content";
    case MaskingStrategy::entity: return "entity";
  }
  return "random";
}

struct EstimatorConfig {
  std::size_t K = 20;
  std::size_t T = 10;
  Weighting weighting = Weighting::mlp;
  MaskingStrategy strategy = MaskingStrategy::random;
  double alpha_bi = 0.5;
  std::uint64_t seed = 0;
  // Consulted only by content/entity masking.
  std::shared_ptr<const std::set<std::string>> stopwords;
  // Queries handed to the backend at once; lets remote backends overlap
  // requests. Does not affect results.
  std::size_t batch_size = 256;
};

inline void validate_config(const EstimatorConfig& cfg) {
  if (cfg.K < 1) throw Error(ErrorKind::InvalidConfig, "K must be at least 1");
  if (cfg.T < 1) throw Error(ErrorKind::ZeroTimesteps, "T must be at least 1");
  if (!(cfg.alpha_bi >= 0.0 && cfg.alpha_bi <= 1.0)) throw Error(ErrorKind::InvalidConfig, "alpha must lie in [0, 1]");
}

struct TimestepScore {
  double t = 0.0;
  double value = 0.0;
  std::size_t samples = 0;
};

struct PositionScore {
  double mean_logprob = 0.0;
  std::size_t times_masked = 0;
};

struct ScoreReport {
  double score = 0.0;
  std::vector<TimestepScore> per_timestep;
  std::size_t samples_used = 0;
  EstimatorConfig config;
  // One slot per candidate position; empty when never masked.
  std::vector<std::optional<PositionScore>> per_position;
  // Sample standard deviation of the K weighted per-sample values.
  double sample_std = 0.0;
};

namespace detail {

inline void rethrow_with_sample(const Error& e, std::size_t k) {
  const std::string msg = "sample " + std::to_string(k) + ": " + e.what();
  if (const auto* pe = dynamic_cast<const ProtocolError*>(&e)) throw ProtocolError(msg, pe->payload());
  throw Error(e.kind(), msg);
}

inline DenoiserQuery make_query(const TokenSequence& target, const TokenSequence& context, const MaskPattern& pattern,
                                const Vocabulary& vocab) {
  DenoiserQuery q;
  q.context_ids = context.ids;
  q.corrupted_ids = apply_mask(target, pattern, vocab).ids;
  q.targets.reserve(pattern.size());
  for (std::size_t pos : pattern.positions) q.targets.push_back({pos, target.ids[pos]});
  return q;
}

inline void check_inputs(const TokenSequence& candidate, const TokenSequence& source, const Vocabulary& vocab) {
  if (candidate.empty()) throw Error(ErrorKind::EmptyCandidate, "candidate has no tokens");
  if (!is_clean(candidate, vocab)) throw Error(ErrorKind::VocabMismatch, "candidate holds non-vocabulary ids");
  if (!is_clean(source, vocab)) throw Error(ErrorKind::VocabMismatch, "source holds non-vocabulary ids");
}

}  // namespace detail

// `source` empty means no conditioning text.
template <Denoiser D>
ScoreReport estimate(const D& denoiser, const TokenSequence& candidate, const TokenSequence& source,
                     const EstimatorConfig& cfg) {
  validate_config(cfg);
  const Vocabulary& vocab = denoiser.vocabulary();
  detail::check_inputs(candidate, source, vocab);

  const TimestepGrid grid = timestep_grid(cfg.T);
  const std::size_t L = candidate.size();

  std::optional<TokenClassMap> classes;
  if (cfg.strategy != MaskingStrategy::random) {
    static const std::set<std::string> kNoStopwords;
    classes = classify_tokens(candidate, vocab, cfg.stopwords ? *cfg.stopwords : kNoStopwords);
  }

  RunningMean overall;
  std::vector<RunningMean> by_t(cfg.T);
  std::vector<RunningMean> by_pos(L);
  double m2 = 0.0;  // Welford accumulator for sample_std

  const std::size_t chunk = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<DenoiserQuery> queries;
  for (std::size_t begin = 0; begin < cfg.K; begin += chunk) {
    const std::size_t end = std::min(cfg.K, begin + chunk);
    queries.clear();
    for (std::size_t k = begin; k < end; ++k) {
      const double t = grid.values[k % cfg.T];
      MaskPattern pattern = sample_mask(L, t, cfg.strategy, classes ? &*classes : nullptr, derive_seed(cfg.seed, k));
      queries.push_back(detail::make_query(candidate, source, pattern, vocab));
    }

    std::vector<DenoiserResponse> responses;
    try {
      responses = query_all(denoiser, std::span<const DenoiserQuery>(queries));
    } catch (const Error& e) {
      detail::rethrow_with_sample(e, begin);
    }

    for (std::size_t k = begin; k < end; ++k) {
      const auto& q = queries[k - begin];
      const auto& r = responses[k - begin];
      try {
        validate_response(q, r);
      } catch (const Error& e) {
        detail::rethrow_with_sample(e, k);
      }
      const double t = grid.values[k % cfg.T];
      double value;
      if (cfg.weighting == Weighting::mlp) {
        RunningMean masked;
        for (const auto& lp : r.logprobs) masked.add(lp.logprob);
        value = masked.mean;
      } else {
        double sum = 0.0;
        for (const auto& lp : r.logprobs) sum += lp.logprob;
        value = sum / t / static_cast<double>(L);
      }
      for (const auto& lp : r.logprobs) by_pos[lp.position].add(lp.logprob);

      const double delta = value - overall.mean;
      overall.add(value);
      m2 += delta * (value - overall.mean);
      by_t[k % cfg.T].add(value);
    }
  }

  ScoreReport report;
  report.score = overall.mean;
  report.samples_used = cfg.K;
  report.config = cfg;
  report.sample_std = cfg.K > 1 ? std::sqrt(m2 / static_cast<double>(cfg.K - 1)) : 0.0;
  for (std::size_t j = 0; j < cfg.T; ++j) {
    if (by_t[j].count > 0) report.per_timestep.push_back({grid.values[j], by_t[j].mean, by_t[j].count});
  }
  report.per_position.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    if (by_pos[i].count > 0) report.per_position[i] = PositionScore{by_pos[i].mean, by_pos[i].count};
  }
  return report;
}

// Exact expectation over all non-empty masking patterns at each grid value;
// score is the mean over the grid. Deterministic, no sampling.
template <Denoiser D>
ScoreReport exact_estimate(const D& denoiser, const TokenSequence& candidate, const TokenSequence& source,
                           const TimestepGrid& grid, Weighting weighting) {
  const Vocabulary& vocab = denoiser.vocabulary();
  detail::check_inputs(candidate, source, vocab);
  const std::size_t L = candidate.size();
  if (L > kMaxEnumerationLength) {
    throw Error(ErrorKind::SequenceTooLong, "exact estimate is limited to " + std::to_string(kMaxEnumerationLength) +
                                                " tokens");
  }
  if (grid.values.empty()) throw Error(ErrorKind::ZeroTimesteps, "empty grid");

  // Pattern log-probabilities do not depend on t, so query each pattern once.
  const auto patterns = enumerate_patterns(L, 1.0);
  std::vector<double> sums(patterns.size()), means(patterns.size());
  for (std::size_t p = 0; p < patterns.size(); ++p) {
    auto q = detail::make_query(candidate, source, patterns[p].pattern, vocab);
    auto r = denoiser.query(q);
    validate_response(q, r);
    RunningMean m;
    double s = 0.0;
    for (const auto& lp : r.logprobs) {
      m.add(lp.logprob);
      s += lp.logprob;
    }
    sums[p] = s;
    means[p] = m.mean;
  }

  ScoreReport report;
  report.config.T = grid.count();
  report.config.weighting = weighting;
  RunningMean overall;
  for (double t : grid.values) {
    WeightedRunningMean acc;
    for (std::size_t p = 0; p < patterns.size(); ++p) {
      const double prob = conditional_pattern_probability(L, patterns[p].pattern.size(), t);
      const double value = weighting == Weighting::mlp ? means[p] : sums[p] / t / static_cast<double>(L);
      acc.add(value, prob);
    }
    report.per_timestep.push_back({t, acc.mean, 0});
    overall.add(acc.mean);
  }
  report.score = overall.mean;
  report.per_position.resize(L);
  return report;
}

// Mean log-probability of each position over the samples in which it was
// masked; empty for positions never masked.
template <Denoiser D>
std::vector<std::optional<double>> per_position_scores(const D& denoiser, const TokenSequence& seq,
                                                       const TokenSequence& source, const EstimatorConfig& cfg) {
  const ScoreReport report = estimate(denoiser, seq, source, cfg);
  std::vector<std::optional<double>> out(report.per_position.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (report.per_position[i]) out[i] = report.per_position[i]->mean_logprob;
  }
  return out;
}

}  // namespace diffscore
