#pragma once

// Source/candidate scoring configurations built on estimate():
//
//   marginal       S(c | -)          fluency
//   conditional    S(c | s)          faithfulness
//   reverse        S(s | c)          coverage
//   bidirectional  a*S(c|s) + (1-a)*S(s|c)
//   pmi            S(c | s) - S(c | -)
//
// plus per-timestep quality profiles and their weighted aggregation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/estimator.hpp"
#include "diffscore/masking.hpp"
#include "diffscore/numeric.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/text.hpp"
#include "diffscore/toy_ar_lm.hpp"

namespace diffscore {

enum class ScoringConfig { mar, cond, rev, bi, pmi, profile };

inline const char* to_string(ScoringConfig c) {
  switch (c) {
    case ScoringConfig::mar: return "mar";
    case ScoringConfig::cond: return "cond";
    case ScoringConfig::rev: return "rev";
    case ScoringConfig::bi: return "bi";
    case ScoringConfig::pmi: return "pmi";
    case ScoringConfig::profile: return "profile";
  }
  return "mar";
}

struct PMIReport {
  double conditional = 0.0;
  double marginal = 0.0;
  double pmi = 0.0;
};

struct QualityProfile {
  TimestepGrid timesteps;
  std::vector<double> scores;
  std::vector<double> weights;
};

template <Denoiser D>
ScoreReport score_marginal(const D& denoiser, const TokenSequence& candidate, const EstimatorConfig& cfg) {
  return estimate(denoiser, candidate, TokenSequence{}, cfg);
}

template <Denoiser D>
ScoreReport score_conditional(const D& denoiser, const TokenSequence& candidate, const TokenSequence& source,
                              const EstimatorConfig& cfg) {
  return estimate(denoiser, candidate, source, cfg);
}

// The source is masked and reconstructed with the candidate visible.
template <Denoiser D>
ScoreReport score_reverse(const D& denoiser, const TokenSequence& source, const TokenSequence& candidate,
                          const EstimatorConfig& cfg) {
  return estimate(denoiser, source, candidate, cfg);
}

// std::lerp is exact at both endpoints and when the two scores agree.
inline ScoreReport combine_bidirectional(const ScoreReport& cond, const ScoreReport& rev, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidConfig, "alpha must lie in [0, 1]");
  ScoreReport out = cond;
  out.score = std::lerp(rev.score, cond.score, alpha);
  out.samples_used = cond.samples_used + rev.samples_used;
  out.per_position.clear();
  out.sample_std = 0.0;
  out.per_timestep.clear();
  for (const auto& c : cond.per_timestep) {
    for (const auto& r : rev.per_timestep) {
      if (r.t == c.t) out.per_timestep.push_back({c.t, std::lerp(r.value, c.value, alpha), c.samples + r.samples});
    }
  }
  return out;
}

// Paired: both directions use cfg.seed, so masking draws match sample by
// sample. Unpaired: the reverse direction draws from a derived seed.
template <Denoiser D>
ScoreReport score_bidirectional(const D& denoiser, const TokenSequence& candidate, const TokenSequence& source,
                                const EstimatorConfig& cfg, bool paired = true) {
  const auto cond = score_conditional(denoiser, candidate, source, cfg);
  EstimatorConfig rev_cfg = cfg;
  if (!paired) rev_cfg.seed = derive_seed(cfg.seed, 0x7e5e);
  const auto rev = score_reverse(denoiser, source, candidate, rev_cfg);
  return combine_bidirectional(cond, rev, cfg.alpha_bi);
}

// Conditional and marginal share a seed, hence identical masking patterns.
template <Denoiser D>
PMIReport score_pmi(const D& denoiser, const TokenSequence& candidate, const TokenSequence& source,
                    const EstimatorConfig& cfg) {
  PMIReport r;
  r.conditional = score_conditional(denoiser, candidate, source, cfg).score;
  r.marginal = score_marginal(denoiser, candidate, cfg).score;
  r.pmi = r.conditional - r.marginal;
  return r;
}

inline QualityProfile profile_from_report(const ScoreReport& report, std::size_t T) {
  QualityProfile p;
  p.timesteps = timestep_grid(T);
  p.scores.reserve(T);
  for (double t : p.timesteps.values) {
    auto it = std::find_if(report.per_timestep.begin(), report.per_timestep.end(),
                           [&](const TimestepScore& ts) { return ts.t == t; });
    if (it == report.per_timestep.end()) {
      throw Error(ErrorKind::TooFewSamples, "no samples at t=" + std::to_string(t) + "; use K >= T");
    }
    p.scores.push_back(it->value);
  }
  p.weights.assign(T, 1.0 / static_cast<double>(T));
  return p;
}

// `source` empty for a marginal profile.
template <Denoiser D>
QualityProfile quality_profile(const D& denoiser, const TokenSequence& candidate, const TokenSequence& source,
                               const EstimatorConfig& cfg) {
  return profile_from_report(estimate(denoiser, candidate, source, cfg), cfg.T);
}

inline double aggregate_profile(const QualityProfile& profile) {
  if (profile.scores.size() != profile.weights.size() || profile.scores.size() != profile.timesteps.count()) {
    throw Error(ErrorKind::GridMismatch, "profile scores, weights and grid differ in length");
  }
  WeightedRunningMean acc;
  for (std::size_t k = 0; k < profile.scores.size(); ++k) acc.add(profile.scores[k], profile.weights[k]);
  return acc.mean;
}

// Autoregressive baseline on the same scale as the mlp estimator: mean
// per-token log-probability, optionally conditioned on a source.
inline ScoreReport ar_score(const ToyARLM& model, const TokenSequence& candidate, const TokenSequence& source) {
  if (candidate.empty()) throw Error(ErrorKind::EmptyCandidate, "candidate has no tokens");
  const auto lps = ar_sequence_logprobs(model, candidate, source.empty() ? nullptr : &source);
  ScoreReport r;
  RunningMean m;
  r.per_position.resize(lps.size());
  for (std::size_t i = 0; i < lps.size(); ++i) {
    m.add(lps[i]);
    r.per_position[i] = PositionScore{lps[i], 1};
  }
  r.score = m.mean;
  r.samples_used = 1;
  return r;
}

}  // namespace diffscore
