#pragma once

// The conditional token-probability oracle: given a visible context and a
// partially masked candidate, return log p(true token | visible tokens) for
// every masked slot. Backends model the `Denoiser` concept.

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/text.hpp"

namespace diffscore {

struct Target {
  std::size_t position = 0;
  TokenId token = 0;

  friend bool operator==(const Target&, const Target&) = default;
};

struct DenoiserQuery {
  std::vector<TokenId> context_ids;
  std::vector<TokenId> corrupted_ids;
  std::vector<Target> targets;  // sorted by position
};

struct PositionLogprob {
  std::size_t position = 0;
  double logprob = 0.0;  // natural log

  friend bool operator==(const PositionLogprob&, const PositionLogprob&) = default;
};

struct DenoiserResponse {
  std::vector<PositionLogprob> logprobs;  // aligned with the query's targets
};

template <class D>
concept Denoiser = requires(const D& d, const DenoiserQuery& q) {
  { d.vocabulary() } -> std::convertible_to<const Vocabulary&>;
  { d.query(q) } -> std::same_as<DenoiserResponse>;
};

template <class D>
concept BatchDenoiser = Denoiser<D> && requires(const D& d, std::span<const DenoiserQuery> qs) {
  { d.query_batch(qs) } -> std::same_as<std::vector<DenoiserResponse>>;
};

inline void validate_query(const DenoiserQuery& q, const Vocabulary& vocab) {
  const TokenId mask = vocab.mask_id();
  for (TokenId id : q.context_ids) {
    if (!vocab.is_real(id)) throw Error(ErrorKind::VocabMismatch, "context holds a non-vocabulary id");
  }
  std::size_t next_target = 0;
  for (std::size_t i = 0; i < q.corrupted_ids.size(); ++i) {
    TokenId id = q.corrupted_ids[i];
    if (id == mask) {
      if (next_target >= q.targets.size() || q.targets[next_target].position != i) {
        throw Error(ErrorKind::InvalidQuery, "masked position " + std::to_string(i) + " has no target");
      }
      if (!vocab.is_real(q.targets[next_target].token)) {
        throw Error(ErrorKind::VocabMismatch, "target token is not a vocabulary id");
      }
      ++next_target;
    } else if (!vocab.is_real(id)) {
      throw Error(ErrorKind::VocabMismatch, "corrupted sequence holds a non-vocabulary id");
    }
  }
  if (next_target != q.targets.size()) {
    throw Error(ErrorKind::InvalidQuery, "target at an unmasked or out-of-range position");
  }
}

// Throws ProtocolViolation; the same contract is enforced on every backend.
inline void validate_response(const DenoiserQuery& q, const DenoiserResponse& r, const std::string& raw = {}) {
  if (r.logprobs.size() != q.targets.size()) {
    throw ProtocolError("response has " + std::to_string(r.logprobs.size()) + " positions, expected " +
                            std::to_string(q.targets.size()),
                        raw);
  }
  for (std::size_t i = 0; i < q.targets.size(); ++i) {
    const auto& lp = r.logprobs[i];
    if (lp.position != q.targets[i].position) {
      throw ProtocolError("missing logprob for position " + std::to_string(q.targets[i].position), raw);
    }
    if (!std::isfinite(lp.logprob) || lp.logprob > 0.0) {
      throw ProtocolError("logprob at position " + std::to_string(lp.position) + " is not finite and <= 0", raw);
    }
  }
}

// Routes a batch through query_batch when the backend has one.
template <Denoiser D>
std::vector<DenoiserResponse> query_all(const D& d, std::span<const DenoiserQuery> qs) {
  if constexpr (BatchDenoiser<D>) {
    return d.query_batch(qs);
  } else {
    std::vector<DenoiserResponse> out;
    out.reserve(qs.size());
    for (const auto& q : qs) out.push_back(d.query(q));
    return out;
  }
}

// Constant oracle: every target gets -log |V|.
class UniformDenoiser {
 public:
  explicit UniformDenoiser(Vocabulary vocab)
      : vocab_(std::move(vocab)), logprob_(-std::log(static_cast<double>(vocab_.size()))) {}

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  double logprob() const noexcept { return logprob_; }

  DenoiserResponse query(const DenoiserQuery& q) const {
    validate_query(q, vocab_);
    DenoiserResponse r;
    r.logprobs.reserve(q.targets.size());
    for (const auto& t : q.targets) r.logprobs.push_back({t.position, logprob_});
    return r;
  }

 private:
  Vocabulary vocab_;
  double logprob_;
};

inline DenoiserResponse query_uniform(const Vocabulary& vocab, const DenoiserQuery& q) {
  return UniformDenoiser(vocab).query(q);
}

}  // namespace diffscore
