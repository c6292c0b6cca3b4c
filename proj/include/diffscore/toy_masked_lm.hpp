#pragma once

// Count-based bidirectional masked LM. A masked slot is predicted from its
// nearest unmasked neighbours on each side by interpolating add-alpha
// smoothed trigram (left, token, right), left bigram, right bigram and
// unigram estimates. Positions are predicted independently.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "diffscore/denoiser.hpp"
#include "diffscore/error.hpp"
#include "diffscore/text.hpp"

namespace diffscore {

// Whether the last context token may act as the left neighbour of the
// candidate when nothing to its left is visible.
enum class SentinelPolicy { barrier, bridge };

struct InterpolationWeights {
  double trigram = 0.5;
  double left_bigram = 0.2;
  double right_bigram = 0.2;
  double unigram = 0.1;

  std::array<double, 4> as_array() const { return {trigram, left_bigram, right_bigram, unigram}; }
};

inline void check_weights(const InterpolationWeights& w) {
  auto a = w.as_array();
  for (double x : a) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(ErrorKind::BadLambda, "interpolation weights must be positive");
  }
  double sum = a[0] + a[1] + a[2] + a[3];
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::BadLambda, "interpolation weights must sum to 1");
}

namespace detail {

inline constexpr unsigned kIdBits = 21;

constexpr std::uint64_t pack2(TokenId a, TokenId b) { return (std::uint64_t{a} << kIdBits) | b; }
constexpr std::uint64_t pack3(TokenId a, TokenId b, TokenId c) {
  return (std::uint64_t{a} << (2 * kIdBits)) | (std::uint64_t{b} << kIdBits) | c;
}

template <class Map>
std::uint64_t lookup(const Map& m, std::uint64_t key) {
  auto it = m.find(key);
  return it == m.end() ? 0 : it->second;
}

}  // namespace detail

using CountTable = std::unordered_map<std::uint64_t, std::uint64_t>;

// Raw statistics. Sentinels use Vocabulary::begin_id()/end_id().
struct MaskedLMCounts {
  CountTable trigram;        // (left, token, right)
  CountTable trigram_ctx;    // (left, right) totals
  CountTable left_bigram;    // (left, token)
  CountTable left_ctx;       // left totals
  CountTable right_bigram;   // (token, right)
  CountTable right_ctx;      // right totals
  std::vector<std::uint64_t> unigram;
  std::uint64_t total = 0;

  friend bool operator==(const MaskedLMCounts&, const MaskedLMCounts&) = default;
};

class ToyMaskedLM {
 public:
  ToyMaskedLM(Vocabulary vocab, MaskedLMCounts counts, InterpolationWeights lambda, double alpha_add,
              SentinelPolicy policy = SentinelPolicy::barrier)
      : vocab_(std::make_shared<const Vocabulary>(std::move(vocab))),
        counts_(std::make_shared<const MaskedLMCounts>(std::move(counts))),
        lambda_(lambda),
        alpha_(alpha_add),
        policy_(policy) {
    check_weights(lambda_);
    lambda_sum_ = lambda_.trigram + lambda_.left_bigram + lambda_.right_bigram + lambda_.unigram;
    if (!(alpha_ > 0.0)) throw Error(ErrorKind::BadLambda, "smoothing constant must be positive");
    if (vocab_->size() >= (std::size_t{1} << detail::kIdBits) - 3) {
      throw Error(ErrorKind::VocabMismatch, "vocabulary too large for the count tables");
    }
    if (counts_->unigram.size() != vocab_->size()) {
      throw Error(ErrorKind::VocabMismatch, "unigram table size differs from vocabulary size");
    }
  }

  const Vocabulary& vocabulary() const noexcept { return *vocab_; }
  const MaskedLMCounts& counts() const noexcept { return *counts_; }
  const InterpolationWeights& lambda() const noexcept { return lambda_; }
  double alpha_add() const noexcept { return alpha_; }
  SentinelPolicy policy() const noexcept { return policy_; }

  // Shares the count tables.
  ToyMaskedLM with_policy(SentinelPolicy policy) const {
    ToyMaskedLM copy = *this;
    copy.policy_ = policy;
    return copy;
  }

  // Interpolated p(token | left, right); left may be begin_id(), right end_id().
  double probability(TokenId token, TokenId left, TokenId right) const {
    const auto& c = *counts_;
    const double V = static_cast<double>(vocab_->size());
    auto smoothed = [&](std::uint64_t num, std::uint64_t den) {
      return (static_cast<double>(num) + alpha_) / (static_cast<double>(den) + alpha_ * V);
    };
    double p3 = smoothed(detail::lookup(c.trigram, detail::pack3(left, token, right)),
                         detail::lookup(c.trigram_ctx, detail::pack2(left, right)));
    double p2l = smoothed(detail::lookup(c.left_bigram, detail::pack2(left, token)),
                          detail::lookup(c.left_ctx, left));
    double p2r = smoothed(detail::lookup(c.right_bigram, detail::pack2(token, right)),
                          detail::lookup(c.right_ctx, right));
    double p1 = smoothed(c.unigram[token], c.total);
    // Divided by the realized weight sum so that certain components mix to
    // exactly 1.
    return (lambda_.trigram * p3 + lambda_.left_bigram * p2l + lambda_.right_bigram * p2r + lambda_.unigram * p1) /
           lambda_sum_;
  }

  DenoiserResponse query(const DenoiserQuery& q) const {
    validate_query(q, *vocab_);
    const TokenId mask = vocab_->mask_id();
    const auto& ids = q.corrupted_ids;
    const std::size_t n = ids.size();

    TokenId fallback_left = vocab_->begin_id();
    if (policy_ == SentinelPolicy::bridge && !q.context_ids.empty()) fallback_left = q.context_ids.back();

    std::vector<TokenId> left(n), right(n);
    TokenId last = fallback_left;
    for (std::size_t i = 0; i < n; ++i) {
      left[i] = last;
      if (ids[i] != mask) last = ids[i];
    }
    last = vocab_->end_id();
    for (std::size_t i = n; i-- > 0;) {
      right[i] = last;
      if (ids[i] != mask) last = ids[i];
    }

    DenoiserResponse r;
    r.logprobs.reserve(q.targets.size());
    for (const auto& t : q.targets) {
      double p = probability(t.token, left[t.position], right[t.position]);
      r.logprobs.push_back({t.position, std::log(std::min(p, 1.0))});
    }
    return r;
  }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::shared_ptr<const MaskedLMCounts> counts_;
  InterpolationWeights lambda_;
  double alpha_;
  SentinelPolicy policy_;
  double lambda_sum_ = 1.0;
};

inline ToyMaskedLM train_toy_masked_lm(std::span<const TokenSequence> corpus, const Vocabulary& vocab,
                                       InterpolationWeights lambda = {}, double alpha_add = 1.0,
                                       SentinelPolicy policy = SentinelPolicy::barrier) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "toy masked LM needs a non-empty corpus");
  check_weights(lambda);
  MaskedLMCounts c;
  c.unigram.assign(vocab.size(), 0);
  for (const auto& seq : corpus) {
    if (!is_clean(seq, vocab)) throw Error(ErrorKind::VocabMismatch, "training sequence holds non-vocabulary ids");
    const std::size_t n = seq.size();
    for (std::size_t i = 0; i < n; ++i) {
      TokenId l = i > 0 ? seq.ids[i - 1] : vocab.begin_id();
      TokenId v = seq.ids[i];
      TokenId r = i + 1 < n ? seq.ids[i + 1] : vocab.end_id();
      ++c.trigram[detail::pack3(l, v, r)];
      ++c.trigram_ctx[detail::pack2(l, r)];
      ++c.left_bigram[detail::pack2(l, v)];
      ++c.left_ctx[l];
      ++c.right_bigram[detail::pack2(v, r)];
      ++c.right_ctx[r];
      ++c.unigram[v];
      ++c.total;
    }
  }
  return ToyMaskedLM(vocab, std::move(c), lambda, alpha_add, policy);
}

inline DenoiserResponse query_masked(const ToyMaskedLM& model, const DenoiserQuery& q) { return model.query(q); }

}  // namespace diffscore
