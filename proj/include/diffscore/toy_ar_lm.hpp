#pragma once

// Left-to-right bigram LM with add-alpha smoothing. Used as the
// autoregressive comparison baseline: a token only ever sees its predecessor.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/text.hpp"
#include "diffscore/toy_masked_lm.hpp"

namespace diffscore {

struct ARLMCounts {
  CountTable bigram;   // (previous, token); previous may be begin_id()
  CountTable context;  // previous totals

  friend bool operator==(const ARLMCounts&, const ARLMCounts&) = default;
};

class ToyARLM {
 public:
  ToyARLM(Vocabulary vocab, ARLMCounts counts, double alpha_add = 1.0)
      : vocab_(std::make_shared<const Vocabulary>(std::move(vocab))),
        counts_(std::make_shared<const ARLMCounts>(std::move(counts))),
        alpha_(alpha_add) {
    if (!(alpha_ > 0.0)) throw Error(ErrorKind::BadLambda, "smoothing constant must be positive");
  }

  const Vocabulary& vocabulary() const noexcept { return *vocab_; }
  const ARLMCounts& counts() const noexcept { return *counts_; }
  double alpha_add() const noexcept { return alpha_; }

  double probability(TokenId token, TokenId previous) const {
    const double V = static_cast<double>(vocab_->size());
    double num = static_cast<double>(detail::lookup(counts_->bigram, detail::pack2(previous, token))) + alpha_;
    double den = static_cast<double>(detail::lookup(counts_->context, previous)) + alpha_ * V;
    return num / den;
  }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::shared_ptr<const ARLMCounts> counts_;
  double alpha_;
};

inline ToyARLM train_toy_ar_lm(std::span<const TokenSequence> corpus, const Vocabulary& vocab, double alpha_add = 1.0) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "toy AR LM needs a non-empty corpus");
  ARLMCounts c;
  for (const auto& seq : corpus) {
    if (!is_clean(seq, vocab)) throw Error(ErrorKind::VocabMismatch, "training sequence holds non-vocabulary ids");
    TokenId prev = vocab.begin_id();
    for (TokenId v : seq.ids) {
      ++c.bigram[detail::pack2(prev, v)];
      ++c.context[prev];
      prev = v;
    }
  }
  return ToyARLM(vocab, std::move(c), alpha_add);
}

// log p(seq[n] | seq[n-1]); position 0 is conditioned on the begin sentinel,
// or on the last context token when a context is given.
inline std::vector<double> ar_sequence_logprobs(const ToyARLM& model, const TokenSequence& seq,
                                                const TokenSequence* context = nullptr) {
  const Vocabulary& vocab = model.vocabulary();
  if (!is_clean(seq, vocab)) throw Error(ErrorKind::VocabMismatch, "sequence holds non-vocabulary ids");
  if (context && !is_clean(*context, vocab)) throw Error(ErrorKind::VocabMismatch, "context holds non-vocabulary ids");
  TokenId prev = (context && !context->empty()) ? context->ids.back() : vocab.begin_id();
  std::vector<double> out;
  out.reserve(seq.size());
  for (TokenId v : seq.ids) {
    out.push_back(std::log(std::min(model.probability(v, prev), 1.0)));
    prev = v;
  }
  return out;
}

}  // namespace diffscore
