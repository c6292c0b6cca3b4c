#pragma once

// Whitespace tokenization, closed vocabularies and the integer sequence view
// every other module works on.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diffscore/error.hpp"

namespace diffscore {

using TokenId = std::uint32_t;

inline constexpr std::string_view kMaskSymbol = "[M]";

enum class TokenizerRule { whitespace, whitespace_lower };
enum class OovPolicy { error, skip };

inline std::vector<std::string> split_tokens(std::string_view text, TokenizerRule rule) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      std::string tok(text.substr(start, i - start));
      if (rule == TokenizerRule::whitespace_lower) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      }
      out.push_back(std::move(tok));
    }
  }
  return out;
}

// Real tokens occupy ids 0..size-1; the mask symbol is size. Two further ids
// past the mask are reserved for sequence boundary sentinels used by the
// count-based backends.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Accepts any non-empty list of distinct tokens. build_vocabulary() is the
  // user-facing constructor and additionally requires two or more tokens.
  explicit Vocabulary(std::vector<std::string> tokens,
                      TokenizerRule rule = TokenizerRule::whitespace)
      : tokens_(std::move(tokens)), rule_(rule) {
    if (tokens_.empty()) throw Error(ErrorKind::DegenerateVocabulary, "vocabulary has no tokens");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i] == kMaskSymbol) {
        throw Error(ErrorKind::DegenerateVocabulary, "the mask symbol cannot be a vocabulary token");
      }
      auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<TokenId>(i));
      if (!inserted) throw Error(ErrorKind::DegenerateVocabulary, "duplicate token '" + tokens_[i] + "'");
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId mask_id() const noexcept { return static_cast<TokenId>(tokens_.size()); }
  TokenId begin_id() const noexcept { return mask_id() + 1; }
  TokenId end_id() const noexcept { return mask_id() + 2; }
  TokenizerRule rule() const noexcept { return rule_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  bool is_real(TokenId id) const noexcept { return id < mask_id(); }

  const std::string& token(TokenId id) const {
    if (!is_real(id)) throw Error(ErrorKind::UnknownId, "id " + std::to_string(id) + " is not a real token");
    return tokens_[id];
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.rule_ == b.rule_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenizerRule rule_ = TokenizerRule::whitespace;
};

struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  std::span<const TokenId> view() const noexcept { return ids; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

inline bool is_clean(const TokenSequence& seq, const Vocabulary& vocab) {
  return std::all_of(seq.ids.begin(), seq.ids.end(), [&](TokenId id) { return vocab.is_real(id); });
}

inline Vocabulary build_vocabulary(std::span<const std::string> corpus, TokenizerRule rule) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot build a vocabulary from an empty corpus");
  std::vector<std::string> tokens;
  std::unordered_map<std::string, bool> seen;
  for (const auto& text : corpus) {
    for (auto& tok : split_tokens(text, rule)) {
      if (tok == kMaskSymbol) continue;
      if (seen.emplace(tok, true).second) tokens.push_back(std::move(tok));
    }
  }
  if (tokens.size() < 2) {
    throw Error(ErrorKind::DegenerateVocabulary,
                "corpus has " + std::to_string(tokens.size()) + " distinct token(s); need at least 2");
  }
  return Vocabulary(std::move(tokens), rule);
}

inline TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                              OovPolicy policy = OovPolicy::error) {
  TokenSequence seq;
  for (const auto& tok : split_tokens(text, vocab.rule())) {
    if (auto id = vocab.find(tok)) {
      seq.ids.push_back(*id);
    } else if (policy == OovPolicy::error) {
      throw Error(ErrorKind::OutOfVocabulary, tok);
    }
  }
  return seq;
}

inline std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out.push_back(' ');
    TokenId id = seq.ids[i];
    if (id == vocab.mask_id()) {
      out.append(kMaskSymbol);
    } else if (vocab.is_real(id)) {
      out.append(vocab.token(id));
    } else {
      throw Error(ErrorKind::UnknownId, "id " + std::to_string(id) + " exceeds the mask id");
    }
  }
  return out;
}

}  // namespace diffscore
