#pragma once

// Forward corruption process: each token is independently replaced by the
// mask symbol with probability t.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/rng.hpp"
#include "diffscore/text.hpp"

namespace diffscore {

struct MaskPattern {
  std::vector<std::size_t> positions;  // sorted, unique
  std::size_t source_len = 0;

  bool contains(std::size_t pos) const {
    return std::binary_search(positions.begin(), positions.end(), pos);
  }
  std::size_t size() const noexcept { return positions.size(); }

  friend bool operator==(const MaskPattern&, const MaskPattern&) = default;
};

struct TimestepGrid {
  std::vector<double> values;

  std::size_t count() const noexcept { return values.size(); }
  friend bool operator==(const TimestepGrid&, const TimestepGrid&) = default;
};

enum class MaskingStrategy { random, content, entity };
enum class TokenClass { function, content, entity };

struct TokenClassMap {
  std::vector<TokenClass> classes;
};

// Right endpoints k/T, so the last value is exactly 1.
inline TimestepGrid timestep_grid(std::size_t T) {
  if (T == 0) throw Error(ErrorKind::ZeroTimesteps, "timestep count must be at least 1");
  TimestepGrid grid;
  grid.values.reserve(T);
  for (std::size_t k = 1; k <= T; ++k) grid.values.push_back(static_cast<double>(k) / static_cast<double>(T));
  return grid;
}

namespace detail {

inline bool eligible(MaskingStrategy strategy, TokenClass cls) {
  switch (strategy) {
    case MaskingStrategy::random: return true;
    case MaskingStrategy::content: return cls != TokenClass::function;
    case MaskingStrategy::entity: return cls == TokenClass::entity;
  }
  return false;
}

}  // namespace detail

// Every returned pattern is non-empty. An empty independent draw is replaced
// by a draw from the distribution conditioned on at least one mask: the first
// masked eligible position j has P(j) proportional to t(1-t)^j, later ones are
// masked independently. The overall pattern law is then exactly the Bernoulli
// pattern law renormalized over non-empty patterns, which is what
// enumerate_patterns() weights by. As t -> 0 this masks exactly one position.
inline MaskPattern sample_mask(std::size_t seq_len, double t, MaskingStrategy strategy,
                               const TokenClassMap* class_map, std::uint64_t seed) {
  if (seq_len == 0) throw Error(ErrorKind::EmptyCandidate, "cannot mask an empty sequence");
  if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidConfig, "masking rate must lie in (0, 1]");
  if (strategy != MaskingStrategy::random) {
    if (class_map == nullptr) throw Error(ErrorKind::MissingClassMap, "content/entity masking needs a class map");
    if (class_map->classes.size() != seq_len) {
      throw Error(ErrorKind::LengthMismatch, "class map length differs from sequence length");
    }
  }

  std::vector<std::size_t> candidates;
  candidates.reserve(seq_len);
  for (std::size_t i = 0; i < seq_len; ++i) {
    if (strategy == MaskingStrategy::random || detail::eligible(strategy, class_map->classes[i])) {
      candidates.push_back(i);
    }
  }
  if (candidates.empty()) throw Error(ErrorKind::NoEligiblePositions, "no position of the requested class");

  Rng rng(seed);
  MaskPattern pattern{{}, seq_len};
  for (std::size_t pos : candidates) {
    if (rng.bernoulli(t)) pattern.positions.push_back(pos);
  }
  if (pattern.positions.empty()) {
    const double n = static_cast<double>(candidates.size());
    const double nonempty = -std::expm1(n * std::log1p(-t));
    const double u = rng.uniform();
    auto first = static_cast<std::size_t>(std::floor(std::log1p(-u * nonempty) / std::log1p(-t)));
    first = std::min(first, candidates.size() - 1);
    pattern.positions.push_back(candidates[first]);
    for (std::size_t i = first + 1; i < candidates.size(); ++i) {
      if (rng.bernoulli(t)) pattern.positions.push_back(candidates[i]);
    }
  }
  return pattern;
}

inline TokenSequence apply_mask(const TokenSequence& seq, const MaskPattern& pattern, const Vocabulary& vocab) {
  if (pattern.source_len != seq.size()) {
    throw Error(ErrorKind::LengthMismatch, "pattern length " + std::to_string(pattern.source_len) +
                                               " vs sequence length " + std::to_string(seq.size()));
  }
  TokenSequence out = seq;
  for (std::size_t pos : pattern.positions) {
    if (pos >= out.size()) throw Error(ErrorKind::LengthMismatch, "mask position out of range");
    out.ids[pos] = vocab.mask_id();
  }
  return out;
}

inline constexpr std::size_t kMaxEnumerationLength = 20;

struct WeightedPattern {
  MaskPattern pattern;
  double probability = 0.0;
};

// Probability of a non-empty pattern with m of L positions masked, conditioned
// on the pattern being non-empty.
inline double conditional_pattern_probability(std::size_t L, std::size_t m, double t) {
  if (t >= 1.0) return m == L ? 1.0 : 0.0;
  double nonempty = -std::expm1(static_cast<double>(L) * std::log1p(-t));
  return std::pow(t, static_cast<double>(m)) * std::pow(1.0 - t, static_cast<double>(L - m)) / nonempty;
}

inline std::vector<WeightedPattern> enumerate_patterns(std::size_t seq_len, double t) {
  if (seq_len > kMaxEnumerationLength) {
    throw Error(ErrorKind::SequenceTooLong, "exhaustive enumeration is limited to " +
                                                std::to_string(kMaxEnumerationLength) + " positions");
  }
  if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidConfig, "masking rate must lie in (0, 1]");
  std::vector<WeightedPattern> out;
  if (seq_len == 0) return out;
  const std::uint32_t full = (1u << seq_len);
  out.reserve(full - 1);
  for (std::uint32_t bits = 1; bits < full; ++bits) {
    WeightedPattern wp;
    wp.pattern.source_len = seq_len;
    for (std::size_t i = 0; i < seq_len; ++i) {
      if (bits & (1u << i)) wp.pattern.positions.push_back(i);
    }
    wp.probability = conditional_pattern_probability(seq_len, wp.pattern.size(), t);
    out.push_back(std::move(wp));
  }
  return out;
}

// function: stopword; entity: capitalized non-stopword; content: the rest.
inline TokenClassMap classify_tokens(const TokenSequence& seq, const Vocabulary& vocab,
                                     const std::set<std::string>& stopwords) {
  TokenClassMap map;
  map.classes.reserve(seq.size());
  for (TokenId id : seq.ids) {
    const std::string& tok = vocab.token(id);
    if (stopwords.count(tok)) {
      map.classes.push_back(TokenClass::function);
    } else if (!tok.empty() && std::isupper(static_cast<unsigned char>(tok.front()))) {
      map.classes.push_back(TokenClass::entity);
    } else {
      map.classes.push_back(TokenClass::content);
    }
  }
  return map;
}

// One token per line; blank lines ignored, trailing CR stripped.
inline std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open stopword file " + path);
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = split_tokens(line, TokenizerRule::whitespace);
    if (!toks.empty()) words.insert(toks.front());
  }
  return words;
}

}  // namespace diffscore
