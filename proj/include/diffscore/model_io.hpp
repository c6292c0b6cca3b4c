#pragma once

// Binary persistence for the toy backends. Layout, all integers little-endian:
//
//   "DSTOY1"                      magic, 6 bytes
//   u8  kind                      1 = masked LM, 2 = AR LM
//   u8  tokenizer rule            0 = whitespace, 1 = whitespace_lower
//   u32 n, then n x (u32 len, bytes)            vocabulary in id order
//   masked: f64 x 4 lambda, f64 alpha, u8 sentinel policy,
//           6 tables (trigram, trigram_ctx, left_bigram, left_ctx,
//           right_bigram, right_ctx), unigram table, u64 total
//   ar:     f64 alpha, 2 tables (bigram, context)
//
// A table is u64 n followed by n x (u64 key, u64 count) sorted by key; the
// unigram table is u64 n followed by n x u64. Sorting keeps files
// byte-identical for identical corpora.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "diffscore/error.hpp"
#include "diffscore/toy_ar_lm.hpp"
#include "diffscore/toy_masked_lm.hpp"

namespace diffscore {

inline constexpr char kModelMagic[] = "DSTOY1";

using ToyModel = std::variant<ToyMaskedLM, ToyARLM>;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { buf_.append(s); }
  void table(const CountTable& t) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> rows(t.begin(), t.end());
    std::sort(rows.begin(), rows.end());
    u64(rows.size());
    for (auto [k, c] : rows) {
      u64(k);
      u64(c);
    }
  }
  const std::string& data() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(p[i])} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(p[i])} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) { return std::string(take(n), n); }
  CountTable table() {
    std::uint64_t n = u64();
    if (n > remaining() / 16) fail("table larger than file");
    CountTable t;
    t.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t k = u64();
      t[k] = u64();
    }
    return t;
  }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  [[noreturn]] static void fail(const std::string& why) { throw Error(ErrorKind::BadModelFile, why); }

 private:
  const char* take(std::size_t n) {
    if (n > remaining()) fail("unexpected end of model file");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

inline void write_vocab(ByteWriter& w, const Vocabulary& v) {
  w.u8(v.rule() == TokenizerRule::whitespace_lower ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (const auto& tok : v.tokens()) {
    w.u32(static_cast<std::uint32_t>(tok.size()));
    w.bytes(tok);
  }
}

inline Vocabulary read_vocab(ByteReader& r) {
  std::uint8_t rule = r.u8();
  if (rule > 1) ByteReader::fail("unknown tokenizer rule");
  std::uint32_t n = r.u32();
  std::vector<std::string> tokens;
  tokens.reserve(std::min<std::size_t>(n, r.remaining() / 4));
  for (std::uint32_t i = 0; i < n; ++i) tokens.push_back(r.bytes(r.u32()));
  return Vocabulary(std::move(tokens), rule ? TokenizerRule::whitespace_lower : TokenizerRule::whitespace);
}

}  // namespace detail

inline std::string serialize_model(const ToyModel& model) {
  detail::ByteWriter w;
  w.bytes(std::string(kModelMagic, 6));
  if (const auto* m = std::get_if<ToyMaskedLM>(&model)) {
    w.u8(1);
    detail::write_vocab(w, m->vocabulary());
    for (double x : m->lambda().as_array()) w.f64(x);
    w.f64(m->alpha_add());
    w.u8(m->policy() == SentinelPolicy::bridge ? 1 : 0);
    const auto& c = m->counts();
    for (const auto* t : {&c.trigram, &c.trigram_ctx, &c.left_bigram, &c.left_ctx, &c.right_bigram, &c.right_ctx}) {
      w.table(*t);
    }
    w.u64(c.unigram.size());
    for (auto u : c.unigram) w.u64(u);
    w.u64(c.total);
  } else {
    const auto& a = std::get<ToyARLM>(model);
    w.u8(2);
    detail::write_vocab(w, a.vocabulary());
    w.f64(a.alpha_add());
    w.table(a.counts().bigram);
    w.table(a.counts().context);
  }
  return w.data();
}

inline ToyModel deserialize_model(std::string data) {
  detail::ByteReader r(std::move(data));
  if (r.remaining() < 6 || r.bytes(6) != std::string(kModelMagic, 6)) detail::ByteReader::fail("bad magic");
  std::uint8_t kind = r.u8();
  if (kind == 1) {
    Vocabulary vocab = detail::read_vocab(r);
    InterpolationWeights lambda;
    lambda.trigram = r.f64();
    lambda.left_bigram = r.f64();
    lambda.right_bigram = r.f64();
    lambda.unigram = r.f64();
    double alpha = r.f64();
    auto policy = r.u8() ? SentinelPolicy::bridge : SentinelPolicy::barrier;
    MaskedLMCounts c;
    for (auto* t : {&c.trigram, &c.trigram_ctx, &c.left_bigram, &c.left_ctx, &c.right_bigram, &c.right_ctx}) {
      *t = r.table();
    }
    std::uint64_t n = r.u64();
    if (n > r.remaining() / 8) detail::ByteReader::fail("unigram table larger than file");
    c.unigram.resize(n);
    for (auto& u : c.unigram) u = r.u64();
    c.total = r.u64();
    if (r.remaining() != 0) detail::ByteReader::fail("trailing bytes");
    return ToyMaskedLM(std::move(vocab), std::move(c), lambda, alpha, policy);
  }
  if (kind == 2) {
    Vocabulary vocab = detail::read_vocab(r);
    double alpha = r.f64();
    ARLMCounts c;
    c.bigram = r.table();
    c.context = r.table();
    if (r.remaining() != 0) detail::ByteReader::fail("trailing bytes");
    return ToyARLM(std::move(vocab), std::move(c), alpha);
  }
  detail::ByteReader::fail("unknown model kind " + std::to_string(kind));
}

inline void save_model(const ToyModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

inline ToyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(std::move(bytes));
}

}  // namespace diffscore
