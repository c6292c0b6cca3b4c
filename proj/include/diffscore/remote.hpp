#pragma once

// Client for the remote denoiser wire protocol.
//
//   POST /v1/logprobs
//     {"id": "...", "context": [tok...], "corrupted": [tok | "[M]"...],
//      "targets": {"<pos>": "tok", ...}}
//   -> 200 {"id": "...", "logprobs": {"<pos>": <number <= 0>, ...}}
//   GET /v1/health -> {"status": "ok", "vocab_size": N}
//
// Positions are decimal strings indexing `corrupted`. Anything other than a
// 200 with a conforming body is a ProtocolViolation.

#include <atomic>
#include <charconv>
#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "diffscore/denoiser.hpp"
#include "diffscore/error.hpp"
#include "diffscore/parallel.hpp"
#include "diffscore/text.hpp"

namespace diffscore {

struct RemoteEndpoint {
  std::string host = "127.0.0.1";
  int port = 8000;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 4;

  // Accepts "http://host:port" or "host:port".
  static RemoteEndpoint parse(const std::string& url) {
    std::string rest = url;
    const std::string scheme = "http://";
    if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
    while (!rest.empty() && rest.back() == '/') rest.pop_back();
    RemoteEndpoint ep;
    auto colon = rest.rfind(':');
    if (colon == std::string::npos) {
      ep.host = rest;
      ep.port = 80;
    } else {
      ep.host = rest.substr(0, colon);
      const std::string port = rest.substr(colon + 1);
      auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), ep.port);
      if (ec != std::errc{} || p != port.data() + port.size() || ep.port < 1 || ep.port > 65535) {
        throw Error(ErrorKind::InvalidConfig, "bad endpoint port in '" + url + "'");
      }
    }
    if (ep.host.empty()) throw Error(ErrorKind::InvalidConfig, "bad endpoint '" + url + "'");
    return ep;
  }
};

namespace detail {

inline void throw_transport(httplib::Error err, const RemoteEndpoint& ep) {
  const std::string where = ep.host + ":" + std::to_string(ep.port);
  if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
    throw Error(ErrorKind::Timeout, "request to " + where + " timed out or was cut off");
  }
  throw Error(ErrorKind::ConnectionFailed, where + ": " + httplib::to_string(err));
}

inline httplib::Client make_client(const RemoteEndpoint& ep) {
  httplib::Client cli(ep.host, ep.port);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}

}  // namespace detail

inline nlohmann::json encode_request(const DenoiserQuery& q, const Vocabulary& vocab, const std::string& id) {
  nlohmann::json context = nlohmann::json::array();
  for (TokenId t : q.context_ids) context.push_back(vocab.token(t));
  nlohmann::json corrupted = nlohmann::json::array();
  for (TokenId t : q.corrupted_ids) {
    corrupted.push_back(t == vocab.mask_id() ? std::string(kMaskSymbol) : vocab.token(t));
  }
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& t : q.targets) targets[std::to_string(t.position)] = vocab.token(t.token);
  return {{"id", id}, {"context", std::move(context)}, {"corrupted", std::move(corrupted)},
          {"targets", std::move(targets)}};
}

// Validates the body against the query; throws ProtocolError with the raw
// payload attached.
inline DenoiserResponse decode_response(const std::string& body, const DenoiserQuery& q, const std::string& id) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed response body: ") + e.what(), body);
  }
  if (!doc.is_object() || !doc.contains("id") || !doc["id"].is_string() || !doc.contains("logprobs") ||
      !doc["logprobs"].is_object()) {
    throw ProtocolError("response must be an object with string 'id' and object 'logprobs'", body);
  }
  if (doc["id"].get<std::string>() != id) throw ProtocolError("response id does not match request id", body);
  const auto& lps = doc["logprobs"];
  if (lps.size() != q.targets.size()) {
    throw ProtocolError("response has " + std::to_string(lps.size()) + " positions, expected " +
                            std::to_string(q.targets.size()),
                        body);
  }
  DenoiserResponse r;
  r.logprobs.reserve(q.targets.size());
  for (const auto& t : q.targets) {
    auto it = lps.find(std::to_string(t.position));
    if (it == lps.end()) throw ProtocolError("missing logprob for position " + std::to_string(t.position), body);
    if (!it->is_number()) throw ProtocolError("logprob for position " + std::to_string(t.position) + " is not a number", body);
    r.logprobs.push_back({t.position, it->get<double>()});
  }
  validate_response(q, r, body);
  return r;
}

class RemoteDenoiser {
 public:
  RemoteDenoiser(Vocabulary vocab, RemoteEndpoint endpoint)
      : vocab_(std::make_shared<const Vocabulary>(std::move(vocab))),
        endpoint_(std::move(endpoint)),
        counter_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

  const Vocabulary& vocabulary() const noexcept { return *vocab_; }
  const RemoteEndpoint& endpoint() const noexcept { return endpoint_; }

  // Returns the server's advertised vocabulary size.
  std::size_t health() const {
    auto cli = detail::make_client(endpoint_);
    auto res = cli.Get("/v1/health");
    if (!res) detail::throw_transport(res.error(), endpoint_);
    if (res->status != 200) throw ProtocolError("health check returned HTTP " + std::to_string(res->status), res->body);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("malformed health body", res->body);
    }
    if (!doc.is_object() || doc.value("status", "") != "ok" || !doc.contains("vocab_size") ||
        !doc["vocab_size"].is_number_unsigned()) {
      throw ProtocolError("health body must be {\"status\":\"ok\",\"vocab_size\":N}", res->body);
    }
    return doc["vocab_size"].get<std::size_t>();
  }

  DenoiserResponse query(const DenoiserQuery& q) const {
    auto cli = detail::make_client(endpoint_);
    return query_with(cli, q);
  }

  // Up to endpoint.max_in_flight concurrent requests; responses are matched
  // to queries by request id and returned in query order.
  std::vector<DenoiserResponse> query_batch(std::span<const DenoiserQuery> qs) const {
    std::vector<DenoiserResponse> out(qs.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(endpoint_.max_in_flight, qs.size()));
    const std::size_t per = (qs.size() + workers - 1) / std::max<std::size_t>(workers, 1);
    parallel_for(workers, workers, [&](std::size_t w) {
      auto cli = detail::make_client(endpoint_);
      for (std::size_t i = w * per; i < std::min(qs.size(), (w + 1) * per); ++i) out[i] = query_with(cli, qs[i]);
    });
    return out;
  }

 private:
  DenoiserResponse query_with(httplib::Client& cli, const DenoiserQuery& q) const {
    validate_query(q, *vocab_);
    const std::string id = "q" + std::to_string(counter_->fetch_add(1));
    const std::string body = encode_request(q, *vocab_, id).dump();
    auto res = cli.Post("/v1/logprobs", body, "application/json");
    if (!res) detail::throw_transport(res.error(), endpoint_);
    if (res->status != 200) throw ProtocolError("server returned HTTP " + std::to_string(res->status), res->body);
    return decode_response(res->body, q, id);
  }

  std::shared_ptr<const Vocabulary> vocab_;
  RemoteEndpoint endpoint_;
  std::shared_ptr<std::atomic<std::uint64_t>> counter_;
};

inline DenoiserResponse query_remote(const RemoteDenoiser& remote, const DenoiserQuery& q) { return remote.query(q); }

}  // namespace diffscore
