#pragma once

// Shared plumbing for the diffscore command-line tool: exit codes, backend
// construction, option resolution and output helpers.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "diffscore/diffscore.hpp"

namespace cli {

namespace ds = diffscore;
using ds::Json;

enum ExitCode : int {
  kOk = 0,
  kRecordErrors = 2,
  kUsage = 64,
  kData = 65,
  kUnavailable = 69,
  kInternal = 70,
};

// Thrown for flag combinations that cannot be honoured.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Remote endpoint could not be reached or failed its health check.
struct UnavailableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int exit_code_for(ds::ErrorKind kind) {
  using K = ds::ErrorKind;
  switch (kind) {
    case K::InvalidConfig:
    case K::ZeroTimesteps:
    case K::BadLambda:
      return kUsage;
    case K::ConnectionFailed:
    case K::Timeout:
      return kUnavailable;
    case K::InvalidQuery:
      return kInternal;
    default:
      return kData;
  }
}

inline bool is_transport(ds::ErrorKind kind) {
  return kind == ds::ErrorKind::ConnectionFailed || kind == ds::ErrorKind::Timeout;
}

struct RunOptions {
  std::string backend = "toy-masked";
  std::string model;
  std::string endpoint;
  std::string config;
  std::string preset;
  std::size_t K = 20;
  std::size_t T = 10;
  std::string weighting = "mlp";
  std::string masking = "random";
  double alpha = 0.5;
  bool alpha_given = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out;
  std::string sentinel;
  std::string stopwords;
  bool independent_bi = false;
  std::size_t timeout_ms = 30000;
};

// ---------------------------------------------------------------------------
// Backends

class Backend {
 public:
  using Masked = std::variant<ds::ToyMaskedLM, ds::UniformDenoiser, ds::RemoteDenoiser>;

  std::string name;
  std::optional<Masked> masked;
  std::optional<ds::ToyARLM> ar;

  const ds::Vocabulary& vocabulary() const {
    if (ar) return ar->vocabulary();
    return std::visit([](const auto& d) -> const ds::Vocabulary& { return d.vocabulary(); }, *masked);
  }

  template <class Fn>
  decltype(auto) visit_masked(Fn&& fn) const {
    return std::visit(std::forward<Fn>(fn), *masked);
  }
};

inline ds::SentinelPolicy parse_sentinel(const std::string& s) {
  return s == "bridge" ? ds::SentinelPolicy::bridge : ds::SentinelPolicy::barrier;
}

inline const char* to_string(ds::SentinelPolicy p) { return p == ds::SentinelPolicy::bridge ? "bridge" : "barrier"; }

// `fallback_texts` supply a vocabulary for uniform/remote backends when no
// model file is given.
inline Backend make_backend(const RunOptions& opt, const std::vector<std::string>& fallback_texts) {
  Backend b;
  b.name = opt.backend;
  const bool toy = opt.backend == "toy-masked" || opt.backend == "toy-ar";
  if (toy && opt.model.empty()) throw UsageError("--backend " + opt.backend + " requires --model");
  if (opt.backend == "remote" && opt.endpoint.empty()) throw UsageError("--backend remote requires --endpoint");
  if (opt.backend != "remote" && !opt.endpoint.empty()) throw UsageError("--endpoint is only valid with --backend remote");
  if (opt.backend != "toy-masked" && !opt.sentinel.empty()) throw UsageError("--sentinel is only valid with --backend toy-masked");

  std::optional<ds::ToyModel> model;
  if (!opt.model.empty()) model = ds::load_model(opt.model);

  auto model_vocab = [&]() -> ds::Vocabulary {
    if (model) return std::visit([](const auto& m) { return m.vocabulary(); }, *model);
    return ds::build_vocabulary(fallback_texts, ds::TokenizerRule::whitespace);
  };

  if (opt.backend == "toy-masked") {
    const auto* m = std::get_if<ds::ToyMaskedLM>(&*model);
    if (!m) throw ds::Error(ds::ErrorKind::BadModelFile, opt.model + " is not a masked toy model");
    b.masked = opt.sentinel.empty() ? *m : m->with_policy(parse_sentinel(opt.sentinel));
  } else if (opt.backend == "toy-ar") {
    const auto* m = std::get_if<ds::ToyARLM>(&*model);
    if (!m) throw ds::Error(ds::ErrorKind::BadModelFile, opt.model + " is not an autoregressive toy model");
    b.ar = *m;
  } else if (opt.backend == "uniform") {
    b.masked = ds::UniformDenoiser(model_vocab());
  } else if (opt.backend == "remote") {
    ds::RemoteEndpoint ep = ds::RemoteEndpoint::parse(opt.endpoint);
    ep.timeout = std::chrono::milliseconds(opt.timeout_ms);
    ds::RemoteDenoiser remote(model_vocab(), ep);
    try {
      remote.health();
    } catch (const ds::Error& e) {
      throw UnavailableError(std::string("remote backend unavailable: ") + e.what());
    }
    b.masked = std::move(remote);
  } else {
    throw UsageError("unknown backend " + opt.backend);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Configuration

inline ds::EstimatorConfig estimator_config(const RunOptions& opt) {
  ds::EstimatorConfig cfg;
  cfg.K = opt.K;
  cfg.T = opt.T;
  cfg.weighting = opt.weighting == "elbo" ? ds::Weighting::elbo : ds::Weighting::mlp;
  cfg.strategy = opt.masking == "content"  ? ds::MaskingStrategy::content
                 : opt.masking == "entity" ? ds::MaskingStrategy::entity
                                           : ds::MaskingStrategy::random;
  cfg.alpha_bi = opt.alpha;
  cfg.seed = opt.seed;
  if (!opt.stopwords.empty()) {
    cfg.stopwords = std::make_shared<const std::set<std::string>>(ds::load_stopwords(opt.stopwords));
  }
  ds::validate_config(cfg);
  return cfg;
}

inline ds::ScoringConfig parse_scoring(const std::string& s) {
  if (s == "mar") return ds::ScoringConfig::mar;
  if (s == "cond") return ds::ScoringConfig::cond;
  if (s == "rev") return ds::ScoringConfig::rev;
  if (s == "bi") return ds::ScoringConfig::bi;
  if (s == "pmi") return ds::ScoringConfig::pmi;
  if (s == "profile") return ds::ScoringConfig::profile;
  throw UsageError("unknown scoring configuration " + s);
}

struct Resolved {
  ds::ScoringConfig scoring = ds::ScoringConfig::mar;
  bool reference_source = false;  // use the record's "reference" field as the source when present
  bool profile_with_source = false;
};

// Presets map a quality dimension to a scoring configuration.
inline Resolved resolve_scoring(RunOptions& opt) {
  Resolved r;
  if (opt.preset.empty()) {
    r.scoring = parse_scoring(opt.config.empty() ? "mar" : opt.config);
    return r;
  }
  std::string forced;
  if (opt.preset == "mt-adequacy") {
    forced = "cond";
    r.reference_source = true;
  } else if (opt.preset == "sum-faithfulness") {
    forced = "cond";
  } else if (opt.preset == "sum-coverage") {
    forced = "rev";
  } else if (opt.preset == "sum-fluency") {
    forced = "mar";
  } else if (opt.preset == "sum-holistic" || opt.preset == "d2t") {
    forced = "bi";
    if (opt.alpha_given && opt.alpha != 0.5) throw UsageError("--preset " + opt.preset + " fixes --alpha 0.5");
    opt.alpha = 0.5;
  } else {
    throw UsageError("unknown preset " + opt.preset);
  }
  if (!opt.config.empty() && opt.config != forced) {
    throw UsageError("--preset " + opt.preset + " implies --config " + forced + ", not " + opt.config);
  }
  r.scoring = parse_scoring(forced);
  return r;
}

// Echoed into every output so results carry their provenance. Thread count
// and output paths are left out: they do not affect results.
inline Json config_echo(const RunOptions& opt, const Backend* backend, const ds::EstimatorConfig& cfg) {
  Json j = ds::config_to_json(cfg);
  j["schema_version"] = 1;
  j["backend"] = opt.backend;
  if (!opt.model.empty()) j["model"] = opt.model;
  if (!opt.endpoint.empty()) j["endpoint"] = opt.endpoint;
  if (!opt.stopwords.empty()) j["stopwords"] = opt.stopwords;
  if (backend && backend->masked) {
    if (const auto* m = std::get_if<ds::ToyMaskedLM>(&*backend->masked)) j["sentinel"] = to_string(m->policy());
  }
  if (backend) j["vocab_size"] = backend->vocabulary().size();
  return j;
}

// ---------------------------------------------------------------------------
// Input and output

inline std::vector<std::string> read_text_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ds::Error(ds::ErrorKind::IoError, "cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

inline void emit_json(const Json& doc, const std::string& out) {
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    ds::write_json_file(out, doc);
  }
}

inline void emit_lines(const std::vector<Json>& lines, const std::string& out) {
  if (out.empty()) {
    for (const auto& l : lines) std::cout << l.dump() << '\n';
  } else {
    ds::write_lines_atomically(out, lines);
  }
}

inline void emit_tsv(const std::string& text, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ds::Error(ds::ErrorKind::IoError, "cannot write " + tmp);
    out << text;
    if (!out) throw ds::Error(ds::ErrorKind::IoError, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Json error_object(const std::string& id, const ds::Error& e) {
  Json err = {{"kind", std::string(ds::to_string(e.kind()))}, {"message", e.what()}};
  if (const auto* pe = dynamic_cast<const ds::ProtocolError*>(&e)) err["payload"] = pe->payload();
  return {{"id", id}, {"error", std::move(err)}};
}

inline Json nullable(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json nullable(const std::optional<double>& x) { return x ? nullable(*x) : Json(nullptr); }

inline Json to_json(const ds::CorrelationReport& r) {
  return {{"statistic", ds::to_string(r.statistic)},
          {"value", r.defined ? nullable(r.value) : Json(nullptr)},
          {"defined", r.defined},
          {"n", r.n},
          {"ci_low", nullable(r.ci_low)},
          {"ci_high", nullable(r.ci_high)}};
}

}  // namespace cli
