#pragma once

// JSON-lines corpora and score dumps.
//
// Segment records:  {"id": str, "source": str, "candidate": str,
//                    "system": str?, "human": {dim: number}?, "split": str?}
// Pairwise records: {"id": str, "source": str, "better": str, "worse": str}
//
// Unknown keys are kept in `extras` and written back unchanged. Score dumps
// are one object per line with sorted keys and shortest round-trip floats, so
// identical inputs give byte-identical files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "diffscore/error.hpp"
#include "diffscore/estimator.hpp"

namespace diffscore {

using Json = nlohmann::json;

struct EvalRecord {
  std::string id;
  std::string source;
  std::string candidate;
  std::optional<std::string> system_id;
  std::map<std::string, double> human;
  std::optional<std::string> split;
  Json extras = Json::object();
};

struct PairRecord {
  std::string id;
  std::string source;
  std::string better;
  std::string worse;
  Json extras = Json::object();
};

enum class DatasetKind { segment, pairwise };

namespace detail {

[[noreturn]] inline void parse_fail(std::size_t line, const std::string& reason) {
  throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + reason);
}

inline std::string take_string(Json& obj, const char* key, std::size_t line, bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) parse_fail(line, std::string("missing field \"") + key + "\"");
    return {};
  }
  if (!it->is_string()) parse_fail(line, std::string("field \"") + key + "\" must be a string");
  std::string v = it->get<std::string>();
  obj.erase(it);
  return v;
}

// Calls on_object(json, line) for every non-blank line.
template <class Fn>
void for_each_json_line(const std::string& path, Fn&& on_object) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    Json obj;
    try {
      obj = Json::parse(text);
    } catch (const Json::parse_error& e) {
      parse_fail(line, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) parse_fail(line, "record must be a JSON object");
    on_object(obj, line);
  }
}

class IdRegistry {
 public:
  void add(const std::string& id, std::size_t line) {
    auto [it, inserted] = lines_.emplace(id, line);
    if (!inserted) {
      throw Error(ErrorKind::DuplicateId, "id \"" + id + "\" on lines " + std::to_string(it->second) + " and " +
                                              std::to_string(line));
    }
  }

 private:
  std::unordered_map<std::string, std::size_t> lines_;
};

}  // namespace detail

inline std::vector<EvalRecord> load_segment_dataset(const std::string& path) {
  std::vector<EvalRecord> out;
  detail::IdRegistry ids;
  detail::for_each_json_line(path, [&](Json& obj, std::size_t line) {
    EvalRecord r;
    r.id = detail::take_string(obj, "id", line);
    r.source = detail::take_string(obj, "source", line);
    r.candidate = detail::take_string(obj, "candidate", line);
    if (obj.contains("system")) r.system_id = detail::take_string(obj, "system", line);
    if (obj.contains("split")) r.split = detail::take_string(obj, "split", line);
    if (auto it = obj.find("human"); it != obj.end()) {
      if (!it->is_object()) detail::parse_fail(line, "field \"human\" must be an object");
      for (auto& [dim, v] : it->items()) {
        if (!v.is_number()) detail::parse_fail(line, "human score \"" + dim + "\" must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) detail::parse_fail(line, "human score \"" + dim + "\" must be finite");
        r.human[dim] = x;
      }
      obj.erase(it);
    }
    r.extras = std::move(obj);
    ids.add(r.id, line);
    out.push_back(std::move(r));
  });
  return out;
}

inline std::vector<PairRecord> load_pairwise_dataset(const std::string& path) {
  std::vector<PairRecord> out;
  detail::IdRegistry ids;
  detail::for_each_json_line(path, [&](Json& obj, std::size_t line) {
    PairRecord r;
    r.id = detail::take_string(obj, "id", line);
    r.source = detail::take_string(obj, "source", line);
    r.better = detail::take_string(obj, "better", line);
    r.worse = detail::take_string(obj, "worse", line);
    if (r.better == r.worse) detail::parse_fail(line, "\"better\" and \"worse\" are identical");
    r.extras = std::move(obj);
    ids.add(r.id, line);
    out.push_back(std::move(r));
  });
  return out;
}

inline Json to_json(const EvalRecord& r) {
  Json obj = r.extras.is_object() ? r.extras : Json::object();
  obj["id"] = r.id;
  obj["source"] = r.source;
  obj["candidate"] = r.candidate;
  if (r.system_id) obj["system"] = *r.system_id;
  if (r.split) obj["split"] = *r.split;
  if (!r.human.empty()) {
    Json h = Json::object();
    for (const auto& [k, v] : r.human) h[k] = v;
    obj["human"] = std::move(h);
  }
  return obj;
}

inline Json to_json(const PairRecord& r) {
  Json obj = r.extras.is_object() ? r.extras : Json::object();
  obj["id"] = r.id;
  obj["source"] = r.source;
  obj["better"] = r.better;
  obj["worse"] = r.worse;
  return obj;
}

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partial file.
inline void write_lines_atomically(const std::string& path, std::span<const Json> lines) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp);
    for (const auto& obj : lines) out << obj.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot move " + tmp + " to " + path + ": " + ec.message());
}

inline void write_json_file(const std::string& path, const Json& doc) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp);
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot move " + tmp + " to " + path + ": " + ec.message());
}

template <class Record>
void write_dataset(std::span<const Record> records, const std::string& path) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(to_json(r));
  write_lines_atomically(path, lines);
}

// Shortest round-trip decimal, e.g. 0.1 -> "0.1", 1.0 -> "1.0".
inline std::string format_double(double x) { return Json(x).dump(); }

inline Json config_to_json(const EstimatorConfig& cfg) {
  return {{"K", cfg.K},
          {"T", cfg.T},
          {"weighting", to_string(cfg.weighting)},
          {"masking", to_string(cfg.strategy)},
          {"alpha", cfg.alpha_bi},
          {"seed", cfg.seed},
          {"empty_pattern_rule", "nonempty_conditional"}};
}

struct ScoreLine {
  std::string id;
  double score = 0.0;
  std::vector<TimestepScore> per_timestep;
  Json config = Json::object();
  Json extra = Json::object();  // merged into the top-level object
};

inline Json to_json(const ScoreLine& s) {
  Json obj = s.extra.is_object() ? s.extra : Json::object();
  obj["id"] = s.id;
  obj["score"] = s.score;
  Json pt = Json::object();
  for (const auto& ts : s.per_timestep) pt[format_double(ts.t)] = ts.value;
  obj["per_timestep"] = std::move(pt);
  obj["config"] = s.config;
  return obj;
}

inline ScoreLine score_line(const std::string& id, const ScoreReport& report, Json config) {
  return {id, report.score, report.per_timestep, std::move(config), Json::object()};
}

inline void write_scores(std::span<const ScoreLine> lines, const std::string& path) {
  std::vector<Json> objs;
  objs.reserve(lines.size());
  for (const auto& l : lines) objs.push_back(to_json(l));
  write_lines_atomically(path, objs);
}

// Lines without a numeric "score" (per-record error objects) are skipped.
inline std::vector<ScoreLine> load_scores(const std::string& path) {
  std::vector<ScoreLine> out;
  detail::IdRegistry ids;
  detail::for_each_json_line(path, [&](Json& obj, std::size_t line) {
    ScoreLine s;
    s.id = detail::take_string(obj, "id", line);
    auto it = obj.find("score");
    if (it == obj.end() || !it->is_number()) return;
    s.score = it->get<double>();
    obj.erase(it);
    if (auto pt = obj.find("per_timestep"); pt != obj.end()) {
      if (!pt->is_object()) detail::parse_fail(line, "\"per_timestep\" must be an object");
      for (auto& [k, v] : pt->items()) {
        if (!v.is_number()) detail::parse_fail(line, "per_timestep values must be numbers");
        s.per_timestep.push_back({std::stod(k), v.get<double>(), 0});
      }
      std::sort(s.per_timestep.begin(), s.per_timestep.end(),
                [](const TimestepScore& a, const TimestepScore& b) { return a.t < b.t; });
      obj.erase(pt);
    }
    if (auto c = obj.find("config"); c != obj.end()) {
      s.config = *c;
      obj.erase(c);
    }
    s.extra = std::move(obj);
    ids.add(s.id, line);
    out.push_back(std::move(s));
  });
  return out;
}

}  // namespace diffscore
