// diffscore: batch scoring, diagnostics, adversarial construction,
// meta-evaluation and toy-model training from the command line.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cli_support.hpp"

namespace {

using namespace cli;

// ---------------------------------------------------------------------------
// Flag groups

void add_estimator_flags(CLI::App* app, RunOptions& o) {
  app->add_option("--k", o.K, "Monte-Carlo samples per score")->capture_default_str();
  app->add_option("--timesteps", o.T, "Masking-rate grid size T (grid k/T, k=1..T)")->capture_default_str();
  app->add_option("--weighting", o.weighting, "Sample weighting")
      ->check(CLI::IsMember({"mlp", "elbo"}))
      ->capture_default_str();
  app->add_option("--masking", o.masking, "Which positions may be masked")
      ->check(CLI::IsMember({"random", "content", "entity"}))
      ->capture_default_str();
  app->add_option("--stopwords", o.stopwords, "Stopword file (one per line) for content/entity masking");
}

void add_backend_flags(CLI::App* app, RunOptions& o) {
  app->add_option("--backend", o.backend, "Token-probability backend")
      ->check(CLI::IsMember({"toy-masked", "toy-ar", "uniform", "remote"}))
      ->capture_default_str();
  app->add_option("--model", o.model, "Toy model file (vocabulary source for uniform/remote)");
  app->add_option("--endpoint", o.endpoint, "Remote denoiser URL, e.g. http://127.0.0.1:8000");
  app->add_option("--timeout-ms", o.timeout_ms, "Remote request timeout in milliseconds")->capture_default_str();
  app->add_option("--sentinel", o.sentinel, "Override the toy masked model's boundary policy")
      ->check(CLI::IsMember({"barrier", "bridge"}));
}

void add_common_flags(CLI::App* app, RunOptions& o) {
  app->add_option("--seed", o.seed, "Base random seed")->capture_default_str();
  app->add_option("--jobs", o.jobs, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--out", o.out, "Output path (stdout when omitted)");
}

// ---------------------------------------------------------------------------
// Scoring

struct ScoreItem {
  std::string id;
  std::string source;
  std::string candidate;
};

struct ScoreOptions {
  std::string dataset;
  std::string kind = "segment";
  std::string weights;  // learned profile weights
};

std::vector<std::string> texts_of(const std::vector<ScoreItem>& items) {
  std::vector<std::string> texts;
  for (const auto& it : items) {
    texts.push_back(it.source);
    texts.push_back(it.candidate);
  }
  return texts;
}

std::vector<ScoreItem> load_score_items(const std::string& path, const std::string& kind, bool reference_source) {
  std::vector<ScoreItem> items;
  if (kind == "pairwise") {
    for (const auto& r : ds::load_pairwise_dataset(path)) {
      items.push_back({r.id + "#better", r.source, r.better});
      items.push_back({r.id + "#worse", r.source, r.worse});
    }
  } else {
    for (const auto& r : ds::load_segment_dataset(path)) {
      std::string source = r.source;
      if (reference_source) {
        auto it = r.extras.find("reference");
        if (it != r.extras.end() && it->is_string()) source = it->get<std::string>();
      }
      items.push_back({r.id, std::move(source), r.candidate});
    }
  }
  if (items.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + path + " has no records");
  return items;
}

std::vector<double> load_profile_weights(const std::string& path, std::size_t T) {
  std::ifstream in(path);
  if (!in) throw ds::Error(ds::ErrorKind::IoError, "cannot open " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ds::Error(ds::ErrorKind::ParseError, path + ": " + e.what());
  }
  if (!doc.contains("weights") || !doc["weights"].is_array()) {
    throw ds::Error(ds::ErrorKind::ParseError, path + ": missing \"weights\" array");
  }
  auto w = doc["weights"].get<std::vector<double>>();
  if (w.size() != T) {
    throw UsageError(path + " holds " + std::to_string(w.size()) + " weights but --timesteps is " + std::to_string(T));
  }
  return w;
}

struct Scored {
  double score = 0.0;
  std::vector<ds::TimestepScore> per_timestep;
  Json extra = Json::object();
};

Scored score_with_ar(const ds::ToyARLM& ar, const Resolved& r, const ds::EstimatorConfig& cfg,
                     const ds::TokenSequence& src, const ds::TokenSequence& cand) {
  const ds::TokenSequence none;
  Scored s;
  switch (r.scoring) {
    case ds::ScoringConfig::mar: s.score = ds::ar_score(ar, cand, none).score; break;
    case ds::ScoringConfig::cond: s.score = ds::ar_score(ar, cand, src).score; break;
    case ds::ScoringConfig::rev: s.score = ds::ar_score(ar, src, cand).score; break;
    case ds::ScoringConfig::bi: {
      const auto c = ds::ar_score(ar, cand, src);
      const auto v = ds::ar_score(ar, src, cand);
      s.score = ds::combine_bidirectional(c, v, cfg.alpha_bi).score;
      break;
    }
    case ds::ScoringConfig::pmi: {
      const double c = ds::ar_score(ar, cand, src).score;
      const double m = ds::ar_score(ar, cand, none).score;
      s.score = c - m;
      s.extra = {{"conditional", c}, {"marginal", m}, {"pmi", s.score}};
      break;
    }
    case ds::ScoringConfig::profile: throw UsageError("profiles need a masked backend");
  }
  return s;
}

template <ds::Denoiser D>
Scored score_with_denoiser(const D& den, const Resolved& r, const ds::EstimatorConfig& cfg, bool paired,
                           const std::vector<double>& profile_weights, const ds::TokenSequence& src,
                           const ds::TokenSequence& cand) {
  Scored s;
  auto take = [&](const ds::ScoreReport& rep) {
    s.score = rep.score;
    s.per_timestep = rep.per_timestep;
  };
  switch (r.scoring) {
    case ds::ScoringConfig::mar: take(ds::score_marginal(den, cand, cfg)); break;
    case ds::ScoringConfig::cond: take(ds::score_conditional(den, cand, src, cfg)); break;
    case ds::ScoringConfig::rev: take(ds::score_reverse(den, src, cand, cfg)); break;
    case ds::ScoringConfig::bi: take(ds::score_bidirectional(den, cand, src, cfg, paired)); break;
    case ds::ScoringConfig::pmi: {
      const auto p = ds::score_pmi(den, cand, src, cfg);
      s.score = p.pmi;
      s.extra = {{"conditional", p.conditional}, {"marginal", p.marginal}, {"pmi", p.pmi}};
      break;
    }
    case ds::ScoringConfig::profile: {
      auto prof = ds::quality_profile(den, cand, r.profile_with_source ? src : ds::TokenSequence{}, cfg);
      if (!profile_weights.empty()) prof.weights = profile_weights;
      s.score = ds::aggregate_profile(prof);
      for (std::size_t k = 0; k < prof.scores.size(); ++k) {
        s.per_timestep.push_back({prof.timesteps.values[k], prof.scores[k], 0});
      }
      s.extra = {{"profile_weights", prof.weights}};
      break;
    }
  }
  return s;
}

int run_scoring(RunOptions& opt, const ScoreOptions& so, Resolved resolved) {
  const auto cfg = estimator_config(opt);
  if (resolved.scoring == ds::ScoringConfig::profile && cfg.K < cfg.T) {
    throw UsageError("profiles need --k >= --timesteps so every grid point is sampled");
  }
  if (opt.backend == "toy-ar" && resolved.scoring == ds::ScoringConfig::profile) {
    throw UsageError("profiles need a masked backend");
  }
  const auto items = load_score_items(so.dataset, so.kind, resolved.reference_source);
  const Backend backend = make_backend(opt, texts_of(items));
  std::vector<double> weights;
  if (!so.weights.empty()) weights = load_profile_weights(so.weights, cfg.T);

  Json echo = config_echo(opt, &backend, cfg);
  echo["scoring"] = ds::to_string(resolved.scoring);
  if (!opt.preset.empty()) echo["preset"] = opt.preset;
  if (resolved.reference_source) echo["source_slot"] = "reference";
  if (resolved.scoring == ds::ScoringConfig::bi) echo["bidirectional_sampling"] = opt.independent_bi ? "independent" : "paired";
  if (resolved.scoring == ds::ScoringConfig::profile) echo["profile_source"] = resolved.profile_with_source ? "source" : "none";
  if (!so.weights.empty()) echo["profile_weights_file"] = so.weights;
  if (so.kind == "pairwise") echo["dataset_kind"] = "pairwise";

  const ds::Vocabulary& vocab = backend.vocabulary();
  std::vector<Json> lines(items.size());
  std::vector<char> failed(items.size(), 0);
  ds::parallel_for(items.size(), opt.jobs, [&](std::size_t i) {
    const auto& it = items[i];
    try {
      const auto src = ds::tokenize(it.source, vocab);
      const auto cand = ds::tokenize(it.candidate, vocab);
      Scored s = backend.ar ? score_with_ar(*backend.ar, resolved, cfg, src, cand)
                            : backend.visit_masked([&](const auto& den) {
                                return score_with_denoiser(den, resolved, cfg, !opt.independent_bi, weights, src, cand);
                              });
      ds::ScoreLine line{it.id, s.score, std::move(s.per_timestep), echo, std::move(s.extra)};
      lines[i] = ds::to_json(line);
    } catch (const ds::Error& e) {
      if (is_transport(e.kind())) throw;
      lines[i] = error_object(it.id, e);
      failed[i] = 1;
    }
  });
  emit_lines(lines, opt.out);
  const auto n_failed = std::count(failed.begin(), failed.end(), 1);
  if (n_failed > 0) {
    std::cerr << "diffscore: " << n_failed << " of " << items.size() << " records failed\n";
    return kRecordErrors;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct PositionOptions {
  std::string dataset;
  std::size_t max_position = 64;
  std::string tsv;
};

int run_diagnose_position(RunOptions& opt, const PositionOptions& po) {
  const auto cfg = estimator_config(opt);
  const auto records = ds::load_segment_dataset(po.dataset);
  if (records.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + po.dataset + " has no records");
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.candidate);
  const Backend backend = make_backend(opt, texts);
  const ds::Vocabulary& vocab = backend.vocabulary();

  std::vector<ds::PositionScores> per_seq(records.size());
  ds::parallel_for(records.size(), opt.jobs, [&](std::size_t i) {
    const auto cand = ds::tokenize(records[i].candidate, vocab);
    if (backend.ar) {
      for (double lp : ds::ar_sequence_logprobs(*backend.ar, cand)) per_seq[i].push_back(lp);
      return;
    }
    // A distinct seed per record, so masking patterns do not line up across
    // sequences of equal length.
    ds::EstimatorConfig c = cfg;
    c.seed = ds::derive_seed(cfg.seed, i);
    per_seq[i] = backend.visit_masked([&](const auto& den) { return ds::per_position_scores(den, cand, {}, c); });
  });
  const auto rep = ds::positional_bias(per_seq, po.max_position);

  Json positions = Json::array();
  std::ostringstream tsv;
  tsv << "position\tmean\tstd\tcount\n";
  for (std::size_t n = 0; n < rep.per_position_mean.size(); ++n) {
    positions.push_back({{"position", n},
                         {"mean", nullable(rep.per_position_mean[n])},
                         {"std", nullable(rep.per_position_std[n])},
                         {"count", rep.per_position_count[n]}});
    tsv << n << '\t' << ds::format_double(rep.per_position_mean[n]) << '\t'
        << ds::format_double(rep.per_position_std[n]) << '\t' << rep.per_position_count[n] << '\n';
  }
  Json echo = config_echo(opt, &backend, cfg);
  echo["max_position"] = po.max_position;
  echo["per_record_seed"] = "derive_seed(seed, record_index)";
  Json doc = {{"schema_version", 1},
              {"config", echo},
              {"records", records.size()},
              {"cov", nullable(rep.cov)},
              {"mean_positional_std", nullable(rep.mean_positional_std)},
              {"positions_covered", rep.positions_covered},
              {"positions", positions}};
  if (!po.tsv.empty()) emit_tsv(tsv.str(), po.tsv);
  emit_json(doc, opt.out);
  return kOk;
}

struct DirectionOptions {
  std::string dataset;  // forward in "source", reverse in "candidate"
  std::size_t pairs = 200;
  std::string tsv;
};

int run_diagnose_direction(RunOptions& opt, const DirectionOptions& dopt) {
  const auto cfg = estimator_config(opt);
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!dopt.dataset.empty()) {
    for (const auto& r : ds::load_segment_dataset(dopt.dataset)) pairs.emplace_back(r.source, r.candidate);
    if (pairs.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + dopt.dataset + " has no records");
  } else {
    pairs = ds::generate_reversal_pairs(ds::default_relation_templates(), ds::default_subjects(),
                                        ds::default_objects(), dopt.pairs, opt.seed);
  }
  std::vector<std::string> texts;
  for (const auto& [f, r] : pairs) {
    texts.push_back(f);
    texts.push_back(r);
  }
  const Backend backend = make_backend(opt, texts);
  const ds::Vocabulary& vocab = backend.vocabulary();

  // Score every text up front so the report does not depend on --jobs.
  std::vector<double> scores(texts.size());
  ds::parallel_for(texts.size(), opt.jobs, [&](std::size_t i) {
    const auto seq = ds::tokenize(texts[i], vocab);
    scores[i] = backend.ar ? ds::ar_score(*backend.ar, seq, {}).score
                           : backend.visit_masked([&](const auto& den) { return ds::score_marginal(den, seq, cfg).score; });
  });
  std::map<std::string, double> by_text;
  for (std::size_t i = 0; i < texts.size(); ++i) by_text.emplace(texts[i], scores[i]);
  const auto rep = ds::directional_consistency([&](const std::string& t) { return by_text.at(t); }, pairs);

  Json rows = Json::array();
  std::ostringstream tsv;
  tsv << "forward\treverse\tforward_score\treverse_score\tconsistency\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    rows.push_back({{"forward", pairs[i].first},
                    {"reverse", pairs[i].second},
                    {"forward_score", rep.forward_scores[i]},
                    {"reverse_score", rep.reverse_scores[i]},
                    {"consistency", rep.consistency[i]}});
    tsv << pairs[i].first << '\t' << pairs[i].second << '\t' << ds::format_double(rep.forward_scores[i]) << '\t'
        << ds::format_double(rep.reverse_scores[i]) << '\t' << ds::format_double(rep.consistency[i]) << '\n';
  }
  Json echo = config_echo(opt, &backend, cfg);
  echo["scoring"] = "mar";
  echo["consistency"] = "min/max of exp(score)";
  echo["rank_statistic"] = "spearman_rho";
  Json doc = {{"schema_version", 1},
              {"config", echo},
              {"pair_count", rep.pair_count},
              {"mean_consistency", rep.mean_consistency},
              {"std_consistency", nullable(rep.std_consistency)},
              {"rank_correlation", rep.rank_defined ? Json(rep.rank_correlation) : Json(nullptr)},
              {"rank_defined", rep.rank_defined},
              {"pairs", rows}};
  if (!dopt.tsv.empty()) emit_tsv(tsv.str(), dopt.tsv);
  emit_json(doc, opt.out);
  return kOk;
}

// ---------------------------------------------------------------------------
// Adversarial variants

struct AdversarialOptions {
  std::string dataset;
  std::string mode = "report";
  ds::PerturbationConfig perturb{0.1, 0.1, 0.1, 0.1};
  std::string tsv;
};

std::vector<ds::EvalRecord> with_candidates(const std::vector<ds::EvalRecord>& records,
                                            const std::vector<ds::TextRecord>& variant) {
  std::vector<ds::EvalRecord> out = records;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].candidate = variant[i].candidate;
  return out;
}

int run_adversarial(RunOptions& opt, AdversarialOptions& ao) {
  const auto records = ds::load_segment_dataset(ao.dataset);
  if (records.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + ao.dataset + " has no records");
  std::vector<ds::TextRecord> text;
  for (const auto& r : records) text.push_back({r.source, r.candidate});
  ao.perturb.seed = opt.seed;
  ds::validate(ao.perturb);

  if (ao.mode == "fluent-irrelevant" || ao.mode == "disfluent-relevant") {
    const auto variant = ao.mode == "fluent-irrelevant" ? ds::make_fluent_irrelevant(text, opt.seed)
                                                        : ds::make_disfluent_relevant(text, ao.perturb);
    std::vector<Json> lines;
    for (const auto& r : with_candidates(records, variant)) lines.push_back(ds::to_json(r));
    emit_lines(lines, opt.out);
    return kOk;
  }

  const auto cfg = estimator_config(opt);
  const auto fluent = ds::make_fluent_irrelevant(text, opt.seed);
  const auto disfluent = ds::make_disfluent_relevant(text, ao.perturb);
  std::vector<std::string> texts;
  for (const auto* set : std::initializer_list<const std::vector<ds::TextRecord>*>{&text, &fluent, &disfluent}) {
    for (const auto& r : *set) {
      texts.push_back(r.source);
      texts.push_back(r.candidate);
    }
  }
  const Backend backend = make_backend(opt, texts);
  if (!backend.masked) throw UsageError("the adversarial report needs a masked backend");
  const ds::Vocabulary& vocab = backend.vocabulary();
  auto tokens = [&](const std::vector<ds::TextRecord>& set) {
    std::vector<ds::TokenRecord> out;
    for (const auto& r : set) out.push_back({ds::tokenize(r.source, vocab), ds::tokenize(r.candidate, vocab)});
    return out;
  };
  const auto a = tokens(text), b = tokens(fluent), c = tokens(disfluent);
  const auto rep = backend.visit_masked([&](const auto& den) { return ds::pmi_adversarial_report(den, a, b, c, cfg); });

  Json variants = Json::array();
  std::ostringstream tsv;
  tsv << "variant\tconditional_mean\tconditional_std\tmarginal_mean\tmarginal_std\tpmi_mean\tpmi_std\n";
  for (const auto& v : rep.variants) {
    auto col = [](const ds::ColumnSummary& c) { return Json{{"mean", c.mean}, {"std", nullable(c.std)}}; };
    variants.push_back(
        {{"variant", v.name}, {"conditional", col(v.conditional)}, {"marginal", col(v.marginal)}, {"pmi", col(v.pmi)}});
    tsv << v.name;
    for (const auto* c : {&v.conditional, &v.marginal, &v.pmi}) {
      tsv << '\t' << ds::format_double(c->mean) << '\t' << ds::format_double(c->std);
    }
    tsv << '\n';
  }
  Json comparisons = Json::array();
  for (const auto& cmp : rep.comparisons) {
    comparisons.push_back({{"variant_a", cmp.variant_a},
                           {"variant_b", cmp.variant_b},
                           {"column", cmp.column},
                           {"U", cmp.U},
                           {"p_value", cmp.p_value}});
  }
  Json echo = config_echo(opt, &backend, cfg);
  echo["perturbation"] = {{"swap_rate", ao.perturb.swap_rate},
                          {"substitution_rate", ao.perturb.substitution_rate},
                          {"repetition_rate", ao.perturb.repetition_rate},
                          {"deletion_rate", ao.perturb.deletion_rate}};
  Json doc = {{"schema_version", 1},
              {"config", echo},
              {"records", records.size()},
              {"variants", variants},
              {"comparisons", comparisons},
              {"test", "mann_whitney_u two-sided"}};
  if (!ao.tsv.empty()) emit_tsv(tsv.str(), ao.tsv);
  emit_json(doc, opt.out);
  return kOk;
}

// ---------------------------------------------------------------------------
// Meta-evaluation

struct MetaOptions {
  std::string scores;
  std::string dataset;
  std::string kind = "segment";
  std::string compare;
  std::vector<std::string> dimensions;
  std::size_t resamples = 1000;
  double level = 0.95;
};

std::map<std::string, double> score_map(const std::string& path) {
  std::map<std::string, double> m;
  for (const auto& s : ds::load_scores(path)) m[s.id] = s.score;
  if (m.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "score file " + path + " holds no scores");
  return m;
}

Json correlation_block(std::span<const double> metric, std::span<const double> human, const MetaOptions& mo,
                       std::uint64_t seed) {
  Json out = Json::array();
  if (metric.size() < 2) return out;
  for (auto stat : {ds::Statistic::kendall_tau_b, ds::Statistic::spearman_rho, ds::Statistic::pearson_r}) {
    out.push_back(to_json(ds::correlate(stat, metric, human, mo.resamples, mo.level, seed)));
  }
  return out;
}

int run_meta_eval(RunOptions& opt, const MetaOptions& mo) {
  const auto scores = score_map(mo.scores);
  std::optional<std::map<std::string, double>> other;
  if (!mo.compare.empty()) other = score_map(mo.compare);

  Json echo = {{"schema_version", 1},
               {"scores", mo.scores},
               {"dataset", mo.dataset},
               {"dataset_kind", mo.kind},
               {"resamples", mo.resamples},
               {"level", mo.level},
               {"seed", opt.seed},
               {"kendall_variant", "tau-b"},
               {"bootstrap", "percentile, pair-level resampling"}};
  if (other) echo["compare"] = mo.compare;

  if (mo.kind == "pairwise") {
    const auto pairs = ds::load_pairwise_dataset(mo.dataset);
    if (pairs.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + mo.dataset + " has no records");
    std::vector<double> flat;
    std::vector<ds::RankedPair> labels;
    std::size_t missing = 0;
    for (const auto& p : pairs) {
      auto b = scores.find(p.id + "#better"), w = scores.find(p.id + "#worse");
      if (b == scores.end() || w == scores.end()) {
        ++missing;
        continue;
      }
      labels.push_back({flat.size(), flat.size() + 1});
      flat.push_back(b->second);
      flat.push_back(w->second);
    }
    if (labels.empty()) throw ds::Error(ds::ErrorKind::InsufficientData, "no pair has both scores");
    Json doc = {{"schema_version", 1},
                {"config", echo},
                {"pairwise_accuracy", ds::pairwise_accuracy(flat, labels)},
                {"pairs", labels.size()},
                {"pairs_missing_scores", missing}};
    emit_json(doc, opt.out);
    return kOk;
  }

  const auto records = ds::load_segment_dataset(mo.dataset);
  if (records.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + mo.dataset + " has no records");
  std::set<std::string> dims(mo.dimensions.begin(), mo.dimensions.end());
  if (dims.empty()) {
    for (const auto& r : records) {
      for (const auto& [d, v] : r.human) dims.insert(d);
    }
  }
  if (dims.empty()) throw ds::Error(ds::ErrorKind::InsufficientData, "dataset has no human judgments");

  Json by_dim = Json::object();
  for (const auto& dim : dims) {
    std::vector<double> metric, human, metric2;
    std::vector<ds::SystemRecord> sys;
    for (const auto& r : records) {
      auto h = r.human.find(dim);
      auto s = scores.find(r.id);
      if (h == r.human.end() || s == scores.end()) continue;
      if (other && !other->count(r.id)) continue;
      metric.push_back(s->second);
      human.push_back(h->second);
      if (other) metric2.push_back(other->at(r.id));
      if (r.system_id) sys.push_back({*r.system_id, s->second, h->second});
    }
    Json entry = {{"n", metric.size()}, {"segment", correlation_block(metric, human, mo, opt.seed)}};
    if (sys.size() == metric.size() && !sys.empty()) {
      const auto rows = ds::system_level_aggregate(sys);
      std::vector<double> sm, sh;
      Json table = Json::array();
      for (const auto& row : rows) {
        sm.push_back(row.mean_metric);
        sh.push_back(row.mean_human);
        table.push_back({{"system", row.system_id},
                         {"mean_metric", row.mean_metric},
                         {"mean_human", row.mean_human},
                         {"count", row.count}});
      }
      entry["systems"] = table;
      entry["system"] = correlation_block(sm, sh, mo, opt.seed);
    }
    if (other && metric.size() >= 4) {
      const auto r12 = ds::pearson_r(metric, human), r13 = ds::pearson_r(metric2, human),
                 r23 = ds::pearson_r(metric, metric2);
      Json w = {{"statistic", "pearson_r"}};
      if (r12 && r13 && r23) {
        w["r12"] = *r12;
        w["r13"] = *r13;
        w["r23"] = *r23;
        try {
          const auto res = ds::williams_test(*r12, *r13, *r23, metric.size());
          w["t"] = res.t;
          w["df"] = res.df;
          w["p_two_sided"] = res.p_two_sided;
          w["p_one_sided"] = res.p_one_sided;
        } catch (const ds::Error& e) {
          w["error"] = e.what();
        }
      } else {
        w["error"] = "correlation undefined";
      }
      entry["williams"] = w;
    }
    if (metric.size() < 2) entry["note"] = "fewer than 2 scored records with this dimension";
    by_dim[dim] = entry;
  }
  Json doc = {{"schema_version", 1}, {"config", echo}, {"dimensions", by_dim}};
  emit_json(doc, opt.out);
  return kOk;
}

// ---------------------------------------------------------------------------
// Toy training and weight learning

struct TrainOptions {
  std::vector<std::string> corpus;
  std::vector<std::string> datasets;
  std::string kind = "masked";
  bool lowercase = false;
  double smoothing = 1.0;
  std::vector<double> lambda{0.5, 0.2, 0.2, 0.1};
  std::string sentinel = "barrier";
};

int run_train_toy(RunOptions& opt, const TrainOptions& to) {
  if (opt.out.empty()) throw UsageError("train-toy requires --out");
  if (to.lambda.size() != 4) throw UsageError("--lambda takes four comma-separated weights");
  std::vector<std::string> texts;
  for (const auto& path : to.corpus) {
    for (auto& line : read_text_lines(path)) texts.push_back(std::move(line));
  }
  // Dataset records contribute source, candidate and their concatenation.
  for (const auto& path : to.datasets) {
    for (const auto& r : ds::load_segment_dataset(path)) {
      texts.push_back(r.source);
      texts.push_back(r.candidate);
      texts.push_back(r.source + " " + r.candidate);
    }
  }
  if (texts.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "training corpus is empty");
  const auto rule = to.lowercase ? ds::TokenizerRule::whitespace_lower : ds::TokenizerRule::whitespace;
  const auto vocab = ds::build_vocabulary(texts, rule);
  std::vector<ds::TokenSequence> seqs;
  std::size_t tokens = 0;
  for (const auto& t : texts) {
    seqs.push_back(ds::tokenize(t, vocab));
    tokens += seqs.back().size();
  }
  ds::ToyModel model = to.kind == "ar"
                           ? ds::ToyModel(ds::train_toy_ar_lm(seqs, vocab, to.smoothing))
                           : ds::ToyModel(ds::train_toy_masked_lm(
                                 seqs, vocab, {to.lambda[0], to.lambda[1], to.lambda[2], to.lambda[3]}, to.smoothing,
                                 parse_sentinel(to.sentinel)));
  const std::string tmp = opt.out + ".tmp";
  ds::save_model(model, tmp);
  std::filesystem::rename(tmp, opt.out);
  Json summary = {{"schema_version", 1},
                  {"model", opt.out},
                  {"kind", to.kind},
                  {"format", ds::kModelMagic},
                  {"vocab_size", vocab.size()},
                  {"sequences", seqs.size()},
                  {"tokens", tokens},
                  {"smoothing", to.smoothing}};
  if (to.kind == "masked") {
    summary["lambda"] = to.lambda;
    summary["sentinel"] = to.sentinel;
  }
  std::cout << summary.dump(2) << '\n';
  return kOk;
}

struct LearnOptions {
  std::string profiles;
  std::string dataset;
  std::string dimension;
  std::size_t folds = 5;
  std::size_t restarts = 50;
};

int run_learn_weights(RunOptions& opt, const LearnOptions& lo) {
  const auto lines = ds::load_scores(lo.profiles);
  if (lines.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "profile file " + lo.profiles + " holds no profiles");
  const auto records = ds::load_segment_dataset(lo.dataset);
  if (records.empty()) throw ds::Error(ds::ErrorKind::EmptyCorpus, "dataset " + lo.dataset + " has no records");

  std::string dim = lo.dimension;
  if (dim.empty()) {
    std::set<std::string> dims;
    for (const auto& r : records) {
      for (const auto& [d, v] : r.human) dims.insert(d);
    }
    if (dims.size() != 1) throw UsageError("dataset has " + std::to_string(dims.size()) + " human dimensions; pick one with --dimension");
    dim = *dims.begin();
  }
  std::map<std::string, double> human;
  for (const auto& r : records) {
    if (auto it = r.human.find(dim); it != r.human.end()) human[r.id] = it->second;
  }

  std::vector<ds::QualityProfile> profiles;
  std::vector<double> targets;
  for (const auto& l : lines) {
    auto h = human.find(l.id);
    if (h == human.end()) continue;
    const std::size_t T = l.per_timestep.size();
    if (T == 0) throw ds::Error(ds::ErrorKind::GridMismatch, "record " + l.id + " has no per-timestep scores");
    ds::QualityProfile p;
    p.timesteps = ds::timestep_grid(T);
    for (std::size_t k = 0; k < T; ++k) {
      if (l.per_timestep[k].t != p.timesteps.values[k]) {
        throw ds::Error(ds::ErrorKind::GridMismatch, "record " + l.id + " is not on the grid k/" + std::to_string(T));
      }
      p.scores.push_back(l.per_timestep[k].value);
    }
    p.weights.assign(T, 1.0 / static_cast<double>(T));
    profiles.push_back(std::move(p));
    targets.push_back(h->second);
  }
  ds::WeightLearningOptions wo;
  wo.folds = lo.folds;
  wo.restarts = lo.restarts;
  wo.seed = opt.seed;
  const auto learned = ds::learn_weights(profiles, targets, wo);
  Json doc = {{"schema_version", 1},
              {"grid", learned.grid},
              {"weights", learned.weights},
              {"fold_rho", learned.fold_rho},
              {"objective", learned.objective},
              {"config",
               {{"dimension", dim},
                {"folds", lo.folds},
                {"restarts", lo.restarts},
                {"seed", opt.seed},
                {"samples", profiles.size()},
                {"objective", "mean within-fold spearman_rho"}}}};
  emit_json(doc, opt.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffscore: masked-reconstruction text quality scoring"};
  app.require_subcommand(1);
  RunOptions opt;

  ScoreOptions score_opt;
  auto* score = app.add_subcommand("score", "Score every record of a dataset");
  score->add_option("dataset", score_opt.dataset, "JSON-lines dataset")->required();
  score->add_option("--kind", score_opt.kind, "Dataset kind; pairwise emits <id>#better and <id>#worse")
      ->check(CLI::IsMember({"segment", "pairwise"}))
      ->capture_default_str();
  score->add_option("--config", opt.config, "Scoring configuration (default mar)")
      ->check(CLI::IsMember({"mar", "cond", "rev", "bi", "pmi", "profile"}));
  score->add_option("--preset", opt.preset, "Quality-dimension preset; fixes the scoring configuration")
      ->check(CLI::IsMember({"mt-adequacy", "sum-faithfulness", "sum-coverage", "sum-fluency", "sum-holistic", "d2t"}));
  auto* alpha_opt = score->add_option("--alpha", opt.alpha, "Weight of the conditional term in bi")->capture_default_str();
  score->add_flag("--independent-bi", opt.independent_bi, "Draw the reverse direction of bi from its own seed");
  score->add_option("--weights", score_opt.weights, "Learned weights JSON for --config profile");

  ScoreOptions pmi_opt;
  auto* pmi = app.add_subcommand("pmi", "Conditional minus marginal score per record");
  pmi->add_option("dataset", pmi_opt.dataset, "JSON-lines dataset")->required();

  ScoreOptions profile_opt;
  bool profile_with_source = false;
  auto* profile = app.add_subcommand("profile", "Per-timestep quality profile per record");
  profile->add_option("dataset", profile_opt.dataset, "JSON-lines dataset")->required();
  profile->add_flag("--with-source", profile_with_source, "Condition the profile on the source");
  profile->add_option("--weights", profile_opt.weights, "Learned weights JSON used for the aggregate score");

  PositionOptions pos_opt;
  auto* position = app.add_subcommand("diagnose-position", "Per-position score statistics and CoV");
  position->add_option("dataset", pos_opt.dataset, "JSON-lines dataset; candidates are analysed")->required();
  position->add_option("--max-position", pos_opt.max_position, "Positions at or beyond this are ignored")
      ->capture_default_str();
  position->add_option("--tsv", pos_opt.tsv, "Also write one TSV row per position");

  DirectionOptions dir_opt;
  auto* direction = app.add_subcommand("diagnose-direction", "Forward/reverse consistency of factual statements");
  direction->add_option("--dataset", dir_opt.dataset, "Pairs as records: source = forward, candidate = reverse");
  direction->add_option("--pairs", dir_opt.pairs, "Number of generated pairs when no dataset is given")
      ->capture_default_str();
  direction->add_option("--tsv", dir_opt.tsv, "Also write one TSV row per pair");

  AdversarialOptions adv_opt;
  auto* adversarial = app.add_subcommand("adversarial", "Build adversarial variants or the PMI report over them");
  adversarial->add_option("dataset", adv_opt.dataset, "JSON-lines dataset")->required();
  adversarial->add_option("--mode", adv_opt.mode, "Write a variant dataset or the PMI report")
      ->check(CLI::IsMember({"fluent-irrelevant", "disfluent-relevant", "report"}))
      ->capture_default_str();
  adversarial->add_option("--swap-rate", adv_opt.perturb.swap_rate, "Adjacent swap probability")->capture_default_str();
  adversarial->add_option("--substitution-rate", adv_opt.perturb.substitution_rate,
                          "Article/preposition substitution probability")
      ->capture_default_str();
  adversarial->add_option("--repetition-rate", adv_opt.perturb.repetition_rate, "Token repetition probability")
      ->capture_default_str();
  adversarial->add_option("--deletion-rate", adv_opt.perturb.deletion_rate, "Token deletion probability")
      ->capture_default_str();
  adversarial->add_option("--tsv", adv_opt.tsv, "Also write one TSV row per variant (report mode)");

  MetaOptions meta_opt;
  auto* meta = app.add_subcommand("meta-eval", "Correlate metric scores with human judgments");
  meta->add_option("--scores", meta_opt.scores, "Score file from score/pmi/profile")->required();
  meta->add_option("--dataset", meta_opt.dataset, "Dataset holding human judgments")->required();
  meta->add_option("--kind", meta_opt.kind, "Dataset kind; pairwise reports pairwise accuracy")
      ->check(CLI::IsMember({"segment", "pairwise"}))
      ->capture_default_str();
  meta->add_option("--compare", meta_opt.compare, "Second score file; adds a Williams test per dimension");
  meta->add_option("--dimension", meta_opt.dimensions, "Human dimensions to evaluate (default all)");
  meta->add_option("--resamples", meta_opt.resamples, "Bootstrap resamples (0 disables intervals)")
      ->capture_default_str();
  meta->add_option("--level", meta_opt.level, "Confidence level")->check(CLI::Range(0.0, 1.0))->capture_default_str();

  TrainOptions train_opt;
  auto* train = app.add_subcommand("train-toy", "Train a toy masked or autoregressive model");
  train->add_option("--corpus", train_opt.corpus, "Text file, one training text per line");
  train->add_option("--dataset", train_opt.datasets, "JSON-lines dataset; adds source, candidate and both joined");
  train->add_option("--kind", train_opt.kind, "Model kind")->check(CLI::IsMember({"masked", "ar"}))->capture_default_str();
  train->add_flag("--lowercase", train_opt.lowercase, "Lowercase tokens");
  train->add_option("--smoothing", train_opt.smoothing, "Add-constant smoothing")->capture_default_str();
  train->add_option("--lambda", train_opt.lambda, "Trigram, left bigram, right bigram, unigram weights")
      ->delimiter(',')
      ->expected(4);
  train->add_option("--sentinel", train_opt.sentinel, "Masked model boundary policy")
      ->check(CLI::IsMember({"barrier", "bridge"}))
      ->capture_default_str();

  LearnOptions learn_opt;
  auto* learn = app.add_subcommand("learn-weights", "Learn per-timestep profile weights from human judgments");
  learn->add_option("--profiles", learn_opt.profiles, "Profile file from the profile subcommand")->required();
  learn->add_option("--dataset", learn_opt.dataset, "Dataset holding human judgments")->required();
  learn->add_option("--dimension", learn_opt.dimension, "Human dimension (required when several exist)");
  learn->add_option("--folds", learn_opt.folds, "Cross-validation folds")->capture_default_str();
  learn->add_option("--restarts", learn_opt.restarts, "Random restarts besides the uniform start")->capture_default_str();

  for (auto* sub : {score, pmi, profile, position, direction, adversarial}) {
    add_backend_flags(sub, opt);
    add_estimator_flags(sub, opt);
  }
  for (auto* sub : {score, pmi, profile, position, direction, adversarial, meta, train, learn}) {
    add_common_flags(sub, opt);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  opt.alpha_given = alpha_opt->count() > 0;

  try {
    if (score->parsed()) return run_scoring(opt, score_opt, resolve_scoring(opt));
    if (pmi->parsed()) return run_scoring(opt, pmi_opt, Resolved{ds::ScoringConfig::pmi});
    if (profile->parsed()) {
      Resolved r{ds::ScoringConfig::profile};
      r.profile_with_source = profile_with_source;
      return run_scoring(opt, profile_opt, r);
    }
    if (position->parsed()) return run_diagnose_position(opt, pos_opt);
    if (direction->parsed()) return run_diagnose_direction(opt, dir_opt);
    if (adversarial->parsed()) return run_adversarial(opt, adv_opt);
    if (meta->parsed()) return run_meta_eval(opt, meta_opt);
    if (train->parsed()) return run_train_toy(opt, train_opt);
    if (learn->parsed()) return run_learn_weights(opt, learn_opt);
  } catch (const UsageError& e) {
    std::cerr << "diffscore: " << e.what() << '\n';
    return kUsage;
  } catch (const UnavailableError& e) {
    std::cerr << "diffscore: " << e.what() << '\n';
    return kUnavailable;
  } catch (const ds::Error& e) {
    std::cerr << "diffscore: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "diffscore: internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
