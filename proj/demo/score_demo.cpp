// Trains the toy masked model on the bundled corpus and prints marginal,
// conditional and PMI scores for the first document's four system outputs.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "diffscore/diffscore.hpp"

namespace ds = diffscore;

int main(int argc, char** argv) {
  const std::string data = argc > 1 ? argv[1] : DIFFSCORE_DATA_DIR;
  try {
    const auto records = ds::load_segment_dataset(data + "/demo_dataset.jsonl");

    std::vector<std::string> texts;
    for (const auto& r : records) {
      texts.push_back(r.source);
      texts.push_back(r.candidate);
      texts.push_back(r.source + " " + r.candidate);
    }
    const auto vocab = ds::build_vocabulary(texts, ds::TokenizerRule::whitespace);
    std::vector<ds::TokenSequence> corpus;
    for (const auto& t : texts) corpus.push_back(ds::tokenize(t, vocab));
    const auto model = ds::train_toy_masked_lm(corpus, vocab).with_policy(ds::SentinelPolicy::bridge);

    ds::EstimatorConfig cfg;
    cfg.K = 40;
    cfg.seed = 1;
    std::printf("%-12s %10s %10s %10s %8s %8s\n", "record", "marginal", "cond", "pmi", "fluency", "relev.");
    for (std::size_t i = 0; i < 4 && i < records.size(); ++i) {
      const auto& r = records[i];
      const auto pmi = ds::score_pmi(model, ds::tokenize(r.candidate, vocab), ds::tokenize(r.source, vocab), cfg);
      auto human = [&](const char* dim) {
        auto it = r.human.find(dim);
        return it == r.human.end() ? 0.0 : it->second;
      };
      std::printf("%-12s %10.4f %10.4f %10.4f %8.2f %8.2f\n", r.id.c_str(), pmi.marginal, pmi.conditional, pmi.pmi,
                  human("fluency"), human("relevance"));
    }
  } catch (const ds::Error& e) {
    std::cerr << "score_demo: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
