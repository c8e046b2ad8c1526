// Retrieves knowledge for each pair in a dataset, then runs one untrained
// forward pass of the integration model and prints the class probabilities
// and the strongest knowledge sentence per pair token.
//
//   retrieve_and_score samples/data/kg.tsv samples/data/pairs.tsv

#include <cstdio>
#include <iostream>

#include "exbert/dataset.hpp"
#include "exbert/encoding.hpp"
#include "exbert/model.hpp"
#include "exbert/retriever.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: " << argv[0] << " KG.tsv PAIRS.tsv\n";
    return 2;
  }
  try {
    auto store = exbert::ingest_tsv(argv[1]);
    auto index = exbert::build_index(store);
    auto templates = exbert::TemplateTable::conceptnet_default();
    exbert::HashProvider provider(32, 0);

    exbert::ModelConfig config;
    config.dim = provider.dim();
    config.heads = 4;
    auto params = exbert::init_params(config, 1);

    for (const auto& rec : exbert::read_dataset(argv[2])) {
      std::cout << rec.id << ": " << rec.premise << " / " << rec.hypothesis << '\n';
      auto p = exbert::retrieve(index, store, templates, provider, rec.premise, {5, 0}, exbert::Side::premise);
      auto h = exbert::retrieve(index, store, templates, provider, rec.hypothesis, {5, 0}, exbert::Side::hypothesis);
      std::vector<std::string> sentences;
      for (const auto& item : exbert::merge_external(p, h, 5)) {
        std::printf("  %-28s %.4f\n", item.sentence.c_str(), item.score);
        sentences.push_back(item.sentence);
      }

      exbert::Example ex;
      ex.pair = exbert::encode_pair(provider, exbert::tokenize(rec.premise), exbert::tokenize(rec.hypothesis), 16, 16);
      if (!sentences.empty()) ex.knowledge = exbert::encode_external(provider, sentences, 8);
      else ex.knowledge.rows = exbert::MatrixD(0, provider.dim());
      auto probs = exbert::predict(ex, params, config);
      std::printf("  untrained probabilities: %.3f %.3f %.3f\n", probs[0], probs[1], probs[2]);

      if (sentences.empty()) continue;
      auto hm = exbert::export_attention_heatmap(ex.pair, ex.knowledge, params.knowledge_attention);
      for (Eigen::Index c = 0; c < hm.weights.cols(); ++c) {
        Eigen::Index best = 0;
        hm.weights.col(c).maxCoeff(&best);
        std::printf("    %-10s -> %s\n", hm.tokens[static_cast<std::size_t>(c)].c_str(),
                    hm.sentences[static_cast<std::size_t>(best)].c_str());
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
