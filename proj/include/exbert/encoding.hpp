#pragma once

#include <string>
#include <vector>

#include "exbert/embedding.hpp"
#include "exbert/error.hpp"
#include "exbert/model.hpp"

namespace exbert {

/// Lays out [CLS] premise [SEP] hypothesis [SEP] after truncating each side to
/// its maximum length, and embeds it with the cls vector.
inline PairEncoding encode_pair(const EmbeddingProvider& provider, std::vector<std::string> premise,
                                std::vector<std::string> hypothesis, std::size_t max_premise,
                                std::size_t max_hypothesis) {
  if (premise.size() > max_premise) premise.resize(max_premise);
  if (hypothesis.size() > max_hypothesis) hypothesis.resize(max_hypothesis);
  if (premise.empty()) throw Error("empty premise");
  if (hypothesis.empty()) throw Error("empty hypothesis");
  PairEncoding out;
  out.premise_len = static_cast<Eigen::Index>(premise.size());
  out.hypothesis_len = static_cast<Eigen::Index>(hypothesis.size());
  out.tokens.reserve(premise.size() + hypothesis.size() + 3);
  out.tokens.emplace_back(kClsToken);
  out.tokens.insert(out.tokens.end(), premise.begin(), premise.end());
  out.tokens.emplace_back(kSepToken);
  out.tokens.insert(out.tokens.end(), hypothesis.begin(), hypothesis.end());
  out.tokens.emplace_back(kSepToken);
  auto emb = provider.embed(out.tokens, true);
  emb.validate();
  if (!emb.cls) throw ShapeError("provider returned no cls vector");
  out.hidden = std::move(emb.vectors);
  out.cls = std::move(*emb.cls);
  out.validate();
  return out;
}

/// One row per sentence: mean over the embedded [CLS] tokens [SEP] sequence,
/// marker rows included.
inline ExternalEncoding encode_external(const EmbeddingProvider& provider, const std::vector<std::string>& sentences,
                                        std::size_t max_tokens) {
  ExternalEncoding out;
  out.sentences = sentences;
  out.rows.resize(static_cast<Eigen::Index>(sentences.size()), provider.dim());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto words = tokenize(sentences[i]);
    if (words.size() > max_tokens) words.resize(max_tokens);
    if (words.empty()) throw Error("empty knowledge sentence at position " + std::to_string(i));
    std::vector<std::string> seq;
    seq.reserve(words.size() + 2);
    seq.emplace_back(kClsToken);
    seq.insert(seq.end(), words.begin(), words.end());
    seq.emplace_back(kSepToken);
    auto emb = provider.embed(seq, false);
    emb.validate();
    if (emb.dim() != provider.dim()) throw ShapeError("provider dimension changed mid-run");
    out.rows.row(static_cast<Eigen::Index>(i)) = mean_rows(emb.vectors).transpose();
  }
  return out;
}

}  // namespace exbert
