#pragma once

// Contextual knowledge retrieval in two steps.
//
// Selection: drop stop words from the input, then collect every triple whose
// head contains one of the remaining words.
//
// Ranking: embed the input and every candidate sentence, average the input's
// token vectors over each bigram, trigram and fourgram window and over the
// whole sentence, and for every such gram vector keep the candidate with the
// highest cosine similarity. The union of picks is deduplicated by sentence
// and ordered by score.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "exbert/embedding.hpp"
#include "exbert/error.hpp"
#include "exbert/kg_store.hpp"
#include "exbert/text.hpp"
#include "exbert/verbalizer.hpp"

namespace exbert {

enum class GramSource { bigram, trigram, fourgram, whole };
enum class Side { premise, hypothesis };

inline const char* to_string(GramSource g) {
  switch (g) {
    case GramSource::bigram: return "bigram";
    case GramSource::trigram: return "trigram";
    case GramSource::fourgram: return "fourgram";
    case GramSource::whole: return "whole";
  }
  return "?";
}

inline const char* to_string(Side s) { return s == Side::premise ? "premise" : "hypothesis"; }

inline Side parse_side(std::string_view s) {
  if (s == "premise") return Side::premise;
  if (s == "hypothesis") return Side::hypothesis;
  throw ParseError("unknown side: " + std::string(s));
}

struct RankedKnowledge {
  std::string sentence;
  TripleId triple_id = 0;
  double score = 0.0;
  // Unset for items read back from a retrieval cache.
  std::optional<GramSource> gram_source;
};

struct RetrievedKnowledgeSet {
  std::vector<RankedKnowledge> items;
  Side for_side = Side::premise;
};

/// Fixed English stop list.
inline const std::unordered_set<std::string>& stop_words() {
  static const std::unordered_set<std::string> kWords = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours", "yourself",
      "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself",
      "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that",
      "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had",
      "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as",
      "until", "while", "of", "at", "by", "for", "with", "about", "against", "between", "into", "through",
      "during", "before", "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off",
      "over", "under", "again", "further", "then", "once", "here", "there", "when", "where", "why", "how",
      "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
      "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don", "should",
      "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "couldn", "didn", "doesn", "hadn",
      "hasn", "haven", "isn", "ma", "mightn", "mustn", "needn", "shan", "shouldn", "wasn", "weren", "won",
      "wouldn"};
  return kWords;
}

inline std::vector<std::string> filter_stopwords(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  const auto& stops = stop_words();
  for (const auto& t : tokens) {
    if (!stops.count(t)) out.push_back(t);
  }
  return out;
}

/// Union of head-word lookups, sorted ascending without duplicates.
inline std::vector<TripleId> select_candidates(const KnowledgeIndex& index, const std::vector<std::string>& content) {
  std::vector<TripleId> ids;
  for (const auto& token : content) {
    auto hits = index.lookup(token);
    ids.insert(ids.end(), hits.begin(), hits.end());
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

/// Means of every window of `n` consecutive rows; empty when rows < n.
inline std::vector<VectorD> ngram_groups(const MatrixD& vectors, Eigen::Index n) {
  if (n < 1) throw Error("gram size must be >= 1");
  std::vector<VectorD> out;
  for (Eigen::Index i = 0; i + n <= vectors.rows(); ++i) {
    out.push_back(vectors.middleRows(i, n).colwise().mean().transpose());
  }
  return out;
}

/// Cosine similarity; 0 when either vector has zero norm.
inline double cosine(const VectorD& a, const VectorD& b) {
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

struct Candidate {
  TripleId triple_id = 0;
  std::string sentence;
  VectorD vector;  // mean of the sentence's token embeddings
};

inline void sort_by_score(std::vector<RankedKnowledge>& items) {
  std::sort(items.begin(), items.end(), [](const RankedKnowledge& a, const RankedKnowledge& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.triple_id < b.triple_id;
  });
}

inline RetrievedKnowledgeSet rank_candidates(const MatrixD& sentence_vectors, std::span<const Candidate> candidates,
                                             Side side = Side::premise) {
  RetrievedKnowledgeSet result;
  result.for_side = side;
  if (candidates.empty() || sentence_vectors.rows() == 0) return result;
  for (const auto& c : candidates) {
    if (c.vector.size() != sentence_vectors.cols()) throw ShapeError("candidate vector dimension mismatch");
  }

  std::vector<std::pair<GramSource, VectorD>> grams;
  constexpr std::array<std::pair<GramSource, Eigen::Index>, 3> kSizes = {
      {{GramSource::bigram, 2}, {GramSource::trigram, 3}, {GramSource::fourgram, 4}}};
  for (auto [source, n] : kSizes) {
    for (auto& g : ngram_groups(sentence_vectors, n)) grams.emplace_back(source, std::move(g));
  }
  grams.emplace_back(GramSource::whole, mean_rows(sentence_vectors));

  std::unordered_map<std::string, RankedKnowledge> picks;
  for (const auto& [source, gram] : grams) {
    const Candidate* best = nullptr;
    double best_score = 0.0;
    for (const auto& c : candidates) {
      double s = cosine(gram, c.vector);
      if (!best || s > best_score || (s == best_score && c.triple_id < best->triple_id)) {
        best = &c;
        best_score = s;
      }
    }
    auto it = picks.find(best->sentence);
    if (it == picks.end()) {
      picks.emplace(best->sentence, RankedKnowledge{best->sentence, best->triple_id, best_score, source});
    } else if (best_score > it->second.score ||
               (best_score == it->second.score && best->triple_id < it->second.triple_id)) {
      it->second = RankedKnowledge{best->sentence, best->triple_id, best_score, source};
    }
  }
  for (auto& [_, item] : picks) result.items.push_back(std::move(item));
  sort_by_score(result.items);
  return result;
}

struct RetrievalOptions {
  std::size_t k = 11;
  std::size_t max_candidates = 0;  // 0 = unlimited
};

/// Full selection + ranking for one text, truncated to the first `k` items.
inline RetrievedKnowledgeSet retrieve(const KnowledgeIndex& index, const KgStore& store, const TemplateTable& templates,
                                      const EmbeddingProvider& provider, std::string_view input,
                                      const RetrievalOptions& options, Side side = Side::premise) {
  RetrievedKnowledgeSet empty;
  empty.for_side = side;
  if (options.k == 0) return empty;
  auto tokens = tokenize(input);
  auto ids = select_candidates(index, filter_stopwords(tokens));
  if (ids.empty()) return empty;
  if (options.max_candidates > 0 && ids.size() > options.max_candidates) ids.resize(options.max_candidates);

  std::vector<Candidate> candidates;
  candidates.reserve(ids.size());
  for (auto id : ids) {
    Candidate c;
    c.triple_id = id;
    c.sentence = verbalize(store.at(id), templates);
    c.vector = mean_rows(provider.embed(tokenize(c.sentence), false).vectors);
    candidates.push_back(std::move(c));
  }
  auto sentence = provider.embed(tokens, false);
  auto ranked = rank_candidates(sentence.vectors, candidates, side);
  if (ranked.items.size() > options.k) ranked.items.resize(options.k);
  return ranked;
}

/// Knowledge fed to the model: premise items first, then hypothesis items,
/// deduplicated by sentence and truncated to `k`.
inline std::vector<RankedKnowledge> merge_external(const RetrievedKnowledgeSet& premise,
                                                   const RetrievedKnowledgeSet& hypothesis, std::size_t k) {
  std::vector<RankedKnowledge> out;
  std::unordered_set<std::string> seen;
  for (const auto* set : {&premise, &hypothesis}) {
    for (const auto& item : set->items) {
      if (out.size() >= k) return out;
      if (seen.insert(item.sentence).second) out.push_back(item);
    }
  }
  return out;
}

// Retrieval cache file:
//   # key=value lines (resolved configuration)
//   side<TAB>example_id<TAB>rank<TAB>score<TAB>triple_id<TAB>sentence
// Ranks are 1-based within (example, side). Examples that retrieved nothing on
// either side are recorded as `# empty=<example_id>` so they still count as
// covered.

struct RetrievalCacheEntry {
  RetrievedKnowledgeSet premise{{}, Side::premise};
  RetrievedKnowledgeSet hypothesis{{}, Side::hypothesis};
};

struct RetrievalCache {
  std::map<std::string, std::string> header;  // resolved config echoed by the writer
  std::map<std::string, RetrievalCacheEntry> entries;

  /// Per-side retrieval limit the cache was built with.
  std::size_t depth() const {
    auto it = header.find("k");
    if (it == header.end()) return 0;
    return std::stoul(it->second);
  }

  const RetrievalCacheEntry& at(const std::string& example_id) const {
    auto it = entries.find(example_id);
    if (it == entries.end()) throw LookupError("retrieval cache has no entry for example " + example_id);
    return it->second;
  }
};

inline constexpr std::string_view kCacheHeaderRow = "side\texample_id\trank\tscore\ttriple_id\tsentence";

inline std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes the cache; examples appear in the order given.
inline void write_retrieval_cache(std::ostream& out, const std::map<std::string, std::string>& header,
                                  const std::vector<std::pair<std::string, RetrievalCacheEntry>>& rows) {
  for (const auto& [key, value] : header) out << "# " << key << '=' << value << '\n';
  out << kCacheHeaderRow << '\n';
  for (const auto& [id, entry] : rows) {
    if (entry.premise.items.empty() && entry.hypothesis.items.empty()) out << "# empty=" << id << '\n';
    for (const auto* set : {&entry.premise, &entry.hypothesis}) {
      std::size_t rank = 1;
      for (const auto& item : set->items) {
        out << to_string(set->for_side) << '\t' << id << '\t' << rank++ << '\t' << format_score(item.score) << '\t'
            << item.triple_id << '\t' << item.sentence << '\n';
      }
    }
  }
}

inline RetrievalCache read_retrieval_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open retrieval cache: " + path.string());
  RetrievalCache cache;
  std::string line;
  std::size_t lineno = 0;
  bool saw_header_row = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty()) continue;
    if (view.starts_with("# empty=")) {
      cache.entries[std::string(view.substr(8))];
      continue;
    }
    if (view.starts_with("# ")) {
      auto eq = view.find('=');
      if (eq != std::string_view::npos) cache.header[std::string(view.substr(2, eq - 2))] = std::string(view.substr(eq + 1));
      continue;
    }
    if (!saw_header_row) {
      if (view != kCacheHeaderRow) throw ParseError(path.string(), lineno, "missing cache header row");
      saw_header_row = true;
      continue;
    }
    auto f = text::split(view, '\t');
    if (f.size() != 6) throw ParseError(path.string(), lineno, "expected 6 fields");
    RankedKnowledge item;
    Side side;
    try {
      side = parse_side(f[0]);
      item.score = std::stod(std::string(f[3]));
      item.triple_id = static_cast<TripleId>(std::stoul(std::string(f[4])));
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "bad cache record");
    }
    item.sentence = std::string(f[5]);
    auto& entry = cache.entries[std::string(f[1])];
    (side == Side::premise ? entry.premise : entry.hypothesis).items.push_back(std::move(item));
  }
  if (!saw_header_row) throw ParseError(path.string(), lineno, "missing cache header row");
  return cache;
}

}  // namespace exbert
