#pragma once

// Knowledge-graph triple store and head-word index.
//
// Triples are normalized at ingest: head and tail are lowercased and spaces
// become underscores, so "public speaking" and "public_speaking" are the same
// entity. Duplicate (head, relation, tail) rows collapse onto the first id.
// Ids are dense and follow file order.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "exbert/error.hpp"
#include "exbert/text.hpp"

namespace exbert {

using TripleId = std::uint32_t;

struct Triple {
  TripleId id = 0;
  std::string head;
  std::string relation;
  std::string tail;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct KgStats {
  std::size_t triple_count = 0;
  std::size_t relation_count = 0;

  friend bool operator==(const KgStats&, const KgStats&) = default;
};

/// Words of an underscore-joined entity, empty pieces dropped.
inline std::vector<std::string> entity_words(std::string_view entity) {
  return text::split_nonempty(entity, '_');
}

/// Lowercases and converts spaces to underscores. Throws ParseError when the
/// result would violate the Triple invariants.
inline std::string normalize_entity(std::string_view raw) {
  std::string out = text::to_lower(raw);
  for (auto& c : out) {
    if (c == ' ') c = '_';
    if (c == '\t' || c == '\n' || c == '\r') {
      throw ParseError("entity contains a control separator");
    }
  }
  if (entity_words(out).empty()) throw ParseError("entity has no words");
  return out;
}

class KgStore {
 public:
  /// Adds a triple after normalization; returns the id of the existing triple
  /// when the row is a duplicate.
  TripleId add(std::string_view head, std::string_view relation, std::string_view tail) {
    if (frozen_) throw Error("knowledge store is frozen");
    if (relation.empty()) throw ParseError("empty relation");
    for (char c : relation) {
      if (c == '\t' || c == '\n' || c == '\r') throw ParseError("relation contains a control separator");
    }
    Triple t;
    t.head = normalize_entity(head);
    t.relation = std::string(relation);
    t.tail = normalize_entity(tail);
    std::string key = t.head + '\t' + t.relation + '\t' + t.tail;
    if (auto it = seen_.find(key); it != seen_.end()) return it->second;
    t.id = static_cast<TripleId>(triples_.size());
    seen_.emplace(std::move(key), t.id);
    triples_.push_back(std::move(t));
    return triples_.back().id;
  }

  void freeze() {
    frozen_ = true;
    seen_.clear();
  }
  bool frozen() const noexcept { return frozen_; }

  std::size_t size() const noexcept { return triples_.size(); }
  const std::vector<Triple>& triples() const noexcept { return triples_; }
  const Triple& at(TripleId id) const { return triples_.at(id); }

  KgStats stats() const {
    std::unordered_set<std::string_view> relations;
    for (const auto& t : triples_) relations.insert(t.relation);
    return {triples_.size(), relations.size()};
  }

 private:
  std::vector<Triple> triples_;
  std::unordered_map<std::string, TripleId> seen_;
  bool frozen_ = false;
};

/// Reads the native `head<TAB>relation<TAB>tail` format. Lines starting with
/// `#` and blank lines are skipped. Returns a frozen store.
inline KgStore ingest_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open knowledge graph file: " + path.string());
  KgStore store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty() || view.front() == '#' || text::is_blank(view)) continue;
    auto fields = text::split(view, '\t');
    if (fields.size() != 3) {
      throw ParseError(path.string(), lineno,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    for (auto f : fields) {
      if (f.empty()) throw ParseError(path.string(), lineno, "empty field");
    }
    try {
      store.add(fields[0], fields[1], fields[2]);
    } catch (const ParseError& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  if (in.bad()) throw IoError("read failure: " + path.string());
  store.freeze();
  return store;
}

struct ConceptNetReport {
  std::size_t rows = 0;
  std::size_t kept = 0;
  std::size_t duplicates = 0;
  std::size_t other_language = 0;
  std::size_t malformed = 0;
};

namespace detail {

// "/c/en/wave/n/..." -> {"en", "wave"}; empty lang on failure.
inline std::pair<std::string_view, std::string_view> parse_concept_uri(std::string_view uri) {
  if (!uri.starts_with("/c/")) return {};
  auto parts = text::split(uri.substr(3), '/');
  if (parts.size() < 2 || parts[0].empty() || parts[1].empty()) return {};
  return {parts[0], parts[1]};
}

}  // namespace detail

/// Reads a ConceptNet assertion dump (`uri<TAB>/r/Rel<TAB>/c/xx/a<TAB>/c/xx/b<TAB>json`).
/// Keeps rows whose two concepts both carry `language`; malformed rows are
/// counted and skipped. Throws when nothing survives.
inline KgStore ingest_conceptnet_dump(const std::filesystem::path& path, std::string_view language,
                                      ConceptNetReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ConceptNet dump: " + path.string());
  KgStore store;
  ConceptNetReport rep;
  std::string line;
  while (std::getline(in, line)) {
    auto view = text::strip_cr(line);
    if (view.empty() || text::is_blank(view)) continue;
    ++rep.rows;
    auto fields = text::split(view, '\t');
    if (fields.size() < 4 || !fields[1].starts_with("/r/") || fields[1].size() <= 3) {
      ++rep.malformed;
      continue;
    }
    auto [head_lang, head] = detail::parse_concept_uri(fields[2]);
    auto [tail_lang, tail] = detail::parse_concept_uri(fields[3]);
    if (head_lang.empty() || tail_lang.empty()) {
      ++rep.malformed;
      continue;
    }
    if (head_lang != language || tail_lang != language) {
      ++rep.other_language;
      continue;
    }
    auto before = store.size();
    try {
      store.add(head, fields[1].substr(3), tail);
    } catch (const ParseError&) {
      ++rep.malformed;
      continue;
    }
    if (store.size() == before) {
      ++rep.duplicates;
    } else {
      ++rep.kept;
    }
  }
  if (in.bad()) throw IoError("read failure: " + path.string());
  if (report) *report = rep;
  if (store.size() == 0) throw Error("no triples retained from " + path.string());
  store.freeze();
  return store;
}

/// Maps every head word to the sorted ids of triples whose head contains it.
class KnowledgeIndex {
 public:
  KnowledgeIndex() = default;

  explicit KnowledgeIndex(const KgStore& store) {
    if (!store.frozen()) throw Error("index requires a frozen store");
    stats_ = store.stats();
    for (const auto& t : store.triples()) {
      auto words = entity_words(t.head);
      std::sort(words.begin(), words.end());
      words.erase(std::unique(words.begin(), words.end()), words.end());
      // triples arrive in id order, so each posting list stays sorted
      for (auto& w : words) postings_[std::move(w)].push_back(t.id);
    }
  }

  std::span<const TripleId> lookup(const std::string& token) const {
    auto it = postings_.find(token);
    if (it == postings_.end()) return {};
    return it->second;
  }

  std::size_t key_count() const noexcept { return postings_.size(); }
  std::size_t triple_count() const noexcept { return stats_.triple_count; }
  std::size_t relation_count() const noexcept { return stats_.relation_count; }

  const std::unordered_map<std::string, std::vector<TripleId>>& postings() const noexcept {
    return postings_;
  }

 private:
  std::unordered_map<std::string, std::vector<TripleId>> postings_;
  KgStats stats_;
};

inline KnowledgeIndex build_index(const KgStore& store) { return KnowledgeIndex(store); }

inline std::vector<TripleId> lookup_by_token(const KnowledgeIndex& index, const std::string& token) {
  auto ids = index.lookup(token);
  return {ids.begin(), ids.end()};
}

/// Linear-scan reference for lookup_by_token: whole-word membership in the head.
inline std::vector<TripleId> scan_by_token(const KgStore& store, std::string_view token) {
  std::vector<TripleId> out;
  for (const auto& t : store.triples()) {
    for (const auto& w : entity_words(t.head)) {
      if (w == token) {
        out.push_back(t.id);
        break;
      }
    }
  }
  return out;
}

/// Writes the store back in the native TSV format with a stats comment.
inline void write_tsv(const KgStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto st = store.stats();
  out << "# triples=" << st.triple_count << " relations=" << st.relation_count << '\n';
  for (const auto& t : store.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace exbert
