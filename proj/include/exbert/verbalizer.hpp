#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "exbert/error.hpp"
#include "exbert/kg_store.hpp"
#include "exbert/text.hpp"

namespace exbert {

/// "RelatedTo" -> "related to", "dbpedia/genre" -> "dbpedia genre".
inline std::string split_camel_case(std::string_view relation) {
  std::string out;
  auto is_upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  auto is_lower_or_digit = [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); };
  for (std::size_t i = 0; i < relation.size(); ++i) {
    char c = relation[i];
    if (c == '_' || c == '/' || c == ' ' || c == '-') {
      if (!out.empty() && out.back() != ' ') out += ' ';
      continue;
    }
    if (is_upper(c) && i > 0 && !out.empty() && out.back() != ' ') {
      char prev = relation[i - 1];
      bool next_lower = i + 1 < relation.size() && is_lower_or_digit(relation[i + 1]);
      if (is_lower_or_digit(prev) || (is_upper(prev) && next_lower)) out += ' ';
    }
    out += c;
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return text::to_lower(out);
}

/// Relation name -> surface phrase. Relations missing from the table fall back
/// to their camel-case reading.
class TemplateTable {
 public:
  TemplateTable() = default;

  /// Table covering the ConceptNet relation inventory.
  static TemplateTable conceptnet_default() {
    static constexpr std::array<std::string_view, 47> kRelations = {
        "RelatedTo", "FormOf", "IsA", "PartOf", "HasA", "UsedFor", "CapableOf",
        "AtLocation", "Causes", "HasSubevent", "HasFirstSubevent", "HasLastSubevent",
        "HasPrerequisite", "HasProperty", "MotivatedByGoal", "ObstructedBy", "Desires",
        "CreatedBy", "Synonym", "Antonym", "DistinctFrom", "DerivedFrom", "SymbolOf",
        "DefinedAs", "MannerOf", "LocatedNear", "HasContext", "SimilarTo",
        "EtymologicallyRelatedTo", "EtymologicallyDerivedFrom", "CausesDesire", "MadeOf",
        "ReceivesAction", "InstanceOf", "Entails", "NotDesires", "NotUsedFor",
        "NotCapableOf", "NotHasProperty", "dbpedia/genre", "dbpedia/influencedBy",
        "dbpedia/knownFor", "dbpedia/occupation", "dbpedia/language", "dbpedia/field",
        "dbpedia/product", "dbpedia/capital"};
    TemplateTable table;
    for (auto rel : kRelations) {
      std::string surface = split_camel_case(rel.starts_with("dbpedia/") ? rel.substr(8) : rel);
      table.set(std::string(rel), surface);
    }
    return table;
  }

  /// Loads `relation<TAB>surface phrase` lines. `#` lines are comments.
  static TemplateTable load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template table: " + path.string());
    TemplateTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = text::strip_cr(line);
      if (view.empty() || view.front() == '#' || text::is_blank(view)) continue;
      auto fields = text::split(view, '\t');
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
        throw ParseError(path.string(), lineno, "expected relation<TAB>surface");
      }
      std::string rel(fields[0]);
      if (table.surfaces_.count(rel)) throw ParseError(path.string(), lineno, "duplicate relation " + rel);
      table.set(std::move(rel), std::string(fields[1]));
    }
    return table;
  }

  void set(std::string relation, std::string surface) {
    if (surface.empty()) throw Error("empty surface phrase for " + relation);
    surfaces_[std::move(relation)] = std::move(surface);
  }

  std::string surface(std::string_view relation) const {
    if (auto it = surfaces_.find(std::string(relation)); it != surfaces_.end()) return it->second;
    return split_camel_case(relation);
  }

  std::size_t size() const noexcept { return surfaces_.size(); }

 private:
  std::map<std::string, std::string> surfaces_;
};

inline std::string entity_phrase(std::string_view entity) { return text::join(entity_words(entity), " "); }

inline std::string verbalize(const Triple& triple, const TemplateTable& templates) {
  return entity_phrase(triple.head) + ' ' + templates.surface(triple.relation) + ' ' +
         entity_phrase(triple.tail);
}

}  // namespace exbert
