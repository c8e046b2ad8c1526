#pragma once

// Pair datasets: canonical TSV `id<TAB>label<TAB>premise<TAB>hypothesis` with a
// header row, converters from the SNLI and SciTail distribution formats, and
// the synthetic knowledge-dependent task generator.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "exbert/error.hpp"
#include "exbert/kg_store.hpp"
#include "exbert/retriever.hpp"
#include "exbert/text.hpp"

namespace exbert {

struct ExampleRecord {
  std::string id;
  long label = 0;
  std::string premise;
  std::string hypothesis;

  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

inline constexpr std::string_view kDatasetHeader = "id\tlabel\tpremise\thypothesis";

inline std::vector<ExampleRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::vector<ExampleRecord> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty() || view.front() == '#') continue;
    if (!header) {
      if (view != kDatasetHeader) throw ParseError(path.string(), lineno, "expected header row");
      header = true;
      continue;
    }
    auto f = text::split(view, '\t');
    if (f.size() != 4) throw ParseError(path.string(), lineno, "expected 4 tab-separated fields");
    ExampleRecord r;
    r.id = std::string(f[0]);
    try {
      std::size_t used = 0;
      r.label = std::stol(std::string(f[1]), &used);
      if (used != f[1].size()) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "label must be a class index");
    }
    r.premise = std::string(f[2]);
    r.hypothesis = std::string(f[3]);
    if (r.id.empty() || r.label < 0 || text::is_blank(r.premise) || text::is_blank(r.hypothesis)) {
      throw ParseError(path.string(), lineno, "empty id/premise/hypothesis or negative label");
    }
    if (!ids.insert(r.id).second) throw ParseError(path.string(), lineno, "duplicate id " + r.id);
    out.push_back(std::move(r));
  }
  if (!header) throw ParseError(path.string(), lineno, "expected header row");
  return out;
}

inline void write_dataset(const std::filesystem::path& path, const std::vector<ExampleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  out << kDatasetHeader << '\n';
  for (const auto& r : records) out << r.id << '\t' << r.label << '\t' << r.premise << '\t' << r.hypothesis << '\n';
}

namespace detail {
inline std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}
}  // namespace detail

/// SNLI jsonl -> canonical records. Labels: entailment 0, neutral 1,
/// contradiction 2; pairs without a gold label are dropped.
inline std::vector<ExampleRecord> convert_snli_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ExampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::is_blank(line)) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto gold = j.at("gold_label").get<std::string>();
      long label = gold == "entailment" ? 0 : gold == "neutral" ? 1 : gold == "contradiction" ? 2 : -1;
      if (label < 0) continue;
      ExampleRecord r;
      r.id = j.contains("pairID") ? j.at("pairID").get<std::string>() : "snli-" + std::to_string(lineno);
      r.label = label;
      r.premise = detail::one_line(j.at("sentence1").get<std::string>());
      r.hypothesis = detail::one_line(j.at("sentence2").get<std::string>());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

/// SciTail tsv (`premise<TAB>hypothesis<TAB>entails|neutral`) -> canonical
/// records with entails 0, neutral 1.
inline std::vector<ExampleRecord> convert_scitail_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ExampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::strip_cr(line);
    if (view.empty()) continue;
    auto f = text::split(view, '\t');
    if (f.size() != 3) throw ParseError(path.string(), lineno, "expected premise, hypothesis, label");
    long label = f[2] == "entails" ? 0 : f[2] == "neutral" ? 1 : -1;
    if (label < 0) throw ParseError(path.string(), lineno, "unknown label " + std::string(f[2]));
    out.push_back({"scitail-" + std::to_string(lineno), label, std::string(f[0]), std::string(f[1])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic knowledge-dependent task.
//
// Every example owns a fresh premise keyword p and hypothesis keyword q, so
// nothing about the label can be learned from the pair text alone. The label
// is set by one injected fact linking the two keywords:
//   0 entailment     p IsA q
//   1 neutral        p RelatedTo r   (r unrelated to q)
//   2 contradiction  p DistinctFrom q
// With `decisive_side = premise` the fact is keyed on p and is the only triple
// with head p, so premise-side retrieval returns it at rank 1; q carries
// distractor facts. With `decisive_side = hypothesis` the fact is keyed on q
// instead (q IsA p / q RelatedTo r / q DistinctFrom p) and p carries a single
// label-independent filler fact, which puts the decisive fact at rank 2 of the
// merged knowledge list.

enum class DecisiveSide { premise, hypothesis };

struct SyntheticOptions {
  std::size_t train = 500;
  std::size_t test = 200;
  std::uint64_t seed = 7;
  DecisiveSide decisive_side = DecisiveSide::premise;
  std::size_t hypothesis_distractors = 2;
  std::size_t background_triples = 200;
};

struct SyntheticTask {
  KgStore kg;
  std::vector<ExampleRecord> train;
  std::vector<ExampleRecord> test;
};

class NonceWords {
 public:
  explicit NonceWords(std::uint64_t seed) : rng_(seed) {
    for (auto w : {"is", "a", "related", "to", "distinct", "from", "has", "property", "at", "location", "the"}) {
      used_.insert(w);
    }
  }

  std::string next() {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    std::uniform_int_distribution<std::size_t> c(0, kConsonants.size() - 1);
    std::uniform_int_distribution<std::size_t> v(0, kVowels.size() - 1);
    for (;;) {
      std::string w;
      for (int s = 0; s < 3; ++s) {
        w += kConsonants[c(rng_)];
        w += kVowels[v(rng_)];
      }
      if (!stop_words().count(w) && used_.insert(w).second) return w;
    }
  }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

inline SyntheticTask generate_synthetic_task(const SyntheticOptions& opt) {
  SyntheticTask task;
  NonceWords words(opt.seed);
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::string> fillers;
  for (int i = 0; i < 12; ++i) fillers.push_back(words.next());
  std::uniform_int_distribution<std::size_t> pick_filler(0, fillers.size() - 1);

  const std::size_t total = opt.train + opt.test;
  std::vector<long> labels(total);
  for (std::size_t i = 0; i < total; ++i) labels[i] = static_cast<long>(i % 3);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<ExampleRecord> all;
  all.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto p = words.next();
    const auto q = words.next();
    const long label = labels[i];
    if (opt.decisive_side == DecisiveSide::premise) {
      switch (label) {
        case 0: task.kg.add(p, "IsA", q); break;
        case 1: task.kg.add(p, "RelatedTo", words.next()); break;
        default: task.kg.add(p, "DistinctFrom", q); break;
      }
      for (std::size_t d = 0; d < opt.hypothesis_distractors; ++d) {
        task.kg.add(q, d % 2 == 0 ? "HasProperty" : "AtLocation", words.next());
      }
    } else {
      task.kg.add(p, "AtLocation", words.next());
      switch (label) {
        case 0: task.kg.add(q, "IsA", p); break;
        case 1: task.kg.add(q, "RelatedTo", words.next()); break;
        default: task.kg.add(q, "DistinctFrom", p); break;
      }
    }
    ExampleRecord r;
    r.id = "syn-" + std::to_string(i);
    r.label = label;
    r.premise = "the " + p + " is " + fillers[pick_filler(rng)];
    r.hypothesis = "a " + q + " is " + fillers[pick_filler(rng)];
    all.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < opt.background_triples; ++i) {
    task.kg.add(words.next(), i % 2 ? "HasProperty" : "IsA", words.next());
  }
  task.kg.freeze();
  task.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(opt.train));
  task.test.assign(all.begin() + static_cast<std::ptrdiff_t>(opt.train), all.end());
  return task;
}

}  // namespace exbert
