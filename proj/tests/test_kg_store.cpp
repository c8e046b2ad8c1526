#include <random>

#include <gtest/gtest.h>

#include "exbert/kg_store.hpp"
#include "support.hpp"

using namespace exbert;
using testing_support::fixture;
using testing_support::TempDir;

namespace {

KgStore frozen(std::initializer_list<std::array<const char*, 3>> rows) {
  KgStore s;
  for (const auto& r : rows) s.add(r[0], r[1], r[2]);
  s.freeze();
  return s;
}

KgStore random_store(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> words = {"a1", "b2", "wave", "crash", "speaking", "public", "sea", "x", "yy"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1), len(1, 4);
  KgStore s;
  for (std::size_t i = 0; i < n; ++i) {
    std::string head;
    for (std::size_t j = 0, l = len(rng); j < l; ++j) head += (j ? "_" : "") + words[w(rng)];
    s.add(head, i % 3 ? "IsA" : "RelatedTo", words[w(rng)]);
  }
  s.freeze();
  return s;
}

}  // namespace

TEST(KgStore, IngestsFixtureRowsInFileOrder) {
  auto store = ingest_tsv(fixture("worked_kg.tsv"));
  ASSERT_GE(store.size(), 2u);
  EXPECT_EQ(store.at(0), (Triple{0, "public_speaking", "IsA", "speaking"}));
  EXPECT_EQ(store.at(1), (Triple{1, "wave", "RelatedTo", "crash"}));
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_EQ(store.triples()[i].id, i);
}

TEST(KgStore, EmptyFileGivesEmptyStore) {
  TempDir dir;
  testing_support::spit(dir / "kg.tsv", "");
  auto store = ingest_tsv(dir / "kg.tsv");
  EXPECT_EQ(store.stats().triple_count, 0u);
  EXPECT_EQ(build_index(store).key_count(), 0u);
}

TEST(KgStore, NormalizesCaseAndSpaces) {
  KgStore s;
  auto id = s.add("Public Speaking", "IsA", "Speaking");
  EXPECT_EQ(s.at(id).head, "public_speaking");
  EXPECT_EQ(s.at(id).tail, "speaking");
}

TEST(KgStore, DuplicatesCollapse) {
  KgStore s;
  auto a = s.add("wave", "RelatedTo", "crash");
  auto b = s.add("Wave", "RelatedTo", "crash");
  EXPECT_EQ(a, b);
  EXPECT_EQ(s.size(), 1u);
}

TEST(KgStore, FrozenStoreRejectsAdd) {
  KgStore s;
  s.freeze();
  EXPECT_THROW(s.add("a", "IsA", "b"), Error);
}

TEST(KgStore, MalformedLinesReportLineNumber) {
  TempDir dir;
  testing_support::spit(dir / "bad.tsv", "# comment\nwave\tRelatedTo\tcrash\n\nonly\ttwo\n");
  try {
    ingest_tsv(dir / "bad.tsv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  testing_support::spit(dir / "empty_field.tsv", "a\tIsA\tb\na\t\tb\n");
  try {
    ingest_tsv(dir / "empty_field.tsv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  testing_support::spit(dir / "four.tsv", "a\tIsA\tb\tc\n");
  EXPECT_THROW(ingest_tsv(dir / "four.tsv"), ParseError);
  testing_support::spit(dir / "underscores.tsv", "___\tIsA\tb\n");
  EXPECT_THROW(ingest_tsv(dir / "underscores.tsv"), ParseError);
}

TEST(KgStore, MissingFileIsIoError) { EXPECT_THROW(ingest_tsv("/nonexistent/kg.tsv"), IoError); }

TEST(KgStore, StatsCountDistinctRelations) {
  auto s = frozen({{{"a", "IsA", "b"}}, {{"c", "IsA", "d"}}, {{"e", "HasA", "f"}}});
  EXPECT_EQ(s.stats(), (KgStats{3, 2}));
}

TEST(KgStore, ConceptNetFiltersLanguageAndCounts) {
  ConceptNetReport rep;
  auto store = ingest_conceptnet_dump(fixture("conceptnet_sample.csv"), "en", &rep);
  EXPECT_EQ(rep.rows, 8u);
  EXPECT_EQ(rep.kept, 3u);
  EXPECT_EQ(rep.other_language, 2u);
  EXPECT_EQ(rep.malformed, 2u);
  EXPECT_EQ(rep.duplicates, 1u);
  ASSERT_EQ(store.size(), 3u);
  EXPECT_EQ(store.at(0), (Triple{0, "wave", "RelatedTo", "crash"}));
  EXPECT_EQ(store.at(1), (Triple{1, "crash", "IsA", "hit"}));
  EXPECT_EQ(store.at(2), (Triple{2, "public_speaking", "IsA", "speaking"}));
  EXPECT_TRUE(store.frozen());
}

TEST(KgStore, ConceptNetWithNothingRetainedErrors) {
  try {
    ingest_conceptnet_dump(fixture("conceptnet_nonenglish.csv"), "en");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no triples retained"), std::string::npos);
  }
}

TEST(KnowledgeIndex, SingleTripleKeys) {
  auto s = frozen({{{"public_speaking", "IsA", "speaking"}}});
  auto index = build_index(s);
  EXPECT_EQ(index.key_count(), 2u);
  EXPECT_EQ(lookup_by_token(index, "public"), std::vector<TripleId>{0});
  EXPECT_EQ(lookup_by_token(index, "speaking"), std::vector<TripleId>{0});
}

TEST(KnowledgeIndex, WholeWordMatchOnly) {
  auto s = ingest_tsv(fixture("worked_kg.tsv"));
  auto index = build_index(s);
  auto hits = lookup_by_token(index, "speaking");
  EXPECT_NE(std::find(hits.begin(), hits.end(), 0u), hits.end());
  EXPECT_TRUE(lookup_by_token(index, "speak").empty());
  EXPECT_EQ(lookup_by_token(index, "speak"), scan_by_token(s, "speak"));
  EXPECT_TRUE(lookup_by_token(index, "zebra").empty());
}

TEST(KnowledgeIndex, SharedHeadWordIsSorted) {
  auto s = frozen({{{"wave", "RelatedTo", "crash"}}, {{"sea", "HasA", "wave"}}, {{"big_wave", "IsA", "wave"}}});
  EXPECT_EQ(lookup_by_token(build_index(s), "wave"), (std::vector<TripleId>{0, 2}));
}

TEST(KnowledgeIndex, RequiresFrozenStore) {
  KgStore s;
  s.add("a", "IsA", "b");
  EXPECT_THROW(build_index(s), Error);
}

TEST(KnowledgeIndex, MatchesLinearScanOnRandomStores) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_store(rng, trial * 3);
    auto index = build_index(s);
    for (const auto& t : {"a1", "b2", "wave", "crash", "speaking", "public", "sea", "x", "yy", "absent"}) {
      ASSERT_EQ(lookup_by_token(index, t), scan_by_token(s, t)) << "token " << t << " trial " << trial;
    }
    // every key maps only to heads containing it, and every head word is a key
    for (const auto& [key, ids] : index.postings()) {
      EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
      for (auto id : ids) {
        auto words = entity_words(s.at(id).head);
        EXPECT_NE(std::find(words.begin(), words.end(), key), words.end());
      }
    }
    for (const auto& t : s.triples()) {
      for (const auto& w : entity_words(t.head)) {
        auto hits = index.lookup(w);
        EXPECT_NE(std::find(hits.begin(), hits.end(), t.id), hits.end());
      }
    }
  }
}

TEST(KnowledgeIndex, IngestIsIdempotent) {
  TempDir dir;
  std::mt19937_64 rng(5);
  auto s = random_store(rng, 60);
  write_tsv(s, dir / "kg.tsv");
  auto a = ingest_tsv(dir / "kg.tsv");
  auto b = ingest_tsv(dir / "kg.tsv");
  EXPECT_EQ(a.triples(), b.triples());
  EXPECT_EQ(a.triples(), s.triples());
  auto ia = build_index(a), ib = build_index(b);
  EXPECT_EQ(ia.postings(), ib.postings());
}
