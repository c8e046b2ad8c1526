#include <chrono>

#include <gtest/gtest.h>

#include "exbert/pipeline.hpp"
#include "support.hpp"
#include "workspace.hpp"

using namespace exbert;
using testing_support::fixture;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

SyntheticOptions small_task(std::size_t train, std::size_t test, std::uint64_t seed = 7) {
  SyntheticOptions o;
  o.train = train;
  o.test = test;
  o.seed = seed;
  o.background_triples = 20;
  return o;
}

}  // namespace

TEST(RunConfig, DescribeRoundTrips) {
  RunConfig c;
  c.k = 5;
  c.lr = 0.0123;
  c.gate_input = GateInput::global;
  c.ablate_knowledge = true;
  auto back = RunConfig::from_map(c.describe());
  EXPECT_EQ(back.describe(), c.describe());
  EXPECT_THROW(RunConfig::from_map({{"k", "many"}}), ParseError);
}

TEST(RunConfig, HeadRuleAndValidation) {
  RunConfig c;
  c.provider.dim = 768;
  EXPECT_EQ(c.resolved_heads(), 12);
  c.provider.dim = 32;
  EXPECT_EQ(c.resolved_heads(), 4);
  c.provider.dim = 7;
  EXPECT_EQ(c.resolved_heads(), 1);
  c.lr = 0;
  EXPECT_THROW(c.validate(), Error);
  RunConfig d;
  d.heads = 5;
  EXPECT_THROW(d.validate(), Error);
  d.heads = 0;
  d.apply_length_preset("scitail");
  EXPECT_EQ(d.max_premise, 60u);
  EXPECT_THROW(d.apply_length_preset("mnli"), Error);
}

TEST(Dataset, ReadErrors) {
  TempDir dir;
  testing_support::spit(dir / "no_header.tsv", "a\t0\tp\th\n");
  EXPECT_THROW(read_dataset(dir / "no_header.tsv"), ParseError);
  testing_support::spit(dir / "dup.tsv", "id\tlabel\tpremise\thypothesis\na\t0\tp\th\na\t1\tp\th\n");
  try {
    read_dataset(dir / "dup.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_TRUE(read_dataset(fixture("empty_dataset.tsv")).empty());
}

TEST(Dataset, Converters) {
  TempDir dir;
  testing_support::spit(dir / "snli.jsonl",
                        R"({"gold_label":"entailment","sentence1":"A man.","sentence2":"A person.","pairID":"p1"})"
                        "\n"
                        R"({"gold_label":"-","sentence1":"x","sentence2":"y","pairID":"p2"})"
                        "\n"
                        R"({"gold_label":"contradiction","sentence1":"A\tdog.","sentence2":"A cat.","pairID":"p3"})"
                        "\n");
  auto snli = convert_snli_jsonl(dir / "snli.jsonl");
  ASSERT_EQ(snli.size(), 2u);
  EXPECT_EQ(snli[0], (ExampleRecord{"p1", 0, "A man.", "A person."}));
  EXPECT_EQ(snli[1].label, 2);
  EXPECT_EQ(snli[1].premise, "A dog.");
  testing_support::spit(dir / "scitail.tsv", "Waves crash.\tWaves hit.\tentails\nA.\tB.\tneutral\n");
  auto sci = convert_scitail_tsv(dir / "scitail.tsv");
  ASSERT_EQ(sci.size(), 2u);
  EXPECT_EQ(sci[1].label, 1);
}

TEST(Synthetic, GeneratorIsDeterministicAndBalanced) {
  auto a = generate_synthetic_task(small_task(300, 60));
  auto b = generate_synthetic_task(small_task(300, 60));
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.kg.triples(), b.kg.triples());
  std::array<int, 3> counts{};
  for (const auto& r : a.train) ++counts[static_cast<std::size_t>(r.label)];
  for (const auto& r : a.test) ++counts[static_cast<std::size_t>(r.label)];
  EXPECT_EQ(counts[0], 120);
  EXPECT_EQ(counts[1], 120);
  EXPECT_EQ(counts[2], 120);
}

TEST(Synthetic, DecisiveFactRanksWhereConstructed) {
  for (auto side : {DecisiveSide::premise, DecisiveSide::hypothesis}) {
    auto opts = small_task(30, 0);
    opts.decisive_side = side;
    auto task = generate_synthetic_task(opts);
    auto index = build_index(task.kg);
    auto templates = TemplateTable::conceptnet_default();
    HashProvider provider(32, 0);
    const std::size_t want_rank = side == DecisiveSide::premise ? 1 : 2;
    for (const auto& r : task.train) {
      auto p = retrieve(index, task.kg, templates, provider, r.premise, {11, 0}, Side::premise);
      auto h = retrieve(index, task.kg, templates, provider, r.hypothesis, {11, 0}, Side::hypothesis);
      auto merged = merge_external(p, h, 11);
      ASSERT_GE(merged.size(), want_rank);
      const auto& rel = task.kg.at(merged[want_rank - 1].triple_id).relation;
      const char* expected = r.label == 0 ? "IsA" : r.label == 1 ? "RelatedTo" : "DistinctFrom";
      EXPECT_EQ(rel, expected) << r.id;
    }
  }
}

TEST(Commands, BuildIndexReportsStats) {
  TempDir dir;
  testing_support::spit(dir / "kg.tsv", "a\tIsA\tb\nc\tIsA\td\ne\tHasA\tf\n");
  auto r = cmd_build_index({dir / "kg.tsv", KgFormat::tsv, "en"}, dir / "out");
  EXPECT_EQ(r.stats, (KgStats{3, 2}));
  EXPECT_EQ(r.index_keys, 3u);
  EXPECT_EQ(ingest_tsv(r.artifact).triples(), ingest_tsv(dir / "kg.tsv").triples());
  auto cn = cmd_build_index({fixture("conceptnet_sample.csv"), KgFormat::conceptnet, "en"}, dir / "cn");
  EXPECT_EQ(cn.conceptnet.kept, 3u);
  EXPECT_THROW(cmd_build_index({dir / "missing.tsv", KgFormat::tsv, "en"}, dir / "x"), IoError);
}

TEST(Commands, RetrieveTableOneAndDeterminism) {
  TempDir dir;
  auto config = testing_support::toy_run_config(11);
  KgSource kg{fixture("worked_kg.tsv"), KgFormat::tsv, "en"};
  EXPECT_EQ(cmd_retrieve({fixture("worked_pair.tsv")}, kg, config, dir / "a.tsv"), 1u);
  cmd_retrieve({fixture("worked_pair.tsv")}, kg, config, dir / "b.tsv");
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));
  auto text = slurp(dir / "a.tsv");
  EXPECT_NE(text.find("wave related to crash"), std::string::npos);
  EXPECT_NE(text.find("crash is a hit"), std::string::npos);
  EXPECT_EQ(text.rfind("# ", 0), 0u);

  cmd_retrieve({fixture("empty_dataset.tsv")}, kg, config, dir / "empty.tsv");
  EXPECT_TRUE(read_retrieval_cache(dir / "empty.tsv").entries.empty());
}

TEST(Commands, RetrieveCleansUpOnTransportError) {
  TempDir dir;
  const int port = testing_support::closed_local_port();
  auto remote = std::make_shared<RemoteProvider>("http://127.0.0.1:" + std::to_string(port), 32);
  auto config = testing_support::toy_run_config(11);
  EXPECT_THROW(cmd_retrieve({fixture("worked_pair.tsv")}, {fixture("worked_kg.tsv"), KgFormat::tsv, "en"}, config,
                            dir / "cache.tsv", remote),
               TransportError);
  EXPECT_FALSE(std::filesystem::exists(dir / "cache.tsv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "cache.tsv.partial"));
}

TEST(Commands, TrainEvalDeterministicAndSelfConsistent) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(60, 30), 5);
  auto config = ws.config;
  config.epochs = 3;
  auto a = cmd_train(ws.train, ws.test, ws.cache, config, dir / "a");
  auto b = cmd_train(ws.train, ws.test, ws.cache, config, dir / "b");
  EXPECT_EQ(slurp(a.checkpoint), slurp(b.checkpoint));
  EXPECT_EQ(slurp(a.metrics), slurp(b.metrics));
  ASSERT_EQ(a.result.epochs.size(), 3u);

  auto e1 = cmd_eval(ws.train, ws.cache, a.checkpoint, {}, dir / "e1");
  auto e2 = cmd_eval(ws.train, ws.cache, a.checkpoint, {}, dir / "e2");
  EXPECT_EQ(slurp(e1.report), slurp(e2.report));
  EXPECT_EQ(e1.result.accuracy, a.result.epochs.back().train_accuracy);
  EXPECT_NEAR(e1.result.loss, a.result.epochs.back().train_loss, 1e-12);
  EXPECT_EQ(e1.result.confusion.sum(), 60.0);

  auto dev = cmd_eval(ws.test, ws.cache, a.checkpoint, {}, dir / "e3");
  EXPECT_EQ(dev.result.accuracy, a.result.epochs.back().dev_accuracy);
}

TEST(Commands, EpochsZeroSavesInitialParams) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(12, 3), 5);
  auto config = ws.config;
  config.epochs = 0;
  auto art = cmd_train(ws.train, "", ws.cache, config, dir / "out");
  auto ck = load_checkpoint(art.checkpoint);
  auto init = init_params(config.model(), config.seed);
  std::vector<const MatrixD*> expected;
  init.visit([&](const std::string&, const MatrixD& m) { expected.push_back(&m); });
  std::size_t i = 0;
  ck.params.visit([&](const std::string& name, const MatrixD& m) { EXPECT_EQ(m, *expected[i++]) << name; });
  EXPECT_TRUE(art.result.epochs.empty());
}

TEST(Commands, OneEpochOnTenExamplesIsFast) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(10, 0), 5);
  auto config = ws.config;
  config.epochs = 1;
  auto start = std::chrono::steady_clock::now();
  cmd_train(ws.train, "", ws.cache, config, dir / "out");
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(Commands, EvalErrors) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(12, 3), 5);
  auto config = ws.config;
  config.epochs = 1;
  auto art = cmd_train(ws.train, "", ws.cache, config, dir / "out");
  EXPECT_THROW(cmd_eval(fixture("empty_dataset.tsv"), ws.cache, art.checkpoint, {}, dir / "e"), Error);
  try {
    cmd_eval(ws.test, ws.cache, art.checkpoint, {{"dim", "16"}}, dir / "e");
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
  EXPECT_THROW(cmd_eval(ws.test, ws.cache, art.checkpoint, {{"k", "9"}}, dir / "e"), Error);
  EXPECT_THROW(cmd_eval(fixture("worked_pair.tsv"), ws.cache, art.checkpoint, {}, dir / "e"), LookupError);
}

TEST(Commands, RandomCheckpointIsNearChance) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(0, 1200, 21), 5);
  auto config = ws.config;
  config.seed = 99;
  save_checkpoint(dir / "random.txt", config.model(), init_params(config.model(), config.seed), config.describe());
  auto ev = cmd_eval(ws.test, ws.cache, dir / "random.txt", {}, dir / "eval");
  EXPECT_EQ(ev.result.count, 1200u);
  EXPECT_NEAR(ev.result.accuracy, 1.0 / 3, 0.05);
}

TEST(Commands, SweepValidatesDepthAndIsDeterministic) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(30, 15), 3);
  auto config = ws.config;
  config.epochs = 2;
  try {
    cmd_sweep_k(ws.train, ws.test, ws.cache, config, {1, 3, 7}, dir / "bad");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("k=7"), std::string::npos);
  }
  auto a = cmd_sweep_k(ws.train, ws.test, ws.cache, config, {2}, dir / "a");
  auto b = cmd_sweep_k(ws.train, ws.test, ws.cache, config, {2}, dir / "b");
  ASSERT_EQ(a.rows.size(), 1u);
  EXPECT_EQ(slurp(a.table), slurp(b.table));
  EXPECT_EQ(slurp(a.plot), slurp(b.plot));
  EXPECT_NE(slurp(a.plot).find("<svg"), std::string::npos);
  EXPECT_THROW(cmd_sweep_k(ws.train, ws.test, ws.cache, config, {}, dir / "c"), Error);
}

TEST(Commands, AttnExport) {
  TempDir dir;
  auto ws = testing_support::make_synthetic_workspace(dir / "ws", small_task(12, 3), 5);
  auto config = ws.config;
  config.k = 1;
  config.epochs = 1;
  auto art = cmd_train(ws.train, "", ws.cache, config, dir / "train");
  auto id = read_dataset(ws.train).front().id;
  auto a = cmd_attn_export(id, ws.train, ws.cache, art.checkpoint, {}, dir / "a");
  auto b = cmd_attn_export(id, ws.train, ws.cache, art.checkpoint, {}, dir / "b");
  EXPECT_EQ(slurp(a.table), slurp(b.table));
  EXPECT_EQ(slurp(a.plot), slurp(b.plot));
  ASSERT_EQ(a.heatmap.weights.rows(), 1);
  EXPECT_TRUE((a.heatmap.weights.array() == 1.0).all());
  auto back = read_heatmap_tsv(a.table);
  EXPECT_EQ(back.tokens, a.heatmap.tokens);
  EXPECT_EQ(back.sentences, a.heatmap.sentences);
  EXPECT_THROW(cmd_attn_export("nope", ws.train, ws.cache, art.checkpoint, {}, dir / "c"), LookupError);
}

TEST(Artifacts, AtomicWriteRemovesPartialOnFailure) {
  TempDir dir;
  EXPECT_THROW(write_atomically(dir / "x.tsv", [](std::ostream&) { throw Error("boom"); }), Error);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.tsv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "x.tsv.partial"));
}
