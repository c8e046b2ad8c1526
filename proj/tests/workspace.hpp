#pragma once

// Synthetic-task workspace on disk: knowledge graph, train/test datasets and
// a retrieval cache, ready for the pipeline commands.

#include <filesystem>

#include "exbert/dataset.hpp"
#include "exbert/pipeline.hpp"

namespace testing_support {

struct SyntheticWorkspace {
  std::filesystem::path kg, train, test, cache;
  exbert::RunConfig config;
};

inline exbert::RunConfig toy_run_config(std::size_t k) {
  exbert::RunConfig c;
  c.provider = {exbert::ProviderKind::hash, 32, "", 0};
  c.heads = 4;
  c.apply_length_preset("toy");
  c.k = k;
  c.epochs = 20;
  c.seed = 0;
  return c;
}

inline SyntheticWorkspace make_synthetic_workspace(const std::filesystem::path& dir,
                                                   const exbert::SyntheticOptions& options, std::size_t cache_k) {
  SyntheticWorkspace ws;
  std::filesystem::create_directories(dir);
  auto task = exbert::generate_synthetic_task(options);
  ws.kg = dir / "kg.tsv";
  ws.train = dir / "train.tsv";
  ws.test = dir / "test.tsv";
  ws.cache = dir / "retrieval.tsv";
  exbert::write_tsv(task.kg, ws.kg);
  exbert::write_dataset(ws.train, task.train);
  exbert::write_dataset(ws.test, task.test);
  ws.config = toy_run_config(cache_k);
  exbert::cmd_retrieve({ws.train, ws.test}, {ws.kg, exbert::KgFormat::tsv, "en"}, ws.config, ws.cache);
  return ws;
}

}  // namespace testing_support
