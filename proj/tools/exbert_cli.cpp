// exbert: command-line driver for knowledge retrieval, training, evaluation,
// k sweeps and attention export.
//
// Exit status is 0 on success. Failures print a single line starting with
// "error: " to stderr and exit with 1 (2 for usage errors).

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exbert/dataset.hpp"
#include "exbert/pipeline.hpp"

namespace {

using exbert::RunConfig;

struct RunOptions {
  RunConfig config;
  std::string provider = "hash";
  std::string gate = "contexts";
  std::string preset;
  std::string endpoint;
  std::string embeddings;
  std::map<std::string, CLI::Option*> by_key;

  void add_to(CLI::App* app) {
    auto& c = config;
    by_key["provider"] = app->add_option("--provider", provider, "embedding provider {hash,file,remote}")
                             ->check(CLI::IsMember({"hash", "file", "remote"}));
    by_key["location"] = app->add_option("--endpoint", endpoint, "embedding service base URL")->envname("EXBERT_ENDPOINT");
    app->add_option("--embeddings", embeddings, "precomputed embedding file for --provider file");
    by_key["dim"] = app->add_option("--dim", c.provider.dim, "embedding dimension h");
    by_key["provider_seed"] = app->add_option("--provider-seed", c.provider.seed, "hash provider seed");
    by_key["k"] = app->add_option("--k", c.k, "knowledge sentences per example");
    by_key["max_premise"] = app->add_option("--max-premise", c.max_premise, "premise token limit");
    by_key["max_hypothesis"] = app->add_option("--max-hypothesis", c.max_hypothesis, "hypothesis token limit");
    by_key["max_ext"] = app->add_option("--max-ext", c.max_ext, "knowledge sentence token limit");
    app->add_option("--preset", preset, "length preset {snli,scitail,toy}")
        ->check(CLI::IsMember({"snli", "scitail", "toy"}));
    by_key["heads"] = app->add_option("--heads", c.heads, "attention heads (0 = auto)");
    by_key["hidden1"] = app->add_option("--hidden1", c.hidden1, "first MLP layer width (0 = h)");
    by_key["hidden2"] = app->add_option("--hidden2", c.hidden2, "second MLP layer width (0 = h/2)");
    by_key["lr"] = app->add_option("--lr", c.lr, "Adam learning rate");
    by_key["batch"] = app->add_option("--batch", c.batch, "batch size");
    by_key["epochs"] = app->add_option("--epochs", c.epochs, "training epochs");
    by_key["dropout"] = app->add_option("--dropout", c.dropout, "classifier input dropout");
    by_key["seed"] = app->add_option("--seed", c.seed, "training seed");
    by_key["classes"] = app->add_option("--classes", c.classes, "number of classes");
    by_key["max_candidates"] = app->add_option("--max-candidates", c.max_candidates, "candidate cap (0 = unlimited)");
    by_key["gate_input"] = app->add_option("--gate-input", gate, "mixture gate input {contexts,hidden,global}")
                               ->check(CLI::IsMember({"contexts", "hidden", "global"}));
    by_key["ablate_knowledge"] = app->add_flag("--ablate-knowledge", c.ablate_knowledge, "pin the mixture gate to 0");
    by_key["templates"] = app->add_option("--templates", c.templates, "relation template table (TSV)");
  }

  RunConfig resolve() {
    if (!preset.empty()) {
      auto explicit_lengths = config;
      config.apply_length_preset(preset);
      if (by_key["max_premise"]->count()) config.max_premise = explicit_lengths.max_premise;
      if (by_key["max_hypothesis"]->count()) config.max_hypothesis = explicit_lengths.max_hypothesis;
      if (by_key["max_ext"]->count()) config.max_ext = explicit_lengths.max_ext;
    }
    config.provider.kind = exbert::parse_provider_kind(provider);
    config.gate_input = exbert::parse_gate_input(gate);
    if (config.provider.kind == exbert::ProviderKind::remote) {
      if (endpoint.empty()) throw exbert::Error("--provider remote needs --endpoint or EXBERT_ENDPOINT");
      config.provider.location = endpoint;
    } else if (config.provider.kind == exbert::ProviderKind::file) {
      if (embeddings.empty()) throw exbert::Error("--provider file needs --embeddings");
      config.provider.location = embeddings;
    }
    return config;
  }

  /// Only the options given on the command line or in a config file.
  std::map<std::string, std::string> overrides() {
    auto resolved = resolve();
    auto all = resolved.describe();
    std::map<std::string, std::string> out;
    for (const auto& [key, opt] : by_key) {
      if (opt->count() && all.count(key)) out[key] = all[key];
    }
    if (!embeddings.empty()) out["location"] = embeddings;
    if (!preset.empty()) {
      for (auto key : {"max_premise", "max_hypothesis", "max_ext"}) out[key] = all[key];
    }
    return out;
  }
};

struct KgOptions {
  std::string path;
  std::string format = "tsv";
  std::string language = "en";

  void add_to(CLI::App* app, bool required) {
    auto* opt = app->add_option("--kg", path, "knowledge graph file");
    if (required) opt->required();
    app->add_option("--kg-format", format, "knowledge graph format {tsv,conceptnet}")
        ->check(CLI::IsMember({"tsv", "conceptnet"}));
    app->add_option("--language", language, "ConceptNet language tag");
  }

  exbert::KgSource source() const { return {path, exbert::parse_kg_format(format), language}; }
};

void print_stats(const exbert::KgStats& st) {
  std::cout << "triple_count\t" << st.triple_count << "\nrelation_count\t" << st.relation_count << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-enhanced NLI pipeline"};
  app.set_config("--config", "", "INI/TOML file with option defaults");
  app.require_subcommand(1);

  std::string out_dir = "out";

  // build-index
  auto* build = app.add_subcommand("build-index", "normalize a knowledge graph and print its statistics");
  KgOptions build_kg;
  build_kg.add_to(build, true);
  build->add_option("--out", out_dir, "output directory");

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "retrieve knowledge for every example into a cache file");
  KgOptions retrieve_kg;
  retrieve_kg.add_to(retrieve, true);
  RunOptions retrieve_run;
  retrieve_run.add_to(retrieve);
  std::vector<std::string> retrieve_datasets;
  retrieve->add_option("--dataset", retrieve_datasets, "dataset TSV (repeatable)")->required();
  retrieve->add_option("--out", out_dir, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train the integration model");
  RunOptions train_run;
  train_run.add_to(train);
  std::string train_path, dev_path, cache_path;
  train->add_option("--train", train_path, "training dataset TSV")->required();
  train->add_option("--dev", dev_path, "development dataset TSV");
  train->add_option("--cache", cache_path, "retrieval cache")->required();
  train->add_option("--out", out_dir, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  RunOptions eval_run;
  eval_run.add_to(eval);
  std::string eval_dataset, eval_cache, eval_checkpoint;
  eval->add_option("--dataset", eval_dataset, "dataset TSV")->required();
  eval->add_option("--cache", eval_cache, "retrieval cache")->required();
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval->add_option("--out", out_dir, "output directory");

  // sweep-k
  auto* sweep = app.add_subcommand("sweep-k", "retrain and evaluate for each k");
  RunOptions sweep_run;
  sweep_run.add_to(sweep);
  std::string sweep_train, sweep_dev, sweep_cache;
  std::vector<std::size_t> k_list{3, 5, 7, 9, 11, 13, 15};
  sweep->add_option("--train", sweep_train, "training dataset TSV")->required();
  sweep->add_option("--dev", sweep_dev, "evaluation dataset TSV")->required();
  sweep->add_option("--cache", sweep_cache, "retrieval cache")->required();
  sweep->add_option("--k-list", k_list, "comma-separated k values")->delimiter(',');
  sweep->add_option("--out", out_dir, "output directory");

  // attn-export
  auto* attn = app.add_subcommand("attn-export", "export the head-averaged knowledge attention of one example");
  RunOptions attn_run;
  attn_run.add_to(attn);
  std::string attn_id, attn_dataset, attn_cache, attn_checkpoint;
  attn->add_option("--example-id", attn_id, "example id")->required();
  attn->add_option("--dataset", attn_dataset, "dataset TSV")->required();
  attn->add_option("--cache", attn_cache, "retrieval cache")->required();
  attn->add_option("--checkpoint", attn_checkpoint, "checkpoint file")->required();
  attn->add_option("--out", out_dir, "output directory");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic knowledge-dependent task");
  exbert::SyntheticOptions syn;
  std::string decisive = "premise";
  gen->add_option("--train-size", syn.train, "training pairs");
  gen->add_option("--test-size", syn.test, "test pairs");
  gen->add_option("--seed", syn.seed, "generator seed");
  gen->add_option("--decisive-side", decisive, "side keyed by the decisive fact {premise,hypothesis}")
      ->check(CLI::IsMember({"premise", "hypothesis"}));
  gen->add_option("--background", syn.background_triples, "unrelated background triples");
  gen->add_option("--out", out_dir, "output directory");

  // convert
  auto* convert = app.add_subcommand("convert", "convert SNLI jsonl or SciTail tsv to the dataset format");
  std::string convert_format, convert_input, convert_output;
  convert->add_option("--format", convert_format, "{snli,scitail}")->required()->check(CLI::IsMember({"snli", "scitail"}));
  convert->add_option("--input", convert_input, "source file")->required();
  convert->add_option("--output", convert_output, "destination TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*build) {
      auto r = exbert::cmd_build_index(build_kg.source(), out_dir);
      print_stats(r.stats);
      std::cout << "index_keys\t" << r.index_keys << '\n';
      if (build_kg.source().format == exbert::KgFormat::conceptnet) {
        std::cout << "rows\t" << r.conceptnet.rows << "\nskipped_language\t" << r.conceptnet.other_language
                  << "\nskipped_malformed\t" << r.conceptnet.malformed << '\n';
      }
      std::cout << "artifact\t" << r.artifact.string() << '\n';
    } else if (*retrieve) {
      auto config = retrieve_run.resolve();
      std::vector<std::filesystem::path> paths(retrieve_datasets.begin(), retrieve_datasets.end());
      auto out = std::filesystem::path(out_dir) / "retrieval.tsv";
      auto n = exbert::cmd_retrieve(paths, retrieve_kg.source(), config, out);
      std::cout << "examples\t" << n << "\ncache\t" << out.string() << '\n';
    } else if (*train) {
      auto config = train_run.resolve();
      auto art = exbert::cmd_train(train_path, dev_path, cache_path, config, out_dir);
      for (const auto& m : art.result.epochs) {
        std::cout << "epoch " << m.epoch << "\ttrain_loss " << exbert::fixed(m.train_loss) << "\ttrain_acc "
                  << exbert::fixed(m.train_accuracy) << "\tdev_acc " << exbert::fixed(m.dev_accuracy) << '\n';
      }
      std::cout << "checkpoint\t" << art.checkpoint.string() << "\nmetrics\t" << art.metrics.string() << '\n';
    } else if (*eval) {
      auto art = exbert::cmd_eval(eval_dataset, eval_cache, eval_checkpoint, eval_run.overrides(), out_dir);
      std::cout << "accuracy\t" << exbert::fixed(art.result.accuracy) << "\nexamples\t" << art.result.count << '\n';
      std::cout << "confusion (gold rows, predicted columns)\n";
      for (Eigen::Index g = 0; g < art.result.confusion.rows(); ++g) {
        for (Eigen::Index p = 0; p < art.result.confusion.cols(); ++p) {
          std::cout << (p ? "\t" : "") << static_cast<long>(art.result.confusion(g, p));
        }
        std::cout << '\n';
      }
    } else if (*sweep) {
      auto config = sweep_run.resolve();
      auto art = exbert::cmd_sweep_k(sweep_train, sweep_dev, sweep_cache, config, k_list, out_dir);
      std::cout << "k\taccuracy\n";
      for (const auto& r : art.rows) std::cout << r.k << '\t' << exbert::fixed(r.accuracy) << '\n';
      std::cout << "table\t" << art.table.string() << "\nplot\t" << art.plot.string() << '\n';
    } else if (*attn) {
      auto art = exbert::cmd_attn_export(attn_id, attn_dataset, attn_cache, attn_checkpoint, attn_run.overrides(),
                                         out_dir);
      std::cout << "table\t" << art.table.string() << "\nplot\t" << art.plot.string() << '\n';
    } else if (*gen) {
      syn.decisive_side = decisive == "premise" ? exbert::DecisiveSide::premise : exbert::DecisiveSide::hypothesis;
      auto task = exbert::generate_synthetic_task(syn);
      std::filesystem::path dir(out_dir);
      std::filesystem::create_directories(dir);
      exbert::write_tsv(task.kg, dir / "kg.tsv");
      exbert::write_dataset(dir / "train.tsv", task.train);
      exbert::write_dataset(dir / "test.tsv", task.test);
      print_stats(task.kg.stats());
      std::cout << "train\t" << task.train.size() << "\ntest\t" << task.test.size() << '\n';
    } else if (*convert) {
      auto records = convert_format == "snli" ? exbert::convert_snli_jsonl(convert_input)
                                              : exbert::convert_scitail_tsv(convert_input);
      exbert::write_dataset(convert_output, records);
      std::cout << "examples\t" << records.size() << '\n';
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
