#pragma once

// Batch commands behind the CLI. Every command is a deterministic function of
// its inputs and RunConfig; data artifacts begin with `# key=value` lines
// echoing the resolved configuration, followed by a TSV header row.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "exbert/checkpoint.hpp"
#include "exbert/dataset.hpp"
#include "exbert/embedding.hpp"
#include "exbert/encoding.hpp"
#include "exbert/error.hpp"
#include "exbert/kg_store.hpp"
#include "exbert/model.hpp"
#include "exbert/optimizer.hpp"
#include "exbert/plot.hpp"
#include "exbert/remote_provider.hpp"
#include "exbert/retriever.hpp"
#include "exbert/verbalizer.hpp"

namespace exbert {

struct RunConfig {
  ProviderSpec provider;
  std::size_t k = 11;
  std::size_t max_premise = 40;
  std::size_t max_hypothesis = 40;
  std::size_t max_ext = 15;
  Eigen::Index heads = 0;  // 0 -> 12 for h >= 768 divisible by 12, else 4 when it divides h, else 1
  Eigen::Index hidden1 = 0;
  Eigen::Index hidden2 = 0;
  double lr = 1e-3;
  std::size_t batch = 16;
  std::size_t epochs = 3;
  double dropout = 0.5;
  std::uint64_t seed = 0;
  Eigen::Index classes = 3;
  std::size_t max_candidates = 0;
  GateInput gate_input = GateInput::contexts;
  bool ablate_knowledge = false;
  std::string templates;  // empty -> built-in table

  Eigen::Index resolved_heads() const {
    if (heads > 0) return heads;
    const auto h = provider.dim;
    if (h >= 768 && h % 12 == 0) return 12;
    if (h % 4 == 0) return 4;
    return 1;
  }

  ModelConfig model() const {
    ModelConfig m;
    m.dim = provider.dim;
    m.heads = resolved_heads();
    m.hidden1 = hidden1;
    m.hidden2 = hidden2;
    m.classes = classes;
    m.dropout = dropout;
    m.gate_input = gate_input;
    m.ablate_knowledge = ablate_knowledge;
    return m;
  }

  void validate() const {
    if (max_premise < 1 || max_hypothesis < 1 || max_ext < 1) throw Error("maximum lengths must be >= 1");
    if (!(lr > 0.0)) throw Error("learning rate must be > 0");
    if (batch < 1) throw Error("batch size must be >= 1");
    model().validate();
  }

  std::map<std::string, std::string> describe() const {
    auto real = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    return {{"provider", to_string(provider.kind)},
            {"dim", std::to_string(provider.dim)},
            {"location", provider.location},
            {"provider_seed", std::to_string(provider.seed)},
            {"k", std::to_string(k)},
            {"max_premise", std::to_string(max_premise)},
            {"max_hypothesis", std::to_string(max_hypothesis)},
            {"max_ext", std::to_string(max_ext)},
            {"heads", std::to_string(resolved_heads())},
            {"hidden1", std::to_string(model().first_hidden())},
            {"hidden2", std::to_string(model().second_hidden())},
            {"lr", real(lr)},
            {"batch", std::to_string(batch)},
            {"epochs", std::to_string(epochs)},
            {"dropout", real(dropout)},
            {"seed", std::to_string(seed)},
            {"classes", std::to_string(classes)},
            {"max_candidates", std::to_string(max_candidates)},
            {"gate_input", to_string(gate_input)},
            {"ablate_knowledge", ablate_knowledge ? "1" : "0"},
            {"templates", templates}};
  }

  /// Inverse of describe(); keys that are absent keep their defaults.
  static RunConfig from_map(const std::map<std::string, std::string>& m) {
    RunConfig c;
    auto has = [&](const char* key) { return m.count(key) > 0; };
    try {
      if (has("provider")) c.provider.kind = parse_provider_kind(m.at("provider"));
      if (has("dim")) c.provider.dim = std::stol(m.at("dim"));
      if (has("location")) c.provider.location = m.at("location");
      if (has("provider_seed")) c.provider.seed = std::stoull(m.at("provider_seed"));
      if (has("k")) c.k = std::stoul(m.at("k"));
      if (has("max_premise")) c.max_premise = std::stoul(m.at("max_premise"));
      if (has("max_hypothesis")) c.max_hypothesis = std::stoul(m.at("max_hypothesis"));
      if (has("max_ext")) c.max_ext = std::stoul(m.at("max_ext"));
      if (has("heads")) c.heads = std::stol(m.at("heads"));
      if (has("hidden1")) c.hidden1 = std::stol(m.at("hidden1"));
      if (has("hidden2")) c.hidden2 = std::stol(m.at("hidden2"));
      if (has("lr")) c.lr = std::stod(m.at("lr"));
      if (has("batch")) c.batch = std::stoul(m.at("batch"));
      if (has("epochs")) c.epochs = std::stoul(m.at("epochs"));
      if (has("dropout")) c.dropout = std::stod(m.at("dropout"));
      if (has("seed")) c.seed = std::stoull(m.at("seed"));
      if (has("classes")) c.classes = std::stol(m.at("classes"));
      if (has("max_candidates")) c.max_candidates = std::stoul(m.at("max_candidates"));
      if (has("gate_input")) c.gate_input = parse_gate_input(m.at("gate_input"));
      if (has("ablate_knowledge")) c.ablate_knowledge = m.at("ablate_knowledge") == "1";
      if (has("templates")) c.templates = m.at("templates");
    } catch (const std::logic_error&) {
      throw ParseError("bad configuration value");
    }
    return c;
  }

  /// Maximum lengths per dataset family: snli 40/40/15, scitail 60/60/15, toy 16/16/8.
  void apply_length_preset(const std::string& preset) {
    if (preset == "snli") {
      max_premise = max_hypothesis = 40;
      max_ext = 15;
    } else if (preset == "scitail") {
      max_premise = max_hypothesis = 60;
      max_ext = 15;
    } else if (preset == "toy") {
      max_premise = max_hypothesis = 16;
      max_ext = 8;
    } else {
      throw Error("unknown length preset: " + preset);
    }
  }
};

inline void write_config_header(std::ostream& out, const std::map<std::string, std::string>& header) {
  for (const auto& [key, value] : header) out << "# " << key << '=' << value << '\n';
}

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Writes through a temporary file that is renamed on success and removed on failure.
template <class Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  try {
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw IoError("cannot write " + tmp.string());
      writer(out);
      if (!out) throw IoError("write failure: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  write_atomically(path, [&](std::ostream& out) { out << content; });
}

// ---------------------------------------------------------------------------
// Knowledge graph

enum class KgFormat { tsv, conceptnet };

inline KgFormat parse_kg_format(const std::string& s) {
  if (s == "tsv") return KgFormat::tsv;
  if (s == "conceptnet") return KgFormat::conceptnet;
  throw Error("unknown kg format: " + s);
}

struct KgSource {
  std::filesystem::path path;
  KgFormat format = KgFormat::tsv;
  std::string language = "en";
};

inline KgStore load_kg(const KgSource& src, ConceptNetReport* report = nullptr) {
  return src.format == KgFormat::tsv ? ingest_tsv(src.path) : ingest_conceptnet_dump(src.path, src.language, report);
}

struct BuildIndexResult {
  KgStats stats;
  std::size_t index_keys = 0;
  ConceptNetReport conceptnet;
  std::filesystem::path artifact;
};

/// Normalizes the graph into `<out>/kg.tsv`. Reloading that file and
/// rebuilding the index reproduces the same index.
inline BuildIndexResult cmd_build_index(const KgSource& src, const std::filesystem::path& out_dir) {
  BuildIndexResult r;
  auto store = load_kg(src, &r.conceptnet);
  auto index = build_index(store);
  r.stats = store.stats();
  r.index_keys = index.key_count();
  std::filesystem::create_directories(out_dir);
  r.artifact = out_dir / "kg.tsv";
  write_atomically(r.artifact, [&](std::ostream& out) {
    out << "# triples=" << r.stats.triple_count << " relations=" << r.stats.relation_count << '\n';
    for (const auto& t : store.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  });
  return r;
}

// ---------------------------------------------------------------------------
// Retrieval

inline TemplateTable load_templates(const RunConfig& config) {
  return config.templates.empty() ? TemplateTable::conceptnet_default() : TemplateTable::load(config.templates);
}

/// Retrieves premise and hypothesis knowledge for every example of every
/// dataset and writes the cache to `out_path`.
inline std::size_t cmd_retrieve(const std::vector<std::filesystem::path>& datasets, const KgSource& kg,
                                const RunConfig& config, const std::filesystem::path& out_path,
                                std::shared_ptr<const EmbeddingProvider> provider = nullptr) {
  auto store = load_kg(kg);
  auto index = build_index(store);
  auto templates = load_templates(config);
  if (!provider) provider = make_provider(config.provider);
  RetrievalOptions options{config.k, config.max_candidates};

  std::vector<std::pair<std::string, RetrievalCacheEntry>> rows;
  std::unordered_set<std::string> ids;
  for (const auto& path : datasets) {
    for (const auto& rec : read_dataset(path)) {
      if (!ids.insert(rec.id).second) throw Error("example id " + rec.id + " appears in more than one dataset");
      RetrievalCacheEntry entry;
      entry.premise = retrieve(index, store, templates, *provider, rec.premise, options, Side::premise);
      entry.hypothesis = retrieve(index, store, templates, *provider, rec.hypothesis, options, Side::hypothesis);
      rows.emplace_back(rec.id, std::move(entry));
    }
  }
  auto header = config.describe();
  header["kg"] = kg.path.string();
  write_atomically(out_path, [&](std::ostream& out) { write_retrieval_cache(out, header, rows); });
  return rows.size();
}

// ---------------------------------------------------------------------------
// Model data

/// Encodes records with their cached knowledge (first `config.k` merged items).
inline std::vector<Example> prepare_examples(const std::vector<ExampleRecord>& records, const RetrievalCache& cache,
                                             const EmbeddingProvider& provider, const RunConfig& config) {
  if (provider.dim() != config.provider.dim) {
    throw ShapeError("dimension mismatch: provider dim " + std::to_string(provider.dim()) + " vs configured " +
                     std::to_string(config.provider.dim));
  }
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.label >= config.classes) {
      throw Error("example " + rec.id + " has label " + std::to_string(rec.label) + " >= class count " +
                  std::to_string(config.classes));
    }
    const auto& entry = cache.at(rec.id);
    Example ex;
    ex.id = rec.id;
    ex.label = rec.label;
    ex.pair = encode_pair(provider, tokenize(rec.premise), tokenize(rec.hypothesis), config.max_premise,
                          config.max_hypothesis);
    std::vector<std::string> sentences;
    for (const auto& item : merge_external(entry.premise, entry.hypothesis, config.k)) sentences.push_back(item.sentence);
    if (sentences.empty()) {
      ex.knowledge.rows = MatrixD(0, provider.dim());
    } else {
      ex.knowledge = encode_external(provider, sentences, config.max_ext);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
  MatrixD confusion;  // gold x predicted counts
};

inline EvalResult evaluate(const std::vector<Example>& examples, const ModelParams<double>& params,
                           const ModelConfig& model) {
  if (examples.empty()) throw Error("cannot evaluate an empty dataset");
  EvalResult r;
  r.count = examples.size();
  r.confusion = MatrixD::Zero(model.classes, model.classes);
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    auto probs = predict(ex, params, model);
    Eigen::Index pred = 0;
    probs.maxCoeff(&pred);
    if (pred == ex.label) ++correct;
    r.confusion(ex.label, pred) += 1;
    r.loss -= std::log(probs[ex.label]);
  }
  r.loss /= static_cast<double>(examples.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return r;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0, train_accuracy = 0;
  double dev_loss = 0, dev_accuracy = 0;
};

struct TrainResult {
  ModelParams<double> params;
  std::vector<EpochMetrics> epochs;
};

/// Adam on mean cross-entropy. Shuffle order and dropout masks derive from config.seed.
inline TrainResult train_model(const std::vector<Example>& train, const std::vector<Example>& dev,
                               const RunConfig& config) {
  if (train.empty()) throw Error("empty training set");
  const auto model = config.model();
  TrainResult result;
  result.params = init_params(model, config.seed);
  Adam<double> adam(result.params, AdamOptions{config.lr});
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 shuffler(config.seed + 0x5851f42d4c957f2dULL);
  std::uint64_t step = 0;
  std::vector<Example> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + config.batch); ++j) batch.push_back(train[order[j]]);
      auto lg = loss_and_grads<double>(batch, result.params, model, true, config.seed * 1000003ULL + step++);
      adam.step(result.params, lg.grads);
    }
    EpochMetrics m;
    m.epoch = epoch;
    auto tr = evaluate(train, result.params, model);
    m.train_loss = tr.loss;
    m.train_accuracy = tr.accuracy;
    if (!dev.empty()) {
      auto dv = evaluate(dev, result.params, model);
      m.dev_loss = dv.loss;
      m.dev_accuracy = dv.accuracy;
    }
    if (!std::isfinite(m.train_loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (train loss not finite)");
    }
    result.epochs.push_back(m);
  }
  return result;
}

inline void require_cache_depth(const RetrievalCache& cache, std::size_t k) {
  if (k > cache.depth()) {
    throw Error("k=" + std::to_string(k) + " exceeds retrieval cache depth " + std::to_string(cache.depth()));
  }
}

struct TrainArtifacts {
  TrainResult result;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
};

/// Trains from scratch and writes `<out>/checkpoint.txt` and `<out>/metrics.tsv`.
inline TrainArtifacts cmd_train(const std::filesystem::path& train_path, const std::filesystem::path& dev_path,
                                const std::filesystem::path& cache_path, const RunConfig& config,
                                const std::filesystem::path& out_dir,
                                std::shared_ptr<const EmbeddingProvider> provider = nullptr) {
  config.validate();
  auto cache = read_retrieval_cache(cache_path);
  require_cache_depth(cache, config.k);
  if (!provider) provider = make_provider(config.provider);
  auto train = prepare_examples(read_dataset(train_path), cache, *provider, config);
  std::vector<Example> dev;
  if (!dev_path.empty()) dev = prepare_examples(read_dataset(dev_path), cache, *provider, config);

  TrainArtifacts art;
  art.result = train_model(train, dev, config);
  std::filesystem::create_directories(out_dir);
  art.checkpoint = out_dir / "checkpoint.txt";
  art.metrics = out_dir / "metrics.tsv";
  auto header = config.describe();
  write_atomically(art.checkpoint, [&](std::ostream& out) {
    write_checkpoint(out, config.model(), art.result.params, header);
  });
  write_atomically(art.metrics, [&](std::ostream& out) {
    write_config_header(out, header);
    out << "epoch\ttrain_loss\ttrain_accuracy\tdev_loss\tdev_accuracy\n";
    for (const auto& m : art.result.epochs) {
      out << m.epoch << '\t' << fixed(m.train_loss) << '\t' << fixed(m.train_accuracy) << '\t' << fixed(m.dev_loss)
          << '\t' << fixed(m.dev_accuracy) << '\n';
    }
  });
  return art;
}

/// Run configuration stored in a checkpoint, with `overrides` applied on top.
/// Model dimensions in the result must agree with the checkpoint tensors.
inline RunConfig config_for_checkpoint(const Checkpoint& ck, const std::map<std::string, std::string>& overrides) {
  auto merged = ck.meta;
  for (const auto& [k, v] : overrides) merged[k] = v;
  auto config = RunConfig::from_map(merged);
  auto model = config.model();
  const auto& stored = ck.config;
  if (model.dim != stored.dim || model.heads != stored.heads || model.classes != stored.classes ||
      model.first_hidden() != stored.first_hidden() || model.second_hidden() != stored.second_hidden()) {
    throw ShapeError("dimension mismatch between configuration (dim " + std::to_string(model.dim) + ", heads " +
                     std::to_string(model.heads) + ", classes " + std::to_string(model.classes) +
                     ") and checkpoint (dim " + std::to_string(stored.dim) + ", heads " +
                     std::to_string(stored.heads) + ", classes " + std::to_string(stored.classes) + ")");
  }
  return config;
}

struct EvalArtifacts {
  EvalResult result;
  std::filesystem::path report;
};

inline std::string format_eval_report(const EvalResult& r, const std::map<std::string, std::string>& header) {
  std::ostringstream out;
  write_config_header(out, header);
  out << "metric\tvalue\n";
  out << "examples\t" << r.count << '\n';
  out << "accuracy\t" << fixed(r.accuracy) << '\n';
  out << "loss\t" << fixed(r.loss) << '\n';
  for (Eigen::Index g = 0; g < r.confusion.rows(); ++g) {
    for (Eigen::Index p = 0; p < r.confusion.cols(); ++p) {
      out << "confusion_" << g << '_' << p << '\t' << static_cast<long>(r.confusion(g, p)) << '\n';
    }
  }
  return out.str();
}

inline EvalArtifacts cmd_eval(const std::filesystem::path& dataset_path, const std::filesystem::path& cache_path,
                              const std::filesystem::path& checkpoint_path,
                              const std::map<std::string, std::string>& overrides, const std::filesystem::path& out_dir,
                              std::shared_ptr<const EmbeddingProvider> provider = nullptr) {
  auto ck = load_checkpoint(checkpoint_path);
  auto config = config_for_checkpoint(ck, overrides);
  auto cache = read_retrieval_cache(cache_path);
  require_cache_depth(cache, config.k);
  if (!provider) provider = make_provider(config.provider);
  auto records = read_dataset(dataset_path);
  if (records.empty()) throw Error("cannot evaluate an empty dataset");
  auto examples = prepare_examples(records, cache, *provider, config);
  auto model = config.model();
  model.ablate_knowledge = ck.config.ablate_knowledge || config.ablate_knowledge;
  EvalArtifacts art;
  art.result = evaluate(examples, ck.params, model);
  std::filesystem::create_directories(out_dir);
  art.report = out_dir / "eval.tsv";
  write_text_file(art.report, format_eval_report(art.result, config.describe()));
  return art;
}

// ---------------------------------------------------------------------------
// k sweep

struct SweepRow {
  std::size_t k = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

inline std::vector<std::pair<double, double>> read_sweep_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<double, double>> pts;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    auto f = text::split(line, '\t');
    if (f.size() < 2) throw ParseError("bad sweep row in " + path.string());
    pts.emplace_back(std::stod(std::string(f[0])), std::stod(std::string(f[1])));
  }
  return pts;
}

struct SweepArtifacts {
  std::vector<SweepRow> rows;
  std::filesystem::path table;
  std::filesystem::path plot;
};

/// Fresh training run per k under the same seed, evaluated on `dev_path`.
inline SweepArtifacts cmd_sweep_k(const std::filesystem::path& train_path, const std::filesystem::path& dev_path,
                                  const std::filesystem::path& cache_path, const RunConfig& base,
                                  const std::vector<std::size_t>& k_list, const std::filesystem::path& out_dir,
                                  std::shared_ptr<const EmbeddingProvider> provider = nullptr) {
  if (k_list.empty()) throw Error("empty k list");
  base.validate();
  auto cache = read_retrieval_cache(cache_path);
  for (auto k : k_list) require_cache_depth(cache, k);
  if (!provider) provider = make_provider(base.provider);
  auto train_records = read_dataset(train_path);
  auto dev_records = read_dataset(dev_path);
  if (dev_records.empty()) throw Error("empty evaluation set for sweep");

  SweepArtifacts art;
  for (auto k : k_list) {
    RunConfig config = base;
    config.k = k;
    auto train = prepare_examples(train_records, cache, *provider, config);
    auto dev = prepare_examples(dev_records, cache, *provider, config);
    auto trained = train_model(train, {}, config);
    auto ev = evaluate(dev, trained.params, config.model());
    art.rows.push_back({k, ev.accuracy, ev.loss});
  }
  std::filesystem::create_directories(out_dir);
  art.table = out_dir / "sweep.tsv";
  art.plot = out_dir / "sweep.svg";
  auto header = base.describe();
  header.erase("k");
  std::string ks;
  for (auto k : k_list) ks += (ks.empty() ? "" : ",") + std::to_string(k);
  header["k_list"] = ks;
  write_atomically(art.table, [&](std::ostream& out) {
    write_config_header(out, header);
    out << "k\taccuracy\tloss\n";
    for (const auto& r : art.rows) out << r.k << '\t' << fixed(r.accuracy) << '\t' << fixed(r.loss) << '\n';
  });
  auto pts = read_sweep_tsv(art.table);
  std::vector<double> xs, ys;
  for (auto [x, y] : pts) {
    xs.push_back(x);
    ys.push_back(y);
  }
  write_text_file(art.plot, plot::line_plot_svg(xs, ys, "accuracy vs. number of knowledge sentences",
                                                "k (knowledge sentences)", "accuracy"));
  return art;
}

// ---------------------------------------------------------------------------
// Attention heatmap

inline std::string format_heatmap_tsv(const Heatmap& hm, const std::map<std::string, std::string>& header) {
  std::ostringstream out;
  write_config_header(out, header);
  out << "sentence";
  for (const auto& t : hm.tokens) out << '\t' << t;
  out << '\n';
  for (Eigen::Index r = 0; r < hm.weights.rows(); ++r) {
    out << hm.sentences[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < hm.weights.cols(); ++c) out << '\t' << fixed(hm.weights(r, c));
    out << '\n';
  }
  return out.str();
}

inline Heatmap read_heatmap_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Heatmap hm;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    auto f = text::split(line, '\t');
    if (!header) {
      for (std::size_t i = 1; i < f.size(); ++i) hm.tokens.emplace_back(f[i]);
      header = true;
      continue;
    }
    if (f.size() != hm.tokens.size() + 1) throw ParseError("ragged heatmap row in " + path.string());
    hm.sentences.emplace_back(f[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < f.size(); ++i) row.push_back(std::stod(std::string(f[i])));
    rows.push_back(std::move(row));
  }
  hm.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(hm.tokens.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      hm.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return hm;
}

struct HeatmapArtifacts {
  Heatmap heatmap;
  std::filesystem::path table;
  std::filesystem::path plot;
};

inline HeatmapArtifacts cmd_attn_export(const std::string& example_id, const std::filesystem::path& dataset_path,
                                        const std::filesystem::path& cache_path,
                                        const std::filesystem::path& checkpoint_path,
                                        const std::map<std::string, std::string>& overrides,
                                        const std::filesystem::path& out_dir,
                                        std::shared_ptr<const EmbeddingProvider> provider = nullptr) {
  auto ck = load_checkpoint(checkpoint_path);
  auto config = config_for_checkpoint(ck, overrides);
  auto cache = read_retrieval_cache(cache_path);
  auto records = read_dataset(dataset_path);
  auto it = std::find_if(records.begin(), records.end(), [&](const ExampleRecord& r) { return r.id == example_id; });
  if (it == records.end()) throw LookupError("unknown example id " + example_id);
  if (!provider) provider = make_provider(config.provider);
  auto examples = prepare_examples({*it}, cache, *provider, config);
  const auto& ex = examples.front();
  if (ex.knowledge.rows.rows() == 0) throw Error("example " + example_id + " has no external knowledge");

  HeatmapArtifacts art;
  art.heatmap = export_attention_heatmap(ex.pair, ex.knowledge, ck.params.knowledge_attention);
  std::filesystem::create_directories(out_dir);
  art.table = out_dir / "heatmap.tsv";
  art.plot = out_dir / "heatmap.svg";
  auto header = config.describe();
  header["example_id"] = example_id;
  write_text_file(art.table, format_heatmap_tsv(art.heatmap, header));
  auto back = read_heatmap_tsv(art.table);
  write_text_file(art.plot, plot::heatmap_svg(back.weights, back.sentences, back.tokens,
                                              "head-averaged knowledge attention: " + example_id));
  return art;
}

}  // namespace exbert
