#pragma once

// Embedding provider boundary. Every provider returns one h-vector per input
// word; providers that work on subwords must average a word's subword
// vectors before returning.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "exbert/error.hpp"
#include "exbert/tensor.hpp"
#include "exbert/text.hpp"

namespace exbert {

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";

/// Lowercases and splits on whitespace and ASCII punctuation, dropping the
/// punctuation. Bytes >= 0x80 are treated as word characters.
inline std::vector<std::string> tokenize(std::string_view input) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : input) {
    auto c = static_cast<unsigned char>(ch);
    bool word_char = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (word_char) {
      current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

struct TokenEmbeddingMatrix {
  std::vector<std::string> tokens;
  MatrixD vectors;  // tokens.size() x dim
  std::optional<VectorD> cls;

  Eigen::Index dim() const noexcept { return vectors.cols(); }

  /// Throws ShapeError if the matrix violates its invariants.
  void validate() const {
    if (static_cast<std::size_t>(vectors.rows()) != tokens.size()) {
      throw ShapeError("embedding rows " + std::to_string(vectors.rows()) + " != token count " +
                       std::to_string(tokens.size()));
    }
    if (!vectors.allFinite()) throw NumericError("non-finite embedding entry");
    if (cls) {
      if (cls->size() != vectors.cols()) throw ShapeError("cls length does not match dim");
      if (!cls->allFinite()) throw NumericError("non-finite cls entry");
    }
  }
};

inline VectorD mean_rows(const MatrixD& m) {
  if (m.rows() == 0) throw ShapeError("mean of zero rows");
  return m.colwise().mean().transpose();
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Eigen::Index dim() const = 0;
  /// Stable identifier used as part of cache keys.
  virtual std::string id() const = 0;
  virtual TokenEmbeddingMatrix embed(const std::vector<std::string>& tokens, bool want_cls) const = 0;
};

/// Context-free provider: each word maps to a unit-norm Gaussian vector seeded
/// by (seed, word). cls is the mean of the token rows.
class HashProvider final : public EmbeddingProvider {
 public:
  HashProvider(Eigen::Index dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 1) throw Error("embedding dim must be >= 1");
  }

  Eigen::Index dim() const override { return dim_; }
  std::string id() const override { return "hash:" + std::to_string(dim_) + ":" + std::to_string(seed_); }

  VectorD word_vector(std::string_view word) const {
    // FNV-1a over the word bytes
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : word) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorD v(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) v[i] = normal(rng);
    double norm = v.norm();
    if (norm == 0.0) {
      v.setZero();
      v[0] = 1.0;
      return v;
    }
    return v / norm;
  }

  TokenEmbeddingMatrix embed(const std::vector<std::string>& tokens, bool want_cls) const override {
    TokenEmbeddingMatrix out;
    out.tokens = tokens;
    out.vectors.resize(static_cast<Eigen::Index>(tokens.size()), dim_);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      out.vectors.row(static_cast<Eigen::Index>(i)) = word_vector(tokens[i]).transpose();
    }
    if (want_cls) {
      if (tokens.empty()) throw ShapeError("cls requested for an empty sentence");
      out.cls = mean_rows(out.vectors);
    }
    return out;
  }

 private:
  Eigen::Index dim_;
  std::uint64_t seed_;
};

/// Precomputed embeddings: `sentence text<TAB>dim<TAB>floats` per line, rows
/// concatenated with the cls vector last when present. The sentence text is the
/// space-joined token sequence, marker tokens included.
class FileProvider final : public EmbeddingProvider {
 public:
  explicit FileProvider(const std::filesystem::path& path, Eigen::Index expected_dim = 0) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    dim_ = expected_dim;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = text::strip_cr(line);
      if (view.empty()) continue;
      auto fields = text::split(view, '\t');
      if (fields.size() != 3) throw ParseError(path.string(), lineno, "expected 3 tab-separated fields");
      Eigen::Index dim = 0;
      try {
        dim = std::stol(std::string(fields[1]));
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "bad dim");
      }
      if (dim < 1) throw ParseError(path.string(), lineno, "bad dim");
      if (dim_ == 0) dim_ = dim;
      if (dim != dim_) {
        throw ShapeError(path.string() + ":" + std::to_string(lineno) + ": dimension mismatch (" +
                         std::to_string(dim) + " vs " + std::to_string(dim_) + ")");
      }
      std::vector<double> values;
      for (auto piece : text::split(fields[2], ',')) {
        try {
          values.push_back(std::stod(std::string(piece)));
        } catch (const std::exception&) {
          throw ParseError(path.string(), lineno, "bad float");
        }
      }
      records_[text::join(text::split_nonempty(fields[0], ' '), " ")] = std::move(values);
    }
    if (dim_ == 0) throw Error("embedding file is empty: " + path.string());
  }

  Eigen::Index dim() const override { return dim_; }
  std::string id() const override { return "file:" + path_.string(); }

  TokenEmbeddingMatrix embed(const std::vector<std::string>& tokens, bool want_cls) const override {
    auto key = text::join(tokens, " ");
    auto it = records_.find(key);
    if (it == records_.end()) throw LookupError("sentence not in embedding file: \"" + key + "\"");
    const auto& values = it->second;
    auto rows = static_cast<Eigen::Index>(tokens.size());
    bool has_cls = static_cast<Eigen::Index>(values.size()) == (rows + 1) * dim_;
    if (!has_cls && static_cast<Eigen::Index>(values.size()) != rows * dim_) {
      throw ShapeError("embedding record for \"" + key + "\" has " + std::to_string(values.size()) +
                       " values, expected " + std::to_string(rows * dim_));
    }
    TokenEmbeddingMatrix out;
    out.tokens = tokens;
    out.vectors = Eigen::Map<const MatrixD>(values.data(), rows, dim_);
    if (want_cls) {
      if (!has_cls) throw LookupError("no cls vector stored for \"" + key + "\"");
      out.cls = Eigen::Map<const VectorD>(values.data() + rows * dim_, dim_);
    }
    out.validate();
    return out;
  }

 private:
  std::filesystem::path path_;
  Eigen::Index dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> records_;
};

/// Memoizes another provider by (provider id, sentence, want_cls). Safe for
/// concurrent callers; racing inserts of the same key store identical values.
class CachingProvider final : public EmbeddingProvider {
 public:
  explicit CachingProvider(std::shared_ptr<const EmbeddingProvider> inner) : inner_(std::move(inner)) {}

  Eigen::Index dim() const override { return inner_->dim(); }
  std::string id() const override { return inner_->id(); }

  TokenEmbeddingMatrix embed(const std::vector<std::string>& tokens, bool want_cls) const override {
    std::string key = inner_->id();
    key += want_cls ? "\x01" : "\x02";
    key += text::join(tokens, " ");
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto value = inner_->embed(tokens, want_cls);
    std::unique_lock lock(mutex_);
    cache_.insert_or_assign(std::move(key), value);
    return value;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, TokenEmbeddingMatrix> cache_;
};

}  // namespace exbert
