#pragma once

// HTTP client for the embedding service and the provider factory.
//
// Wire protocol: POST /embed with
//   {"sentences": [["w1","w2",...], ...], "want_cls": bool}
// answered by
//   {"dim": h, "embeddings": [[[f,...],...],...], "cls": [[f,...],...] | null}

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "exbert/embedding.hpp"
#include "exbert/error.hpp"

namespace exbert {

/// Builds the request body for one or more sentences.
inline nlohmann::json make_embed_request(const std::vector<std::vector<std::string>>& sentences, bool want_cls) {
  return nlohmann::json{{"sentences", sentences}, {"want_cls", want_cls}};
}

/// Decodes an /embed response against the request that produced it.
inline std::vector<TokenEmbeddingMatrix> decode_embed_response(
    const nlohmann::json& body, const std::vector<std::vector<std::string>>& sentences, bool want_cls,
    Eigen::Index expected_dim) {
  try {
    auto dim = body.at("dim").get<Eigen::Index>();
    if (dim < 1) throw TransportError("response dim must be positive");
    if (expected_dim > 0 && dim != expected_dim) {
      throw ShapeError("dimension mismatch: service reports " + std::to_string(dim) + ", expected " +
                       std::to_string(expected_dim));
    }
    const auto& embeddings = body.at("embeddings");
    if (!embeddings.is_array() || embeddings.size() != sentences.size()) {
      throw TransportError("response sentence count does not match request");
    }
    const auto& cls = body.contains("cls") ? body.at("cls") : nlohmann::json();
    if (want_cls && (!cls.is_array() || cls.size() != sentences.size())) {
      throw TransportError("response is missing cls vectors");
    }
    std::vector<TokenEmbeddingMatrix> out;
    out.reserve(sentences.size());
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      const auto& rows = embeddings[s];
      if (!rows.is_array() || rows.size() != sentences[s].size()) {
        throw TransportError("sentence " + std::to_string(s) + ": word count mismatch");
      }
      TokenEmbeddingMatrix m;
      m.tokens = sentences[s];
      m.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || static_cast<Eigen::Index>(rows[r].size()) != dim) {
          throw ShapeError("sentence " + std::to_string(s) + " row " + std::to_string(r) + ": dimension mismatch");
        }
        for (Eigen::Index c = 0; c < dim; ++c) {
          m.vectors(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)].get<double>();
        }
      }
      if (want_cls) {
        const auto& v = cls[s];
        if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != dim) throw ShapeError("cls dimension mismatch");
        m.cls = VectorD(dim);
        for (Eigen::Index c = 0; c < dim; ++c) (*m.cls)[c] = v[static_cast<std::size_t>(c)].get<double>();
      }
      m.validate();
      out.push_back(std::move(m));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("protocol violation: ") + e.what());
  }
}

class RemoteProvider final : public EmbeddingProvider {
 public:
  /// `endpoint` is a base URL such as "http://127.0.0.1:8080". `dim` may be 0,
  /// in which case it is taken from the service's /health record.
  RemoteProvider(std::string endpoint, Eigen::Index dim) : endpoint_(std::move(endpoint)), dim_(dim) {
    if (endpoint_.empty()) throw Error("remote provider requires an endpoint");
    if (dim_ <= 0) {
      auto client = make_client();
      auto res = client.Get("/health");
      if (!res) throw TransportError("cannot reach " + endpoint_ + ": " + httplib::to_string(res.error()));
      if (res->status != 200) throw TransportError("/health returned HTTP " + std::to_string(res->status));
      try {
        dim_ = nlohmann::json::parse(res->body).at("dim").get<Eigen::Index>();
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("protocol violation in /health: ") + e.what());
      }
    }
  }

  Eigen::Index dim() const override { return dim_; }
  std::string id() const override { return "remote:" + endpoint_; }

  TokenEmbeddingMatrix embed(const std::vector<std::string>& tokens, bool want_cls) const override {
    std::vector<std::vector<std::string>> sentences{tokens};
    return std::move(embed_batch(sentences, want_cls).front());
  }

  std::vector<TokenEmbeddingMatrix> embed_batch(const std::vector<std::vector<std::string>>& sentences,
                                                bool want_cls) const {
    auto client = make_client();
    auto body = make_embed_request(sentences, want_cls).dump();
    auto res = client.Post("/embed", body, "application/json");
    if (!res) throw TransportError("cannot reach " + endpoint_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw TransportError("/embed returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("protocol violation: ") + e.what());
    }
    return decode_embed_response(parsed, sentences, want_cls, dim_);
  }

 private:
  httplib::Client make_client() const {
    httplib::Client client(endpoint_);
    client.set_connection_timeout(5);
    client.set_read_timeout(120);
    return client;
  }

  std::string endpoint_;
  Eigen::Index dim_;
};

enum class ProviderKind { hash, file, remote };

struct ProviderSpec {
  ProviderKind kind = ProviderKind::hash;
  Eigen::Index dim = 32;
  std::string location;  // file path or base URL
  std::uint64_t seed = 0;
};

inline std::string to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::hash: return "hash";
    case ProviderKind::file: return "file";
    case ProviderKind::remote: return "remote";
  }
  return "?";
}

inline ProviderKind parse_provider_kind(const std::string& s) {
  if (s == "hash") return ProviderKind::hash;
  if (s == "file") return ProviderKind::file;
  if (s == "remote") return ProviderKind::remote;
  throw Error("unknown provider kind: " + s);
}

/// Constructs the provider described by `spec`, wrapped in an embedding cache.
inline std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderSpec& spec) {
  if (spec.dim < 1 && spec.kind == ProviderKind::hash) throw Error("dim must be >= 1");
  std::shared_ptr<const EmbeddingProvider> inner;
  switch (spec.kind) {
    case ProviderKind::hash: inner = std::make_shared<HashProvider>(spec.dim, spec.seed); break;
    case ProviderKind::file: inner = std::make_shared<FileProvider>(spec.location, spec.dim); break;
    case ProviderKind::remote: inner = std::make_shared<RemoteProvider>(spec.location, spec.dim); break;
  }
  return std::make_shared<CachingProvider>(std::move(inner));
}

}  // namespace exbert
