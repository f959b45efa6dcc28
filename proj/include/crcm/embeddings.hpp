#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crcm/errors.hpp"

namespace crcm {

using EmbeddingVector = std::vector<double>;

// Fixed-dimension text embeddings. Implementations are deterministic: the
// same text always yields the same vector. Immutable after construction and
// safe for concurrent reads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
  virtual EmbeddingVector embed_text(std::string_view text) const = 0;
  // Element i equals embed_text(texts[i]); failures cite the failing index.
  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
};

// Embeds a single word exactly as embed_text would. The word must be non-empty.
EmbeddingVector embed_word(const EmbeddingProvider& provider, std::string_view word);

// Deterministic, dependency-free embedder: every token and token bigram is
// hashed a few times to pick signed coordinates, then the vector is
// L2-normalized. Empty or all-stopword text yields the zero vector.
class HashingProvider final : public EmbeddingProvider {
 public:
  explicit HashingProvider(int dim = 768, uint64_t seed = 42);
  int dimension() const override { return dim_; }
  std::string name() const override { return "hash"; }
  std::string version() const override;
  EmbeddingVector embed_text(std::string_view text) const override;
  uint64_t seed() const { return seed_; }

 private:
  int dim_;
  uint64_t seed_;
};

// Client for an external encoder service speaking the /embed wire protocol:
// POST /embed {"texts": [...]} -> {"vectors": [[...], ...], "dim": d, "model": s}.
class RemoteProvider final : public EmbeddingProvider {
 public:
  RemoteProvider(std::string endpoint, int dim, int timeout_sec = 30);
  int dimension() const override { return dim_; }
  std::string name() const override { return "remote"; }
  std::string version() const override;
  std::string endpoint() const { return endpoint_; }
  EmbeddingVector embed_text(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

 private:
  std::string endpoint_;
  int dim_;
  int timeout_sec_;
};

// Persistent cache in front of another provider. Entries are keyed by
// (provider name/version, content hash) and stored in an append-only JSONL
// log; later records win. Corrupt entries are skipped with a warning and
// recomputed on demand.
class CachedProvider final : public EmbeddingProvider {
 public:
  CachedProvider(std::shared_ptr<const EmbeddingProvider> inner, std::string cache_path);
  int dimension() const override { return inner_->dimension(); }
  std::string name() const override { return inner_->name(); }
  std::string version() const override { return inner_->version(); }
  EmbeddingVector embed_text(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

 private:
  std::string key_for(std::string_view text) const;
  void append_record(const std::string& key, const EmbeddingVector& vec) const;

  std::shared_ptr<const EmbeddingProvider> inner_;
  std::string cache_path_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, EmbeddingVector> entries_;
};

std::shared_ptr<CachedProvider> cached(std::shared_ptr<const EmbeddingProvider> inner,
                                       const std::string& cache_path);

}  // namespace crcm
