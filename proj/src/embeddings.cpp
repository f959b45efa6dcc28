#include "crcm/embeddings.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include <httplib.h>
#include <json.hpp>

#include "crcm/hashing.hpp"
#include "crcm/textprep.hpp"

namespace crcm {

using nlohmann::json;

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(
    const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(embed_text(texts[i]));
    } catch (const std::exception& e) {
      throw EmbeddingError("batch element " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

EmbeddingVector embed_word(const EmbeddingProvider& provider, std::string_view word) {
  if (word.empty()) {
    throw EmbeddingError("embed_word: empty word");
  }
  return provider.embed_text(word);
}

// ---------------------------------------------------------------------------
// HashingProvider

namespace {
constexpr int kProbesPerFeature = 4;
}

HashingProvider::HashingProvider(int dim, uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 1) throw EmbeddingError("hashing provider: dimension must be >= 1");
}

std::string HashingProvider::version() const {
  return std::string("v1;") + stopwords_version() + ";d=" + std::to_string(dim_) +
         ";seed=" + std::to_string(seed_);
}

EmbeddingVector HashingProvider::embed_text(std::string_view text) const {
  EmbeddingVector vec(dim_, 0.0);
  const TokenStream tokens = preprocess(text);
  if (tokens.empty()) return vec;  // zero vector for degenerate text

  auto add_feature = [&](std::string_view feature) {
    for (int j = 0; j < kProbesPerFeature; ++j) {
      const uint64_t h = hash64(feature, seed_ + 0x9e3779b97f4a7c15ULL * (j + 1));
      vec[h % dim_] += (h >> 63) ? 1.0 : -1.0;
    }
  };
  for (const auto& token : tokens) add_feature(token);
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    add_feature(tokens[i] + " " + tokens[i + 1]);
  }

  double norm = 0.0;
  for (double x : vec) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : vec) x /= norm;
  }
  return vec;
}

// ---------------------------------------------------------------------------
// RemoteProvider

RemoteProvider::RemoteProvider(std::string endpoint, int dim, int timeout_sec)
    : endpoint_(std::move(endpoint)), dim_(dim), timeout_sec_(timeout_sec) {
  if (dim < 1) throw EmbeddingError("remote provider: dimension must be >= 1");
}

std::string RemoteProvider::version() const {
  return endpoint_ + ";d=" + std::to_string(dim_);
}

EmbeddingVector RemoteProvider::embed_text(std::string_view text) const {
  return embed_batch({std::string(text)})[0];
}

std::vector<EmbeddingVector> RemoteProvider::embed_batch(
    const std::vector<std::string>& texts) const {
  if (texts.empty()) return {};

  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_sec_, 0);
  client.set_read_timeout(timeout_sec_, 0);

  const json payload = {{"texts", texts}};
  auto res = client.Post("/embed", payload.dump(), "application/json");
  if (!res) {
    throw EmbeddingError("embedding service unreachable at " + endpoint_ + ": " +
                         httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw EmbeddingError("embedding service returned HTTP " + std::to_string(res->status));
  }

  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw EmbeddingError(std::string("embedding service sent invalid JSON: ") + e.what());
  }
  if (!body.contains("vectors") || !body.contains("dim")) {
    throw EmbeddingError("embedding service response missing \"vectors\" or \"dim\"");
  }
  const int dim = body["dim"].get<int>();
  if (dim != dim_) {
    throw EmbeddingError("embedding service dimension " + std::to_string(dim) +
                         " does not match configured dimension " + std::to_string(dim_));
  }
  const auto& vectors = body["vectors"];
  if (vectors.size() != texts.size()) {
    throw EmbeddingError("embedding service returned " + std::to_string(vectors.size()) +
                         " vectors for " + std::to_string(texts.size()) + " texts");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (size_t i = 0; i < vectors.size(); ++i) {
    EmbeddingVector v = vectors[i].get<EmbeddingVector>();
    if (static_cast<int>(v.size()) != dim_) {
      throw EmbeddingError("batch element " + std::to_string(i) + ": vector has dimension " +
                           std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw EmbeddingError("batch element " + std::to_string(i) + ": non-finite entry");
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CachedProvider

CachedProvider::CachedProvider(std::shared_ptr<const EmbeddingProvider> inner,
                               std::string cache_path)
    : inner_(std::move(inner)), cache_path_(std::move(cache_path)) {
  std::ifstream in(cache_path_);
  if (!in) return;  // no cache yet
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      std::string key = rec.at("key").get<std::string>();
      const int d = rec.at("d").get<int>();
      EmbeddingVector values = rec.at("values").get<EmbeddingVector>();
      if (static_cast<int>(values.size()) != d) {
        throw std::runtime_error("length mismatch");
      }
      entries_[std::move(key)] = std::move(values);  // later records win
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping corrupt cache entry at " << cache_path_
                << " line " << line_no << ": " << e.what() << "\n";
    }
  }
}

std::string CachedProvider::key_for(std::string_view text) const {
  return inner_->name() + "/" + inner_->version() + ":" + fingerprint_hex(text);
}

void CachedProvider::append_record(const std::string& key, const EmbeddingVector& vec) const {
  std::ofstream out(cache_path_, std::ios::app);
  if (!out) {
    throw EmbeddingError("cannot write embedding cache: " + cache_path_);
  }
  const json rec = {{"key", key}, {"d", vec.size()}, {"values", vec}};
  out << rec.dump() << "\n";
}

EmbeddingVector CachedProvider::embed_text(std::string_view text) const {
  const std::string key = key_for(text);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end() && static_cast<int>(it->second.size()) == dimension()) {
      return it->second;
    }
  }
  EmbeddingVector vec = inner_->embed_text(text);
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = entries_.emplace(key, vec);
  if (inserted) {
    append_record(key, vec);
  } else if (it->second != vec) {
    std::cerr << "warning: overwriting stale cache entry " << key << "\n";
    it->second = vec;
    append_record(key, vec);
  }
  return vec;
}

std::vector<EmbeddingVector> CachedProvider::embed_batch(
    const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<size_t> missing;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (size_t i = 0; i < texts.size(); ++i) {
      auto it = entries_.find(key_for(texts[i]));
      if (it != entries_.end() && static_cast<int>(it->second.size()) == dimension()) {
        out[i] = it->second;
      } else {
        missing.push_back(i);
      }
    }
  }
  if (!missing.empty()) {
    std::vector<std::string> todo;
    todo.reserve(missing.size());
    for (size_t i : missing) todo.push_back(texts[i]);
    std::vector<EmbeddingVector> fresh = inner_->embed_batch(todo);
    std::lock_guard<std::mutex> lock(mutex_);
    for (size_t j = 0; j < missing.size(); ++j) {
      const std::string key = key_for(todo[j]);
      if (entries_.emplace(key, fresh[j]).second) {
        append_record(key, fresh[j]);
      }
      out[missing[j]] = std::move(fresh[j]);
    }
  }
  return out;
}

std::shared_ptr<CachedProvider> cached(std::shared_ptr<const EmbeddingProvider> inner,
                                       const std::string& cache_path) {
  return std::make_shared<CachedProvider>(std::move(inner), cache_path);
}

}  // namespace crcm
