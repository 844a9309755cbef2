#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/embedding.hpp"

namespace retro::embed {

// Batch embedding source. Implementations must be safe to call from
// multiple threads.
class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string model_id() const = 0;
  // Declared output dimension; 0 means "adopt from the first response".
  virtual std::size_t dimension() const = 0;
  virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) = 0;
};

struct HttpEmbeddingConfig {
  std::string endpoint; // full URL, e.g. http://localhost:8080/v1/embeddings
  std::string model_id;
  std::string api_key;       // empty = no Authorization header
  std::size_t dimension = 0; // provider-declared, 0 = discover
  int max_retries = 3;
  int backoff_ms = 250;
  int timeout_s = 120;
};

// POSTs {"model": ..., "input": [...]} and reads {"data": [{"embedding": [...]}]},
// the shape served by the common embedding endpoints.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig cfg);
  std::string model_id() const override { return cfg_.model_id; }
  std::size_t dimension() const override { return cfg_.dimension; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

private:
  HttpEmbeddingConfig cfg_;
  std::mutex dim_mutex_;
};

// Deterministic hashed bag-of-words embedding. Offline stand-in for tests,
// demos and calibration runs; not a semantic model.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
  explicit HashEmbeddingProvider(std::size_t dim = 128);
  std::string model_id() const override;
  std::size_t dimension() const override { return dim_; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

private:
  std::size_t dim_;
};

// Append-only JSONL cache keyed by (model_id, sha-256 of text).
class EmbeddingCache {
public:
  // Empty path = in-memory only.
  explicit EmbeddingCache(std::filesystem::path path = {});

  bool contains(const std::string& model_id, const std::string& source_hash) const;
  std::vector<double> get(const std::string& model_id, const std::string& source_hash) const;
  void put(const std::string& model_id, const std::string& source_hash,
           const std::vector<double>& values);
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> entries_;
  mutable std::mutex mutex_;
};

struct EmbedOptions {
  int batch_size = 64;
  int parallelism = 4;
};

// One vector per entry id; provider consulted only for cache misses.
std::map<std::string, EmbeddingVector> embed_all(const data::Dataset& ds,
                                                 EmbeddingProvider& provider,
                                                 EmbeddingCache& cache,
                                                 const EmbedOptions& opts = {});

// Pooled vectors for a pair in (target..., retro...) order, plus role split.
struct PooledEmbeddings {
  std::vector<EmbeddingVector> vectors;
  std::vector<std::string> ids;
  std::size_t n_target = 0;
  std::size_t n_retro = 0;
};

PooledEmbeddings pool_pair(const data::DatasetPair& pair,
                           const std::map<std::string, EmbeddingVector>& target_embeddings,
                           const std::map<std::string, EmbeddingVector>& retro_embeddings);

} // namespace retro::embed
