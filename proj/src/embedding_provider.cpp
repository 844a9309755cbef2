#include "retro/embedding_provider.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "retro/error.hpp"
#include "retro/hash.hpp"
#include "retro/parallel.hpp"
#include "retro/rng.hpp"

namespace retro::embed {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string base; // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) raise(ErrorKind::config, "endpoint URL missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) raise(ErrorKind::config, "embedding endpoint not configured");
  if (cfg_.model_id.empty()) raise(ErrorKind::config, "embedding model_id not configured");
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_batch(
    std::span<const std::string> texts) {
  if (texts.empty()) return {};
  auto [base, path] = split_url(cfg_.endpoint);
  httplib::Client client(base);
  client.set_read_timeout(cfg_.timeout_s, 0);
  client.set_connection_timeout(cfg_.timeout_s, 0);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  json body;
  body["model"] = cfg_.model_id;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());
  std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
    }
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      raise(ErrorKind::transport, "embedding request failed with HTTP " + std::to_string(res->status) +
                                      ": " + res->body.substr(0, 200));
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& ex) {
      raise(ErrorKind::parse, std::string("embedding response is not JSON: ") + ex.what());
    }
    if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].size() != texts.size())
      raise(ErrorKind::parse, "embedding response carries wrong number of vectors");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& item : reply["data"]) {
      if (!item.contains("embedding") || !item["embedding"].is_array())
        raise(ErrorKind::parse, "embedding response item missing \"embedding\"");
      out.push_back(item["embedding"].get<std::vector<double>>());
    }
    {
      std::lock_guard<std::mutex> lock(dim_mutex_);
      if (cfg_.dimension == 0 && !out.empty()) cfg_.dimension = out.front().size();
    }
    for (const auto& v : out) {
      if (v.size() != cfg_.dimension)
        raise(ErrorKind::mismatch, "embedding dimension " + std::to_string(v.size()) +
                                       " differs from declared " + std::to_string(cfg_.dimension));
    }
    return out;
  }
  raise(ErrorKind::transport, "embedding provider unreachable after " +
                                  std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim_ < 2) raise(ErrorKind::config, "hash embedding dimension must be >= 2");
}

std::string HashEmbeddingProvider::model_id() const {
  return "hash-bow-v1-d" + std::to_string(dim_);
}

std::vector<std::vector<double>> HashEmbeddingProvider::embed_batch(
    std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::uint64_t h = 0xcbf29ce484222325ULL;
      for (unsigned char c : token) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      std::uint64_t m = rng::mix64(h);
      v[m % dim_] += ((m >> 32) & 1) ? 1.0 : -1.0; // signed hashing reduces collisions' bias
      token.clear();
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
      else flush();
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) v[0] = 1.0; // empty text still embeds to a valid unit vector
    else {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  if (!in) raise(ErrorKind::io, "cannot open embedding cache: " + path_.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      raise(ErrorKind::parse, "embedding cache " + path_.string() + ":" + std::to_string(line_no) +
                                  ": " + ex.what());
    }
    entries_[{j.at("model_id").get<std::string>(), j.at("hash").get<std::string>()}] =
        j.at("values").get<std::vector<double>>();
  }
}

bool EmbeddingCache::contains(const std::string& model_id, const std::string& source_hash) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.count({model_id, source_hash}) > 0;
}

std::vector<double> EmbeddingCache::get(const std::string& model_id,
                                        const std::string& source_hash) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find({model_id, source_hash});
  if (it == entries_.end())
    raise(ErrorKind::validation, "embedding cache miss for " + model_id + "/" + source_hash);
  return it->second;
}

void EmbeddingCache::put(const std::string& model_id, const std::string& source_hash,
                         const std::vector<double>& values) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto key = std::make_pair(model_id, source_hash);
  if (entries_.count(key)) return;
  entries_[key] = values;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) raise(ErrorKind::io, "cannot append to embedding cache: " + path_.string());
  json j;
  j["model_id"] = model_id;
  j["hash"] = source_hash;
  j["values"] = values;
  out << j.dump() << '\n';
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

std::map<std::string, EmbeddingVector> embed_all(const data::Dataset& ds,
                                                 EmbeddingProvider& provider,
                                                 EmbeddingCache& cache, const EmbedOptions& opts) {
  const std::string model = provider.model_id();
  struct Item {
    std::string id;
    std::string text;
    std::string hash;
  };
  std::vector<Item> items;
  items.reserve(ds.entries.size());
  for (const auto& e : ds.entries) {
    std::string text = data::canonical_text(e).text;
    std::string h = hash::sha256_hex(text);
    items.push_back({e.id, std::move(text), std::move(h)});
  }

  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!cache.contains(model, items[i].hash)) misses.push_back(i);
  }

  if (!misses.empty()) {
    int batch = std::max(1, opts.batch_size);
    std::size_t n_batches = (misses.size() + batch - 1) / batch;
    parallel_for(n_batches, opts.parallelism, [&](std::size_t b) {
      std::size_t lo = b * static_cast<std::size_t>(batch);
      std::size_t hi = std::min(misses.size(), lo + static_cast<std::size_t>(batch));
      std::vector<std::string> texts;
      texts.reserve(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) texts.push_back(items[misses[k]].text);
      auto vectors = provider.embed_batch(texts);
      if (vectors.size() != texts.size())
        raise(ErrorKind::parse, "provider returned wrong batch size");
      for (std::size_t k = lo; k < hi; ++k) {
        cache.put(model, items[misses[k]].hash, vectors[k - lo]);
      }
    });
  }

  std::size_t declared = provider.dimension();
  std::map<std::string, EmbeddingVector> out;
  for (const auto& item : items) {
    EmbeddingVector v;
    v.values = cache.get(model, item.hash);
    v.model_id = model;
    v.source_hash = item.hash;
    validate_vector(v);
    if (declared != 0 && v.dim() != declared)
      raise(ErrorKind::mismatch, "cached embedding dimension " + std::to_string(v.dim()) +
                                     " differs from provider-declared " + std::to_string(declared));
    out.emplace(item.id, std::move(v));
  }
  return out;
}

PooledEmbeddings pool_pair(const data::DatasetPair& pair,
                           const std::map<std::string, EmbeddingVector>& target_embeddings,
                           const std::map<std::string, EmbeddingVector>& retro_embeddings) {
  PooledEmbeddings pooled;
  auto take = [&](const data::Dataset& ds, const std::map<std::string, EmbeddingVector>& embs) {
    for (const auto& e : ds.entries) {
      auto it = embs.find(e.id);
      if (it == embs.end())
        raise(ErrorKind::validation, "missing embedding for entry \"" + e.id + "\"");
      pooled.vectors.push_back(it->second);
      pooled.ids.push_back(e.id);
    }
  };
  take(pair.target, target_embeddings);
  pooled.n_target = pooled.vectors.size();
  take(pair.retro, retro_embeddings);
  pooled.n_retro = pooled.vectors.size() - pooled.n_target;
  return pooled;
}

} // namespace retro::embed
