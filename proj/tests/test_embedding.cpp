#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "retro/dataset.hpp"
#include "retro/embedding_provider.hpp"
#include "retro/error.hpp"
#include "retro/rng.hpp"

using namespace retro;
using nlohmann::json;

namespace {

embed::EmbeddingVector vec(std::vector<double> v, std::string model = "m") {
  return embed::EmbeddingVector{std::move(v), std::move(model), ""};
}

data::Dataset small_dataset(int n) {
  data::Dataset ds;
  ds.name = "emb";
  for (int i = 0; i < n; ++i) {
    data::Entry e;
    e.id = "e" + std::to_string(i);
    e.question = "Embedding probe question " + std::to_string(i) + "?";
    e.options = {"First option " + std::to_string(i), "Second option " + std::to_string(i)};
    e.correct_index = 0;
    ds.entries.push_back(e);
  }
  return ds;
}

// Returns basis vectors e_i in call order and counts invocations.
class BasisProvider : public embed::EmbeddingProvider {
public:
  explicit BasisProvider(std::size_t dim) : dim_(dim) {}
  std::string model_id() const override { return "basis"; }
  std::size_t dimension() const override { return dim_; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override {
    ++calls;
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < texts.size(); ++k) {
      std::vector<double> v(dim_, 0.0);
      v[(next_index++) % dim_] = 1.0;
      out.push_back(std::move(v));
    }
    return out;
  }
  std::atomic<int> calls{0};
  std::atomic<std::size_t> next_index{0};

private:
  std::size_t dim_;
};

} // namespace

TEST_CASE("cosine identities") {
  auto v = vec({1.0, 2.0, -3.0});
  CHECK(embed::cosine(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(embed::cosine(vec({1, 0, 0}), vec({0, 1, 0})) == doctest::Approx(0.0));
  CHECK_THROWS_AS(embed::cosine(vec({0, 0, 0}), v), Error);
  CHECK_THROWS_AS(embed::cosine(vec({1, 2}), v), Error);
}

TEST_CASE("cosine is symmetric, scale-invariant and bounded") {
  rng::CounterRng gen(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t d = 2 + gen.next_below(6);
    std::vector<double> a(d), b(d);
    for (auto& x : a) x = gen.next_gaussian();
    for (auto& x : b) x = gen.next_gaussian();
    double alpha = 0.01 + 5.0 * gen.next_double();
    auto va = vec(a), vb = vec(b);
    double c = embed::cosine(va, vb);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(embed::cosine(vb, va) == doctest::Approx(c).epsilon(1e-12));
    auto scaled = a;
    for (auto& x : scaled) x *= alpha;
    CHECK(embed::cosine(vec(scaled), vb) == doctest::Approx(c).epsilon(1e-9));
  }
}

TEST_CASE("pairwise similarity stores all i<j values with O(1) mean") {
  auto same = vec({1, 1});
  std::vector<embed::EmbeddingVector> two = {same, same};
  auto m2 = embed::pairwise_similarity(two);
  CHECK(m2.pair_count() == 1);
  CHECK(m2.mean() == doctest::Approx(1.0));

  std::vector<embed::EmbeddingVector> five(5, same);
  auto m5 = embed::pairwise_similarity(five);
  CHECK(m5.pair_count() == 10);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(m5.at(i, j) == doctest::Approx(1.0));

  std::vector<embed::EmbeddingVector> four = {vec({1, 0, 0}), vec({0.5, 0.5, 0}),
                                              vec({-1, 2, 0.25}), vec({0.1, -0.3, 4})};
  auto m4 = embed::pairwise_similarity(four);
  double brute_sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      double direct = embed::cosine(four[i], four[j]);
      CHECK(m4.at(i, j) == doctest::Approx(direct).epsilon(1e-15));
      CHECK(m4.at(j, i) == doctest::Approx(direct).epsilon(1e-15));
      brute_sum += direct;
    }
  }
  CHECK(m4.mean() == doctest::Approx(brute_sum / 6.0).epsilon(1e-12));

  std::vector<embed::EmbeddingVector> one = {same};
  CHECK_THROWS_AS(embed::pairwise_similarity(one), Error);
}

TEST_CASE("pairwise mean matches brute force on 100 random vectors") {
  rng::CounterRng gen(123);
  std::vector<embed::EmbeddingVector> vs;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = gen.next_gaussian();
    vs.push_back(vec(std::move(v)));
  }
  auto m = embed::pairwise_similarity(vs);
  double sum = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      sum += embed::cosine(vs[i], vs[j]);
      ++pairs;
    }
  CHECK(m.pair_count() == static_cast<std::size_t>(pairs));
  CHECK(m.mean() == doctest::Approx(sum / pairs).epsilon(1e-12));
}

TEST_CASE("hash embedding provider is deterministic and unit-norm") {
  embed::HashEmbeddingProvider p(64);
  std::vector<std::string> texts = {"an apple a day", "an apple a day", "something different"};
  auto out = p.embed_batch(texts);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == out[1]);
  CHECK(out[0] != out[2]);
  double norm = 0.0;
  for (double x : out[0]) norm += x * x;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("embed_all fills the cache and never re-queries unchanged texts") {
  auto ds = small_dataset(5);
  BasisProvider provider(5);
  auto tmp = std::filesystem::temp_directory_path() / "retro_test_cache.jsonl";
  std::filesystem::remove(tmp);
  {
    embed::EmbeddingCache cache(tmp);
    auto embs = embed::embed_all(ds, provider, cache, {64, 1});
    REQUIRE(embs.size() == 5);
    CHECK(provider.calls.load() == 1);
    // Basis vectors: all pairwise orthogonal.
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j)
        CHECK(embed::cosine(embs.at("e" + std::to_string(i)), embs.at("e" + std::to_string(j))) ==
              doctest::Approx(0.0));
    CHECK(embs.at("e0").source_hash.size() == 64);
  }
  {
    // Fresh cache object backed by the same file: everything is a hit.
    embed::EmbeddingCache cache(tmp);
    BasisProvider cold(5);
    auto embs = embed::embed_all(ds, cold, cache, {64, 1});
    CHECK(embs.size() == 5);
    CHECK(cold.calls.load() == 0);
  }
  std::filesystem::remove(tmp);
}

TEST_CASE("embed_all on an empty dataset returns an empty map") {
  data::Dataset empty;
  empty.name = "empty";
  BasisProvider provider(4);
  embed::EmbeddingCache cache;
  CHECK(embed::embed_all(empty, provider, cache).empty());
  CHECK(provider.calls.load() == 0);
}

TEST_CASE("cache keys on (model_id, text hash)") {
  embed::EmbeddingCache cache;
  cache.put("model-a", "hash1", {1.0});
  CHECK(cache.contains("model-a", "hash1"));
  CHECK_FALSE(cache.contains("model-b", "hash1"));
  CHECK_FALSE(cache.contains("model-a", "hash2"));
  CHECK_THROWS_AS(cache.get("model-b", "hash1"), Error);
}

TEST_CASE("dimension mismatch against the cache is an error") {
  auto ds = small_dataset(1);
  embed::EmbeddingCache cache;
  BasisProvider p3(3);
  auto embs = embed::embed_all(ds, p3, cache);
  CHECK(embs.at("e0").dim() == 3);

  // Same model id now claims a different dimension.
  class Lying : public BasisProvider {
  public:
    Lying() : BasisProvider(7) {}
    std::string model_id() const override { return "basis"; }
  } lying;
  CHECK_THROWS_AS(embed::embed_all(ds, lying, cache), Error);
}

TEST_CASE("http embedding provider round-trips and retries server errors") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    int n = ++hits;
    if (n == 1) { // first call fails, the retry must succeed
      res.status = 500;
      return;
    }
    auto body = json::parse(req.body);
    json data = json::array();
    for (std::size_t i = 0; i < body.at("input").size(); ++i)
      data.push_back({{"embedding", {1.0 * static_cast<double>(i), 2.0}}});
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  embed::HttpEmbeddingConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings";
  cfg.model_id = "remote-model";
  cfg.max_retries = 2;
  cfg.backoff_ms = 1;
  embed::HttpEmbeddingProvider provider(cfg);
  std::vector<std::string> texts = {"a", "b"};
  auto out = provider.embed_batch(texts);
  REQUIRE(out.size() == 2);
  CHECK(out[1][0] == doctest::Approx(1.0));
  CHECK(provider.dimension() == 2);
  CHECK(hits.load() == 2);

  server.stop();
  worker.join();
}

TEST_CASE("http embedding provider surfaces transport failure after retries") {
  embed::HttpEmbeddingConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/embeddings"; // nothing listens here
  cfg.model_id = "remote-model";
  cfg.max_retries = 1;
  cfg.backoff_ms = 1;
  cfg.timeout_s = 1;
  embed::HttpEmbeddingProvider provider(cfg);
  std::vector<std::string> texts = {"a"};
  CHECK_THROWS_AS(provider.embed_batch(texts), Error);
}
