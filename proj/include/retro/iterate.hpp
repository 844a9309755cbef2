#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/embedding.hpp"

namespace retro::iterate {

// Lowercase word tokens split on non-alphanumeric characters.
std::vector<std::string> tokenize(std::string_view text);

struct NgramRow {
  std::string gram;
  long total_target = 0;
  long total_retro = 0;
  long doc_target = 0; // entries containing the gram at least once
  long doc_retro = 0;
  double delta_total = 0.0; // normalized total-frequency difference
  double delta_doc = 0.0;   // normalized document-frequency difference
};

struct NgramReport {
  int n = 1;
  long corpus_tokens_target = 0;
  long corpus_tokens_retro = 0;
  std::vector<NgramRow> rows; // sorted by |delta_total| descending
};

// 1- or 2-gram frequency comparison across the pair; rows with zero delta
// are dropped, so identical corpora report nothing.
NgramReport ngram_diff(const data::DatasetPair& pair, int n, std::size_t top);

std::string ngram_report_to_json(const NgramReport& report);
std::string ngram_report_to_markdown(const NgramReport& report);

struct Histogram {
  std::vector<double> edges; // bins + 1 monotone edges spanning [-1, 1]
  std::vector<long> counts;
  std::vector<double> density; // integrates to 1 over the support
  std::size_t pair_count = 0;
};

Histogram internal_similarity_histogram(const data::Dataset& ds,
                                        const std::map<std::string, embed::EmbeddingVector>& embeddings,
                                        int bins);

std::string histogram_to_csv(const Histogram& h);
std::string histogram_to_svg(const Histogram& h, const std::string& title);

struct SimilarPair {
  std::string id_a;
  std::string id_b;
  double cosine = 0.0;
  std::string text_a;
  std::string text_b;
};

// The k most similar internal entry pairs, highest first.
std::vector<SimilarPair> top_similar_pairs(const data::Dataset& ds,
                                           const std::map<std::string, embed::EmbeddingVector>& embeddings,
                                           std::size_t k = 10);

std::string pairs_to_json(const std::vector<SimilarPair>& pairs);
std::string pairs_to_markdown(const std::vector<SimilarPair>& pairs);

struct ProjectionPoint {
  std::string id;
  std::string role; // "target" | "retro"
  double x = 0.0;
  double y = 0.0;
};

// Pooled mean-centered embeddings projected onto the top two principal
// components (power iteration with deflation).
std::vector<ProjectionPoint> project_2d(const data::DatasetPair& pair,
                                        const std::map<std::string, embed::EmbeddingVector>& target_emb,
                                        const std::map<std::string, embed::EmbeddingVector>& retro_emb,
                                        std::uint64_t seed);

std::string projection_to_csv(const std::vector<ProjectionPoint>& points);
std::string projection_to_svg(const std::vector<ProjectionPoint>& points);

// Raw pooled embeddings for external projection tools.
std::string embeddings_to_csv(const data::DatasetPair& pair,
                              const std::map<std::string, embed::EmbeddingVector>& target_emb,
                              const std::map<std::string, embed::EmbeddingVector>& retro_emb);

} // namespace retro::iterate
