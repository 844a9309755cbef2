#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace retro::embed {

// Dense vector for one entry's canonical text. Stored as received from the
// provider; cosine similarity makes normalization irrelevant.
struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
  std::string source_hash; // sha-256 of the embedded text

  std::size_t dim() const { return values.size(); }
};

void validate_vector(const EmbeddingVector& v);

// dot(a,b) / (|a||b|), always computed in double precision.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// Upper-triangular pairwise cosine store (i < j); mean is O(1).
class SimilarityMatrix {
public:
  SimilarityMatrix(std::size_t n, std::vector<double> upper, double sum);

  std::size_t size() const { return n_; }
  std::size_t pair_count() const { return values_.size(); }
  double at(std::size_t i, std::size_t j) const;
  double mean() const;
  double total() const { return sum_; }
  const std::vector<double>& values() const { return values_; }

private:
  std::size_t n_;
  std::vector<double> values_;
  double sum_;
};

SimilarityMatrix pairwise_similarity(std::span<const EmbeddingVector> vectors);

} // namespace retro::embed
