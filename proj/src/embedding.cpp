#include "retro/embedding.hpp"

#include <cmath>

#include "retro/error.hpp"

namespace retro::embed {

void validate_vector(const EmbeddingVector& v) {
  if (v.values.empty()) raise(ErrorKind::validation, "empty embedding vector");
  for (double x : v.values) {
    if (!std::isfinite(x)) raise(ErrorKind::validation, "non-finite embedding component");
  }
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    raise(ErrorKind::mismatch, "cosine: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                                   std::to_string(b.dim()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) raise(ErrorKind::degenerate_input, "cosine: zero-norm vector");
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  // Guard rounding drift outside [-1, 1].
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

SimilarityMatrix::SimilarityMatrix(std::size_t n, std::vector<double> upper, double sum)
    : n_(n), values_(std::move(upper)), sum_(sum) {
  if (n_ < 2) raise(ErrorKind::degenerate_input, "similarity matrix needs at least 2 vectors");
  if (values_.size() != n_ * (n_ - 1) / 2)
    raise(ErrorKind::validation, "similarity matrix has wrong pair count");
}

double SimilarityMatrix::at(std::size_t i, std::size_t j) const {
  if (i == j) return 1.0;
  if (i > j) std::swap(i, j);
  // Row-major upper triangle: offset of row i is i*n - i(i+1)/2.
  std::size_t off = i * n_ - i * (i + 1) / 2 + (j - i - 1);
  return values_[off];
}

double SimilarityMatrix::mean() const { return sum_ / static_cast<double>(values_.size()); }

SimilarityMatrix pairwise_similarity(std::span<const EmbeddingVector> vectors) {
  std::size_t n = vectors.size();
  if (n < 2) raise(ErrorKind::degenerate_input, "pairwise similarity needs at least 2 vectors");
  for (const auto& v : vectors) {
    if (v.dim() != vectors.front().dim())
      raise(ErrorKind::mismatch, "pairwise similarity: mixed dimensions");
  }
  std::vector<double> upper;
  upper.reserve(n * (n - 1) / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double c = cosine(vectors[i], vectors[j]);
      upper.push_back(c);
      sum += c;
    }
  }
  return SimilarityMatrix(n, std::move(upper), sum);
}

} // namespace retro::embed
