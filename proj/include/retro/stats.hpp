#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retro/embedding.hpp"

namespace retro::stats {

enum class Sidedness { two_sided, lower, upper };

// Outcome of a single hypothesis test at the 5% level.
struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string h0;
  bool reject_at_5pct = false; // always == (p_value < 0.05)
  std::optional<double> mc_ci_halfwidth; // Monte Carlo tests only

  static TestResult make(double statistic, double p_value, std::string h0,
                         std::optional<double> mc_halfwidth = std::nullopt);
};

double normal_cdf(double z);

// 99.5% two-sided normal quantile as used throughout the analysis; the
// same constant scales the Monte Carlo p-value interval (99% one-sided
// coverage of the difference follows by summation).
inline constexpr double kZ995 = 2.807;

// Exact binomial test. Two-sided sums every outcome whose probability does
// not exceed the observed outcome's (small relative slack absorbs float
// jitter on exact ties).
TestResult binom_test(long k, long n, double p0, Sidedness sidedness = Sidedness::two_sided);

struct TwoProportionResult {
  TestResult result;
  double gap = 0.0;       // k1/n1 - k2/n2
  double gap_sigma = 0.0; // 1-sigma combined binomial error
  bool used_fisher_fallback = false;
};

// Pooled-proportion z test of equal success probability; falls back to
// Fisher's exact test when any expected cell count is below 5.
TwoProportionResult two_proportion_test(long k1, long n1, long k2, long n2);

// Two-sided Fisher's exact test on the 2x2 table [[a, b], [c, d]].
TestResult fisher_exact(long a, long b, long c, long d);

// Half-width of the 99% Monte Carlo confidence interval for a p-value
// estimated from N samples (normal-approximation form, the default).
double mc_ci_halfwidth(double p_hat, long num_samples);
// The literal printed form (no square root over the variance); retained
// for comparison, not used by any test.
double mc_ci_halfwidth_literal(double p_hat, long num_samples);

enum class Role { target, retro };
enum class StatisticKind { mean_internal_similarity_of_role };

struct PermutationConfig {
  StatisticKind statistic_kind = StatisticKind::mean_internal_similarity_of_role;
  Role role = Role::target;
  long num_samples = 10000; // N >= 100
  std::uint64_t seed = 0;
  Sidedness sidedness = Sidedness::upper;
};

// Monte Carlo permutation test: the statistic is the mean pairwise cosine
// similarity inside the configured role's block; role labels are
// reassigned uniformly at random with sizes preserved. The p-value carries
// add-one smoothing: p = (1 + #extreme) / (N + 1).
TestResult permutation_test(const embed::SimilarityMatrix& pooled_similarities,
                            std::size_t n_target, const PermutationConfig& cfg);

// Convenience overload; additionally rejects pools with mixed embedding
// models. Vectors are ordered target block first.
TestResult permutation_test(std::span<const embed::EmbeddingVector> pooled, std::size_t n_target,
                            const PermutationConfig& cfg);

// Exhaustive counterpart over all role assignments; tractable only for
// small pools. Test oracle and ground truth for tiny inputs.
TestResult permutation_test_exhaustive(const embed::SimilarityMatrix& pooled_similarities,
                                       std::size_t n_target, Role role, Sidedness sidedness);

struct AccuracyEstimate {
  long correct = 0;
  long total = 0;

  double acc() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
  double sigma() const;
};

AccuracyEstimate make_accuracy(long correct, long total);

// Accuracy gap between target and retro runs of one model, with the 99%
// composed bound u_p + u_h and Fisher significance. All percentage points.
struct GapEstimate {
  AccuracyEstimate acc_target;
  AccuracyEstimate acc_retro;
  double gap_pp = 0.0;   // 100 * (target acc - retro acc); positive = inflation
  double u_p = 0.0;      // 99.5% halfwidth of the target accuracy, pp
  double u_h = 0.0;      // 99.5% halfwidth of the retro accuracy, pp
  double bound_99 = 0.0; // u_p + u_h
  double fisher_p = 1.0;
};

GapEstimate make_gap_estimate(const AccuracyEstimate& target, const AccuracyEstimate& retro);

} // namespace retro::stats
