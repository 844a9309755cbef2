#include "retro/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retro/error.hpp"
#include "retro/rng.hpp"

namespace retro::stats {

namespace {

// Relative slack when comparing outcome probabilities for two-sided tail
// construction. Distinct outcome weights in the regimes we exercise differ
// by far more than this; exact ties computed through different float paths
// differ by far less.
constexpr double kTieSlack = 1e-9;

double log_choose(long n, long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double binom_log_pmf(long k, long n, double p0) {
  double lp = log_choose(n, k);
  if (k > 0) lp += static_cast<double>(k) * std::log(p0);
  if (n - k > 0) lp += static_cast<double>(n - k) * std::log1p(-p0);
  return lp;
}

double clamp_p(double p) { return std::min(1.0, std::max(0.0, p)); }

// Exact binomial coefficient; valid while the result fits in uint64.
std::uint64_t choose_u64(long n, long k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t c = 1;
  for (long i = 1; i <= k; ++i) {
    __uint128_t t = static_cast<__uint128_t>(c) * static_cast<std::uint64_t>(n - k + i);
    c = static_cast<std::uint64_t>(t / static_cast<std::uint64_t>(i));
  }
  return c;
}

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

} // namespace

TestResult TestResult::make(double statistic, double p_value, std::string h0,
                            std::optional<double> mc_halfwidth) {
  TestResult r;
  r.statistic = statistic;
  r.p_value = clamp_p(p_value);
  r.h0 = std::move(h0);
  r.reject_at_5pct = r.p_value < 0.05;
  r.mc_ci_halfwidth = mc_halfwidth;
  return r;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TestResult binom_test(long k, long n, double p0, Sidedness sidedness) {
  if (n <= 0 || k < 0 || k > n)
    raise(ErrorKind::validation, "binom_test: need 0 <= k <= n with n > 0");
  if (!(p0 > 0.0 && p0 < 1.0)) raise(ErrorKind::validation, "binom_test: need 0 < p0 < 1");

  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) pmf[i] = std::exp(binom_log_pmf(i, n, p0));

  double p = 0.0;
  switch (sidedness) {
    case Sidedness::lower:
      for (long i = 0; i <= k; ++i) p += pmf[i];
      break;
    case Sidedness::upper:
      for (long i = k; i <= n; ++i) p += pmf[i];
      break;
    case Sidedness::two_sided: {
      double cutoff = pmf[k] * (1.0 + kTieSlack);
      for (long i = 0; i <= n; ++i)
        if (pmf[i] <= cutoff) p += pmf[i];
      break;
    }
  }
  double stat = static_cast<double>(k) / static_cast<double>(n);
  return TestResult::make(stat, p, "success probability = " + format_prob(p0));
}

TwoProportionResult two_proportion_test(long k1, long n1, long k2, long n2) {
  if (n1 <= 0 || n2 <= 0) raise(ErrorKind::validation, "two_proportion_test: empty sample");
  if (k1 < 0 || k1 > n1 || k2 < 0 || k2 > n2)
    raise(ErrorKind::validation, "two_proportion_test: counts out of range");

  double p1 = static_cast<double>(k1) / n1;
  double p2 = static_cast<double>(k2) / n2;
  double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);

  TwoProportionResult out;
  out.gap = p1 - p2;
  out.gap_sigma = std::sqrt(p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2);

  if (pooled == 0.0 || pooled == 1.0) {
    // Both proportions are necessarily equal here.
    out.result = TestResult::make(0.0, 1.0, "equal success probabilities");
    return out;
  }

  double min_expected = std::min({n1 * pooled, n1 * (1.0 - pooled), n2 * pooled, n2 * (1.0 - pooled)});
  if (min_expected < 5.0) {
    TestResult fisher = fisher_exact(k1, n1 - k1, k2, n2 - k2);
    out.result = TestResult::make(fisher.statistic, fisher.p_value, "equal success probabilities");
    out.used_fisher_fallback = true;
    return out;
  }

  double z = (p1 - p2) / std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
  double p = 2.0 * (1.0 - normal_cdf(std::fabs(z)));
  out.result = TestResult::make(z, p, "equal success probabilities");
  return out;
}

TestResult fisher_exact(long a, long b, long c, long d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) raise(ErrorKind::validation, "fisher_exact: negative count");
  long r1 = a + b, r2 = c + d;
  if (r1 == 0 || r2 == 0) raise(ErrorKind::degenerate_input, "fisher_exact: empty row margin");
  long c1 = a + c;
  long lo = std::max(0L, c1 - r2);
  long hi = std::min(r1, c1);

  // Haldane-Anscombe corrected odds ratio keeps the statistic finite.
  double odds = ((a + 0.5) * (d + 0.5)) / ((b + 0.5) * (c + 0.5));
  std::string h0 = "no association (odds ratio = 1)";

  if (lo == hi) return TestResult::make(odds, 1.0, std::move(h0)); // single admissible table

  double p;
  if (r1 <= 60 && r2 <= 60) {
    // Exact integer hypergeometric weights; comparisons are tie-perfect.
    std::vector<unsigned __int128> w(static_cast<std::size_t>(hi - lo) + 1);
    long double total = 0.0L;
    for (long x = lo; x <= hi; ++x) {
      w[x - lo] = static_cast<unsigned __int128>(choose_u64(r1, x)) * choose_u64(r2, c1 - x);
      total += static_cast<long double>(w[x - lo]);
    }
    unsigned __int128 w_obs = w[a - lo];
    long double incl = 0.0L;
    for (long x = lo; x <= hi; ++x)
      if (w[x - lo] <= w_obs) incl += static_cast<long double>(w[x - lo]);
    p = static_cast<double>(incl / total);
  } else {
    std::vector<double> lw(static_cast<std::size_t>(hi - lo) + 1);
    double lw_max = -INFINITY;
    for (long x = lo; x <= hi; ++x) {
      lw[x - lo] = log_choose(r1, x) + log_choose(r2, c1 - x);
      lw_max = std::max(lw_max, lw[x - lo]);
    }
    double cutoff = lw[a - lo] + std::log1p(kTieSlack);
    double incl = 0.0, total = 0.0;
    for (long x = lo; x <= hi; ++x) {
      double v = std::exp(lw[x - lo] - lw_max);
      total += v;
      if (lw[x - lo] <= cutoff) incl += v;
    }
    p = incl / total;
  }
  return TestResult::make(odds, p, std::move(h0));
}

double mc_ci_halfwidth(double p_hat, long num_samples) {
  if (num_samples < 1) raise(ErrorKind::validation, "mc_ci_halfwidth: need N >= 1");
  return kZ995 * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(num_samples));
}

double mc_ci_halfwidth_literal(double p_hat, long num_samples) {
  if (num_samples < 1) raise(ErrorKind::validation, "mc_ci_halfwidth: need N >= 1");
  return kZ995 * p_hat * (1.0 - p_hat) / std::sqrt(static_cast<double>(num_samples));
}

namespace {

struct PermutationPlan {
  std::size_t n = 0;
  std::size_t n_target = 0;
  std::size_t n_retro = 0;
  std::size_t role_size = 0;  // block size of the configured role
  std::size_t small_size = 0; // smaller block, the one summed directly
  bool role_is_small = false;
  double total = 0.0;
  std::vector<double> row_sums;
  long role_pairs = 0;
};

PermutationPlan make_plan(const embed::SimilarityMatrix& sims, std::size_t n_target, Role role) {
  PermutationPlan plan;
  plan.n = sims.size();
  if (n_target >= plan.n) raise(ErrorKind::validation, "permutation test: role sizes exceed pool");
  plan.n_target = n_target;
  plan.n_retro = plan.n - n_target;
  if (plan.n_target < 2 || plan.n_retro < 2)
    raise(ErrorKind::degenerate_input, "permutation test: both roles need at least 2 entries");
  plan.role_size = role == Role::target ? plan.n_target : plan.n_retro;
  plan.small_size = std::min(plan.n_target, plan.n_retro);
  plan.role_is_small = plan.role_size == plan.small_size;
  plan.total = sims.total();
  plan.row_sums.assign(plan.n, 0.0);
  for (std::size_t i = 0; i < plan.n; ++i) {
    for (std::size_t j = i + 1; j < plan.n; ++j) {
      double v = sims.at(i, j);
      plan.row_sums[i] += v;
      plan.row_sums[j] += v;
    }
  }
  plan.role_pairs = static_cast<long>(plan.role_size) * (plan.role_size - 1) / 2;
  return plan;
}

// Internal pair sum of the members listed in `subset`, plus their full-pool
// row-sum total. The complement block's internal sum follows from
//   int_C = T + int_S - sum_S(row sums).
double subset_stat(const embed::SimilarityMatrix& sims, const PermutationPlan& plan,
                   std::span<const std::size_t> subset) {
  double internal = 0.0;
  double rows = 0.0;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    rows += plan.row_sums[subset[i]];
    for (std::size_t j = i + 1; j < subset.size(); ++j) internal += sims.at(subset[i], subset[j]);
  }
  double role_sum = plan.role_is_small ? internal : plan.total + internal - rows;
  return role_sum / static_cast<double>(plan.role_pairs);
}

} // namespace

namespace {

// The block subset_stat must see is always the SMALL one: the role's own
// block when the role is small, otherwise the role's complement.
std::vector<std::size_t> observed_small_block(const PermutationPlan& plan, Role role) {
  bool take_target_block = (role == Role::target) == plan.role_is_small;
  std::vector<std::size_t> subset(plan.small_size);
  std::size_t base = take_target_block ? 0 : plan.n_target;
  for (std::size_t i = 0; i < plan.small_size; ++i) subset[i] = base + i;
  return subset;
}

} // namespace

TestResult permutation_test(const embed::SimilarityMatrix& sims, std::size_t n_target,
                            const PermutationConfig& cfg) {
  if (cfg.num_samples < 100) raise(ErrorKind::validation, "permutation test: need N >= 100");
  PermutationPlan plan = make_plan(sims, n_target, cfg.role);

  double observed = subset_stat(sims, plan, observed_small_block(plan, cfg.role));

  const long N = cfg.num_samples;
  std::vector<double> sampled(static_cast<std::size_t>(N));
  std::vector<std::size_t> indices(plan.n);
  std::vector<std::size_t> subset(plan.small_size);
  for (long s = 0; s < N; ++s) {
    rng::CounterRng gen(cfg.seed, static_cast<std::uint64_t>(s) + 1);
    for (std::size_t i = 0; i < plan.n; ++i) indices[i] = i;
    // Partial Fisher-Yates: only the small block needs materializing.
    for (std::size_t i = 0; i < plan.small_size; ++i) {
      std::size_t j = i + static_cast<std::size_t>(gen.next_below(plan.n - i));
      std::swap(indices[i], indices[j]);
      subset[i] = indices[i];
    }
    sampled[static_cast<std::size_t>(s)] = subset_stat(sims, plan, subset);
  }

  long extreme = 0;
  switch (cfg.sidedness) {
    case Sidedness::upper:
      for (double s : sampled)
        if (s >= observed) ++extreme;
      break;
    case Sidedness::lower:
      for (double s : sampled)
        if (s <= observed) ++extreme;
      break;
    case Sidedness::two_sided: {
      double mean = std::accumulate(sampled.begin(), sampled.end(), 0.0) / sampled.size();
      double obs_dev = std::fabs(observed - mean);
      for (double s : sampled)
        if (std::fabs(s - mean) >= obs_dev) ++extreme;
      break;
    }
  }
  double p = static_cast<double>(1 + extreme) / static_cast<double>(N + 1);
  return TestResult::make(observed, p, "target and retro share a distribution",
                          mc_ci_halfwidth(p, N));
}

TestResult permutation_test(std::span<const embed::EmbeddingVector> pooled, std::size_t n_target,
                            const PermutationConfig& cfg) {
  if (pooled.size() < 4) raise(ErrorKind::degenerate_input, "permutation test: pool too small");
  const std::string& model = pooled.front().model_id;
  for (const auto& v : pooled) {
    if (v.model_id != model)
      raise(ErrorKind::mismatch, "permutation test: mixed embedding models (" + model + " vs " +
                                     v.model_id + ")");
  }
  return permutation_test(embed::pairwise_similarity(pooled), n_target, cfg);
}

TestResult permutation_test_exhaustive(const embed::SimilarityMatrix& sims, std::size_t n_target,
                                       Role role, Sidedness sidedness) {
  PermutationPlan plan = make_plan(sims, n_target, role);
  if (plan.n > 20) raise(ErrorKind::capacity, "exhaustive permutation test limited to pools <= 20");

  double observed = subset_stat(sims, plan, observed_small_block(plan, role));

  // Enumerate all size-m subsets of the pool in lexicographic order.
  const std::size_t m = plan.small_size;
  std::vector<double> stats;
  std::vector<std::size_t> pos(m);
  for (std::size_t i = 0; i < m; ++i) pos[i] = i;
  while (true) {
    stats.push_back(subset_stat(sims, plan, pos));
    long i = static_cast<long>(m) - 1;
    while (i >= 0 && pos[i] == plan.n - m + static_cast<std::size_t>(i)) --i;
    if (i < 0) break;
    ++pos[i];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < m; ++j) pos[j] = pos[j - 1] + 1;
  }

  long extreme = 0;
  switch (sidedness) {
    case Sidedness::upper:
      for (double s : stats)
        if (s >= observed) ++extreme;
      break;
    case Sidedness::lower:
      for (double s : stats)
        if (s <= observed) ++extreme;
      break;
    case Sidedness::two_sided: {
      double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / stats.size();
      double obs_dev = std::fabs(observed - mean);
      for (double s : stats)
        if (std::fabs(s - mean) >= obs_dev) ++extreme;
      break;
    }
  }
  double p = static_cast<double>(extreme) / static_cast<double>(stats.size());
  return TestResult::make(observed, p, "target and retro share a distribution");
}

double AccuracyEstimate::sigma() const {
  if (total <= 0) return 0.0;
  double a = acc();
  return std::sqrt(a * (1.0 - a) / static_cast<double>(total));
}

AccuracyEstimate make_accuracy(long correct, long total) {
  if (total < 0 || correct < 0 || correct > total)
    raise(ErrorKind::validation, "accuracy estimate: need 0 <= correct <= total");
  return AccuracyEstimate{correct, total};
}

GapEstimate make_gap_estimate(const AccuracyEstimate& target, const AccuracyEstimate& retro) {
  if (target.total <= 0 || retro.total <= 0)
    raise(ErrorKind::validation, "gap estimate: empty accuracy sample");
  GapEstimate g;
  g.acc_target = target;
  g.acc_retro = retro;
  g.gap_pp = 100.0 * (target.acc() - retro.acc());
  g.u_p = 100.0 * kZ995 * target.sigma();
  g.u_h = 100.0 * kZ995 * retro.sigma();
  g.bound_99 = g.u_p + g.u_h;
  g.fisher_p = fisher_exact(target.correct, target.total - target.correct, retro.correct,
                            retro.total - retro.correct)
                   .p_value;
  return g;
}

} // namespace retro::stats
