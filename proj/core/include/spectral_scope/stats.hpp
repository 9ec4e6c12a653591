#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spectral_scope {

struct ResamplingConfig {
  int n_bootstrap = 2000;
  int n_permutations = 10000;
  double ci_level = 0.95;
  double fdr_q = 0.05;
  double trim_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Throws ValidationError for out-of-range fields.
void validate(const ResamplingConfig& cfg);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::optional<double> p_adjusted;
  std::optional<Interval> ci;
  std::optional<double> effect_size_g;
  std::optional<double> effect_size_d;
  std::string method;
  bool exhaustive = false;
};

/// Type-7 (linear interpolation) quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double q);

/// Percentile bootstrap interval of the mean. A single value yields [v, v]
/// with a warning. Throws ValidationError on empty input.
Interval bootstrap_ci(std::span<const double> values, const ResamplingConfig& cfg);

struct EffectSizes {
  double cohens_d = 0.0;
  double hedges_g = 0.0;
  double hedges_g_trimmed = 0.0;
  double trim_fraction = 0.0;
};

/// Small-sample correction J = 1 - 3 / (4 df - 1).
double hedges_correction(double df) noexcept;

/// Symmetric trim of floor(fraction * n) values from each tail of a copy.
std::vector<double> trimmed(std::span<const double> values, double fraction);

/// d = (mean a - mean b) / pooled SD; g = J d. The trimmed variant applies the
/// same formulas after trimming each sample. `paired` only enforces equal sizes
/// and switches the correction to df = n - 1.
EffectSizes effect_sizes(std::span<const double> a, std::span<const double> b, bool paired,
                         const ResamplingConfig& cfg);

enum class PermutationStatistic { mean, t };

/// Two-sided sign-flip test. All 2^n flips are enumerated when 2^n <= n_permutations;
/// otherwise n_permutations random flips plus the identity are used.
TestResult paired_permutation_p(std::span<const double> deltas, const ResamplingConfig& cfg,
                                PermutationStatistic statistic = PermutationStatistic::mean);

struct FdrResult {
  std::vector<bool> reject;
  std::vector<double> adjusted;
};

/// Benjamini-Hochberg step-up. Outputs are in input order.
FdrResult bh_fdr(std::span<const double> p_values, double q);

/// Fisher z interval for a correlation estimated from n points.
Interval fisher_ci(double r, std::size_t n, double level);

/// Pearson r with Fisher z CI and a two-sided t-test p-value.
TestResult pearson_r_ci(std::span<const double> x, std::span<const double> y, const ResamplingConfig& cfg);

/// Difference of means (a - b) with an independent-resampling percentile
/// bootstrap CI; p is the two-sided bootstrap sign proportion.
TestResult group_shift(std::span<const double> group_a, std::span<const double> group_b,
                       const ResamplingConfig& cfg);

}  // namespace spectral_scope
