#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"
#include "spectral_scope/rng.hpp"
#include "spectral_scope/stats.hpp"

namespace ss = spectral_scope;

namespace {

// Exhaustive sign-flip count on integer deltas, so ties are exact.
double enumerated_p(const std::vector<long>& deltas) {
  const std::size_t n = deltas.size();
  long observed = 0;
  for (long d : deltas) observed += d;
  std::uint64_t hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    long s = 0;
    for (std::size_t i = 0; i < n; ++i) s += ((mask >> i) & 1U) ? -deltas[i] : deltas[i];
    if (std::labs(s) >= std::labs(observed)) ++hits;
  }
  return double(hits) / double(std::uint64_t{1} << n);
}

std::vector<double> as_double(const std::vector<long>& v) { return {v.begin(), v.end()}; }

struct SilenceWarnings {
  SilenceWarnings() {
    ss::set_warning_handler([](std::string_view) {});
  }
  ~SilenceWarnings() { ss::set_warning_handler(nullptr); }
};

const std::vector<double> kGoldenList{0.12, -0.40, 0.33, 0.05, -0.21, 0.48, 0.09, -0.02, 0.27, 0.15};

}  // namespace

TEST(ResamplingConfig, DefaultsAndValidation) {
  ss::ResamplingConfig c;
  EXPECT_EQ(c.n_bootstrap, 2000);
  EXPECT_EQ(c.n_permutations, 10000);
  EXPECT_DOUBLE_EQ(c.ci_level, 0.95);
  EXPECT_DOUBLE_EQ(c.fdr_q, 0.05);
  EXPECT_DOUBLE_EQ(c.trim_fraction, 0.1);
  EXPECT_NO_THROW(ss::validate(c));
  c.trim_fraction = 0.3;
  EXPECT_THROW(ss::validate(c), ss::ValidationError);
  c = {};
  c.ci_level = 1.0;
  EXPECT_THROW(ss::validate(c), ss::ValidationError);
  c = {};
  c.n_bootstrap = 0;
  EXPECT_THROW(ss::validate(c), ss::ValidationError);
}

TEST(Quantile, Type7) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(ss::quantile_sorted(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(ss::quantile_sorted(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(ss::quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(ss::quantile_sorted(v, 0.25), 1.75);
}

TEST(Bootstrap, ConstantValues) {
  const std::vector<double> v(7, 0.3);
  const auto ci = ss::bootstrap_ci(v, {});
  EXPECT_EQ(ci.lo, 0.3);
  EXPECT_EQ(ci.hi, 0.3);
}

TEST(Bootstrap, SingleValueDegenerate) {
  SilenceWarnings quiet;
  const std::vector<double> v{-1.25};
  const auto ci = ss::bootstrap_ci(v, {});
  EXPECT_EQ(ci.lo, -1.25);
  EXPECT_EQ(ci.hi, -1.25);
}

TEST(Bootstrap, EmptyIsAnError) {
  const std::vector<double> v;
  EXPECT_THROW(ss::bootstrap_ci(v, {}), ss::ValidationError);
}

TEST(Bootstrap, HalfAndHalf) {
  const std::vector<double> v{0, 0, 0, 1, 1, 1};
  ss::ResamplingConfig c;
  c.n_bootstrap = 20000;
  const auto ci = ss::bootstrap_ci(v, c);
  EXPECT_LE(ci.lo, 0.5);
  EXPECT_GE(ci.hi, 0.5);
  EXPECT_GE(ci.lo, 0.0);
  EXPECT_LE(ci.hi, 1.0);
}

TEST(Bootstrap, GoldenSeed42) {
  ss::ResamplingConfig c;
  c.seed = 42;
  const auto a = ss::bootstrap_ci(kGoldenList, c);
  const auto b = ss::bootstrap_ci(kGoldenList, c);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  // Frozen output of the SplitMix64 counter stream for this list.
  EXPECT_EQ(a.lo, -0.070999999999999994);
  EXPECT_EQ(a.hi, 0.23199999999999998);
}

TEST(Bootstrap, RespectsSampleRange) {
  ss::CounterRng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(2 + rng.below(15));
    for (auto& x : v) x = rng.unit() * 10.0 - 5.0;
    ss::ResamplingConfig c;
    c.n_bootstrap = 300;
    c.seed = static_cast<std::uint64_t>(t);
    const auto ci = ss::bootstrap_ci(v, c);
    EXPECT_LE(ci.lo, ci.hi);
    EXPECT_GE(ci.lo, *std::min_element(v.begin(), v.end()));
    EXPECT_LE(ci.hi, *std::max_element(v.begin(), v.end()));
  }
}

TEST(Bootstrap, SeedChangesInterval) {
  ss::ResamplingConfig a, b;
  a.seed = 1;
  b.seed = 2;
  const auto x = ss::bootstrap_ci(kGoldenList, a);
  const auto y = ss::bootstrap_ci(kGoldenList, b);
  EXPECT_TRUE(x.lo != y.lo || x.hi != y.hi);
}

TEST(EffectSizes, IdenticalSamples) {
  const std::vector<double> a{1.0, 2.0, 4.0, 7.0};
  const auto e = ss::effect_sizes(a, a, true, {});
  EXPECT_EQ(e.cohens_d, 0.0);
  EXPECT_EQ(e.hedges_g, 0.0);
  EXPECT_EQ(e.hedges_g_trimmed, 0.0);
}

TEST(EffectSizes, ClosedFormUnitGap) {
  // Unit sample SD in both groups, means 1 apart, n = 20 each.
  std::vector<double> a(20);
  for (std::size_t i = 0; i < 20; ++i) a[i] = double(i);
  double m = 0.0;
  for (double x : a) m += x;
  m /= 20.0;
  double ss2 = 0.0;
  for (double x : a) ss2 += (x - m) * (x - m);
  const double sd = std::sqrt(ss2 / 19.0);
  for (auto& x : a) x = (x - m) / sd;
  std::vector<double> b(a);
  for (auto& x : b) x -= 1.0;
  ss::ResamplingConfig c;
  c.trim_fraction = 0.0;
  const auto e = ss::effect_sizes(a, b, false, c);
  EXPECT_NEAR(e.cohens_d, 1.0, 1e-12);
  const double j = 1.0 - 3.0 / (4.0 * 38.0 - 1.0);
  EXPECT_NEAR(e.hedges_g, j, 1e-12);
  EXPECT_NEAR(ss::hedges_correction(38.0), j, 1e-15);
  EXPECT_NEAR(e.hedges_g_trimmed, j, 1e-12);
}

TEST(EffectSizes, LargePositiveForSeparatedGroups) {
  std::vector<double> a, b;
  ss::CounterRng rng(12);
  for (int i = 0; i < 20; ++i) {
    a.push_back(0.90 + 0.05 * (rng.unit() - 0.5));
    b.push_back(0.14 + 0.05 * (rng.unit() - 0.5));
  }
  const auto e = ss::effect_sizes(a, b, false, {});
  EXPECT_GT(e.cohens_d, 5.0);
  EXPECT_GT(e.hedges_g_trimmed, 5.0);
}

TEST(EffectSizes, Antisymmetry) {
  ss::CounterRng rng(13);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(5 + rng.below(10)), b(a.size());
    for (auto& x : a) x = rng.unit();
    for (auto& x : b) x = rng.unit() + 0.2;
    const auto ab = ss::effect_sizes(a, b, true, {});
    const auto ba = ss::effect_sizes(b, a, true, {});
    EXPECT_DOUBLE_EQ(ab.cohens_d, -ba.cohens_d);
    EXPECT_DOUBLE_EQ(ab.hedges_g, -ba.hedges_g);
    EXPECT_DOUBLE_EQ(ab.hedges_g_trimmed, -ba.hedges_g_trimmed);
  }
}

TEST(EffectSizes, Errors) {
  const std::vector<double> one{1.0};
  const std::vector<double> two{1.0, 2.0};
  const std::vector<double> three{1.0, 2.0, 3.0};
  const std::vector<double> flat{1.0, 1.0, 1.0};
  EXPECT_THROW(ss::effect_sizes(one, two, false, {}), ss::ValidationError);
  EXPECT_THROW(ss::effect_sizes(two, three, true, {}), ss::ValidationError);
  EXPECT_THROW(ss::effect_sizes(flat, flat, false, {}), ss::DegenerateError);
}

TEST(EffectSizes, TrimmingDropsTails) {
  const std::vector<double> v{100, 1, 2, 3, 4, 5, 6, 7, 8, -100};
  const auto t = ss::trimmed(v, 0.1);
  ASSERT_EQ(t.size(), 8u);
  EXPECT_EQ(t.front(), 1.0);
  EXPECT_EQ(t.back(), 8.0);
}

TEST(Permutation, AllZero) {
  const std::vector<double> d(6, 0.0);
  const auto r = ss::paired_permutation_p(d, {});
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_TRUE(r.exhaustive);
}

TEST(Permutation, FiveOnes) {
  const std::vector<double> d(5, 1.0);
  const auto r = ss::paired_permutation_p(d, {});
  EXPECT_TRUE(r.exhaustive);
  EXPECT_EQ(r.p_value, 0.0625);
}

TEST(Permutation, SingleDelta) {
  const std::vector<double> d{1.0};
  EXPECT_EQ(ss::paired_permutation_p(d, {}).p_value, 1.0);
}

TEST(Permutation, MatchesEnumerationOracle) {
  ss::CounterRng rng(21);
  for (int t = 0; t < 200; ++t) {
    std::vector<long> d(1 + rng.below(10));
    for (auto& x : d) x = static_cast<long>(rng.below(9)) - 4;
    const auto r = ss::paired_permutation_p(as_double(d), {});
    ASSERT_TRUE(r.exhaustive);
    EXPECT_EQ(r.p_value, enumerated_p(d)) << "case " << t;
    // exact rational with denominator 2^n
    const double scaled = r.p_value * double(std::uint64_t{1} << d.size());
    EXPECT_EQ(scaled, std::round(scaled));
  }
}

TEST(Permutation, FloatingTiesStillCount) {
  // 0.1 + 0.2 != 0.3 in binary, yet the flips tie in exact arithmetic.
  const std::vector<double> d{0.1, 0.2, -0.3, 0.3};
  const std::vector<long> exact{1, 2, -3, 3};
  EXPECT_EQ(ss::paired_permutation_p(d, {}).p_value, enumerated_p(exact));
}

TEST(Permutation, MonteCarloWithinThreeStandardErrors) {
  ss::CounterRng rng(31);
  for (int t = 0; t < 10; ++t) {
    std::vector<long> d(13);
    for (auto& x : d) x = static_cast<long>(rng.below(11)) - 3;
    const double exact = enumerated_p(d);
    ss::ResamplingConfig c;
    c.n_permutations = 4000;
    c.seed = static_cast<std::uint64_t>(t);
    const auto r = ss::paired_permutation_p(as_double(d), c);
    ASSERT_FALSE(r.exhaustive);
    const double se = std::sqrt(std::max(exact * (1 - exact), 1e-4) / c.n_permutations);
    EXPECT_LE(std::abs(r.p_value - exact), 3 * se + 1.0 / (c.n_permutations + 1)) << "case " << t;
    EXPECT_GE(r.p_value, 1.0 / (c.n_permutations + 1));
  }
}

TEST(Permutation, TStatisticVariant) {
  const std::vector<double> d{0.5, 0.7, 0.6, 0.4, 0.8};
  const auto r = ss::paired_permutation_p(d, {}, ss::PermutationStatistic::t);
  EXPECT_TRUE(r.exhaustive);
  EXPECT_EQ(r.p_value, 0.0625);
  EXPECT_GT(r.statistic, 0.0);
}

TEST(BhFdr, AllRejected) {
  const std::vector<double> p{0.01, 0.02, 0.03, 0.04};
  const auto r = ss::bh_fdr(p, 0.05);
  for (bool x : r.reject) EXPECT_TRUE(x);
  for (double a : r.adjusted) EXPECT_NEAR(a, 0.04, 1e-15);
}

TEST(BhFdr, NoneRejected) {
  const std::vector<double> p{0.5, 0.6, 0.9};
  const auto r = ss::bh_fdr(p, 0.05);
  for (bool x : r.reject) EXPECT_FALSE(x);
}

TEST(BhFdr, SinglePValue) {
  const std::vector<double> p{0.04};
  const auto r = ss::bh_fdr(p, 0.05);
  EXPECT_TRUE(r.reject[0]);
  EXPECT_DOUBLE_EQ(r.adjusted[0], 0.04);
}

TEST(BhFdr, StepUpByHand) {
  // sorted: 0.001 0.008 0.039 0.041 0.042 0.06, m = 6, q = 0.05
  // thresholds: 0.00833 0.01667 0.025 0.0333 0.04167 0.05 -> largest passing i = 2
  const std::vector<double> p{0.041, 0.001, 0.06, 0.039, 0.008, 0.042};
  const auto r = ss::bh_fdr(p, 0.05);
  const std::vector<bool> expected{false, true, false, false, true, false};
  EXPECT_EQ(r.reject, expected);
  EXPECT_NEAR(r.adjusted[1], 0.006, 1e-15);
  EXPECT_NEAR(r.adjusted[4], 0.024, 1e-15);
  EXPECT_NEAR(r.adjusted[3], 0.0504, 1e-15);
  EXPECT_NEAR(r.adjusted[2], 0.06, 1e-15);
}

TEST(BhFdr, RejectsOutOfRange) {
  const std::vector<double> p{0.5, 1.5};
  EXPECT_THROW(ss::bh_fdr(p, 0.05), ss::ValidationError);
}

TEST(BhFdr, Properties) {
  ss::CounterRng rng(41);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(1 + rng.below(20));
    for (auto& x : p) x = rng.unit() * (rng.unit() < 0.3 ? 0.05 : 1.0);
    const auto all = ss::bh_fdr(p, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < 1.0) EXPECT_TRUE(all.reject[i]);
    }
    const auto none = ss::bh_fdr(p, 1e-300);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) EXPECT_FALSE(none.reject[i]);
    }
    std::size_t prev = 0;
    for (double q : {0.001, 0.01, 0.05, 0.1, 0.2, 0.5}) {
      const auto r = ss::bh_fdr(p, q);
      std::size_t count = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        count += r.reject[i];
        EXPECT_GE(r.adjusted[i], p[i]);
        EXPECT_LE(r.adjusted[i], 1.0);
        // reject iff adjusted <= q
        EXPECT_EQ(r.reject[i], r.adjusted[i] <= q);
      }
      EXPECT_GE(count, prev);
      prev = count;
    }
  }
}

TEST(Pearson, PerfectLines) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y1, y2;
  for (double v : x) {
    y1.push_back(2 * v + 1);
    y2.push_back(-v);
  }
  EXPECT_DOUBLE_EQ(ss::pearson_r_ci(x, y1, {}).statistic, 1.0);
  EXPECT_DOUBLE_EQ(ss::pearson_r_ci(x, y2, {}).statistic, -1.0);
  EXPECT_EQ(ss::pearson_r_ci(x, y1, {}).p_value, 0.0);
}

TEST(Pearson, ConstantIsDegenerate) {
  const std::vector<double> x{1, 2, 3};
  const std::vector<double> y{4, 4, 4};
  EXPECT_THROW(ss::pearson_r_ci(x, y, {}), ss::DegenerateError);
  const std::vector<double> two{1, 2};
  EXPECT_THROW(ss::pearson_r_ci(two, two, {}), ss::ValidationError);
}

TEST(Pearson, KnownValue) {
  // r = 0.8 by construction, t = 0.8 * sqrt(3 / 0.36) with df = 3.
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{1, 3, 2, 5, 4};
  const auto r = ss::pearson_r_ci(x, y, {});
  EXPECT_NEAR(r.statistic, 0.8, 1e-15);
  EXPECT_NEAR(r.p_value, 0.1040880, 1e-6);
  ASSERT_TRUE(r.ci.has_value());
  EXPECT_LT(r.ci->lo, 0.8);
  EXPECT_GT(r.ci->hi, 0.8);
}

TEST(FisherCi, TenPointStrongNegative) {
  const auto ci = ss::fisher_ci(-0.976, 10, 0.95);
  // hi is -0.8985: agrees with the published -0.89 only to two decimals by truncation
  EXPECT_NEAR(ci.lo, -0.99, 0.01);
  EXPECT_NEAR(ci.hi, -0.89, 0.01);
  const auto tiny = ss::fisher_ci(0.5, 3, 0.95);
  EXPECT_EQ(tiny.lo, -1.0);
  EXPECT_EQ(tiny.hi, 1.0);
}

TEST(GroupShift, IdenticalGroups) {
  const std::vector<double> a{0.4, 0.5, 0.45, 0.52, 0.38};
  const auto r = ss::group_shift(a, a, {});
  EXPECT_EQ(r.statistic, 0.0);
  ASSERT_TRUE(r.ci.has_value());
  EXPECT_LE(r.ci->lo, 0.0);
  EXPECT_GE(r.ci->hi, 0.0);
}

TEST(GroupShift, ShiftByOne) {
  const std::vector<double> a{0.5, 1.5, 2.25, -0.75};
  std::vector<double> b(a);
  for (auto& x : b) x += 1.0;
  EXPECT_EQ(ss::group_shift(a, b, {}).statistic, -1.0);
}

TEST(GroupShift, MeansOnly) {
  std::vector<double> a, b;
  const double na[] = {-0.01, 0.02, 0.0, 0.01, -0.02, 0.0};
  const double nb[] = {0.01, -0.01, 0.02, -0.02, 0.0, 0.015, -0.015, 0.0};
  for (double e : na) a.push_back(0.472 + e);
  for (double e : nb) b.push_back(0.383 + e);
  const auto r = ss::group_shift(a, b, {});
  EXPECT_NEAR(r.statistic, 0.089, 1e-12);
  EXPECT_GT(r.ci->lo, 0.0);
  EXPECT_LT(r.p_value, 0.05);
  const std::vector<double> empty;
  EXPECT_THROW(ss::group_shift(empty, b, {}), ss::ValidationError);
}
