#include "spectral_scope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"
#include "spectral_scope/numeric.hpp"
#include "spectral_scope/rng.hpp"

namespace spectral_scope {

namespace {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};

Moments moments(std::span<const double> x) {
  Moments m;
  m.mean = mean(x);
  CompensatedSum ss;
  for (double v : x) ss.add((v - m.mean) * (v - m.mean));
  m.variance = x.size() > 1 ? ss.value() / static_cast<double>(x.size() - 1) : 0.0;
  return m;
}

bool all_equal(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

Interval percentile_interval(std::vector<double>& replicates, double level) {
  std::sort(replicates.begin(), replicates.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(replicates, tail), quantile_sorted(replicates, 1.0 - tail)};
}

double resampled_mean(std::span<const double> values, CounterRng& rng) {
  CompensatedSum acc;
  const auto n = static_cast<std::uint64_t>(values.size());
  for (std::uint64_t i = 0; i < n; ++i) acc.add(values[rng.below(n)]);
  return acc.value() / static_cast<double>(n);
}

}  // namespace

void validate(const ResamplingConfig& cfg) {
  if (cfg.n_bootstrap < 1) throw ValidationError("n_bootstrap must be positive");
  if (cfg.n_permutations < 1) throw ValidationError("n_permutations must be positive");
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) throw ValidationError("ci_level must lie in (0, 1)");
  if (!(cfg.fdr_q > 0.0 && cfg.fdr_q < 1.0)) throw ValidationError("fdr_q must lie in (0, 1)");
  if (!(cfg.trim_fraction >= 0.0 && cfg.trim_fraction <= 0.25)) {
    throw ValidationError("trim_fraction must lie in [0, 0.25]");
  }
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_ci(std::span<const double> values, const ResamplingConfig& cfg) {
  if (values.empty()) throw ValidationError("bootstrap_ci: no values");
  if (values.size() == 1) warn("bootstrap_ci: single value, interval is degenerate");
  if (all_equal(values)) return {values.front(), values.front()};

  CounterRng rng(cfg.seed);
  std::vector<double> replicates(static_cast<std::size_t>(cfg.n_bootstrap));
  for (auto& r : replicates) r = resampled_mean(values, rng);
  return percentile_interval(replicates, cfg.ci_level);
}

double hedges_correction(double df) noexcept { return 1.0 - 3.0 / (4.0 * df - 1.0); }

std::vector<double> trimmed(std::span<const double> values, double fraction) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(sorted.size())));
  return {sorted.begin() + static_cast<std::ptrdiff_t>(cut), sorted.end() - static_cast<std::ptrdiff_t>(cut)};
}

EffectSizes effect_sizes(std::span<const double> a, std::span<const double> b, bool paired,
                         const ResamplingConfig& cfg) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("effect_sizes: each sample needs at least 2 values");
  if (paired && a.size() != b.size()) throw ValidationError("effect_sizes: paired samples must have equal sizes");

  const auto standardized = [paired](std::span<const double> x, std::span<const double> y, const char* label) {
    const Moments mx = moments(x);
    const Moments my = moments(y);
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    const double pooled = std::sqrt(((nx - 1.0) * mx.variance + (ny - 1.0) * my.variance) / (nx + ny - 2.0));
    if (!(pooled > 0.0)) {
      throw DegenerateError(std::string("effect_sizes: zero pooled standard deviation (") + label +
                            " samples a and b are both constant)");
    }
    const double d = (mx.mean - my.mean) / pooled;
    const double df = paired ? nx - 1.0 : nx + ny - 2.0;
    return std::pair{d, d * hedges_correction(df)};
  };

  EffectSizes out;
  out.trim_fraction = cfg.trim_fraction;
  std::tie(out.cohens_d, out.hedges_g) = standardized(a, b, "untrimmed");
  const auto ta = trimmed(a, cfg.trim_fraction);
  const auto tb = trimmed(b, cfg.trim_fraction);
  if (ta.size() < 2 || tb.size() < 2) throw ValidationError("effect_sizes: trimming leaves fewer than 2 values");
  out.hedges_g_trimmed = standardized(ta, tb, "trimmed").second;
  return out;
}

TestResult paired_permutation_p(std::span<const double> deltas, const ResamplingConfig& cfg,
                                PermutationStatistic statistic) {
  if (deltas.empty()) throw ValidationError("paired_permutation_p: no deltas");
  const std::size_t n = deltas.size();
  const double nd = static_cast<double>(n);

  std::vector<double> signed_values(n);
  const auto evaluate = [&](const auto& sign_of) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      signed_values[i] = sign_of(i) ? -deltas[i] : deltas[i];
      sum += signed_values[i];
    }
    const double m = sum / nd;
    if (statistic == PermutationStatistic::mean) return m;
    double ss = 0.0;
    for (double v : signed_values) ss += (v - m) * (v - m);
    const double sd = n > 1 ? std::sqrt(ss / (nd - 1.0)) : 0.0;
    if (!(sd > 0.0)) return m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    return m / (sd / std::sqrt(nd));
  };

  const double observed = evaluate([](std::size_t) { return false; });
  double scale = 0.0;
  for (double d : deltas) scale += std::abs(d);
  scale /= nd;
  const double threshold =
      std::isinf(observed) ? std::abs(observed) : std::abs(observed) - 1e-12 * std::max(scale, std::abs(observed));
  const auto extreme = [&](double s) { return std::abs(s) >= threshold; };

  TestResult r;
  r.statistic = observed;
  r.method = statistic == PermutationStatistic::mean ? "sign-flip permutation (mean)" : "sign-flip permutation (t)";

  const bool exhaustive = n < 63 && (std::uint64_t{1} << n) <= static_cast<std::uint64_t>(cfg.n_permutations);
  if (exhaustive) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t count = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      if (extreme(evaluate([mask](std::size_t i) { return ((mask >> i) & 1U) != 0; }))) ++count;
    }
    r.p_value = static_cast<double>(count) / static_cast<double>(total);
    r.exhaustive = true;
    return r;
  }

  CounterRng rng(cfg.seed);
  std::vector<std::uint64_t> words((n + 63) / 64);
  std::uint64_t count = 1;  // identity flip
  for (int k = 0; k < cfg.n_permutations; ++k) {
    for (auto& w : words) w = rng.next();
    if (extreme(evaluate([&words](std::size_t i) { return ((words[i / 64] >> (i % 64)) & 1U) != 0; }))) ++count;
  }
  r.p_value = static_cast<double>(count) / static_cast<double>(cfg.n_permutations + 1);
  return r;
}

FdrResult bh_fdr(std::span<const double> p_values, double q) {
  const std::size_t m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("bh_fdr: p-value outside [0, 1]");
  }
  FdrResult out{std::vector<bool>(m, false), std::vector<double>(m, 1.0)};
  if (m == 0) return out;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

  const double md = static_cast<double>(m);
  std::size_t cutoff = 0;  // number of rejections
  for (std::size_t k = 0; k < m; ++k) {
    if (p_values[order[k]] <= static_cast<double>(k + 1) * q / md) cutoff = k + 1;
  }
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    running = std::min(running, md * p_values[order[k]] / static_cast<double>(k + 1));
    out.adjusted[order[k]] = std::max(running, p_values[order[k]]);
    out.reject[order[k]] = k < cutoff;
  }
  return out;
}

Interval fisher_ci(double r, std::size_t n, double level) {
  if (n <= 3) return {-1.0, 1.0};
  const double z = std::atanh(std::clamp(r, -1.0, 1.0));
  const double se = 1.0 / std::sqrt(static_cast<double>(n) - 3.0);
  const double crit = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
  return {std::tanh(z - crit * se), std::tanh(z + crit * se)};
}

TestResult pearson_r_ci(std::span<const double> x, std::span<const double> y, const ResamplingConfig& cfg) {
  if (x.size() != y.size()) throw ValidationError("pearson_r_ci: x and y differ in length");
  if (x.size() < 3) throw ValidationError("pearson_r_ci: need at least 3 points");
  const Moments mx = moments(x);
  const Moments my = moments(y);
  if (!(mx.variance > 0.0) || !(my.variance > 0.0)) {
    throw DegenerateError("pearson_r_ci: constant input, correlation undefined");
  }
  CompensatedSum sxy;
  CompensatedSum sxx;
  CompensatedSum syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx.mean;
    const double dy = y[i] - my.mean;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  const double r = std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);

  TestResult out;
  out.statistic = r;
  out.method = "pearson r, fisher z interval";
  out.ci = fisher_ci(r, x.size(), cfg.ci_level);
  const double df = static_cast<double>(x.size()) - 2.0;
  if (std::abs(r) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t = r * std::sqrt(df / (1.0 - r * r));
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df),
                                                                 std::abs(t)));
  }
  out.exhaustive = false;
  return out;
}

TestResult group_shift(std::span<const double> group_a, std::span<const double> group_b,
                       const ResamplingConfig& cfg) {
  if (group_a.empty() || group_b.empty()) throw ValidationError("group_shift: both groups must be non-empty");
  TestResult out;
  out.statistic = mean(group_a) - mean(group_b);
  out.method = "difference of means, percentile bootstrap";

  CounterRng rng(cfg.seed);
  std::vector<double> replicates(static_cast<std::size_t>(cfg.n_bootstrap));
  std::size_t at_or_below = 0;
  std::size_t at_or_above = 0;
  for (auto& r : replicates) {
    const double ma = resampled_mean(group_a, rng);
    const double mb = resampled_mean(group_b, rng);
    r = ma - mb;
    if (r <= 0.0) ++at_or_below;
    if (r >= 0.0) ++at_or_above;
  }
  const double b = static_cast<double>(replicates.size());
  out.p_value = std::min(1.0, 2.0 * static_cast<double>(std::min(at_or_below, at_or_above)) / b);
  out.ci = percentile_interval(replicates, cfg.ci_level);
  return out;
}

}  // namespace spectral_scope
