#include <cmath>

#include <gtest/gtest.h>

#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"
#include "spectral_scope/stress.hpp"
#include "support/fixtures.hpp"

namespace ss = spectral_scope;
using Eigen::MatrixXd;

namespace {

struct SilenceWarnings {
  SilenceWarnings() {
    ss::set_warning_handler([](std::string_view) {});
  }
  ~SilenceWarnings() { ss::set_warning_handler(nullptr); }
};

ss::LayerMetrics lm(int layer, double fiedler) {
  ss::LayerMetrics m;
  m.layer = layer;
  m.fiedler = fiedler;
  m.spectral_entropy = 0.5 * fiedler;
  m.hfer_spectral = 0.25;
  return m;
}

}  // namespace

TEST(Metric, NamesRoundTrip) {
  for (auto m : {ss::Metric::fiedler, ss::Metric::hfer_signal, ss::Metric::hfer_spectral, ss::Metric::smoothness,
                 ss::Metric::spectral_entropy}) {
    EXPECT_EQ(ss::parse_metric(ss::to_string(m)), m);
  }
  EXPECT_FALSE(ss::parse_metric("lambda").has_value());
}

TEST(Metric, SignalMetricNeedsHidden) {
  const auto m = lm(1, 0.3);
  EXPECT_EQ(ss::metric_value(m, ss::Metric::fiedler), 0.3);
  EXPECT_THROW(ss::metric_value(m, ss::Metric::smoothness), ss::ValidationError);
  EXPECT_THROW(ss::metric_value(m, ss::Metric::hfer_signal), ss::ValidationError);
}

TEST(Window, Parse) {
  const auto w = ss::parse_window("2:5");
  EXPECT_EQ(w.first, 2);
  EXPECT_EQ(w.last, 5);
  EXPECT_EQ(w.size(), 4);
  EXPECT_THROW(ss::parse_window("5:2"), ss::ValidationError);
  EXPECT_THROW(ss::parse_window("0:3"), ss::ValidationError);
  EXPECT_THROW(ss::parse_window("2-5"), ss::ValidationError);
  EXPECT_THROW(ss::parse_window("a:b"), ss::ValidationError);
  EXPECT_THROW(ss::parse_window("2:"), ss::ValidationError);
}

TEST(EarlyWindow, HandMeans) {
  const std::vector<double> d{0, -1, -1, -1, -1, 0, 0};
  EXPECT_DOUBLE_EQ(ss::early_window_mean(d, {2, 5}), -1.0);
  EXPECT_DOUBLE_EQ(ss::early_window_mean(d, {1, 4}), -0.75);
  EXPECT_THROW(ss::early_window_mean(d, {5, 2}), ss::ValidationError);
  EXPECT_THROW(ss::early_window_mean(d, {6, 8}), ss::ValidationError);
}

TEST(EarlyWindow, PartitionLinearity) {
  ss::CounterRng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(2 + rng.below(20));
    for (auto& x : d) x = rng.unit() * 2 - 1;
    const int L = int(d.size());
    const int a = 1 + int(rng.below(std::uint64_t(L)));
    const int b = a + int(rng.below(std::uint64_t(L - a + 1)));
    if (b == a) continue;
    const int c = a + int(rng.below(std::uint64_t(b - a)));  // split [a,c] [c+1,b]
    const double whole = ss::early_window_mean(d, {a, b});
    const double left = ss::early_window_mean(d, {a, c});
    const double right = ss::early_window_mean(d, {c + 1, b});
    const double n1 = c - a + 1, n2 = b - c;
    EXPECT_NEAR(whole, (n1 * left + n2 * right) / (n1 + n2), 1e-14);
  }
}

TEST(DeltaProfile, FromMetrics) {
  std::vector<ss::LayerMetrics> c, s;
  for (int l = 1; l <= 6; ++l) {
    c.push_back(lm(l, 1.0));
    s.push_back(lm(l, l == 3 ? 0.1 : 0.5));
  }
  const auto p = ss::delta_profile("p", "c", "s", c, s, ss::Metric::fiedler, {2, 5});
  ASSERT_EQ(p.per_layer_delta.size(), 6u);
  for (int l = 0; l < 6; ++l) EXPECT_EQ(p.per_layer_delta[l], s[l].fiedler - c[l].fiedler);
  EXPECT_DOUBLE_EQ(p.early_window_mean, (-0.5 - 0.9 - 0.5 - 0.5) / 4);
  EXPECT_DOUBLE_EQ(p.min_delta, 0.1 - 1.0);
  EXPECT_EQ(p.min_delta_layer, 3);
  EXPECT_DOUBLE_EQ(ss::early_window_mean(p, {1, 1}), -0.5);
}

TEST(DeltaProfile, LayerMismatch) {
  std::vector<ss::LayerMetrics> c{lm(1, 1), lm(2, 1)}, s{lm(1, 1)};
  EXPECT_THROW(ss::delta_profile("p", "c", "s", c, s, ss::Metric::fiedler, {1, 1}), ss::ValidationError);
}

TEST(DeltaProfile, Antisymmetry) {
  ss::CounterRng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<ss::LayerMetrics> c, s;
    for (int l = 1; l <= 6; ++l) {
      c.push_back(lm(l, rng.unit()));
      s.push_back(lm(l, rng.unit()));
    }
    const auto a = ss::delta_profile("p", "c", "s", c, s, ss::Metric::spectral_entropy, {2, 5});
    const auto b = ss::delta_profile("p", "s", "c", s, c, ss::Metric::spectral_entropy, {2, 5});
    for (std::size_t l = 0; l < 6; ++l) EXPECT_EQ(a.per_layer_delta[l], -b.per_layer_delta[l]);
    EXPECT_EQ(a.early_window_mean, -b.early_window_mean);
  }
}

TEST(DeltaProfile, IdenticalSamplesGiveZero) {
  auto specs = fixtures::collapse_pairs(1, 6, 2, true);
  specs[1].layers = specs[0].layers;
  specs[1].hidden = specs[0].hidden;
  const auto bundle = fixtures::make_bundle(specs);
  const auto pairs = ss::pair_samples(bundle);
  for (auto m : {ss::Metric::fiedler, ss::Metric::smoothness, ss::Metric::hfer_signal}) {
    const auto p = ss::delta_profile(pairs.pairs[0], m, {});
    for (double d : p.per_layer_delta) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(p.early_window_mean, 0.0);
  }
}

TEST(DeltaProfile, UniformToBlockIsMinusOne) {
  const auto bundle = fixtures::make_bundle(fixtures::collapse_pairs(1, 6, 2, false));
  const auto pairs = ss::pair_samples(bundle);
  const auto p = ss::delta_profile(pairs.pairs[0], ss::Metric::fiedler, {});
  for (double d : p.per_layer_delta) EXPECT_NEAR(d, -1.0, 1e-9);
  EXPECT_NEAR(p.early_window_mean, -1.0, 1e-9);
}

TEST(StressTable, TenPairsAllMinusOne) {
  const auto bundle = fixtures::make_bundle(fixtures::collapse_pairs(10, 6, 2, false));
  const auto t = ss::stress_table(bundle, ss::Metric::fiedler, {});
  ASSERT_EQ(t.cells.size(), 1u);
  const auto& c = t.cells[0];
  EXPECT_EQ(c.language, "en");
  EXPECT_EQ(c.construction, ss::Construction::passive);
  EXPECT_EQ(c.n_pairs, 10u);
  EXPECT_NEAR(c.mean, -1.0, 1e-9);
  ASSERT_TRUE(c.ci.has_value());
  EXPECT_NEAR(c.ci->lo, -1.0, 1e-9);
  EXPECT_NEAR(c.ci->hi, -1.0, 1e-9);
  // all ten deltas share a sign: exhaustive p = 2 / 1024
  EXPECT_TRUE(c.exhaustive);
  EXPECT_DOUBLE_EQ(c.p_value, 2.0 / 1024.0);
  EXPECT_TRUE(c.significant);
  EXPECT_EQ(c.pair_keys.size(), 10u);
  EXPECT_EQ(t.profiles.size(), 10u);
  EXPECT_EQ(t.model_id, "org/Test-Model");
}

TEST(StressTable, SeverityOrdersDeeperCollapseFirst) {
  auto passive = fixtures::collapse_pairs(3, 6, 2, false, "en", ss::Construction::passive);
  auto dative = fixtures::collapse_pairs(3, 6, 2, false, "en", ss::Construction::dative_shift);
  for (auto& s : dative) {
    s.pair_id += "d";
    s.id += "d";
    if (s.role == ss::Role::stressed) {
      // half uniform, half two-block: lambda2 = 0.5
      for (auto& layer : s.layers) layer = {fixtures::uniform_attention(4), fixtures::block_attention(4)};
    }
  }
  passive.insert(passive.end(), dative.begin(), dative.end());
  const auto t = ss::stress_table(fixtures::make_bundle(passive), ss::Metric::fiedler, {});
  ASSERT_EQ(t.cells.size(), 2u);
  ASSERT_EQ(t.severity.size(), 2u);
  EXPECT_EQ(t.severity[0].construction, ss::Construction::passive);
  EXPECT_EQ(t.severity[1].construction, ss::Construction::dative_shift);
  EXPECT_NEAR(t.severity[0].min_fiedler, 0.0, 1e-9);
  EXPECT_NEAR(t.severity[1].min_fiedler, 0.5, 1e-9);
  // cells sorted by (language, construction)
  for (const auto& c : t.cells) {
    EXPECT_NEAR(c.mean, c.construction == ss::Construction::passive ? -1.0 : -0.5, 1e-9);
  }
}

TEST(StressTable, SinglePairCellHasNoCi) {
  SilenceWarnings quiet;
  const auto bundle = fixtures::make_bundle(fixtures::collapse_pairs(1, 6, 2, false));
  const auto t = ss::stress_table(bundle, ss::Metric::fiedler, {});
  ASSERT_EQ(t.cells.size(), 1u);
  EXPECT_FALSE(t.cells[0].ci.has_value());
  EXPECT_EQ(t.cells[0].p_value, 1.0);
}

TEST(StressTable, DeterministicUnderSeed) {
  auto specs = fixtures::collapse_pairs(12, 6, 2, true);
  // add variation so the CI is not degenerate
  ss::CounterRng rng(9);
  for (auto& s : specs) {
    if (s.role != ss::Role::stressed) continue;
    const double w = 0.2 + 0.6 * rng.unit();
    for (auto& layer : s.layers) {
      layer[0] = w * fixtures::uniform_attention(4) + (1 - w) * fixtures::block_attention(4);
    }
  }
  const auto bundle = fixtures::make_bundle(specs);
  ss::StressConfig cfg;
  cfg.resampling.seed = 5;
  cfg.resampling.n_permutations = 1000;
  const auto a = ss::stress_table(bundle, ss::Metric::fiedler, cfg);
  const auto b = ss::stress_table(bundle, ss::Metric::fiedler, cfg);
  ASSERT_TRUE(a.cells[0].ci && b.cells[0].ci);
  EXPECT_EQ(a.cells[0].ci->lo, b.cells[0].ci->lo);
  EXPECT_EQ(a.cells[0].ci->hi, b.cells[0].ci->hi);
  EXPECT_EQ(a.cells[0].p_value, b.cells[0].p_value);
  EXPECT_FALSE(a.cells[0].exhaustive);
  EXPECT_LT(a.cells[0].ci->lo, a.cells[0].ci->hi);
  cfg.resampling.seed = 6;
  const auto c = ss::stress_table(bundle, ss::Metric::fiedler, cfg);
  EXPECT_TRUE(c.cells[0].ci->lo != a.cells[0].ci->lo || c.cells[0].ci->hi != a.cells[0].ci->hi);
}

TEST(StressTable, FdrScopes) {
  // Two languages, two constructions. Per-construction families have 2 members, global has 4.
  std::vector<fixtures::SampleSpec> specs;
  for (const char* lang : {"en", "de"}) {
    for (auto cons : {ss::Construction::passive, ss::Construction::wh_question}) {
      auto part = fixtures::collapse_pairs(4, 6, 2, false, lang, cons);
      for (auto& s : part) {
        s.pair_id += std::string(ss::to_string(cons));
        s.id += std::string(ss::to_string(cons));
      }
      specs.insert(specs.end(), part.begin(), part.end());
    }
  }
  const auto bundle = fixtures::make_bundle(specs);
  ss::StressConfig per;
  ss::StressConfig global;
  global.fdr_scope = ss::FdrScope::global;
  const auto a = ss::stress_table(bundle, ss::Metric::fiedler, per);
  const auto b = ss::stress_table(bundle, ss::Metric::fiedler, global);
  ASSERT_EQ(a.cells.size(), 4u);
  // each raw p = 2/16 = 0.125, identical in every cell, so BH-adjusted equals raw in both scopes
  for (const auto& c : a.cells) {
    EXPECT_DOUBLE_EQ(c.p_value, 0.125);
    EXPECT_DOUBLE_EQ(c.p_adjusted, 0.125);
    EXPECT_FALSE(c.significant);
  }
  for (const auto& c : b.cells) EXPECT_DOUBLE_EQ(c.p_adjusted, 0.125);
}

TEST(StressTable, SignalMetricWithoutHiddenFails) {
  const auto bundle = fixtures::make_bundle(fixtures::collapse_pairs(2, 6, 2, false));
  EXPECT_THROW(ss::stress_table(bundle, ss::Metric::smoothness, {}), ss::ValidationError);
}

TEST(StressTable, WindowOutsideModel) {
  const auto bundle = fixtures::make_bundle(fixtures::collapse_pairs(2, 3, 2, false));
  EXPECT_THROW(ss::stress_table(bundle, ss::Metric::fiedler, {}), ss::ValidationError);
}
