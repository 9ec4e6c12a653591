#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spectral_scope/capture_io.hpp"
#include "spectral_scope/graph_spectra.hpp"
#include "spectral_scope/stats.hpp"

namespace spectral_scope {

enum class Metric { fiedler, hfer_signal, hfer_spectral, smoothness, spectral_entropy };

std::string_view to_string(Metric m) noexcept;
std::optional<Metric> parse_metric(std::string_view text) noexcept;

/// Value of `metric` in one LayerMetrics; throws ValidationError when a signal
/// metric was not computed (no hidden states).
double metric_value(const LayerMetrics& m, Metric metric);

/// Inclusive range of 1-based layers.
struct LayerWindow {
  int first = 2;
  int last = 5;

  int size() const noexcept { return last - first + 1; }
};

/// Parses "A:B". Throws ValidationError on malformed or reversed ranges.
LayerWindow parse_window(std::string_view text);

struct DeltaProfile {
  std::string pair_id;
  std::string canonical_id;
  std::string stressed_id;
  Metric metric = Metric::fiedler;
  std::vector<double> per_layer_delta;  // stressed - canonical, index 0 is layer 1
  LayerWindow window;
  double early_window_mean = 0.0;
  double min_delta = 0.0;  // most negative per-layer delta
  int min_delta_layer = 1;
};

/// Mean of deltas over the inclusive window. Throws ValidationError when the
/// window is empty or falls outside [1, L].
double early_window_mean(std::span<const double> per_layer_delta, LayerWindow window);
double early_window_mean(const DeltaProfile& profile, LayerWindow window);

/// Delta profile from already computed per-layer metrics of both members.
DeltaProfile delta_profile(std::string pair_id, std::string canonical_id, std::string stressed_id,
                           std::span<const LayerMetrics> canonical, std::span<const LayerMetrics> stressed,
                           Metric metric, LayerWindow window);

DeltaProfile delta_profile(const PairedSample& pair, Metric metric, const AnalysisConfig& config,
                           LayerWindow window = {});

enum class FdrScope { per_construction, global };

struct StressConfig {
  AnalysisConfig analysis;
  LayerWindow window;
  ResamplingConfig resampling;
  FdrScope fdr_scope = FdrScope::per_construction;
};

struct StressCell {
  std::string language;
  Construction construction = Construction::passive;
  std::size_t n_pairs = 0;
  double mean = 0.0;
  std::optional<Interval> ci;  // absent for cells with fewer than 2 pairs
  double p_value = 1.0;
  double p_adjusted = 1.0;
  bool significant = false;
  bool exhaustive = false;
  std::vector<double> mean_delta_per_layer;
  std::vector<std::string> pair_keys;  // "pair_id/stressed_id" of contributing profiles
};

struct SeverityEntry {
  std::string language;
  Construction construction = Construction::passive;
  double min_fiedler = 0.0;  // minimum over layers of the pair-mean stressed Fiedler value
  int min_layer = 1;
};

struct StressTable {
  std::string model_id;
  Metric metric = Metric::fiedler;
  LayerWindow window;
  std::vector<StressCell> cells;          // sorted by (language, construction)
  std::vector<SeverityEntry> severity;    // sorted by ascending min_fiedler
  std::vector<DeltaProfile> profiles;
};

/// Groups every canonical/stressed pair by (language, stressed construction),
/// averages early-window deltas, and attaches bootstrap CIs and BH-corrected
/// sign-flip p-values. Randomised steps use per-cell derived seeds.
StressTable stress_table(const CaptureBundle& bundle, Metric metric, const StressConfig& config);

}  // namespace spectral_scope
