#include "spectral_scope/stress.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>
#include <utility>

#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"
#include "spectral_scope/numeric.hpp"
#include "spectral_scope/rng.hpp"

namespace spectral_scope {

std::string_view to_string(Metric m) noexcept {
  switch (m) {
    case Metric::fiedler:
      return "fiedler";
    case Metric::hfer_signal:
      return "hfer_signal";
    case Metric::hfer_spectral:
      return "hfer_spectral";
    case Metric::smoothness:
      return "smoothness";
    case Metric::spectral_entropy:
      return "spectral_entropy";
  }
  return "unknown";
}

std::optional<Metric> parse_metric(std::string_view text) noexcept {
  for (Metric m : {Metric::fiedler, Metric::hfer_signal, Metric::hfer_spectral, Metric::smoothness,
                   Metric::spectral_entropy}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

double metric_value(const LayerMetrics& m, Metric metric) {
  switch (metric) {
    case Metric::fiedler:
      return m.fiedler;
    case Metric::hfer_spectral:
      return m.hfer_spectral;
    case Metric::spectral_entropy:
      return m.spectral_entropy;
    case Metric::hfer_signal:
      if (!m.hfer_signal) throw ValidationError("hfer_signal needs hidden states, which this sample lacks");
      return *m.hfer_signal;
    case Metric::smoothness:
      if (!m.smoothness) throw ValidationError("smoothness needs hidden states, which this sample lacks");
      return *m.smoothness;
  }
  throw ValidationError("unknown metric");
}

LayerWindow parse_window(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ValidationError("window must look like A:B, got '" + std::string(text) + "'");
  const auto parse_int = [&](std::string_view part) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw ValidationError("window bound '" + std::string(part) + "' is not an integer");
    }
    return v;
  };
  LayerWindow w{parse_int(text.substr(0, colon)), parse_int(text.substr(colon + 1))};
  if (w.first < 1 || w.last < w.first) {
    throw ValidationError("window " + std::string(text) + " is empty or starts below layer 1");
  }
  return w;
}

double early_window_mean(std::span<const double> per_layer_delta, LayerWindow window) {
  if (window.last < window.first) {
    throw ValidationError("empty window [" + std::to_string(window.first) + "," + std::to_string(window.last) + "]");
  }
  if (window.first < 1 || window.last > static_cast<int>(per_layer_delta.size())) {
    throw ValidationError("window [" + std::to_string(window.first) + "," + std::to_string(window.last) +
                          "] outside layers 1.." + std::to_string(per_layer_delta.size()));
  }
  return mean(per_layer_delta.subspan(static_cast<std::size_t>(window.first - 1),
                                      static_cast<std::size_t>(window.size())));
}

double early_window_mean(const DeltaProfile& profile, LayerWindow window) {
  return early_window_mean(profile.per_layer_delta, window);
}

DeltaProfile delta_profile(std::string pair_id, std::string canonical_id, std::string stressed_id,
                           std::span<const LayerMetrics> canonical, std::span<const LayerMetrics> stressed,
                           Metric metric, LayerWindow window) {
  if (canonical.size() != stressed.size()) {
    throw ValidationError("pair '" + pair_id + "': canonical has " + std::to_string(canonical.size()) +
                          " layers, stressed has " + std::to_string(stressed.size()));
  }
  DeltaProfile p;
  p.pair_id = std::move(pair_id);
  p.canonical_id = std::move(canonical_id);
  p.stressed_id = std::move(stressed_id);
  p.metric = metric;
  p.window = window;
  p.per_layer_delta.resize(canonical.size());
  for (std::size_t l = 0; l < canonical.size(); ++l) {
    p.per_layer_delta[l] = metric_value(stressed[l], metric) - metric_value(canonical[l], metric);
  }
  p.early_window_mean = early_window_mean(p.per_layer_delta, window);
  const auto it = std::min_element(p.per_layer_delta.begin(), p.per_layer_delta.end());
  p.min_delta = *it;
  p.min_delta_layer = static_cast<int>(it - p.per_layer_delta.begin()) + 1;
  return p;
}

DeltaProfile delta_profile(const PairedSample& pair, Metric metric, const AnalysisConfig& config, LayerWindow window) {
  const auto& c = pair.canonical.get();
  const auto& s = pair.stressed.get();
  const auto cm = per_layer_metrics(c, config);
  const auto sm = per_layer_metrics(s, config);
  return delta_profile(c.record.pair_id, c.record.id, s.record.id, cm, sm, metric, window);
}

StressTable stress_table(const CaptureBundle& bundle, Metric metric, const StressConfig& config) {
  validate(config.resampling);
  const Pairing pairing = pair_samples(bundle);

  std::map<std::string, std::vector<LayerMetrics>> cache;
  const auto metrics_of = [&](const CaptureSample& s) -> const std::vector<LayerMetrics>& {
    auto it = cache.find(s.record.id);
    if (it == cache.end()) it = cache.emplace(s.record.id, per_layer_metrics(s, config.analysis)).first;
    return it->second;
  };

  StressTable table;
  table.model_id = bundle.manifest().model_id;
  table.metric = metric;
  table.window = config.window;

  using Key = std::pair<std::string, Construction>;
  std::map<Key, std::vector<std::size_t>> groups;
  for (const auto& pair : pairing.pairs) {
    const auto& c = pair.canonical.get();
    const auto& s = pair.stressed.get();
    if (c.record.language != s.record.language) {
      warn("pair '" + c.record.pair_id + "' mixes languages " + c.record.language + " and " + s.record.language +
           "; grouped under " + c.record.language);
    }
    table.profiles.push_back(delta_profile(c.record.pair_id, c.record.id, s.record.id, metrics_of(c), metrics_of(s),
                                           metric, config.window));
    groups[{c.record.language, s.record.construction}].push_back(table.profiles.size() - 1);
  }

  for (const auto& [key, members] : groups) {
    const auto& [language, construction] = key;
    StressCell cell;
    cell.language = language;
    cell.construction = construction;
    cell.n_pairs = members.size();

    std::vector<double> window_means;
    const std::size_t layers = table.profiles[members.front()].per_layer_delta.size();
    std::vector<CompensatedSum> per_layer(layers);
    std::vector<CompensatedSum> stressed_fiedler(layers);
    for (std::size_t idx : members) {
      const auto& p = table.profiles[idx];
      window_means.push_back(p.early_window_mean);
      cell.pair_keys.push_back(p.pair_id + "/" + p.stressed_id);
      if (p.per_layer_delta.size() != layers) {
        throw ValidationError("cell " + language + "/" + std::string(to_string(construction)) +
                              " mixes layer counts");
      }
      const auto& sm = cache.at(p.stressed_id);
      for (std::size_t l = 0; l < layers; ++l) {
        per_layer[l].add(p.per_layer_delta[l]);
        stressed_fiedler[l].add(sm[l].fiedler);
      }
    }
    cell.mean = mean(window_means);
    const double n = static_cast<double>(members.size());
    for (auto& acc : per_layer) cell.mean_delta_per_layer.push_back(acc.value() / n);

    ResamplingConfig cell_cfg = config.resampling;
    cell_cfg.seed = derive_seed(config.resampling.seed, language + "/" + std::string(to_string(construction)));
    if (members.size() >= 2) {
      cell.ci = bootstrap_ci(window_means, cell_cfg);
    } else {
      warn("cell " + language + "/" + std::string(to_string(construction)) + " has a single pair; CI unavailable");
    }
    const TestResult perm = paired_permutation_p(window_means, cell_cfg);
    cell.p_value = perm.p_value;
    cell.exhaustive = perm.exhaustive;
    table.cells.push_back(std::move(cell));

    SeverityEntry sev;
    sev.language = language;
    sev.construction = construction;
    sev.min_fiedler = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < layers; ++l) {
      const double v = stressed_fiedler[l].value() / n;
      if (v < sev.min_fiedler) {
        sev.min_fiedler = v;
        sev.min_layer = static_cast<int>(l) + 1;
      }
    }
    table.severity.push_back(sev);
  }

  // BH families: per construction across languages, or the whole table.
  std::map<int, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    const int family = config.fdr_scope == FdrScope::global ? 0 : static_cast<int>(table.cells[i].construction);
    families[family].push_back(i);
  }
  for (const auto& [_, members] : families) {
    std::vector<double> ps;
    for (std::size_t i : members) ps.push_back(table.cells[i].p_value);
    const FdrResult fdr = bh_fdr(ps, config.resampling.fdr_q);
    for (std::size_t k = 0; k < members.size(); ++k) {
      table.cells[members[k]].p_adjusted = fdr.adjusted[k];
      table.cells[members[k]].significant = fdr.reject[k];
    }
  }

  std::stable_sort(table.severity.begin(), table.severity.end(),
                   [](const SeverityEntry& a, const SeverityEntry& b) { return a.min_fiedler < b.min_fiedler; });
  return table;
}

}  // namespace spectral_scope
