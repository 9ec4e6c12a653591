#include "spectral_scope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spectral_scope/dat_format.hpp"
#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"
#include "spectral_scope/numeric.hpp"
#include "spectral_scope/rng.hpp"

namespace spectral_scope {

std::string_view to_string(Command c) noexcept {
  switch (c) {
    case Command::analyze:
      return "analyze";
    case Command::stress:
      return "stress";
    case Command::classify:
      return "classify";
    case Command::ablate:
      return "ablate";
    case Command::steer_vector:
      return "steer-vector";
    case Command::report:
      return "report";
  }
  return "unknown";
}

std::optional<Command> parse_command(std::string_view text) noexcept {
  for (Command c : {Command::analyze, Command::stress, Command::classify, Command::ablate, Command::steer_vector,
                    Command::report}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

std::optional<OutputFormat> parse_output_format(std::string_view text) noexcept {
  if (text == "dat") return OutputFormat::dat;
  if (text == "json") return OutputFormat::json;
  if (text == "csv") return OutputFormat::csv;
  return std::nullopt;
}

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

class Run {
 public:
  explicit Run(const RunConfig& config) : cfg_(config) {
    validate(cfg_.resampling);
    thresholds_ = cfg_.thresholds ? load_threshold_config(*cfg_.thresholds) : ThresholdConfig{};
    std::error_code ec;
    std::filesystem::create_directories(cfg_.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg_.output_dir.string() + ": " + ec.message());
  }

  const std::vector<std::filesystem::path>& artifacts() const noexcept { return artifacts_; }

  void execute(Command command) {
    switch (command) {
      case Command::analyze:
        write_json("analyze.json", document(command, {{"analyze", analyze()}}));
        break;
      case Command::stress:
        write_json("stress.json", document(command, {{"stress", stress()}}));
        break;
      case Command::classify:
        write_json("classify.json", document(command, {{"classify", classify()}}));
        break;
      case Command::ablate:
        write_json("ablate.json", document(command, {{"ablate", ablate()}}));
        break;
      case Command::steer_vector:
        write_json("steer.json", document(command, {{"steer_vector", steer()}}));
        break;
      case Command::report: {
        json body{{"analyze", analyze()}, {"stress", stress()}, {"classify", classify()}};
        if (cfg_.with_ablation) body["ablate"] = ablate();
        write_json("report.json", document(command, std::move(body)));
        break;
      }
    }
  }

 private:
  const RunConfig& cfg_;
  ThresholdConfig thresholds_;
  std::optional<CaptureBundle> bundle_;
  std::map<std::string, std::vector<LayerMetrics>> metrics_;
  std::map<Metric, StressTable> tables_;
  std::vector<std::filesystem::path> artifacts_;

  bool wants(OutputFormat f) const { return cfg_.formats.count(f) != 0; }

  const CaptureBundle& bundle() {
    if (!bundle_) {
      if (!cfg_.bundle) throw ValidationError("this command needs --bundle");
      LoadOptions options;
      options.stochastic_tolerance = cfg_.strict_stochastic ? kStrictStochasticTolerance : kDefaultStochasticTolerance;
      bundle_ = load_bundle(*cfg_.bundle, options);
    }
    return *bundle_;
  }

  const std::vector<LayerMetrics>& metrics_of(const CaptureSample& s) {
    auto it = metrics_.find(s.record.id);
    if (it == metrics_.end()) it = metrics_.emplace(s.record.id, per_layer_metrics(s, cfg_.analysis)).first;
    return it->second;
  }

  const StressTable& table_for(Metric metric) {
    auto it = tables_.find(metric);
    if (it == tables_.end()) {
      StressConfig sc;
      sc.analysis = cfg_.analysis;
      sc.window = cfg_.window;
      sc.resampling = cfg_.resampling;
      sc.fdr_scope = cfg_.fdr_scope;
      it = tables_.emplace(metric, stress_table(bundle(), metric, sc)).first;
    }
    return it->second;
  }

  std::string tag() { return model_tag(bundle().manifest().model_id); }

  void write_text(const std::string& name, const std::string& text) {
    const auto path = cfg_.output_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed on " + path.string());
    artifacts_.push_back(path);
  }

  void write_json(const std::string& name, const json& doc) {
    if (wants(OutputFormat::json)) write_text(name, doc.dump(2) + "\n");
  }

  void write_dat(const std::string& name, std::span<const double> values, const std::vector<std::string>& header) {
    const auto path = cfg_.output_dir / name;
    emit_dat(values, path, header);
    artifacts_.push_back(path);
  }

  json config_echo() const {
    json metrics = json::array();
    for (Metric m : cfg_.metrics) metrics.push_back(std::string(to_string(m)));
    json formats = json::array();
    for (OutputFormat f : cfg_.formats) {
      formats.push_back(f == OutputFormat::dat ? "dat" : f == OutputFormat::json ? "json" : "csv");
    }
    return {
        {"bundle", cfg_.bundle ? json(cfg_.bundle->generic_string()) : json(nullptr)},
        {"aggregation", std::string(to_string(cfg_.analysis.aggregation))},
        {"laplacian", std::string(to_string(cfg_.analysis.laplacian))},
        {"hidden_alignment", std::string(to_string(cfg_.analysis.hidden_alignment))},
        {"window", {cfg_.window.first, cfg_.window.last}},
        {"metrics", metrics},
        {"formats", formats},
        {"strict_stochastic", cfg_.strict_stochastic},
        {"fdr_scope", cfg_.fdr_scope == FdrScope::global ? "global" : "per_construction"},
        {"resampling",
         {{"n_bootstrap", cfg_.resampling.n_bootstrap},
          {"n_permutations", cfg_.resampling.n_permutations},
          {"ci_level", cfg_.resampling.ci_level},
          {"fdr_q", cfg_.resampling.fdr_q},
          {"trim_fraction", cfg_.resampling.trim_fraction},
          {"seed", cfg_.resampling.seed},
          {"rng", "splitmix64-counter"},
          {"bootstrap", "percentile"},
          {"permutation_statistic", "mean"}}},
    };
  }

  json document(Command command, json body) const {
    json doc = std::move(body);
    doc["tool"] = std::string(kToolName);
    doc["tool_version"] = std::string(kToolVersion);
    doc["command"] = std::string(to_string(command));
    doc["threshold_config_version"] = thresholds_.version;
    doc["config"] = config_echo();
    return doc;
  }

  static json layer_json(const LayerMetrics& m) {
    return {
        {"layer", m.layer},
        {"fiedler", m.fiedler},
        {"spectral_entropy", m.spectral_entropy},
        {"hfer_spectral", m.hfer_spectral},
        {"hfer_signal", optional_number(m.hfer_signal)},
        {"smoothness", optional_number(m.smoothness)},
        {"baseline_frobenius", m.baseline_frobenius},
        {"baseline_max_attention", m.baseline_max_attention},
        {"baseline_row_entropy", m.baseline_row_entropy},
        {"spectral_gap", finite_or_null(m.spectral_gap)},
        {"fiedler_simple", m.fiedler_simple},
    };
  }

  json analyze() {
    const auto& b = bundle();
    json samples = json::array();
    std::ostringstream csv;
    csv << "sample_id,layer,fiedler,spectral_entropy,hfer_spectral,hfer_signal,smoothness,baseline_frobenius,"
           "baseline_max_attention,baseline_row_entropy,spectral_gap,fiedler_simple\n";
    for (const auto& s : b.samples()) {
      const auto& ms = metrics_of(s);
      json layers = json::array();
      for (const auto& m : ms) {
        layers.push_back(layer_json(m));
        csv << s.record.id << ',' << m.layer << ',' << csv_number(m.fiedler) << ',' << csv_number(m.spectral_entropy)
            << ',' << csv_number(m.hfer_spectral) << ',' << csv_number(m.hfer_signal) << ','
            << csv_number(m.smoothness) << ',' << csv_number(m.baseline_frobenius) << ','
            << csv_number(m.baseline_max_attention) << ',' << csv_number(m.baseline_row_entropy) << ','
            << csv_number(m.spectral_gap) << ',' << (m.fiedler_simple ? "true" : "false") << '\n';
      }
      samples.push_back({
          {"id", s.record.id},
          {"language", s.record.language},
          {"construction", std::string(to_string(s.record.construction))},
          {"role", std::string(to_string(s.record.role))},
          {"pair_id", s.record.pair_id},
          {"token_count", s.record.token_count},
          {"has_hidden", s.hidden.has_value()},
          {"layers", layers},
      });
      if (wants(OutputFormat::dat)) {
        for (Metric metric : cfg_.metrics) {
          std::vector<double> series;
          for (const auto& m : ms) series.push_back(metric_value(m, metric));
          write_dat(tag() + "_" + s.record.id + "_" + std::string(dat_metric_name(metric)) + ".dat", series,
                    {"model " + b.manifest().model_id, "sample " + s.record.id,
                     "metric " + std::string(to_string(metric)), "layer value"});
        }
      }
    }
    if (wants(OutputFormat::csv)) write_text("analyze.csv", csv.str());
    return {{"model_id", b.manifest().model_id},
            {"num_layers", b.manifest().num_layers},
            {"num_heads", b.manifest().num_heads},
            {"load_warnings", b.warnings()},
            {"samples", samples}};
  }

  json stress() {
    const auto& b = bundle();
    const Pairing pairing = pair_samples(b);
    json orphans = json::array();
    for (const auto& o : pairing.orphans) orphans.push_back(o.get().record.id);

    json tables = json::array();
    std::ostringstream csv;
    csv << "metric,language,construction,n_pairs,window_mean,ci_lo,ci_hi,p_value,p_adjusted,significant,exhaustive\n";
    for (Metric metric : cfg_.metrics) {
      const StressTable& t = table_for(metric);
      json cells = json::array();
      for (const auto& c : t.cells) {
        cells.push_back({
            {"language", c.language},
            {"construction", std::string(to_string(c.construction))},
            {"n_pairs", c.n_pairs},
            {"window_mean", c.mean},
            {"ci", c.ci ? json{c.ci->lo, c.ci->hi} : json(nullptr)},
            {"p_value", c.p_value},
            {"p_adjusted", c.p_adjusted},
            {"significant", c.significant},
            {"exhaustive", c.exhaustive},
            {"mean_delta_per_layer", c.mean_delta_per_layer},
            {"pairs", c.pair_keys},
        });
        csv << to_string(metric) << ',' << c.language << ',' << to_string(c.construction) << ',' << c.n_pairs << ','
            << csv_number(c.mean) << ',' << (c.ci ? csv_number(c.ci->lo) : "") << ','
            << (c.ci ? csv_number(c.ci->hi) : "") << ',' << csv_number(c.p_value) << ',' << csv_number(c.p_adjusted)
            << ',' << (c.significant ? "true" : "false") << ',' << (c.exhaustive ? "true" : "false") << '\n';
        if (wants(OutputFormat::dat)) {
          const std::string lang = c.construction == Construction::passive
                                       ? c.language
                                       : c.language + "_" + std::string(to_string(c.construction));
          write_dat(diff_dat_filename(tag(), lang, metric), c.mean_delta_per_layer,
                    {"model " + b.manifest().model_id, "language " + c.language,
                     "construction " + std::string(to_string(c.construction)),
                     "metric " + std::string(to_string(metric)) + " delta (stressed - canonical), mean of " +
                         std::to_string(c.n_pairs) + " pairs",
                     "layer value"});
        }
      }
      json severity = json::array();
      for (const auto& s : t.severity) {
        severity.push_back({{"language", s.language},
                            {"construction", std::string(to_string(s.construction))},
                            {"min_stressed_fiedler", s.min_fiedler},
                            {"layer", s.min_layer}});
      }
      json profiles = json::array();
      for (const auto& p : t.profiles) {
        profiles.push_back({{"pair_id", p.pair_id},
                            {"canonical_id", p.canonical_id},
                            {"stressed_id", p.stressed_id},
                            {"per_layer_delta", p.per_layer_delta},
                            {"early_window_mean", p.early_window_mean},
                            {"min_delta", p.min_delta},
                            {"min_delta_layer", p.min_delta_layer}});
      }
      tables.push_back({{"metric", std::string(to_string(metric))},
                        {"window", {t.window.first, t.window.last}},
                        {"cells", cells},
                        {"severity", severity},
                        {"profiles", profiles}});
    }
    if (wants(OutputFormat::csv)) write_text("stress.csv", csv.str());
    return {{"model_id", b.manifest().model_id},
            {"n_pairs", pairing.pairs.size()},
            {"orphans", orphans},
            {"tables", tables}};
  }

  double window_mean_of(const std::vector<LayerMetrics>& ms, Metric metric) {
    std::vector<double> series;
    for (const auto& m : ms) series.push_back(metric_value(m, metric));
    return early_window_mean(series, cfg_.window);
  }

  json classify() {
    const ClassifyOptions& opt = cfg_.classify;
    json out;
    json assumptions = json::array();
    out["thresholds"] = json::parse(serialize_threshold_config(thresholds_));

    std::vector<const CaptureSample*> probes;
    if (cfg_.bundle) {
      for (const auto& s : bundle().samples()) {
        if (s.record.role == Role::canonical && s.record.language == opt.probe_language &&
            s.record.construction == opt.probe_construction) {
          probes.push_back(&s);
        }
      }
    }
    const std::string probe_desc = "canonical " + opt.probe_language + " " +
                                   std::string(to_string(opt.probe_construction)) + " samples";

    // Smoothness regime.
    std::optional<double> smoothness = opt.smoothness;
    std::string smoothness_source = "direct input";
    if (!smoothness && !probes.empty()) {
      std::vector<double> values;
      for (const auto* s : probes) {
        const auto& ms = metrics_of(*s);
        if (opt.smoothness_layer < 1 || opt.smoothness_layer > static_cast<int>(ms.size())) {
          throw ValidationError("smoothness layer " + std::to_string(opt.smoothness_layer) + " outside the model");
        }
        const auto& m = ms[static_cast<std::size_t>(opt.smoothness_layer - 1)];
        if (m.smoothness) values.push_back(*m.smoothness);
      }
      if (!values.empty()) {
        smoothness = mean(values);
        smoothness_source = "mean layer-" + std::to_string(opt.smoothness_layer) + " smoothness over " +
                            std::to_string(values.size()) + " " + probe_desc;
        assumptions.push_back("the regime rule's smoothness S is taken from " + probe_desc + " at layer " +
                              std::to_string(opt.smoothness_layer));
      }
    }
    if (smoothness) {
      const SmoothnessRegime regime = classify_smoothness(*smoothness, thresholds_.regime);
      std::ostringstream rule;
      rule.precision(6);
      switch (regime) {
        case SmoothnessRegime::rough:
          rule << "S=" << *smoothness << " < " << thresholds_.regime.rough_upper;
          break;
        case SmoothnessRegime::medium:
          rule << thresholds_.regime.rough_upper << " <= S=" << *smoothness << " < " << thresholds_.regime.smooth_lower;
          break;
        case SmoothnessRegime::smooth:
          rule << "S=" << *smoothness << " >= " << thresholds_.regime.smooth_lower;
          break;
      }
      out["regime"] = {{"label", std::string(to_string(regime))},
                       {"smoothness", *smoothness},
                       {"source", smoothness_source},
                       {"rule", rule.str()},
                       {"frozen", thresholds_.regime.frozen}};
    } else {
      out["regime"] = nullptr;
    }

    // Strategy signature.
    std::optional<StrategySignature> signature = opt.signature;
    std::string signature_source = "direct input";
    if (!signature && !probes.empty()) {
      std::vector<double> baseline;
      for (const auto* s : probes) baseline.push_back(window_mean_of(metrics_of(*s), Metric::fiedler));
      std::vector<double> d_fiedler, d_hfer, d_entropy;
      bool signal_hfer = true;
      const Pairing pairing = pair_samples(bundle());
      std::vector<const PairedSample*> stress_pairs;
      for (const auto& p : pairing.pairs) {
        const auto& c = p.canonical.get();
        if (std::find(probes.begin(), probes.end(), &c) != probes.end() &&
            p.stressed.get().record.construction == opt.stress_construction) {
          stress_pairs.push_back(&p);
          signal_hfer = signal_hfer && c.hidden && p.stressed.get().hidden;
        }
      }
      const Metric hfer_metric = signal_hfer ? Metric::hfer_signal : Metric::hfer_spectral;
      for (const auto* p : stress_pairs) {
        const auto& cm = metrics_of(p->canonical.get());
        const auto& sm = metrics_of(p->stressed.get());
        d_fiedler.push_back(window_mean_of(sm, Metric::fiedler) - window_mean_of(cm, Metric::fiedler));
        d_hfer.push_back(window_mean_of(sm, hfer_metric) - window_mean_of(cm, hfer_metric));
        d_entropy.push_back(window_mean_of(sm, Metric::spectral_entropy) -
                            window_mean_of(cm, Metric::spectral_entropy));
      }
      if (!stress_pairs.empty()) {
        signature = StrategySignature{mean(baseline), mean(d_fiedler), mean(d_hfer), mean(d_entropy)};
        signature_source = "early-window means over " + std::to_string(stress_pairs.size()) + " " +
                           opt.probe_language + " " + std::string(to_string(opt.probe_construction)) + "/" +
                           std::string(to_string(opt.stress_construction)) + " pairs; HFER variant " +
                           std::string(to_string(hfer_metric));
      }
    }
    if (signature) {
      const auto& t = thresholds_.strategy;
      const Strategy strategy = classify_strategy(*signature, t);
      json rules = json::array();
      rules.push_back({{"rule", "Specialized if delta_lambda2 <= " + std::to_string(t.specialized_max_delta_lambda2)},
                       {"holds", signature->delta_lambda2 <= t.specialized_max_delta_lambda2}});
      rules.push_back({{"rule", "Fragmented if lambda2_en_baseline < " + std::to_string(t.fragmented_max_baseline) +
                                    " and delta_hfer < " + std::to_string(t.fragmented_max_delta_hfer)},
                       {"holds", signature->lambda2_en_baseline < t.fragmented_max_baseline &&
                                     signature->delta_hfer < t.fragmented_max_delta_hfer}});
      rules.push_back({{"rule", "Confident if delta_entropy <= " + std::to_string(t.confident_max_delta_entropy)},
                       {"holds", signature->delta_entropy <= t.confident_max_delta_entropy}});
      rules.push_back({{"rule", "Uniform otherwise"}, {"holds", true}});
      out["strategy"] = {{"label", std::string(to_string(strategy))},
                         {"signature",
                          {{"lambda2_en_baseline", signature->lambda2_en_baseline},
                           {"delta_lambda2", signature->delta_lambda2},
                           {"delta_hfer", signature->delta_hfer},
                           {"delta_entropy", signature->delta_entropy}}},
                         {"source", signature_source},
                         {"decision_list", rules}};
    } else {
      out["strategy"] = nullptr;
    }

    // Entropy discriminator, per language or for a direct point.
    json entropy = json::array();
    if (opt.entropy_point) {
      const auto d = entropy_discriminator(opt.entropy_point->first, opt.entropy_point->second, thresholds_.entropy);
      entropy.push_back({{"language", nullptr},
                         {"label", std::string(to_string(d.label))},
                         {"lambda2", d.lambda2},
                         {"entropy", d.entropy},
                         {"source", "direct input"}});
    } else if (cfg_.bundle) {
      std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_language;
      for (const auto& s : bundle().samples()) {
        if (s.record.role != Role::canonical || s.record.construction != opt.probe_construction) continue;
        auto& [l2, h] = per_language[s.record.language];
        const auto& ms = metrics_of(s);
        l2.push_back(window_mean_of(ms, Metric::fiedler));
        h.push_back(window_mean_of(ms, Metric::spectral_entropy));
      }
      for (const auto& [language, values] : per_language) {
        const auto d = entropy_discriminator(mean(values.first), mean(values.second), thresholds_.entropy);
        entropy.push_back({{"language", language},
                           {"label", std::string(to_string(d.label))},
                           {"lambda2", d.lambda2},
                           {"entropy", d.entropy},
                           {"source", "early-window means over " + std::to_string(values.first.size()) +
                                          " canonical samples"}});
      }
    }
    out["entropy"] = entropy;
    out["assumptions"] = assumptions;

    if (out["regime"].is_null() && out["strategy"].is_null() && entropy.empty()) {
      throw ValidationError(
          "classify: nothing to classify (give --bundle with probe samples, or --smoothness/--signature/--entropy-point)");
    }
    return out;
  }

  json ablate() {
    const auto& b = bundle();
    const AblateOptions& opt = cfg_.ablate;
    const int L = static_cast<int>(b.manifest().num_layers);
    if (opt.layer < 1 || opt.layer > L) {
      throw ValidationError("ablation layer " + std::to_string(opt.layer) + " outside 1.." + std::to_string(L));
    }
    const std::size_t H = b.manifest().num_heads;

    std::vector<const CaptureSample*> chosen;
    std::vector<std::vector<Eigen::MatrixXd>> heads;
    for (const auto& s : b.samples()) {
      if (opt.language && s.record.language != *opt.language) continue;
      if (opt.role && s.record.role != *opt.role) continue;
      chosen.push_back(&s);
      heads.push_back(s.attention.layer_heads(static_cast<std::size_t>(opt.layer - 1)));
    }
    if (chosen.empty()) throw ValidationError("ablate: no samples match the filters");

    std::vector<int> ks;
    const AblateOptions defaults;
    for (int k : opt.k_values) {
      if (opt.k_values == defaults.k_values && static_cast<std::size_t>(k) >= H) {
        warn("ablate: dropping default k = " + std::to_string(k) + " for a " + std::to_string(H) + "-head layer");
        continue;
      }
      ks.push_back(k);
    }

    AblationConfig acfg;
    acfg.aggregation = cfg_.analysis.aggregation;
    acfg.laplacian = LaplacianVariant::combinatorial;
    acfg.gradient = opt.gradient;
    acfg.gradient.aggregation = cfg_.analysis.aggregation;
    acfg.n_random_repeats = opt.n_random_repeats;

    const HeadImportance importance = head_importance(heads, opt.layer, acfg.gradient);
    const auto ranking = importance.ranking();

    std::vector<CompensatedSum> targeted(ks.size());
    std::vector<CompensatedSum> random(ks.size());
    json per_sample = json::array();
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      acfg.seed = derive_seed(cfg_.resampling.seed, chosen[i]->record.id);
      const auto t = ablation_curve(heads[i], AblationMode::targeted, ks, ranking, acfg);
      const auto r = ablation_curve(heads[i], AblationMode::random, ks, ranking, acfg);
      for (std::size_t k = 0; k < ks.size(); ++k) {
        targeted[k].add(t.lambda2_at_k[k]);
        random[k].add(r.lambda2_at_k[k]);
      }
      per_sample.push_back({{"sample_id", chosen[i]->record.id},
                            {"targeted", t.lambda2_at_k},
                            {"random", r.lambda2_at_k},
                            {"random_standard_error", r.standard_error},
                            {"targeted_monotone", t.monotone_nonincreasing},
                            {"random_monotone", r.monotone_nonincreasing}});
    }
    const double n = static_cast<double>(chosen.size());
    std::vector<double> mean_targeted, mean_random;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      mean_targeted.push_back(targeted[k].value() / n);
      mean_random.push_back(random[k].value() / n);
    }

    json scores = json::array();
    std::ostringstream csv;
    csv << "layer,head,importance,rank\n";
    for (std::size_t rank = 0; rank < ranking.size(); ++rank) {
      const auto& s = importance.scores[ranking[rank]];
      scores.push_back({{"layer", s.layer}, {"head", s.head}, {"importance", s.importance}, {"rank", rank + 1}});
      csv << s.layer << ',' << s.head << ',' << csv_number(s.importance) << ',' << rank + 1 << '\n';
    }
    if (wants(OutputFormat::csv)) {
      write_text("head_scores.csv", csv.str());
      std::ostringstream curves;
      curves << "k,targeted,random\n";
      for (std::size_t k = 0; k < ks.size(); ++k) {
        curves << ks[k] << ',' << csv_number(mean_targeted[k]) << ',' << csv_number(mean_random[k]) << '\n';
      }
      write_text("ablation_curves.csv", curves.str());
    }

    json collapse = nullptr;
    if (!ks.empty() && ks.front() == 0) {
      const double drop_t = mean_targeted.front() - mean_targeted.back();
      const double drop_r = mean_random.front() - mean_random.back();
      collapse = drop_r > 0.0 ? json(drop_t / drop_r) : json(nullptr);
    }
    const char* target = opt.gradient.target == HeadGradientTarget::logits ? "logits" : "attention";
    return {{"layer", opt.layer},
            {"gradient_target", target},
            {"alpha_coupling", opt.gradient.coupling == AlphaCoupling::full ? "full" : "constant"},
            {"gradient_norm", opt.gradient.norm == GradientNorm::frobenius ? "frobenius" : "spectral"},
            {"samples_used", importance.samples_used},
            {"samples_skipped", importance.samples_skipped},
            {"head_scores", scores},
            {"k_values", ks},
            {"targeted", mean_targeted},
            {"random", mean_random},
            {"n_random_repeats", opt.n_random_repeats},
            {"collapse_ratio_at_max_k", collapse},
            {"per_sample", per_sample}};
  }

  json steer() {
    const auto& b = bundle();
    std::vector<std::string> ids = cfg_.steer.pair_ids;
    if (ids.empty()) {
      for (const auto& p : pair_samples(b).pairs) {
        if (p.canonical.get().hidden && p.stressed.get().hidden) ids.push_back(p.pair_id());
      }
    }
    SteeringOptions so;
    so.exclude_first_token = cfg_.steer.exclude_first_token;
    const SteeringVector v = steering_vector(b, cfg_.steer.layer, ids, so);
    const auto path = cfg_.output_dir / "steering_vector.spsv";
    write_steering_vector(v, path);
    artifacts_.push_back(path);
    std::vector<double> values(v.values.data(), v.values.data() + v.values.size());
    return {{"layer", v.layer},
            {"d", v.values.size()},
            {"calibration_size", v.calibration_size},
            {"alpha_grid", v.alpha_grid},
            {"exclude_first_token", so.exclude_first_token},
            {"file", path.filename().string()},
            {"values", values}};
  }
};

}  // namespace

RunResult run_pipeline(const RunConfig& config, Command command) {
  RunResult result;
  int code = 0;
  std::string kind;
  std::string message;
  try {
    Run run(config);
    try {
      run.execute(command);
      result.artifacts = run.artifacts();
      return result;
    } catch (...) {
      result.artifacts = run.artifacts();
      throw;
    }
  } catch (const Error& e) {
    code = e.exit_code();
    kind = to_string(e.kind());
    message = e.what();
  } catch (const std::exception& e) {
    code = 1;
    kind = "internal";
    message = e.what();
  }
  result.exit_code = code;
  const json err{{"error",
                  {{"kind", kind}, {"exit_code", code}, {"message", message}, {"command", std::string(to_string(command))}}}};
  result.error_json = err.dump();
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (!ec) {
    std::ofstream out(config.output_dir / "error.json", std::ios::binary | std::ios::trunc);
    if (out) out << err.dump(2) << "\n";
  }
  return result;
}

}  // namespace spectral_scope
