#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spectral_scope/error.hpp"
#include "spectral_scope/pipeline.hpp"

namespace ss = spectral_scope;

namespace {

struct RawOptions {
  std::string bundle;
  std::string agg = "mass";
  std::string laplacian = "comb";
  std::string hidden_alignment = "block_output";
  std::string window = "2:5";
  std::vector<std::string> metrics{"fiedler"};
  std::string seed;
  std::string out = "out";
  std::vector<std::string> formats{"json"};
  std::string thresholds;
  bool strict_stochastic = false;
  std::string fdr = "per_construction";
  int n_bootstrap = 2000;
  int n_permutations = 10000;
  double ci_level = 0.95;
  double fdr_q = 0.05;
  double trim = 0.1;
  bool with_ablation = false;

  // classify
  double smoothness = -1.0;
  std::vector<double> signature;
  std::vector<double> entropy_point;
  std::string probe_language = "en";
  int smoothness_layer = 2;

  // ablate / steer
  int layer = 2;
  std::vector<int> k_values;
  int repeats = 20;
  std::string gradient_target = "logits";
  std::string coupling = "constant";
  std::string norm = "frobenius";
  std::string language;
  std::string role;
  std::vector<std::string> pairs;
  bool exclude_first_token = false;
};

void add_common(CLI::App* app, RawOptions& o) {
  app->add_option("--bundle", o.bundle, "Capture bundle directory");
  app->add_option("--agg", o.agg, "Head aggregation: mass | uniform")->capture_default_str();
  app->add_option("--laplacian", o.laplacian, "Laplacian: comb | rw | sym")->capture_default_str();
  app->add_option("--hidden-alignment", o.hidden_alignment, "block_output | block_input")->capture_default_str();
  app->add_option("--window", o.window, "Early layer window A:B (1-based, inclusive)")->capture_default_str();
  app->add_option("--metric", o.metrics, "fiedler | hfer_signal | hfer_spectral | smoothness | spectral_entropy")
      ->capture_default_str();
  app->add_option("--seed", o.seed, "RNG seed (falls back to SPECTRAL_SCOPE_SEED, then 0)");
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  app->add_option("--format", o.formats, "dat | json | csv (repeatable)")->capture_default_str();
  app->add_option("--thresholds", o.thresholds, "Threshold config JSON");
  app->add_flag("--strict-stochastic", o.strict_stochastic, "Row-sum tolerance 1e-6 instead of 1e-3");
  app->add_option("--fdr", o.fdr, "per_construction | global")->capture_default_str();
  app->add_option("--n-bootstrap", o.n_bootstrap)->capture_default_str();
  app->add_option("--n-permutations", o.n_permutations)->capture_default_str();
  app->add_option("--ci-level", o.ci_level)->capture_default_str();
  app->add_option("--fdr-q", o.fdr_q)->capture_default_str();
  app->add_option("--trim", o.trim, "Trim fraction for the robust effect size")->capture_default_str();
}

void add_classify(CLI::App* app, RawOptions& o) {
  app->add_option("--smoothness", o.smoothness, "Direct smoothness value");
  app->add_option("--signature", o.signature, "lambda2_en_baseline dlambda2 dhfer dentropy")->expected(4);
  app->add_option("--entropy-point", o.entropy_point, "lambda2 entropy")->expected(2);
  app->add_option("--probe-language", o.probe_language)->capture_default_str();
  app->add_option("--smoothness-layer", o.smoothness_layer)->capture_default_str();
}

void add_ablate(CLI::App* app, RawOptions& o) {
  app->add_option("--layer", o.layer, "1-based layer")->capture_default_str();
  app->add_option("--k", o.k_values, "Ablation sizes (default 0 1 2 3 5 10)");
  app->add_option("--repeats", o.repeats, "Random ablation repeats")->capture_default_str();
  app->add_option("--gradient-target", o.gradient_target, "logits | attention")->capture_default_str();
  app->add_option("--coupling", o.coupling, "constant | full")->capture_default_str();
  app->add_option("--norm", o.norm, "frobenius | spectral")->capture_default_str();
  app->add_option("--language", o.language, "Restrict to one language");
  app->add_option("--role", o.role, "Restrict to canonical | stressed");
}

template <typename T, typename F>
T parse_or_throw(const std::string& text, F parse, const char* what) {
  auto v = parse(text);
  if (!v) throw ss::ValidationError(std::string("unknown ") + what + " '" + text + "'");
  return *v;
}

std::uint64_t parse_seed(const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ss::ValidationError("seed must be a non-negative integer: '" + text + "'");
  return v;
}

ss::RunConfig build_config(const RawOptions& o) {
  ss::RunConfig c;
  if (!o.bundle.empty()) c.bundle = o.bundle;
  c.analysis.aggregation = parse_or_throw<ss::Aggregation>(o.agg, ss::parse_aggregation, "aggregation");
  c.analysis.laplacian = parse_or_throw<ss::LaplacianVariant>(o.laplacian, ss::parse_laplacian, "laplacian");
  if (o.hidden_alignment == "block_output") {
    c.analysis.hidden_alignment = ss::HiddenAlignment::block_output;
  } else if (o.hidden_alignment == "block_input") {
    c.analysis.hidden_alignment = ss::HiddenAlignment::block_input;
  } else {
    throw ss::ValidationError("unknown hidden alignment '" + o.hidden_alignment + "'");
  }
  c.window = ss::parse_window(o.window);
  c.metrics.clear();
  for (const auto& m : o.metrics) c.metrics.push_back(parse_or_throw<ss::Metric>(m, ss::parse_metric, "metric"));

  if (!o.seed.empty()) {
    c.resampling.seed = parse_seed(o.seed);
  } else if (const char* env = std::getenv("SPECTRAL_SCOPE_SEED"); env && *env) {
    c.resampling.seed = parse_seed(env);
  }
  c.resampling.n_bootstrap = o.n_bootstrap;
  c.resampling.n_permutations = o.n_permutations;
  c.resampling.ci_level = o.ci_level;
  c.resampling.fdr_q = o.fdr_q;
  c.resampling.trim_fraction = o.trim;
  if (o.fdr == "per_construction") {
    c.fdr_scope = ss::FdrScope::per_construction;
  } else if (o.fdr == "global") {
    c.fdr_scope = ss::FdrScope::global;
  } else {
    throw ss::ValidationError("unknown FDR scope '" + o.fdr + "'");
  }

  c.output_dir = o.out;
  c.formats.clear();
  for (const auto& f : o.formats) c.formats.insert(parse_or_throw<ss::OutputFormat>(f, ss::parse_output_format, "format"));
  if (!o.thresholds.empty()) c.thresholds = o.thresholds;
  c.strict_stochastic = o.strict_stochastic;
  c.with_ablation = o.with_ablation;

  if (o.smoothness >= 0.0) c.classify.smoothness = o.smoothness;
  if (o.signature.size() == 4) {
    c.classify.signature = ss::StrategySignature{o.signature[0], o.signature[1], o.signature[2], o.signature[3]};
  }
  if (o.entropy_point.size() == 2) c.classify.entropy_point = std::make_pair(o.entropy_point[0], o.entropy_point[1]);
  c.classify.probe_language = o.probe_language;
  c.classify.smoothness_layer = o.smoothness_layer;

  c.ablate.layer = o.layer;
  if (!o.k_values.empty()) c.ablate.k_values = o.k_values;
  c.ablate.n_random_repeats = o.repeats;
  if (o.gradient_target == "logits") {
    c.ablate.gradient.target = ss::HeadGradientTarget::logits;
  } else if (o.gradient_target == "attention") {
    c.ablate.gradient.target = ss::HeadGradientTarget::attention;
  } else {
    throw ss::ValidationError("unknown gradient target '" + o.gradient_target + "'");
  }
  if (o.coupling == "constant") {
    c.ablate.gradient.coupling = ss::AlphaCoupling::constant;
  } else if (o.coupling == "full") {
    c.ablate.gradient.coupling = ss::AlphaCoupling::full;
  } else {
    throw ss::ValidationError("unknown alpha coupling '" + o.coupling + "'");
  }
  if (o.norm == "frobenius") {
    c.ablate.gradient.norm = ss::GradientNorm::frobenius;
  } else if (o.norm == "spectral") {
    c.ablate.gradient.norm = ss::GradientNorm::spectral;
  } else {
    throw ss::ValidationError("unknown gradient norm '" + o.norm + "'");
  }
  if (!o.language.empty()) c.ablate.language = o.language;
  if (!o.role.empty()) c.ablate.role = parse_or_throw<ss::Role>(o.role, ss::parse_role, "role");

  c.steer.layer = o.layer;
  c.steer.pair_ids = o.pairs;
  c.steer.exclude_first_token = o.exclude_first_token;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral diagnostics for transformer attention captures", std::string(ss::kToolName)};
  app.set_version_flag("--version", std::string(ss::kToolVersion));
  app.require_subcommand(1);

  RawOptions o;
  auto* analyze = app.add_subcommand("analyze", "Per-sample, per-layer spectral metrics");
  auto* stress = app.add_subcommand("stress", "Paired stress deltas with CIs and FDR-adjusted tests");
  auto* classify = app.add_subcommand("classify", "Smoothness regime, strategy and entropy labels");
  auto* ablate = app.add_subcommand("ablate", "Head importance and ablation curves");
  auto* steer = app.add_subcommand("steer-vector", "Mean canonical-minus-stressed hidden-state direction");
  auto* report = app.add_subcommand("report", "Consolidated report");

  for (auto* sub : {analyze, stress, classify, ablate, steer, report}) add_common(sub, o);
  add_classify(classify, o);
  add_classify(report, o);
  add_ablate(ablate, o);
  add_ablate(report, o);
  report->add_flag("--with-ablation", o.with_ablation, "Include the ablation section");
  steer->add_option("--layer", o.layer, "Hidden-state index (0 = embeddings)")->capture_default_str();
  steer->add_option("--pairs", o.pairs, "Calibration pair ids (default: every pair with hidden states)");
  steer->add_flag("--exclude-first-token", o.exclude_first_token);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ss::ErrorKind::validation);
  }

  ss::Command command = ss::Command::analyze;
  for (auto* sub : app.get_subcommands()) command = *ss::parse_command(sub->get_name());

  ss::RunResult result;
  try {
    result = ss::run_pipeline(build_config(o), command);
  } catch (const ss::Error& e) {
    const nlohmann::json err{{"error",
                              {{"kind", ss::to_string(e.kind())},
                               {"exit_code", e.exit_code()},
                               {"message", e.what()},
                               {"command", ss::to_string(command)}}}};
    std::cerr << err.dump() << "\n";
    return e.exit_code();
  }
  if (result.exit_code != 0) {
    std::cerr << result.error_json << "\n";
    return result.exit_code;
  }
  for (const auto& p : result.artifacts) std::cout << p.generic_string() << "\n";
  return 0;
}
