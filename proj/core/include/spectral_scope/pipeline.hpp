#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spectral_scope/capture_io.hpp"
#include "spectral_scope/forensics.hpp"
#include "spectral_scope/graph_spectra.hpp"
#include "spectral_scope/intervention.hpp"
#include "spectral_scope/stats.hpp"
#include "spectral_scope/stress.hpp"

namespace spectral_scope {

inline constexpr std::string_view kToolName = "spectral-scope";
inline constexpr std::string_view kToolVersion = "0.1.0";

enum class Command { analyze, stress, classify, ablate, steer_vector, report };
enum class OutputFormat { dat, json, csv };

std::string_view to_string(Command c) noexcept;
std::optional<Command> parse_command(std::string_view text) noexcept;
std::optional<OutputFormat> parse_output_format(std::string_view text) noexcept;

/// Direct classifier inputs; when set they take precedence over values
/// derived from the bundle.
struct ClassifyOptions {
  std::optional<double> smoothness;
  std::optional<StrategySignature> signature;
  std::optional<std::pair<double, double>> entropy_point;  // (lambda2, entropy)
  std::string probe_language = "en";
  Construction probe_construction = Construction::active;
  Construction stress_construction = Construction::passive;
  int smoothness_layer = 2;
};

struct AblateOptions {
  int layer = 2;
  std::vector<int> k_values{0, 1, 2, 3, 5, 10};
  int n_random_repeats = 20;
  HeadGradientConfig gradient;
  std::optional<std::string> language;  // restrict samples
  std::optional<Role> role;
};

struct SteerOptions {
  int layer = 2;
  std::vector<std::string> pair_ids;  // empty: every pair with hidden states
  bool exclude_first_token = false;
};

struct RunConfig {
  std::optional<std::filesystem::path> bundle;
  AnalysisConfig analysis;
  LayerWindow window;
  std::vector<Metric> metrics{Metric::fiedler};
  ResamplingConfig resampling;
  FdrScope fdr_scope = FdrScope::per_construction;
  std::filesystem::path output_dir = "out";
  std::set<OutputFormat> formats{OutputFormat::json};
  std::optional<std::filesystem::path> thresholds;
  bool strict_stochastic = false;
  bool with_ablation = false;  // report command only
  ClassifyOptions classify;
  AblateOptions ablate;
  SteerOptions steer;
};

struct RunResult {
  int exit_code = 0;
  std::vector<std::filesystem::path> artifacts;
  std::string error_json;  // empty on success
};

/// Runs one command end to end and writes its artifacts under output_dir.
/// Library errors are caught and turned into an exit code plus a JSON error
/// document (also written to output_dir/error.json when possible).
RunResult run_pipeline(const RunConfig& config, Command command);

}  // namespace spectral_scope
