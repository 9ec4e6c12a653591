#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spectral_scope {

enum class SmoothnessRegime { rough, medium, smooth };
enum class Strategy { specialized, fragmented, uniform, confident };
enum class EntropyLabel { structured_integration, panic_mode, modular, native };

std::string_view to_string(SmoothnessRegime r) noexcept;
std::string_view to_string(Strategy s) noexcept;
std::string_view to_string(EntropyLabel e) noexcept;

/// Interval rule on layer-2 smoothness S:
///   Rough  : S < rough_upper
///   Medium : rough_upper <= S < smooth_lower
///   Smooth : S >= smooth_lower
struct RegimeRule {
  double rough_upper = 0.50;
  double smooth_lower = 1.00;
  bool frozen = true;
};

/// Decision list over a strategy signature, evaluated top to bottom.
struct StrategyThresholds {
  double specialized_max_delta_lambda2 = -0.30;  // Specialized iff delta_lambda2 <= this
  double fragmented_max_baseline = 0.30;         // Fragmented iff baseline < this ...
  double fragmented_max_delta_hfer = -0.10;      // ... and delta_hfer < this
  double confident_max_delta_entropy = -0.10;    // Confident iff delta_entropy <= this
};

struct EntropyThresholds {
  double lambda2_high = 0.70;  // lambda2 >= this counts as high connectivity
  double entropy_high = 1.00;  // entropy >= this counts as high entropy
};

/// The versioned, frozen rule set. Serialised as
/// {"rough_upper", "smooth_lower", "strategy": {...}, "entropy": {...}, "version"}.
struct ThresholdConfig {
  RegimeRule regime;
  StrategyThresholds strategy;
  EntropyThresholds entropy;
  std::string version = "frozen-v1";
};

ThresholdConfig parse_threshold_config(std::string_view json_text);
std::string serialize_threshold_config(const ThresholdConfig& config);
ThresholdConfig load_threshold_config(const std::filesystem::path& path);

/// Throws ValidationError for negative or non-finite S, or a rule with
/// rough_upper >= smooth_lower.
SmoothnessRegime classify_smoothness(double smoothness, const RegimeRule& rule = {});

struct StrategySignature {
  double lambda2_en_baseline = 0.0;
  double delta_lambda2 = 0.0;
  double delta_hfer = 0.0;
  double delta_entropy = 0.0;
};

Strategy classify_strategy(const StrategySignature& signature, const StrategyThresholds& thresholds = {});

struct EntropyDiagnosis {
  EntropyLabel label = EntropyLabel::modular;
  double lambda2 = 0.0;
  double entropy = 0.0;
};

/// High lambda2 with low entropy is structured integration, high with high is
/// panic mode, low lambda2 is modular. `native` is never produced by these rules.
EntropyDiagnosis entropy_discriminator(double lambda2, double entropy, const EntropyThresholds& thresholds = {});

struct AuditCase {
  std::string name;
  double smoothness = 0.0;
  SmoothnessRegime expected = SmoothnessRegime::medium;
};

struct AuditFinding {
  std::string name;
  double smoothness = 0.0;
  double rough_upper = 0.0;
  double smooth_lower = 0.0;
  SmoothnessRegime label = SmoothnessRegime::medium;
};

struct ThresholdAudit {
  std::size_t agreements = 0;  // labels matching `expected` under the unperturbed rule
  std::size_t total = 0;
  std::vector<AuditFinding> unstable;  // label changes under any jittered rule
};

/// Re-classifies every case under rough_upper and smooth_lower each shifted by
/// {-jitter, 0, +jitter} and reports every label change.
ThresholdAudit audit_thresholds(std::span<const AuditCase> cases, const RegimeRule& rule, double jitter = 0.05);

}  // namespace spectral_scope
