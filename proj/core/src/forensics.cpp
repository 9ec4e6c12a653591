#include "spectral_scope/forensics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spectral_scope/error.hpp"

namespace spectral_scope {

namespace {

using nlohmann::json;

double number_or(const json& obj, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) throw ValidationError(std::string("threshold config: '") + key + "' must be a number");
  return it->get<double>();
}

void check_rule(const RegimeRule& rule) {
  if (!(rule.rough_upper < rule.smooth_lower)) {
    throw ValidationError("regime rule requires rough_upper < smooth_lower");
  }
}

}  // namespace

std::string_view to_string(SmoothnessRegime r) noexcept {
  switch (r) {
    case SmoothnessRegime::rough:
      return "Rough";
    case SmoothnessRegime::medium:
      return "Medium";
    case SmoothnessRegime::smooth:
      return "Smooth";
  }
  return "unknown";
}

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::specialized:
      return "Specialized";
    case Strategy::fragmented:
      return "Fragmented";
    case Strategy::uniform:
      return "Uniform";
    case Strategy::confident:
      return "Confident";
  }
  return "unknown";
}

std::string_view to_string(EntropyLabel e) noexcept {
  switch (e) {
    case EntropyLabel::structured_integration:
      return "structured_integration";
    case EntropyLabel::panic_mode:
      return "panic_mode";
    case EntropyLabel::modular:
      return "modular";
    case EntropyLabel::native:
      return "native";
  }
  return "unknown";
}

ThresholdConfig parse_threshold_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("threshold config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("threshold config must be a JSON object");

  ThresholdConfig c;
  c.regime.rough_upper = number_or(root, "rough_upper", c.regime.rough_upper);
  c.regime.smooth_lower = number_or(root, "smooth_lower", c.regime.smooth_lower);
  if (auto it = root.find("frozen"); it != root.end()) c.regime.frozen = it->get<bool>();
  if (auto it = root.find("strategy"); it != root.end()) {
    const json& s = *it;
    c.strategy.specialized_max_delta_lambda2 =
        number_or(s, "specialized_max_delta_lambda2", c.strategy.specialized_max_delta_lambda2);
    c.strategy.fragmented_max_baseline = number_or(s, "fragmented_max_baseline", c.strategy.fragmented_max_baseline);
    c.strategy.fragmented_max_delta_hfer =
        number_or(s, "fragmented_max_delta_hfer", c.strategy.fragmented_max_delta_hfer);
    c.strategy.confident_max_delta_entropy =
        number_or(s, "confident_max_delta_entropy", c.strategy.confident_max_delta_entropy);
  }
  if (auto it = root.find("entropy"); it != root.end()) {
    c.entropy.lambda2_high = number_or(*it, "lambda2_high", c.entropy.lambda2_high);
    c.entropy.entropy_high = number_or(*it, "entropy_high", c.entropy.entropy_high);
  }
  if (auto it = root.find("version"); it != root.end()) {
    if (!it->is_string()) throw ValidationError("threshold config: 'version' must be a string");
    c.version = it->get<std::string>();
  }
  check_rule(c.regime);
  return c;
}

std::string serialize_threshold_config(const ThresholdConfig& c) {
  json root;
  root["rough_upper"] = c.regime.rough_upper;
  root["smooth_lower"] = c.regime.smooth_lower;
  root["frozen"] = c.regime.frozen;
  root["strategy"] = {
      {"specialized_max_delta_lambda2", c.strategy.specialized_max_delta_lambda2},
      {"fragmented_max_baseline", c.strategy.fragmented_max_baseline},
      {"fragmented_max_delta_hfer", c.strategy.fragmented_max_delta_hfer},
      {"confident_max_delta_entropy", c.strategy.confident_max_delta_entropy},
  };
  root["entropy"] = {{"lambda2_high", c.entropy.lambda2_high}, {"entropy_high", c.entropy.entropy_high}};
  root["version"] = c.version;
  return root.dump(2) + "\n";
}

ThresholdConfig load_threshold_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open threshold config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_threshold_config(text.str());
}

SmoothnessRegime classify_smoothness(double smoothness, const RegimeRule& rule) {
  if (!std::isfinite(smoothness) || smoothness < 0.0) {
    throw ValidationError("classify_smoothness: smoothness must be finite and non-negative");
  }
  check_rule(rule);
  if (smoothness < rule.rough_upper) return SmoothnessRegime::rough;
  if (smoothness < rule.smooth_lower) return SmoothnessRegime::medium;
  return SmoothnessRegime::smooth;
}

Strategy classify_strategy(const StrategySignature& sig, const StrategyThresholds& t) {
  if (sig.delta_lambda2 <= t.specialized_max_delta_lambda2) return Strategy::specialized;
  if (sig.lambda2_en_baseline < t.fragmented_max_baseline && sig.delta_hfer < t.fragmented_max_delta_hfer) {
    return Strategy::fragmented;
  }
  if (sig.delta_entropy <= t.confident_max_delta_entropy) return Strategy::confident;
  return Strategy::uniform;
}

EntropyDiagnosis entropy_discriminator(double lambda2, double entropy, const EntropyThresholds& t) {
  EntropyDiagnosis d;
  d.lambda2 = lambda2;
  d.entropy = entropy;
  if (lambda2 >= t.lambda2_high) {
    d.label = entropy >= t.entropy_high ? EntropyLabel::panic_mode : EntropyLabel::structured_integration;
  } else {
    d.label = EntropyLabel::modular;
  }
  return d;
}

ThresholdAudit audit_thresholds(std::span<const AuditCase> cases, const RegimeRule& rule, double jitter) {
  ThresholdAudit audit;
  audit.total = cases.size();
  for (const auto& c : cases) {
    const SmoothnessRegime base = classify_smoothness(c.smoothness, rule);
    if (base == c.expected) ++audit.agreements;
    for (double du : {-jitter, 0.0, jitter}) {
      for (double dl : {-jitter, 0.0, jitter}) {
        RegimeRule shifted = rule;
        shifted.rough_upper += du;
        shifted.smooth_lower += dl;
        const SmoothnessRegime label = classify_smoothness(c.smoothness, shifted);
        if (label != base) {
          audit.unstable.push_back({c.name, c.smoothness, shifted.rough_upper, shifted.smooth_lower, label});
        }
      }
    }
  }
  return audit;
}

}  // namespace spectral_scope
