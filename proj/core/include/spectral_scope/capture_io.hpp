#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace spectral_scope {

inline constexpr std::string_view kBundleFormatVersion = "atnb-1";

/// Row-sum tolerance used when loading bundles. Admits half-precision captures.
inline constexpr double kDefaultStochasticTolerance = 1e-3;
inline constexpr double kStrictStochasticTolerance = 1e-6;

enum class Construction {
  active,
  passive,
  wh_question,
  complex_clause,
  dative_shift,
  adverbial_fronting,
  ood_gibberish,
  ood_repetition,
  ood_code_noise,
  ood_math_noise,
};

enum class Role { canonical, stressed };

std::string_view to_string(Construction c) noexcept;
std::string_view to_string(Role r) noexcept;
std::optional<Construction> parse_construction(std::string_view text) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct SampleRecord {
  std::string id;
  std::string text;
  std::string language;  // ISO-639-1
  Construction construction = Construction::active;
  Role role = Role::canonical;
  std::string pair_id;
  std::size_t token_count = 0;
  std::string attention_blob;               // relative to the bundle root
  std::optional<std::string> hidden_blob;   // relative to the bundle root
};

struct CaptureManifest {
  std::string format_version{kBundleFormatVersion};
  std::string model_id;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t hidden_dim = 0;
  std::vector<SampleRecord> samples;
};

/// Post-softmax attention, layout [layer][head][query][key], binary32.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(std::size_t layers, std::size_t heads, std::size_t tokens, std::vector<float> values);

  std::size_t layers() const noexcept { return layers_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t tokens() const noexcept { return tokens_; }

  float at(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) const noexcept {
    return values_[((layer * heads_ + head) * tokens_ + query) * tokens_ + key];
  }

  std::span<const float> values() const noexcept { return values_; }

  /// One head's N x N matrix as doubles. `layer` is the 0-based tensor index.
  Eigen::MatrixXd head_matrix(std::size_t layer, std::size_t head) const;

  /// All head matrices of one layer (0-based tensor index).
  std::vector<Eigen::MatrixXd> layer_heads(std::size_t layer) const;

 private:
  std::size_t layers_ = 0;
  std::size_t heads_ = 0;
  std::size_t tokens_ = 0;
  std::vector<float> values_;
};

/// Hidden states, layout [layer 0..L][token][dim]; layer 0 is the embedding output.
class HiddenTensor {
 public:
  HiddenTensor() = default;
  HiddenTensor(std::size_t layers_plus_one, std::size_t tokens, std::size_t dim, std::vector<float> values);

  std::size_t layer_count() const noexcept { return layers_; }
  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> values() const noexcept { return values_; }

  /// N x d matrix of the given hidden index (0 = embeddings).
  Eigen::MatrixXd layer_matrix(std::size_t index) const;

 private:
  std::size_t layers_ = 0;
  std::size_t tokens_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

struct CaptureSample {
  SampleRecord record;
  AttentionTensor attention;
  std::optional<HiddenTensor> hidden;
};

/// Immutable after construction; safe for concurrent readers.
class CaptureBundle {
 public:
  CaptureBundle() = default;
  CaptureBundle(CaptureManifest manifest, std::vector<CaptureSample> samples, std::vector<std::string> warnings = {});

  const CaptureManifest& manifest() const noexcept { return manifest_; }
  const std::vector<CaptureSample>& samples() const noexcept { return samples_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  const CaptureSample* find(std::string_view id) const noexcept;

 private:
  CaptureManifest manifest_;
  std::vector<CaptureSample> samples_;
  std::vector<std::string> warnings_;
};

struct LoadOptions {
  double stochastic_tolerance = kDefaultStochasticTolerance;
};

/// Reads manifest.json and every referenced blob under `root`, checks byte
/// counts against the manifest shape, row-stochasticity of every attention row
/// and finiteness of hidden states. Throws ValidationError or IoError.
CaptureBundle load_bundle(const std::filesystem::path& root, const LoadOptions& options = {});

/// Writes manifest.json plus blobs at the paths named by each record.
void save_bundle(const CaptureBundle& bundle, const std::filesystem::path& root);

CaptureManifest parse_manifest(std::string_view json_text, std::vector<std::string>* warnings = nullptr);
std::string serialize_manifest(const CaptureManifest& manifest);

struct RowViolation {
  std::size_t layer;  // 0-based tensor index
  std::size_t head;
  std::size_t row;
  double row_sum;
};

struct NegativeEntry {
  std::size_t layer;
  std::size_t head;
  std::size_t row;
  std::size_t column;
  double value;
};

struct ValidationReport {
  std::vector<RowViolation> row_violations;
  std::vector<NegativeEntry> negative_entries;

  bool ok() const noexcept { return row_violations.empty() && negative_entries.empty(); }
};

/// Lists every row whose sum deviates from 1 by more than `tolerance` (or is
/// not finite) and every negative entry.
ValidationReport validate_attention(const AttentionTensor& tensor, double tolerance);

struct PairedSample {
  std::reference_wrapper<const CaptureSample> canonical;
  std::reference_wrapper<const CaptureSample> stressed;

  const std::string& pair_id() const noexcept { return canonical.get().record.pair_id; }
};

struct Pairing {
  std::vector<PairedSample> pairs;                            // sorted by (pair_id, stressed id)
  std::vector<std::reference_wrapper<const CaptureSample>> orphans;  // sorted by id
};

/// Star pairing: each canonical record is paired with every stressed record
/// sharing its pair_id. Records without a partner are returned as orphans.
/// Throws ValidationError when a pair_id carries more than one canonical record.
Pairing pair_samples(const CaptureBundle& bundle);

}  // namespace spectral_scope
