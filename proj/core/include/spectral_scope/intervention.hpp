#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spectral_scope/capture_io.hpp"
#include "spectral_scope/graph_spectra.hpp"

namespace spectral_scope {

/// Sensitivity of the Fiedler value to the (symmetric) graph weights:
///
///     G_ij = (v_i - v_j)^2 / 2   (i != j),   G_ii = 0,
///
/// with v the unit Fiedler vector, so that dlambda2 = sum_ij G_ij dW_ij for any
/// symmetric perturbation dW (each undirected edge appears twice in the sum).
/// Requires a combinatorial spectrum whose Fiedler value is simple; otherwise
/// throws DegenerateError naming the gap.
Eigen::MatrixXd fiedler_gradient(const LaplacianSpectrum& spectrum, double gap_tolerance = kFiedlerGapTolerance);

/// What the per-head gradient is taken with respect to.
///  - logits: pre-softmax scores Z_h with A_h = softmax(Z_h) row-wise. Perturbations
///    stay row-stochastic, so the score reflects how the head can actually move lambda2.
///  - attention: the post-softmax matrix A_h itself (alpha_h * G under constant coupling;
///    identical for every head of equal mass, so it does not rank row-stochastic heads).
enum class HeadGradientTarget { logits, attention };

/// constant: alpha_h held fixed. full: differentiates alpha_h = mass_h / total mass
/// (only changes anything for the attention target in mass-weighted mode).
enum class AlphaCoupling { constant, full };

enum class GradientNorm { frobenius, spectral };

struct HeadGradientConfig {
  Aggregation aggregation = Aggregation::mass_weighted;
  HeadGradientTarget target = HeadGradientTarget::logits;
  AlphaCoupling coupling = AlphaCoupling::constant;
  GradientNorm norm = GradientNorm::frobenius;
  double gap_tolerance = kFiedlerGapTolerance;
};

/// d lambda2 / d (per-head input) for every head of one layer.
std::vector<Eigen::MatrixXd> head_gradients(std::span<const Eigen::MatrixXd> heads, const HeadGradientConfig& config);

struct HeadScore {
  int layer = 0;          // 1-based
  std::size_t head = 0;   // 0-based
  double importance = 0.0;
};

struct HeadImportance {
  std::vector<HeadScore> scores;  // in head order
  std::size_t samples_used = 0;
  std::size_t samples_skipped = 0;  // repeated Fiedler value

  /// Head indices by descending importance; ties keep head order.
  std::vector<std::size_t> ranking() const;
};

/// Mean gradient norm per head over samples. Samples with a repeated Fiedler
/// value are skipped and counted; throws DegenerateError if all are skipped.
HeadImportance head_importance(std::span<const std::vector<Eigen::MatrixXd>> samples, int layer,
                               const HeadGradientConfig& config);

/// Lambda2 after removing `head_set` (0-based indices) from the aggregation.
/// Remaining weights are renormalised. Throws ValidationError when no head remains.
double ablate_heads(std::span<const Eigen::MatrixXd> heads, std::span<const std::size_t> head_set,
                    Aggregation aggregation, LaplacianVariant laplacian = LaplacianVariant::combinatorial);

enum class AblationMode { targeted, random };

std::string_view to_string(AblationMode m) noexcept;

struct AblationConfig {
  Aggregation aggregation = Aggregation::mass_weighted;
  LaplacianVariant laplacian = LaplacianVariant::combinatorial;
  HeadGradientConfig gradient;
  int n_random_repeats = 20;
  std::uint64_t seed = 0;
};

struct AblationCurve {
  AblationMode mode = AblationMode::targeted;
  std::vector<int> k_values;
  std::vector<double> lambda2_at_k;
  std::vector<double> standard_error;  // zero for targeted
  int n_random_repeats = 0;
  std::uint64_t seed = 0;
  bool monotone_nonincreasing = true;
};

/// Targeted mode removes the first k heads of `ranking` (computed from this
/// sample when empty). Random mode averages over n_random_repeats uniformly
/// drawn k-subsets, each from a stream keyed by (seed, k, repeat).
AblationCurve ablation_curve(std::span<const Eigen::MatrixXd> heads, AblationMode mode, std::span<const int> k_values,
                             std::span<const std::size_t> ranking, const AblationConfig& config);

inline constexpr std::array<double, 6> kSteeringAlphaGrid{0.05, 0.1, 0.2, 0.5, 1.0, 2.0};

struct SteeringOptions {
  bool exclude_first_token = false;
};

struct SteeringVector {
  int layer = 0;  // hidden-state index (0 = embeddings)
  Eigen::VectorXd values;
  std::size_t calibration_size = 0;
  std::vector<double> alpha_grid{kSteeringAlphaGrid.begin(), kSteeringAlphaGrid.end()};
};

/// Mean over calibration pairs of (pooled canonical - pooled stressed) hidden
/// states, where pooling averages the token rows of hidden index `layer`.
SteeringVector steering_vector(const CaptureBundle& bundle, int layer, std::span<const std::string> calibration_pair_ids,
                               const SteeringOptions& options = {});

/// One-line JSON header followed by '\n' and d binary32 little-endian values.
std::string serialize_steering_vector(const SteeringVector& vector);
SteeringVector parse_steering_vector(std::string_view bytes);
void write_steering_vector(const SteeringVector& vector, const std::filesystem::path& path);
SteeringVector read_steering_vector(const std::filesystem::path& path);

}  // namespace spectral_scope
