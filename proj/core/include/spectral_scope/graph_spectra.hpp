#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "spectral_scope/capture_io.hpp"

namespace spectral_scope {

enum class Aggregation { mass_weighted, uniform };
enum class LaplacianVariant { combinatorial, random_walk, symmetric };

/// Which hidden-state index pairs with the attention graph of (1-based) layer l:
/// block_output uses hidden[l], block_input uses hidden[l - 1].
enum class HiddenAlignment { block_output, block_input };

std::string_view to_string(Aggregation a) noexcept;
std::string_view to_string(LaplacianVariant v) noexcept;
std::string_view to_string(HiddenAlignment a) noexcept;
std::optional<Aggregation> parse_aggregation(std::string_view text) noexcept;
std::optional<LaplacianVariant> parse_laplacian(std::string_view text) noexcept;

/// Spectral gap below which the Fiedler value is treated as repeated.
inline constexpr double kFiedlerGapTolerance = 1e-6;

/// Symmetric, non-negative token graph of one layer.
struct TokenGraph {
  Eigen::MatrixXd weights;
  Eigen::VectorXd head_weights;  // alpha_h; zero for excluded heads
  int layer = 0;                 // 1-based
  Aggregation mode = Aggregation::mass_weighted;

  Eigen::Index size() const noexcept { return weights.rows(); }
};

/// Builds W = sum_h alpha_h * (A_h + A_h^T) / 2. `active` (optional, one flag per
/// head) removes heads before the weights are normalised; an empty span keeps
/// every head. Heads with zero mass are dropped with a warning in mass mode.
TokenGraph aggregate_heads(std::span<const Eigen::MatrixXd> heads, Aggregation mode, int layer = 0,
                           std::span<const bool> active = {});

/// Eigendecomposition of one Laplacian of a token graph.
struct LaplacianSpectrum {
  LaplacianVariant variant = LaplacianVariant::combinatorial;
  Eigen::VectorXd eigenvalues;   // ascending, clamped to >= 0
  Eigen::MatrixXd eigenvectors;  // orthonormal columns aligned with eigenvalues
  double spectral_gap = 0.0;     // lambda_3 - lambda_2 (+inf when N == 2)
  /// L = D - W of the source graph, kept for Dirichlet energies.
  Eigen::MatrixXd combinatorial_laplacian;

  Eigen::Index size() const noexcept { return eigenvalues.size(); }
  double fiedler_value() const noexcept { return eigenvalues(1); }
  Eigen::VectorXd fiedler_vector() const { return eigenvectors.col(1); }

  /// min(lambda_2 - lambda_1, lambda_3 - lambda_2): distance from lambda_2 to
  /// its nearest neighbour in the spectrum.
  double fiedler_separation() const noexcept;
  bool fiedler_is_simple(double tolerance = kFiedlerGapTolerance) const noexcept {
    return fiedler_separation() > tolerance;
  }
};

/// L = D - W with L_ii = sum_{j != i} W_ij, so self loops never enter.
Eigen::MatrixXd combinatorial_laplacian(const Eigen::MatrixXd& weights);

/// Random-walk spectra are taken from the similar symmetric form I - D^-1/2 W D^-1/2,
/// so both normalised variants share eigenvalues and orthonormal eigenvectors.
/// Throws DegenerateError for a zero-degree vertex under normalised variants.
LaplacianSpectrum build_laplacian(const TokenGraph& graph, LaplacianVariant variant);

struct SpectrumMetrics {
  double fiedler = 0.0;
  double spectral_entropy = 0.0;  // bits
  double hfer_spectral = 0.0;
};

/// 1-based ascending modes strictly above ceil(N/2) form the high-frequency set.
std::size_t high_frequency_start(std::size_t n) noexcept;

/// Throws DegenerateError for an all-zero spectrum.
SpectrumMetrics spectrum_metrics(const LaplacianSpectrum& spectrum);

struct SignalMetrics {
  double smoothness = 0.0;
  double hfer_signal = 0.0;
  double low_frequency_ratio = 0.0;
};

/// Dirichlet energy of the columns of `signal` (N x d) normalised by their
/// squared norm, and the share of their energy in high-frequency modes.
/// The signal is not mean-centred. Throws DegenerateError for an all-zero signal.
SignalMetrics signal_metrics(const LaplacianSpectrum& spectrum, const Eigen::MatrixXd& signal);

struct BaselineMetrics {
  double frobenius = 0.0;
  double max_attention = 0.0;
  double row_entropy = 0.0;  // bits, mean over rows
};

BaselineMetrics baseline_metrics(const TokenGraph& graph);

struct AnalysisConfig {
  Aggregation aggregation = Aggregation::mass_weighted;
  LaplacianVariant laplacian = LaplacianVariant::combinatorial;
  HiddenAlignment hidden_alignment = HiddenAlignment::block_output;
};

struct LayerMetrics {
  int layer = 0;  // 1-based
  double fiedler = 0.0;
  double spectral_entropy = 0.0;
  double hfer_spectral = 0.0;
  std::optional<double> hfer_signal;
  std::optional<double> smoothness;
  double baseline_frobenius = 0.0;
  double baseline_max_attention = 0.0;
  double baseline_row_entropy = 0.0;
  double spectral_gap = 0.0;
  bool fiedler_simple = false;
};

/// One LayerMetrics per layer, layers numbered from 1. Signal metrics are
/// present only when the sample carries hidden states.
std::vector<LayerMetrics> per_layer_metrics(const CaptureSample& sample, const AnalysisConfig& config);

}  // namespace spectral_scope
