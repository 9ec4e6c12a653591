#include "spectral_scope/graph_spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"
#include "spectral_scope/numeric.hpp"

namespace spectral_scope {

std::string_view to_string(Aggregation a) noexcept { return a == Aggregation::mass_weighted ? "mass" : "uniform"; }

std::string_view to_string(LaplacianVariant v) noexcept {
  switch (v) {
    case LaplacianVariant::combinatorial:
      return "comb";
    case LaplacianVariant::random_walk:
      return "rw";
    case LaplacianVariant::symmetric:
      return "sym";
  }
  return "unknown";
}

std::string_view to_string(HiddenAlignment a) noexcept {
  return a == HiddenAlignment::block_output ? "block_output" : "block_input";
}

std::optional<Aggregation> parse_aggregation(std::string_view text) noexcept {
  if (text == "mass" || text == "mass_weighted") return Aggregation::mass_weighted;
  if (text == "uniform") return Aggregation::uniform;
  return std::nullopt;
}

std::optional<LaplacianVariant> parse_laplacian(std::string_view text) noexcept {
  if (text == "comb" || text == "combinatorial") return LaplacianVariant::combinatorial;
  if (text == "rw" || text == "random_walk") return LaplacianVariant::random_walk;
  if (text == "sym" || text == "symmetric") return LaplacianVariant::symmetric;
  return std::nullopt;
}

TokenGraph aggregate_heads(std::span<const Eigen::MatrixXd> heads, Aggregation mode, int layer,
                           std::span<const bool> active) {
  const std::size_t H = heads.size();
  if (H == 0) throw ValidationError("aggregate_heads: layer has no heads");
  if (!active.empty() && active.size() != H) {
    throw ValidationError("aggregate_heads: head mask has " + std::to_string(active.size()) + " entries for " +
                          std::to_string(H) + " heads");
  }
  const Eigen::Index N = heads.front().rows();
  for (std::size_t h = 0; h < H; ++h) {
    if (heads[h].rows() != N || heads[h].cols() != N) {
      throw ValidationError("aggregate_heads: head " + std::to_string(h) + " is not " + std::to_string(N) + "x" +
                            std::to_string(N));
    }
    if ((heads[h].array() < 0.0).any()) {
      throw ValidationError("aggregate_heads: head " + std::to_string(h) + " has negative attention");
    }
  }

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(H));
  std::size_t survivors = 0;
  for (std::size_t h = 0; h < H; ++h) {
    if (!active.empty() && !active[h]) continue;
    if (mode == Aggregation::mass_weighted) {
      const double mass = heads[h].sum();
      if (!(mass > 0.0)) {
        warn("aggregate_heads: layer " + std::to_string(layer) + " head " + std::to_string(h) +
             " has zero attention mass and is excluded");
        continue;
      }
      alpha(static_cast<Eigen::Index>(h)) = mass;
    } else {
      alpha(static_cast<Eigen::Index>(h)) = 1.0;
    }
    ++survivors;
  }
  if (survivors == 0) {
    throw DegenerateError("aggregate_heads: no head with positive mass remains at layer " + std::to_string(layer));
  }
  alpha /= alpha.sum();

  TokenGraph g;
  g.layer = layer;
  g.mode = mode;
  g.head_weights = alpha;
  g.weights = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i; j < N; ++j) {
      double w = 0.0;
      for (std::size_t h = 0; h < H; ++h) {
        const double a = alpha(static_cast<Eigen::Index>(h));
        if (a == 0.0) continue;
        w += a * (0.5 * (heads[h](i, j) + heads[h](j, i)));
      }
      g.weights(i, j) = w;
      g.weights(j, i) = w;
    }
  }
  return g;
}

double LaplacianSpectrum::fiedler_separation() const noexcept {
  const Eigen::Index n = eigenvalues.size();
  if (n < 2) return 0.0;
  const double below = eigenvalues(1) - eigenvalues(0);
  return std::min(below, spectral_gap);
}

Eigen::MatrixXd combinatorial_laplacian(const Eigen::MatrixXd& weights) {
  const Eigen::Index N = weights.rows();
  Eigen::MatrixXd L(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    double degree = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (j == i) continue;
      degree += weights(i, j);
      L(i, j) = -weights(i, j);
    }
    L(i, i) = degree;
  }
  return L;
}

namespace {

// First component of largest magnitude is made positive.
void canonicalize_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    const double peak = vectors.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      if (std::abs(vectors(r, c)) >= peak - 1e-12) {
        if (vectors(r, c) < 0.0) vectors.col(c) = -vectors.col(c);
        break;
      }
    }
  }
}

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& W) {
  const Eigen::Index N = W.rows();
  Eigen::VectorXd inv_sqrt(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double degree = W.row(i).sum();
    if (!(degree > 0.0)) {
      throw DegenerateError("build_laplacian: vertex " + std::to_string(i) +
                            " has zero degree; normalised Laplacians are undefined");
    }
    inv_sqrt(i) = 1.0 / std::sqrt(degree);
  }
  Eigen::MatrixXd M(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i; j < N; ++j) {
      const double v = (i == j ? 1.0 : 0.0) - inv_sqrt(i) * W(i, j) * inv_sqrt(j);
      M(i, j) = v;
      M(j, i) = v;
    }
  }
  return M;
}

}  // namespace

LaplacianSpectrum build_laplacian(const TokenGraph& graph, LaplacianVariant variant) {
  const Eigen::Index N = graph.size();
  if (N < 2) throw ValidationError("build_laplacian: graph needs at least 2 vertices");

  LaplacianSpectrum s;
  s.variant = variant;
  s.combinatorial_laplacian = combinatorial_laplacian(graph.weights);

  const Eigen::MatrixXd target =
      variant == LaplacianVariant::combinatorial ? s.combinatorial_laplacian : normalized_laplacian(graph.weights);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(target);
  if (solver.info() != Eigen::Success) {
    throw DegenerateError("build_laplacian: eigendecomposition did not converge at layer " +
                          std::to_string(graph.layer));
  }
  s.eigenvalues = solver.eigenvalues().cwiseMax(0.0);
  s.eigenvectors = solver.eigenvectors();
  canonicalize_signs(s.eigenvectors);
  s.spectral_gap = N >= 3 ? s.eigenvalues(2) - s.eigenvalues(1) : std::numeric_limits<double>::infinity();
  return s;
}

std::size_t high_frequency_start(std::size_t n) noexcept { return (n + 1) / 2; }

SpectrumMetrics spectrum_metrics(const LaplacianSpectrum& spectrum) {
  const Eigen::Index N = spectrum.size();
  CompensatedSum total_acc;
  for (Eigen::Index i = 0; i < N; ++i) total_acc.add(spectrum.eigenvalues(i));
  const double total = total_acc.value();
  if (!(total > 0.0)) {
    throw DegenerateError("spectrum_metrics: all-zero spectrum (empty graph); entropy and HFER are undefined");
  }

  SpectrumMetrics m;
  m.fiedler = spectrum.eigenvalues(1);

  CompensatedSum entropy;
  CompensatedSum high;
  const auto start = static_cast<Eigen::Index>(high_frequency_start(static_cast<std::size_t>(N)));
  for (Eigen::Index i = 0; i < N; ++i) {
    const double lambda = spectrum.eigenvalues(i);
    const double p = lambda / total;
    if (p > 0.0) entropy.add(-p * std::log2(p));
    if (i >= start) high.add(lambda);
  }
  m.spectral_entropy = entropy.value();
  m.hfer_spectral = high.value() / total;
  return m;
}

SignalMetrics signal_metrics(const LaplacianSpectrum& spectrum, const Eigen::MatrixXd& signal) {
  const Eigen::Index N = spectrum.size();
  if (signal.rows() != N) {
    throw ValidationError("signal_metrics: signal has " + std::to_string(signal.rows()) + " rows for a " +
                          std::to_string(N) + "-vertex graph");
  }
  const double energy = signal.squaredNorm();
  if (!(energy > 0.0)) throw DegenerateError("signal_metrics: all-zero signal");

  SignalMetrics m;
  const double dirichlet = (signal.transpose() * spectrum.combinatorial_laplacian * signal).trace();
  m.smoothness = std::max(dirichlet, 0.0) / energy;

  const Eigen::MatrixXd coeffs = spectrum.eigenvectors.transpose() * signal;
  const auto start = static_cast<Eigen::Index>(high_frequency_start(static_cast<std::size_t>(N)));
  const double low = coeffs.topRows(start).squaredNorm();
  const double high = coeffs.bottomRows(N - start).squaredNorm();
  m.hfer_signal = high / (low + high);
  m.low_frequency_ratio = low / (low + high);
  return m;
}

BaselineMetrics baseline_metrics(const TokenGraph& graph) {
  const Eigen::MatrixXd& W = graph.weights;
  BaselineMetrics b;
  b.frobenius = W.norm();
  b.max_attention = W.maxCoeff();

  CompensatedSum entropy_sum;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const double row_sum = W.row(i).sum();
    if (!(row_sum > 0.0)) {
      warn("baseline_metrics: row " + std::to_string(i) + " of layer " + std::to_string(graph.layer) +
           " is all zero; it contributes 0 entropy");
      continue;
    }
    double h = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      const double p = W(i, j) / row_sum;
      if (p > 0.0) h -= p * std::log2(p);
    }
    entropy_sum.add(h);
  }
  b.row_entropy = entropy_sum.value() / static_cast<double>(W.rows());
  return b;
}

std::vector<LayerMetrics> per_layer_metrics(const CaptureSample& sample, const AnalysisConfig& config) {
  const auto& attention = sample.attention;
  std::vector<LayerMetrics> out;
  out.reserve(attention.layers());
  for (std::size_t idx = 0; idx < attention.layers(); ++idx) {
    const int layer = static_cast<int>(idx) + 1;
    const auto heads = attention.layer_heads(idx);
    const TokenGraph g = aggregate_heads(heads, config.aggregation, layer);
    const LaplacianSpectrum s = build_laplacian(g, config.laplacian);
    const SpectrumMetrics sm = spectrum_metrics(s);
    const BaselineMetrics bm = baseline_metrics(g);

    LayerMetrics m;
    m.layer = layer;
    m.fiedler = sm.fiedler;
    m.spectral_entropy = sm.spectral_entropy;
    m.hfer_spectral = sm.hfer_spectral;
    m.baseline_frobenius = bm.frobenius;
    m.baseline_max_attention = bm.max_attention;
    m.baseline_row_entropy = bm.row_entropy;
    m.spectral_gap = s.spectral_gap;
    m.fiedler_simple = s.fiedler_is_simple();

    if (sample.hidden) {
      const std::size_t hidden_index = config.hidden_alignment == HiddenAlignment::block_output ? idx + 1 : idx;
      const SignalMetrics sig = signal_metrics(s, sample.hidden->layer_matrix(hidden_index));
      m.smoothness = sig.smoothness;
      m.hfer_signal = sig.hfer_signal;
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace spectral_scope
