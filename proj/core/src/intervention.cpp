#include "spectral_scope/intervention.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spectral_scope/error.hpp"
#include "spectral_scope/numeric.hpp"
#include "spectral_scope/rng.hpp"

namespace spectral_scope {

std::string_view to_string(AblationMode m) noexcept { return m == AblationMode::targeted ? "targeted" : "random"; }

Eigen::MatrixXd fiedler_gradient(const LaplacianSpectrum& spectrum, double gap_tolerance) {
  if (spectrum.variant != LaplacianVariant::combinatorial) {
    throw ValidationError("fiedler_gradient: only the combinatorial Laplacian is supported");
  }
  const double separation = spectrum.fiedler_separation();
  if (!(separation > gap_tolerance)) {
    std::ostringstream msg;
    msg << "fiedler_gradient: Fiedler value is repeated (gap " << separation << " <= tolerance " << gap_tolerance
        << "); the derivative is set-valued";
    throw DegenerateError(msg.str());
  }
  const Eigen::VectorXd v = spectrum.fiedler_vector();
  const Eigen::Index N = v.size();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const double diff = v(i) - v(j);
      G(i, j) = 0.5 * diff * diff;
      G(j, i) = G(i, j);
    }
  }
  return G;
}

std::vector<Eigen::MatrixXd> head_gradients(std::span<const Eigen::MatrixXd> heads, const HeadGradientConfig& config) {
  const TokenGraph graph = aggregate_heads(heads, config.aggregation);
  const LaplacianSpectrum spectrum = build_laplacian(graph, LaplacianVariant::combinatorial);
  const Eigen::MatrixXd G = fiedler_gradient(spectrum, config.gap_tolerance);

  const bool couple = config.coupling == AlphaCoupling::full && config.aggregation == Aggregation::mass_weighted;
  double total_mass = 0.0;
  double g_dot_w = 0.0;
  if (couple) {
    for (std::size_t h = 0; h < heads.size(); ++h) {
      if (graph.head_weights(static_cast<Eigen::Index>(h)) > 0.0) total_mass += heads[h].sum();
    }
    g_dot_w = (G.array() * graph.weights.array()).sum();
  }

  std::vector<Eigen::MatrixXd> out;
  out.reserve(heads.size());
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const double alpha = graph.head_weights(static_cast<Eigen::Index>(h));
    const Eigen::MatrixXd& A = heads[h];
    Eigen::MatrixXd grad = alpha * G;
    if (couple && alpha > 0.0) {
      const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
      const double g_dot_s = (G.array() * sym.array()).sum();
      grad.array() += (g_dot_s - g_dot_w) / total_mass;
    }
    if (config.target == HeadGradientTarget::logits) {
      // Softmax Jacobian per row: dZ_ij = A_ij (dA_ij - sum_k A_ik dA_ik).
      const Eigen::VectorXd row_dot = (A.array() * grad.array()).rowwise().sum();
      grad = (A.array() * (grad.colwise() - row_dot).array()).matrix();
    }
    out.push_back(std::move(grad));
  }
  return out;
}

std::vector<std::size_t> HeadImportance::ranking() const {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].importance > scores[b].importance; });
  std::vector<std::size_t> heads;
  heads.reserve(order.size());
  for (std::size_t i : order) heads.push_back(scores[i].head);
  return heads;
}

HeadImportance head_importance(std::span<const std::vector<Eigen::MatrixXd>> samples, int layer,
                               const HeadGradientConfig& config) {
  if (samples.empty()) throw ValidationError("head_importance: no samples");
  const std::size_t H = samples.front().size();
  std::vector<CompensatedSum> sums(H);
  HeadImportance out;
  for (const auto& heads : samples) {
    if (heads.size() != H) throw ValidationError("head_importance: samples disagree on head count");
    std::vector<Eigen::MatrixXd> grads;
    try {
      grads = head_gradients(heads, config);
    } catch (const DegenerateError&) {
      ++out.samples_skipped;
      continue;
    }
    for (std::size_t h = 0; h < H; ++h) {
      const double norm = config.norm == GradientNorm::frobenius
                              ? grads[h].norm()
                              : Eigen::JacobiSVD<Eigen::MatrixXd>(grads[h]).singularValues()(0);
      sums[h].add(norm);
    }
    ++out.samples_used;
  }
  if (out.samples_used == 0) {
    throw DegenerateError("head_importance: every sample has a repeated Fiedler value at layer " +
                          std::to_string(layer));
  }
  for (std::size_t h = 0; h < H; ++h) {
    out.scores.push_back({layer, h, sums[h].value() / static_cast<double>(out.samples_used)});
  }
  return out;
}

double ablate_heads(std::span<const Eigen::MatrixXd> heads, std::span<const std::size_t> head_set,
                    Aggregation aggregation, LaplacianVariant laplacian) {
  const std::size_t H = heads.size();
  std::vector<char> keep(H, 1);
  for (std::size_t h : head_set) {
    if (h >= H) {
      throw ValidationError("ablate_heads: head " + std::to_string(h) + " out of range for " + std::to_string(H) +
                            " heads");
    }
    keep[h] = 0;
  }
  if (std::none_of(keep.begin(), keep.end(), [](char k) { return k != 0; })) {
    throw ValidationError("ablate_heads: ablating every head leaves nothing to aggregate");
  }
  const std::unique_ptr<bool[]> mask(new bool[H]);
  for (std::size_t h = 0; h < H; ++h) mask[h] = keep[h] != 0;
  const TokenGraph g = aggregate_heads(heads, aggregation, 0, std::span<const bool>(mask.get(), H));
  return build_laplacian(g, laplacian).fiedler_value();
}

AblationCurve ablation_curve(std::span<const Eigen::MatrixXd> heads, AblationMode mode, std::span<const int> k_values,
                             std::span<const std::size_t> ranking, const AblationConfig& config) {
  const std::size_t H = heads.size();
  for (int k : k_values) {
    if (k < 0 || static_cast<std::size_t>(k) > H) {
      throw ValidationError("ablation_curve: k = " + std::to_string(k) + " outside [0, " + std::to_string(H) + "]");
    }
  }

  AblationCurve curve;
  curve.mode = mode;
  curve.k_values.assign(k_values.begin(), k_values.end());
  curve.seed = config.seed;

  if (mode == AblationMode::targeted) {
    std::vector<std::size_t> order(ranking.begin(), ranking.end());
    if (order.empty()) {
      const std::vector<std::vector<Eigen::MatrixXd>> one{std::vector<Eigen::MatrixXd>(heads.begin(), heads.end())};
      order = head_importance(one, 0, config.gradient).ranking();
    }
    for (int k : k_values) {
      if (static_cast<std::size_t>(k) > order.size()) {
        throw ValidationError("ablation_curve: ranking lists fewer than k heads");
      }
      curve.lambda2_at_k.push_back(ablate_heads(heads, std::span(order).first(static_cast<std::size_t>(k)),
                                                config.aggregation, config.laplacian));
      curve.standard_error.push_back(0.0);
    }
  } else {
    if (config.n_random_repeats < 1) throw ValidationError("ablation_curve: n_random_repeats must be positive");
    curve.n_random_repeats = config.n_random_repeats;
    std::vector<std::size_t> pool(H);
    for (int k : k_values) {
      std::vector<double> values;
      for (int r = 0; r < config.n_random_repeats; ++r) {
        CounterRng rng(derive_seed(config.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r)));
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.below(H - i));
          std::swap(pool[i], pool[j]);
        }
        values.push_back(ablate_heads(heads, std::span(pool).first(static_cast<std::size_t>(k)), config.aggregation,
                                      config.laplacian));
      }
      const double m = mean(values);
      CompensatedSum ss;
      for (double v : values) ss.add((v - m) * (v - m));
      const double n = static_cast<double>(values.size());
      curve.lambda2_at_k.push_back(m);
      curve.standard_error.push_back(n > 1 ? std::sqrt(ss.value() / (n - 1.0) / n) : 0.0);
    }
  }

  for (std::size_t i = 1; i < curve.lambda2_at_k.size(); ++i) {
    if (curve.k_values[i] >= curve.k_values[i - 1] && curve.lambda2_at_k[i] > curve.lambda2_at_k[i - 1] + 1e-12) {
      curve.monotone_nonincreasing = false;
    }
  }
  return curve;
}

SteeringVector steering_vector(const CaptureBundle& bundle, int layer, std::span<const std::string> calibration_pair_ids,
                               const SteeringOptions& options) {
  if (calibration_pair_ids.empty()) throw ValidationError("steering_vector: empty calibration set");
  const std::size_t L = bundle.manifest().num_layers;
  if (layer < 0 || static_cast<std::size_t>(layer) > L) {
    throw ValidationError("steering_vector: hidden index " + std::to_string(layer) + " outside [0, " +
                          std::to_string(L) + "]");
  }

  const Pairing pairing = pair_samples(bundle);
  std::map<std::string, std::vector<const PairedSample*>> by_id;
  for (const auto& p : pairing.pairs) by_id[p.pair_id()].push_back(&p);

  const auto pooled = [&](const CaptureSample& s) -> Eigen::VectorXd {
    if (!s.hidden) throw ValidationError("steering_vector: sample '" + s.record.id + "' has no hidden states");
    const Eigen::MatrixXd X = s.hidden->layer_matrix(static_cast<std::size_t>(layer));
    const Eigen::Index start = options.exclude_first_token ? 1 : 0;
    return X.bottomRows(X.rows() - start).colwise().mean().transpose();
  };

  const std::size_t d = bundle.manifest().hidden_dim;
  std::vector<CompensatedSum> acc(d);
  std::size_t used = 0;
  const std::set<std::string> ids(calibration_pair_ids.begin(), calibration_pair_ids.end());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("steering_vector: no resolvable pair with pair_id '" + id + "'");
    for (const PairedSample* p : it->second) {
      const Eigen::VectorXd diff = pooled(p->canonical.get()) - pooled(p->stressed.get());
      for (std::size_t k = 0; k < d; ++k) acc[k].add(diff(static_cast<Eigen::Index>(k)));
      ++used;
    }
  }

  SteeringVector v;
  v.layer = layer;
  v.calibration_size = used;
  v.values.resize(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) v.values(static_cast<Eigen::Index>(k)) = acc[k].value() / static_cast<double>(used);
  return v;
}

std::string serialize_steering_vector(const SteeringVector& vector) {
  nlohmann::json header;
  header["format"] = "spsv-1";
  header["layer"] = vector.layer;
  header["d"] = vector.values.size();
  header["calibration_size"] = vector.calibration_size;
  header["alpha_grid"] = vector.alpha_grid;
  header["payload"] = "binary32-le";
  std::string out = header.dump() + "\n";
  for (Eigen::Index k = 0; k < vector.values.size(); ++k) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(vector.values(k)));
    char bytes[4];
    for (int b = 0; b < 4; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFFU);
    out.append(bytes, 4);
  }
  return out;
}

SteeringVector parse_steering_vector(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw ValidationError("steering vector: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("steering vector: bad header: ") + e.what());
  }
  if (header.value("format", std::string{}) != "spsv-1") throw ValidationError("steering vector: unknown format");
  SteeringVector v;
  v.layer = header.at("layer").get<int>();
  const auto d = header.at("d").get<std::size_t>();
  v.calibration_size = header.at("calibration_size").get<std::size_t>();
  v.alpha_grid = header.at("alpha_grid").get<std::vector<double>>();
  const std::string_view payload = bytes.substr(newline + 1);
  if (payload.size() != d * 4) {
    throw ValidationError("steering vector: payload has " + std::to_string(payload.size()) + " bytes, expected " +
                          std::to_string(d * 4));
  }
  v.values.resize(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[k * 4 + static_cast<std::size_t>(b)]))
              << (8 * b);
    }
    v.values(static_cast<Eigen::Index>(k)) = std::bit_cast<float>(bits);
  }
  return v;
}

void write_steering_vector(const SteeringVector& vector, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_steering_vector(vector);
  if (!out) throw IoError("write failed on " + path.string());
}

SteeringVector read_steering_vector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return parse_steering_vector(bytes.str());
}

}  // namespace spectral_scope
