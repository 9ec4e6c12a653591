#pragma once

// Test-only oracles and fixture builders. Nothing here calls into the
// library's eigen or stats code, so the oracles stay independent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unistd.h>

#include "spectral_scope/capture_io.hpp"
#include "spectral_scope/rng.hpp"

namespace fixtures {

namespace ss = spectral_scope;

// Cyclic Jacobi rotations on a dense symmetric matrix. Slow but independent.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

// L = D - W built by hand, diagonal of W ignored.
inline Eigen::MatrixXd laplacian_oracle(const Eigen::MatrixXd& w) {
  const Eigen::Index n = w.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      l(i, j) = -w(i, j);
      l(i, i) += w(i, j);
    }
  }
  return l;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }
  std::size_t components() {
    std::size_t c = 0;
    for (std::size_t i = 0; i < parent_.size(); ++i) c += find(i) == i;
    return c;
  }

 private:
  std::vector<std::size_t> parent_;
};

inline bool support_connected(const Eigen::MatrixXd& w) {
  const auto n = static_cast<std::size_t>(w.rows());
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) uf.unite(i, j);
  return uf.components() == 1;
}

// Symmetric non-negative weights; each off-diagonal edge present with probability `density`.
inline Eigen::MatrixXd random_weights(ss::CounterRng& rng, Eigen::Index n, double density) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w(i, i) = rng.unit();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (rng.unit() < density) w(i, j) = w(j, i) = rng.unit() * 2.0;
    }
  }
  return w;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd a(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) total += a(i, j) = std::isinf(z(i, j)) ? 0.0 : std::exp(z(i, j) - m);
    a.row(i) /= total;
  }
  return a;
}

inline Eigen::MatrixXd uniform_attention(Eigen::Index n) { return Eigen::MatrixXd::Constant(n, n, 1.0 / double(n)); }

// Two equal blocks, uniform inside each block, nothing across.
inline Eigen::MatrixXd block_attention(Eigen::Index n) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const Eigen::Index h = n / 2;
  a.topLeftCorner(h, h).setConstant(1.0 / double(h));
  a.bottomRightCorner(n - h, n - h).setConstant(1.0 / double(n - h));
  return a;
}

inline Eigen::MatrixXd path3() {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  w(0, 1) = w(1, 0) = w(1, 2) = w(2, 1) = 1.0;
  return w;
}

struct PlantedBridge {
  std::vector<Eigen::MatrixXd> heads;
  std::vector<std::size_t> bridges;
};

// Tokens split into two clusters. Ordinary heads attend only inside the
// query's cluster; bridge heads also put weight on the other cluster.
inline PlantedBridge planted_bridge(std::uint64_t seed, Eigen::Index n = 12, std::size_t h = 32,
                                    std::vector<std::size_t> bridges = {3, 19, 31}) {
  ss::CounterRng rng(seed);
  const Eigen::Index half = n / 2;
  auto cluster = [half](Eigen::Index i) { return i < half ? 0 : 1; };
  PlantedBridge out;
  out.bridges = bridges;
  for (std::size_t k = 0; k < h; ++k) {
    const bool bridge = std::find(bridges.begin(), bridges.end(), k) != bridges.end();
    Eigen::MatrixXd z(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double noise = 1.5 * rng.unit();
        if (cluster(i) == cluster(j)) {
          z(i, j) = noise;
        } else {
          z(i, j) = bridge ? noise + 0.5 : -std::numeric_limits<double>::infinity();
        }
      }
    }
    out.heads.push_back(softmax_rows(z));
  }
  return out;
}

struct SampleSpec {
  std::string id;
  std::string language = "en";
  ss::Construction construction = ss::Construction::active;
  ss::Role role = ss::Role::canonical;
  std::string pair_id;
  std::vector<std::vector<Eigen::MatrixXd>> layers;     // [layer][head] N x N
  std::optional<std::vector<Eigen::MatrixXd>> hidden;  // [layer 0..L] N x d
};

inline ss::CaptureSample make_sample(const SampleSpec& spec) {
  const std::size_t L = spec.layers.size();
  const std::size_t H = spec.layers.front().size();
  const auto N = static_cast<std::size_t>(spec.layers.front().front().rows());
  std::vector<float> attn;
  attn.reserve(L * H * N * N);
  for (const auto& layer : spec.layers)
    for (const auto& head : layer)
      for (Eigen::Index i = 0; i < head.rows(); ++i)
        for (Eigen::Index j = 0; j < head.cols(); ++j) attn.push_back(static_cast<float>(head(i, j)));

  ss::CaptureSample s;
  s.record.id = spec.id;
  s.record.text = "synthetic " + spec.id;
  s.record.language = spec.language;
  s.record.construction = spec.construction;
  s.record.role = spec.role;
  s.record.pair_id = spec.pair_id;
  s.record.token_count = N;
  s.record.attention_blob = "blobs/" + spec.id + ".attn.f32";
  s.attention = ss::AttentionTensor(L, H, N, std::move(attn));
  if (spec.hidden) {
    const auto d = static_cast<std::size_t>(spec.hidden->front().cols());
    std::vector<float> hv;
    for (const auto& x : *spec.hidden)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) hv.push_back(static_cast<float>(x(i, j)));
    s.record.hidden_blob = "blobs/" + spec.id + ".hidden.f32";
    s.hidden = ss::HiddenTensor(spec.hidden->size(), N, d, std::move(hv));
  }
  return s;
}

inline ss::CaptureBundle make_bundle(const std::vector<SampleSpec>& specs, std::string model_id = "org/Test-Model",
                                     std::size_t hidden_dim = 4) {
  ss::CaptureManifest m;
  m.model_id = std::move(model_id);
  m.num_layers = specs.front().layers.size();
  m.num_heads = specs.front().layers.front().size();
  m.hidden_dim = hidden_dim;
  std::vector<ss::CaptureSample> samples;
  for (const auto& spec : specs) {
    samples.push_back(make_sample(spec));
    m.samples.push_back(samples.back().record);
  }
  return ss::CaptureBundle(std::move(m), std::move(samples));
}

// Hidden states of L+1 layers with a fixed pseudo-random pattern.
inline std::vector<Eigen::MatrixXd> random_hidden(std::uint64_t seed, std::size_t layers_plus_one, Eigen::Index n,
                                                  Eigen::Index d) {
  ss::CounterRng rng(seed);
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t l = 0; l < layers_plus_one; ++l) {
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.unit() * 2.0 - 1.0;
    out.push_back(x);
  }
  return out;
}

// `n_pairs` en active/passive pairs over `layers` layers. Canonical layers are
// uniform (lambda2 = 1 for N = 4), stressed layers are two-block (lambda2 = 0).
inline std::vector<SampleSpec> collapse_pairs(std::size_t n_pairs, std::size_t layers = 6, std::size_t heads = 2,
                                              bool with_hidden = true, std::string language = "en",
                                              ss::Construction stressed = ss::Construction::passive) {
  std::vector<SampleSpec> out;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::string pid = language + "-" + std::to_string(p);
    SampleSpec c;
    c.id = pid + "-c";
    c.language = language;
    c.pair_id = pid;
    c.layers.assign(layers, std::vector<Eigen::MatrixXd>(heads, uniform_attention(4)));
    SampleSpec s = c;
    s.id = pid + "-s";
    s.role = ss::Role::stressed;
    s.construction = stressed;
    s.layers.assign(layers, std::vector<Eigen::MatrixXd>(heads, block_attention(4)));
    if (with_hidden) {
      c.hidden = random_hidden(100 + p, layers + 1, 4, 4);
      s.hidden = random_hidden(200 + p, layers + 1, 4, 4);
    }
    out.push_back(std::move(c));
    out.push_back(std::move(s));
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("spectral_scope_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
