#include "spectral_scope/capture_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "spectral_scope/error.hpp"
#include "spectral_scope/log.hpp"

namespace spectral_scope {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<Construction, std::string_view>, 10> kConstructionNames{{
    {Construction::active, "active"},
    {Construction::passive, "passive"},
    {Construction::wh_question, "wh_question"},
    {Construction::complex_clause, "complex_clause"},
    {Construction::dative_shift, "dative_shift"},
    {Construction::adverbial_fronting, "adverbial_fronting"},
    {Construction::ood_gibberish, "ood_gibberish"},
    {Construction::ood_repetition, "ood_repetition"},
    {Construction::ood_code_noise, "ood_code_noise"},
    {Construction::ood_math_noise, "ood_math_noise"},
}};

std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t expected_count) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) {
    throw IoError("cannot stat blob " + path.string() + ": " + ec.message());
  }
  if (size != expected_count * sizeof(float)) {
    throw ValidationError("blob " + path.string() + " has " + std::to_string(size) +
                          " bytes, manifest shape requires " +
                          std::to_string(expected_count * sizeof(float)));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open blob " + path.string());
  std::vector<float> values(expected_count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read on blob " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = __builtin_bswap32(bits);
      v = std::bit_cast<float>(bits);
    }
  }
  return values;
}

void write_f32_blob(const std::filesystem::path& path, std::span<const float> values) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write blob " + path.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float v : values) {
      auto bits = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
  } else {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed on blob " + path.string());
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

std::size_t required_positive(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + key + "'");
  if (!it->is_number_integer() || it->get<long long>() <= 0) {
    throw ValidationError(where + ": field '" + key + "' must be a positive integer");
  }
  return it->get<std::size_t>();
}

void warn_unknown(const json& obj, std::initializer_list<std::string_view> known, const std::string& where,
                  std::vector<std::string>* warnings) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      std::string msg = where + ": ignoring unknown field '" + key + "'";
      warn(msg);
      if (warnings) warnings->push_back(std::move(msg));
    }
  }
}

bool is_language_code(std::string_view s) {
  return s.size() == 2 && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

}  // namespace

std::string_view to_string(Construction c) noexcept {
  for (const auto& [value, name] : kConstructionNames) {
    if (value == c) return name;
  }
  return "unknown";
}

std::string_view to_string(Role r) noexcept { return r == Role::canonical ? "canonical" : "stressed"; }

std::optional<Construction> parse_construction(std::string_view text) noexcept {
  for (const auto& [value, name] : kConstructionNames) {
    if (name == text) return value;
  }
  return std::nullopt;
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  if (text == "canonical") return Role::canonical;
  if (text == "stressed") return Role::stressed;
  return std::nullopt;
}

AttentionTensor::AttentionTensor(std::size_t layers, std::size_t heads, std::size_t tokens, std::vector<float> values)
    : layers_(layers), heads_(heads), tokens_(tokens), values_(std::move(values)) {
  if (values_.size() != layers_ * heads_ * tokens_ * tokens_) {
    throw ValidationError("attention tensor: " + std::to_string(values_.size()) + " values for shape [" +
                          std::to_string(layers) + "][" + std::to_string(heads) + "][" + std::to_string(tokens) +
                          "][" + std::to_string(tokens) + "]");
  }
}

Eigen::MatrixXd AttentionTensor::head_matrix(std::size_t layer, std::size_t head) const {
  const auto n = static_cast<Eigen::Index>(tokens_);
  Eigen::MatrixXd m(n, n);
  const float* base = values_.data() + (layer * heads_ + head) * tokens_ * tokens_;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = base[i * n + j];
  }
  return m;
}

std::vector<Eigen::MatrixXd> AttentionTensor::layer_heads(std::size_t layer) const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) out.push_back(head_matrix(layer, h));
  return out;
}

HiddenTensor::HiddenTensor(std::size_t layers_plus_one, std::size_t tokens, std::size_t dim, std::vector<float> values)
    : layers_(layers_plus_one), tokens_(tokens), dim_(dim), values_(std::move(values)) {
  if (values_.size() != layers_ * tokens_ * dim_) {
    throw ValidationError("hidden tensor: " + std::to_string(values_.size()) + " values for shape [" +
                          std::to_string(layers_plus_one) + "][" + std::to_string(tokens) + "][" +
                          std::to_string(dim) + "]");
  }
}

Eigen::MatrixXd HiddenTensor::layer_matrix(std::size_t index) const {
  const auto n = static_cast<Eigen::Index>(tokens_);
  const auto d = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd m(n, d);
  const float* base = values_.data() + index * tokens_ * dim_;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = base[i * d + k];
  }
  return m;
}

CaptureBundle::CaptureBundle(CaptureManifest manifest, std::vector<CaptureSample> samples,
                             std::vector<std::string> warnings)
    : manifest_(std::move(manifest)), samples_(std::move(samples)), warnings_(std::move(warnings)) {}

const CaptureSample* CaptureBundle::find(std::string_view id) const noexcept {
  for (const auto& s : samples_) {
    if (s.record.id == id) return &s;
  }
  return nullptr;
}

CaptureManifest parse_manifest(std::string_view json_text, std::vector<std::string>* warnings) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("manifest.json: top level must be an object");

  CaptureManifest m;
  m.format_version = required<std::string>(root, "format_version", "manifest");
  if (m.format_version != kBundleFormatVersion) {
    throw ValidationError("manifest: unknown format_version '" + m.format_version + "' (expected '" +
                          std::string(kBundleFormatVersion) + "')");
  }
  m.model_id = required<std::string>(root, "model_id", "manifest");
  m.num_layers = required_positive(root, "num_layers", "manifest");
  m.num_heads = required_positive(root, "num_heads", "manifest");
  m.hidden_dim = required_positive(root, "hidden_dim", "manifest");
  warn_unknown(root, {"format_version", "model_id", "num_layers", "num_heads", "hidden_dim", "samples"}, "manifest",
               warnings);

  const auto samples_it = root.find("samples");
  if (samples_it == root.end() || !samples_it->is_array()) {
    throw ValidationError("manifest: 'samples' must be an array");
  }

  std::set<std::string> ids;
  for (std::size_t k = 0; k < samples_it->size(); ++k) {
    const json& s = (*samples_it)[k];
    const std::string where = "manifest.samples[" + std::to_string(k) + "]";
    if (!s.is_object()) throw ValidationError(where + ": must be an object");
    SampleRecord r;
    r.id = required<std::string>(s, "id", where);
    r.text = required<std::string>(s, "text", where);
    r.language = required<std::string>(s, "language", where);
    if (!is_language_code(r.language)) {
      throw ValidationError(where + ": language '" + r.language + "' is not an ISO-639-1 code");
    }
    const auto construction = required<std::string>(s, "construction", where);
    const auto parsed_construction = parse_construction(construction);
    if (!parsed_construction) throw ValidationError(where + ": unknown construction '" + construction + "'");
    r.construction = *parsed_construction;
    const auto role = required<std::string>(s, "role", where);
    const auto parsed_role = parse_role(role);
    if (!parsed_role) throw ValidationError(where + ": unknown role '" + role + "'");
    r.role = *parsed_role;
    r.pair_id = required<std::string>(s, "pair_id", where);
    r.token_count = required_positive(s, "token_count", where);
    if (r.token_count < 2) throw ValidationError(where + ": token_count must be at least 2");
    r.attention_blob = required<std::string>(s, "attention_blob", where);
    if (auto it = s.find("hidden_blob"); it != s.end() && !it->is_null()) {
      if (!it->is_string()) throw ValidationError(where + ": field 'hidden_blob' has the wrong type");
      r.hidden_blob = it->get<std::string>();
    }
    warn_unknown(s,
                 {"id", "text", "language", "construction", "role", "pair_id", "token_count", "attention_blob",
                  "hidden_blob"},
                 where, warnings);
    if (!ids.insert(r.id).second) throw ValidationError(where + ": duplicate sample id '" + r.id + "'");
    m.samples.push_back(std::move(r));
  }
  return m;
}

std::string serialize_manifest(const CaptureManifest& manifest) {
  json root;
  root["format_version"] = manifest.format_version;
  root["model_id"] = manifest.model_id;
  root["num_layers"] = manifest.num_layers;
  root["num_heads"] = manifest.num_heads;
  root["hidden_dim"] = manifest.hidden_dim;
  json samples = json::array();
  for (const auto& r : manifest.samples) {
    json s;
    s["id"] = r.id;
    s["text"] = r.text;
    s["language"] = r.language;
    s["construction"] = std::string(to_string(r.construction));
    s["role"] = std::string(to_string(r.role));
    s["pair_id"] = r.pair_id;
    s["token_count"] = r.token_count;
    s["attention_blob"] = r.attention_blob;
    if (r.hidden_blob) s["hidden_blob"] = *r.hidden_blob;
    samples.push_back(std::move(s));
  }
  root["samples"] = std::move(samples);
  return root.dump(2) + "\n";
}

CaptureBundle load_bundle(const std::filesystem::path& root, const LoadOptions& options) {
  const auto manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  std::ostringstream text;
  text << in.rdbuf();

  std::vector<std::string> warnings;
  CaptureManifest manifest = parse_manifest(text.str(), &warnings);

  const std::size_t L = manifest.num_layers;
  const std::size_t H = manifest.num_heads;
  const std::size_t d = manifest.hidden_dim;

  std::vector<CaptureSample> samples;
  samples.reserve(manifest.samples.size());
  for (const auto& record : manifest.samples) {
    const std::size_t N = record.token_count;
    CaptureSample sample;
    sample.record = record;
    sample.attention = AttentionTensor(L, H, N, read_f32_blob(root / record.attention_blob, L * H * N * N));

    const auto report = validate_attention(sample.attention, options.stochastic_tolerance);
    if (!report.ok()) {
      std::ostringstream msg;
      msg << "sample '" << record.id << "': attention is not row-stochastic at tolerance "
          << options.stochastic_tolerance << " (" << report.row_violations.size() << " row violations, "
          << report.negative_entries.size() << " negative entries";
      if (!report.row_violations.empty()) {
        const auto& v = report.row_violations.front();
        msg << "; first at layer " << v.layer << " head " << v.head << " row " << v.row << " sum " << v.row_sum;
      }
      msg << ")";
      throw ValidationError(msg.str());
    }

    if (record.hidden_blob) {
      auto values = read_f32_blob(root / *record.hidden_blob, (L + 1) * N * d);
      if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
        throw ValidationError("sample '" + record.id + "': hidden states contain NaN or Inf");
      }
      sample.hidden = HiddenTensor(L + 1, N, d, std::move(values));
    }
    samples.push_back(std::move(sample));
  }
  return CaptureBundle(std::move(manifest), std::move(samples), std::move(warnings));
}

void save_bundle(const CaptureBundle& bundle, const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (const auto& sample : bundle.samples()) {
    write_f32_blob(root / sample.record.attention_blob, sample.attention.values());
    if (sample.record.hidden_blob && sample.hidden) {
      write_f32_blob(root / *sample.record.hidden_blob, sample.hidden->values());
    }
  }
  // Manifest last so a partially written bundle is never loadable.
  std::ofstream out(root / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (root / "manifest.json").string());
  out << serialize_manifest(bundle.manifest());
  if (!out) throw IoError("write failed on " + (root / "manifest.json").string());
}

ValidationReport validate_attention(const AttentionTensor& tensor, double tolerance) {
  ValidationReport report;
  const std::size_t N = tensor.tokens();
  for (std::size_t l = 0; l < tensor.layers(); ++l) {
    for (std::size_t h = 0; h < tensor.heads(); ++h) {
      for (std::size_t i = 0; i < N; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
          const double a = tensor.at(l, h, i, j);
          sum += a;
          if (a < 0.0) report.negative_entries.push_back({l, h, i, j, a});
        }
        if (!(std::abs(sum - 1.0) <= tolerance)) report.row_violations.push_back({l, h, i, sum});
      }
    }
  }
  return report;
}

Pairing pair_samples(const CaptureBundle& bundle) {
  struct Group {
    std::vector<const CaptureSample*> canonical;
    std::vector<const CaptureSample*> stressed;
  };
  std::map<std::string, Group> groups;
  for (const auto& s : bundle.samples()) {
    auto& g = groups[s.record.pair_id];
    (s.record.role == Role::canonical ? g.canonical : g.stressed).push_back(&s);
  }

  const auto by_id = [](const CaptureSample* a, const CaptureSample* b) { return a->record.id < b->record.id; };

  Pairing out;
  for (auto& [pair_id, g] : groups) {
    if (g.canonical.size() > 1) {
      throw ValidationError("pair_id '" + pair_id + "' has " + std::to_string(g.canonical.size()) +
                            " canonical records");
    }
    std::sort(g.stressed.begin(), g.stressed.end(), by_id);
    if (g.canonical.size() == 1 && !g.stressed.empty()) {
      for (const auto* s : g.stressed) out.pairs.push_back({std::cref(*g.canonical.front()), std::cref(*s)});
    } else {
      for (const auto* s : g.canonical) out.orphans.emplace_back(*s);
      for (const auto* s : g.stressed) out.orphans.emplace_back(*s);
    }
  }
  std::sort(out.orphans.begin(), out.orphans.end(),
            [](const CaptureSample& a, const CaptureSample& b) { return a.record.id < b.record.id; });
  return out;
}

}  // namespace spectral_scope
