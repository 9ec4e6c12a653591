#include "spectral_scope/dat_format.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spectral_scope/error.hpp"

namespace spectral_scope {

std::string format_dat_value(double value) {
  char buf[64];
  if (value == 0.0 || std::abs(value) >= 0.1 || !std::isfinite(value)) {
    std::snprintf(buf, sizeof buf, "%.6f", value == 0.0 ? 0.0 : value);
  } else {
    std::snprintf(buf, sizeof buf, "%.5e", value);
  }
  return buf;
}

std::string render_dat(std::span<const double> values, std::span<const std::string> header_lines) {
  if (values.empty()) throw ValidationError("emit_dat: empty series");
  std::string out;
  for (const auto& line : header_lines) out += "# " + line + "\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += std::to_string(i + 1) + " " + format_dat_value(values[i]) + "\n";
  }
  return out;
}

void emit_dat(std::span<const double> values, const std::filesystem::path& path,
              std::span<const std::string> header_lines) {
  const std::string text = render_dat(values, header_lines);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed on " + path.string());
}

DatSeries parse_dat(std::string_view text) {
  DatSeries s;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    int layer = 0;
    double value = 0.0;
    if (!(fields >> layer >> value)) {
      throw ValidationError(".dat line " + std::to_string(line_no) + " is not `layer value`");
    }
    s.layers.push_back(layer);
    s.values.push_back(value);
  }
  return s;
}

DatSeries read_dat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_dat(text.str());
}

std::string_view dat_metric_name(Metric metric) noexcept {
  switch (metric) {
    case Metric::fiedler:
      return "fiedlervalue";
    case Metric::hfer_signal:
      return "hfer";
    case Metric::hfer_spectral:
      return "hferspectral";
    case Metric::smoothness:
      return "smoothness";
    case Metric::spectral_entropy:
      return "entropy";
  }
  return "unknown";
}

std::string model_tag(std::string_view model_id) {
  if (const auto slash = model_id.rfind('/'); slash != std::string_view::npos) model_id.remove_prefix(slash + 1);
  std::string tag;
  for (char c : model_id) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '.' || c == '-') {
      tag.push_back(static_cast<char>(std::tolower(u)));
    } else {
      tag.push_back('-');
    }
  }
  return tag.empty() ? "model" : tag;
}

std::string diff_dat_filename(std::string_view model, std::string_view language, Metric metric) {
  return std::string(model) + "_" + std::string(language) + "_diff_" + std::string(dat_metric_name(metric)) + ".dat";
}

}  // namespace spectral_scope
