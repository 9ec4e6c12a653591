#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spectral_scope/stress.hpp"

namespace spectral_scope {

/// Two-column whitespace table (`layer value`), '#' comment lines, LF endings.
struct DatSeries {
  std::vector<int> layers;
  std::vector<double> values;
};

/// Six significant digits: fixed notation with six decimals when |v| >= 0.1
/// (or v == 0), scientific with five fraction digits otherwise.
std::string format_dat_value(double value);

/// Layers are numbered 1..values.size(). Throws ValidationError on an empty series.
std::string render_dat(std::span<const double> values, std::span<const std::string> header_lines = {});

void emit_dat(std::span<const double> values, const std::filesystem::path& path,
              std::span<const std::string> header_lines = {});

DatSeries parse_dat(std::string_view text);
DatSeries read_dat(const std::filesystem::path& path);

/// Short name used in plot file names ("fiedlervalue", "hfer", ...).
std::string_view dat_metric_name(Metric metric) noexcept;

/// Lower-cased model id with the organisation prefix dropped and anything
/// outside [a-z0-9.-] replaced by '-'.
std::string model_tag(std::string_view model_id);

/// `{model}_{lang}_diff_{metric}.dat`
std::string diff_dat_filename(std::string_view model, std::string_view language, Metric metric);

}  // namespace spectral_scope
