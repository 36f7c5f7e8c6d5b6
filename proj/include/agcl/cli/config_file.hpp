#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "agcl/train/config.hpp"

namespace agcl::cli {

/// Sections of a run config file. Keys before the first section header are
/// top-level (only `seed`).
inline const std::set<std::string> kAllSections{"phantom", "sampling", "model",
                                                "stage1",  "stage2",   "eval"};

/// Strict INI-style parse: `[section]` headers, `key = value` lines, `#` or
/// `;` comments. Unknown sections or keys, duplicates, malformed or
/// out-of-range values and missing required sections raise ValidationError
/// naming [section].key and the line. Absent keys keep their defaults.
train::RunConfig parse_config(const std::string& text, const std::string& origin,
                              const std::set<std::string>& required = kAllSections);
train::RunConfig load_config(const std::filesystem::path& path,
                             const std::set<std::string>& required = kAllSections);

/// Every key with its value, in a form parse_config reads back to an
/// identical RunConfig (doubles printed with 17 significant digits).
std::string config_echo(const train::RunConfig& cfg);

/// Comma-separated helpers shared with the ablation grid parser.
std::vector<double> parse_doubles(const std::string& value);
std::set<int> parse_modalities(const std::string& value);
std::string format_double(double v);

}  // namespace agcl::cli
