#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cfner/protocol.hpp"

namespace cfner {

/// Flat `key = value` text. Values are numbers, booleans, quoted or bare
/// strings, or bracketed lists `[1, 2, 3]`. `#` starts a comment.
std::map<std::string, std::string> parse_config_text(std::istream& in);

/// Sets one ExperimentConfig field from its textual value. Throws
/// ConfigError for unknown keys or unparsable values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

ExperimentConfig load_config(std::istream& in);
ExperimentConfig load_config_file(const std::string& path);

/// Every key accepted by apply_setting.
std::vector<std::string> config_keys();

}  // namespace cfner
