#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace storyplan {

/// Built-in defaults for every configuration key.
nlohmann::json default_run_config();

/// Applies "a.b.c=value" to `config`; the value is parsed as JSON when
/// possible and kept as a string otherwise. Throws ValidationError on a
/// malformed assignment.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Command-line entry point. Returns 0 on success, 2 on validation errors
/// and 3 on stage failures; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace storyplan
