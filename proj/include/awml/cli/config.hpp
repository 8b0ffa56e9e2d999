#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "awml/harness/run.hpp"

namespace awml::cli {

struct Settings {
  harness::RunConfig run;
  std::string out = "runs";  // parent directory of run directories

  friend bool operator==(const Settings&, const Settings&) = default;
};

// Reads a YAML document with sections world, room, world_model, dqn,
// curiosity, harness and io. `overrides` are "section.key=value" strings
// applied on top of the file. Unknown keys and bad values raise
// ConfigError naming the key and, for file input, its line.
Settings parse_settings(const std::string& text, std::span<const std::string> overrides = {},
                        const std::string& source = "<config>");
Settings load_settings(const std::filesystem::path& path, std::span<const std::string> overrides = {});

// Every field, including defaults; parse_settings(emit_settings(s)) == s.
std::string emit_settings(const Settings& settings);

}  // namespace awml::cli
