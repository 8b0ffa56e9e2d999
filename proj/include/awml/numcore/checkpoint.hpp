#pragma once

#include <filesystem>

#include "awml/numcore/param_set.hpp"

namespace awml::num {

// Writes `<stem>.manifest` (text: dtype, byte order, entry names, shapes and
// offsets) and `<stem>.bin` (little-endian IEEE-754 float64, entries
// back to back). Loading reproduces the ParamSet bit for bit.
void save_checkpoint(const std::filesystem::path& stem, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& stem);

}  // namespace awml::num
