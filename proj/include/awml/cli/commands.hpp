#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "awml/cli/config.hpp"
#include "awml/harness/run.hpp"

namespace awml::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// {signal}-{world}-{behavior}-seed{N}
std::string run_prefix(const harness::RunConfig& config);

// Runs one experiment into a new directory under `parent` and returns it.
// The directory carries a ".partial" suffix until every artifact is written.
std::filesystem::path execute_run(const Settings& settings, const std::filesystem::path& parent);

// Completed run directory under `parent` whose name starts with the
// config's prefix; empty when there is none.
std::filesystem::path find_completed_run(const harness::RunConfig& config, const std::filesystem::path& parent);

struct LoadedRun {
  std::filesystem::path dir;
  Settings settings;
  std::vector<harness::ValidationPoint> validation;
  harness::RunRecord record;  // visibility fields rebuilt from the event log
};

LoadedRun load_run(const std::filesystem::path& dir);
// Every completed run directly under `dir`, ordered by directory name.
std::vector<LoadedRun> load_runs(const std::filesystem::path& dir);

// Writes summary.csv, failure_modes.csv, attention_series.csv and, when the
// population allows it, early_indicator.csv into `dir`. Returns warnings.
std::vector<std::string> analyze_sweep(const std::filesystem::path& dir);

struct ReplayResult {
  bool ok = true;
  std::uint64_t verified = 0;      // events checked
  std::uint64_t divergence = 0;    // step of the first mismatch when !ok
  bool truncated = false;          // the last line was cut short
  std::string message;
};

ReplayResult replay_events(const std::filesystem::path& events, const Settings& settings);

// Entry point shared by the awml executable and the tests. args excludes
// the program name.
int cli_main(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace awml::cli
