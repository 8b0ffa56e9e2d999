// Criteria 8 and 10: scaled Noise-world sweep. Completed runs are cached in
// the sweep directory, so only missing cells are simulated.
//
// usage: acceptance_long <config.yaml> <sweep dir>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "awml/cli/commands.hpp"
#include "awml/cli/config.hpp"
#include "awml/harness/analysis.hpp"

using namespace awml;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds = 10;
constexpr std::uint64_t kDirectionalSeeds = 5;

struct Condition {
  std::vector<double> end_losses;
  std::vector<double> ratios;
};

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d %s: %s (%s)\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: acceptance_long <config.yaml> <sweep dir>\n");
    return 2;
  }
  const cli::Settings base = cli::load_settings(argv[1]);
  const fs::path sweep = argv[2];
  const cur::SignalKind kinds[] = {cur::SignalKind::GammaProgress, cur::SignalKind::Adversarial,
                                   cur::SignalKind::Random};

  std::vector<fs::path> dirs;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    for (auto k : kinds) {
      cli::Settings s = base;
      s.run.curiosity.kind = k;
      s.run.seed = seed;
      fs::path dir = cli::find_completed_run(s.run, sweep);
      if (!dir.empty() && cli::load_settings(dir / "config.yaml").run != s.run) {
        std::fprintf(stderr, "%s was produced by a different config; rerun with a fresh sweep dir\n",
                     dir.string().c_str());
        return 1;
      }
      if (dir.empty()) {
        std::fprintf(stderr, "running %s\n", cli::run_prefix(s.run).c_str());
        dir = cli::execute_run(s, sweep);
      }
      dirs.push_back(dir);
    }
  }

  std::map<cur::SignalKind, Condition> first5;
  std::vector<harness::IndicatorRun> population;
  for (const auto& d : dirs) {
    const cli::LoadedRun run = cli::load_run(d);
    const auto& cfg = run.settings.run;
    std::vector<double> losses;
    harness::IndicatorRun ir;
    ir.behavior = std::string(env::behavior_name(cfg.world.animate));
    for (const auto& p : run.validation) {
      losses.push_back(p.scalar);
      ir.validation_steps.push_back(p.step);
      ir.validation_losses.push_back(p.scalar);
    }
    const std::size_t animate_slot = run.record.slot_behavior.size() - 1;
    std::uint32_t animate = 0;
    for (std::size_t a = 0; a < run.record.agent_slot.size(); ++a) {
      if (run.record.agent_slot[a] == animate_slot) animate |= 1u << a;
    }
    for (std::uint32_t bits : run.record.visibility) ir.animate_visible.push_back((bits & animate) ? 1 : 0);
    population.push_back(std::move(ir));
    if (cfg.seed <= kDirectionalSeeds) {
      Condition& c = first5[cfg.curiosity.kind];
      c.end_losses.push_back(harness::end_loss(losses));
      c.ratios.push_back(harness::animate_ratio(run.record).value);
    }
  }

  const Condition& gamma = first5[cur::SignalKind::GammaProgress];
  const Condition& adv = first5[cur::SignalKind::Adversarial];
  const Condition& rnd = first5[cur::SignalKind::Random];
  const double gamma_loss = harness::mean(gamma.end_losses);
  const double random_loss = harness::mean(rnd.end_losses);
  const bool a = gamma_loss < random_loss;
  const auto adv_label = harness::classify_failure(adv.ratios, rnd.ratios, env::WorldKind::Noise);
  const bool b = adv_label == harness::FailureLabel::NoiseFixation;
  const double rnd_mean = harness::mean(rnd.ratios);
  const double rnd_sd = harness::sample_sd(rnd.ratios);
  const double gamma_ratio = harness::mean(gamma.ratios);
  const bool c = gamma_ratio > rnd_mean + 2.0 * rnd_sd;
  report(8, "noise-world direction", a && b && c,
         fmt::format("(a) end loss gamma {:.4f} vs random {:.4f}: {}; (b) adversarial ratio {:.3f} vs random "
                     "{:.3f} +- {:.3f} -> {}: {}; (c) gamma ratio {:.3f} vs threshold {:.3f}: {}",
                     gamma_loss, random_loss, a ? "ok" : "no", harness::mean(adv.ratios), rnd_mean, rnd_sd,
                     harness::failure_name(adv_label), b ? "ok" : "no", gamma_ratio, rnd_mean + 2.0 * rnd_sd,
                     c ? "ok" : "no"));

  std::string table;
  bool found = false;
  for (std::uint64_t t = base.run.validate_every; 2 * t < base.run.total_steps; t += base.run.validate_every) {
    const auto acc = harness::early_indicator(population, t, 10);
    table += fmt::format("{}T={}: perf {:.3f} att {:.3f}", table.empty() ? "" : "; ", t, acc.performance,
                         acc.attention);
    found = found || acc.attention >= acc.performance;
  }
  report(10, "early-indicator direction", found,
         fmt::format("{} runs over 3 signals; {}", population.size(), table));
  return a && b && c && found ? 0 : 1;
}
