#include "awml/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "awml/common/error.hpp"
#include "awml/harness/analysis.hpp"

namespace awml::cli {

namespace fs = std::filesystem;
using harness::RunConfig;

namespace {

constexpr const char* kPartial = ".partial";
constexpr const char* kWorldRow = "world";
constexpr std::size_t kDifferentialWindow = 500;
constexpr std::size_t kIndicatorRuns = 30;
constexpr std::size_t kIndicatorSignals = 3;
constexpr std::size_t kBuckets = 10;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string format_event(const harness::StepEvent& e) {
  std::string visible;
  for (std::size_t i = 0; i < e.visible.size(); ++i) {
    if (i) visible += ',';
    visible += std::to_string(e.visible[i]);
  }
  return fmt::format("{{\"t\":{},\"action\":{},\"eps\":{},\"reward\":{},\"visible_agents\":[{}],\"state\":\"{}\"}}\n",
                     e.t, e.action, e.eps, e.reward, visible, hex64(e.state));
}

env::Env fresh_env(const RunConfig& config) {
  env::WorldSpec world = config.world;
  world.seed = config.seed;
  return env::Env::reset(world, config.room, config.behavior);
}

void fill_layout(harness::RunRecord& record, const env::Env& e) {
  record.agent_slot.clear();
  record.slot_behavior.clear();
  for (std::size_t a = 0; a < e.n_agents(); ++a) record.agent_slot.push_back(e.slot_of_agent(a));
  for (std::size_t s = 0; s < e.n_slots(); ++s) record.slot_behavior.emplace_back(env::behavior_name(e.slot_spec(s).kind));
  record.visible_steps.assign(e.n_agents(), 0);
}

bool is_completed(const fs::path& dir) {
  return fs::is_directory(dir) && !dir.filename().string().ends_with(kPartial) && fs::exists(dir / "config.yaml") &&
         fs::exists(dir / "metrics.csv") && fs::exists(dir / "events.jsonl") && fs::is_directory(dir / "checkpoints");
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw ConfigError("bad seed range " + item);
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list entry '" + item + "'");
    }
  }
  return seeds;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::string run_prefix(const RunConfig& config) {
  return fmt::format("{}-{}-{}-seed{}", cur::signal_name(config.curiosity.kind), env::world_name(config.world.kind),
                     env::behavior_name(config.world.animate), config.seed);
}

fs::path execute_run(const Settings& settings, const fs::path& parent) {
  settings.run.validate();
  fs::create_directories(parent);
  const std::string base = run_prefix(settings.run) + "-" + utc_timestamp();
  std::string name = base;
  for (int k = 2; fs::exists(parent / name) || fs::exists(parent / (name + kPartial)); ++k) {
    name = base + "-" + std::to_string(k);
  }
  const fs::path partial = parent / (name + kPartial);
  const fs::path final_dir = parent / name;
  fs::create_directories(partial / "checkpoints");

  {
    std::ofstream cfg(partial / "config.yaml");
    cfg << emit_settings(settings);
  }
  std::ofstream metrics(partial / "metrics.csv");
  metrics << "step,behavior,validation_loss\n";
  std::ofstream events(partial / "events.jsonl");

  harness::RunHooks hooks;
  hooks.on_event = [&](const harness::StepEvent& e) { events << format_event(e); };
  hooks.on_validation = [&](const harness::ValidationPoint& p) {
    for (const auto& l : p.losses) metrics << p.step << ',' << l.behavior << ',' << num(l.loss) << '\n';
    metrics << p.step << ',' << kWorldRow << ',' << num(p.scalar) << '\n';
    metrics.flush();
  };
  hooks.on_checkpoint = [&](std::uint64_t step, const wm::WorldModel& model, const ctl::QNet& q) {
    const fs::path dir = partial / "checkpoints";
    wm::save_world_model(dir / fmt::format("step{}.world_model", step), model);
    ctl::save_qnet(dir / fmt::format("step{}.qnet", step), q);
  };
  harness::run_awml(settings.run, hooks);
  metrics.close();
  events.close();
  if (!metrics || !events) throw Error("failed writing artifacts under " + partial.string());
  fs::rename(partial, final_dir);
  return final_dir;
}

fs::path find_completed_run(const RunConfig& config, const fs::path& parent) {
  if (!fs::is_directory(parent)) return {};
  const std::string prefix = run_prefix(config) + "-";
  std::vector<fs::path> hits;
  for (const auto& entry : fs::directory_iterator(parent)) {
    if (entry.path().filename().string().starts_with(prefix) && is_completed(entry.path())) hits.push_back(entry.path());
  }
  if (hits.empty()) return {};
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.dir = dir;
  run.settings = load_settings(dir / "config.yaml");

  std::ifstream metrics(dir / "metrics.csv");
  if (!metrics) throw Error("missing metrics.csv in " + dir.string());
  std::string line;
  std::getline(metrics, line);
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw Error("malformed metrics row: " + line);
    const std::uint64_t step = std::stoull(line.substr(0, c1));
    const std::string behavior = line.substr(c1 + 1, c2 - c1 - 1);
    const double loss = std::stod(line.substr(c2 + 1));
    if (run.validation.empty() || run.validation.back().step != step) run.validation.push_back({step, {}, 0.0});
    if (behavior == kWorldRow) {
      run.validation.back().scalar = loss;
    } else {
      run.validation.back().losses.push_back({behavior, loss});
    }
  }

  fill_layout(run.record, fresh_env(run.settings.run));
  std::ifstream events(dir / "events.jsonl");
  if (!events) throw Error("missing events.jsonl in " + dir.string());
  while (std::getline(events, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    std::uint32_t bits = 0;
    for (const auto& a : j.at("visible_agents")) {
      const auto agent = a.get<std::size_t>();
      if (agent >= run.record.visible_steps.size()) throw Error("event names an unknown agent");
      bits |= 1u << agent;
      ++run.record.visible_steps[agent];
    }
    run.record.visibility.push_back(bits);
  }
  return run;
}

std::vector<LoadedRun> load_runs(const fs::path& dir) {
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (is_completed(entry.path())) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  return runs;
}

std::vector<std::string> analyze_sweep(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  const auto runs = load_runs(dir);
  if (runs.empty()) throw ConfigError("no completed runs under " + dir.string());
  std::vector<std::string> warnings;

  struct Condition {
    std::vector<double> end_losses;
    std::vector<double> ratios;
    std::size_t runs = 0;
  };
  // (world, behavior) -> signal -> condition
  std::map<std::pair<std::string, std::string>, std::map<std::string, Condition>> table;
  std::ofstream series(dir / "attention_series.csv");
  series << "signal,world,behavior,seed,window_start,differential_all,differential_noise\n";
  for (const auto& r : runs) {
    const RunConfig& c = r.settings.run;
    const std::string signal(cur::signal_name(c.curiosity.kind));
    auto& cond = table[{std::string(env::world_name(c.world.kind)), std::string(env::behavior_name(c.world.animate))}][signal];
    ++cond.runs;
    std::vector<double> scalars;
    for (const auto& p : r.validation) scalars.push_back(p.scalar);
    if (scalars.size() >= 5) cond.end_losses.push_back(harness::end_loss(scalars));
    if (!r.record.visibility.empty()) {
      cond.ratios.push_back(harness::animate_ratio(r.record).value);
      const auto all = harness::attention_differential(r.record, kDifferentialWindow, harness::Reference::AllOther);
      const auto noise = harness::attention_differential(r.record, kDifferentialWindow, harness::Reference::NoiseOnly);
      for (std::size_t w = 0; w < all.size(); ++w) {
        series << signal << ',' << env::world_name(c.world.kind) << ',' << env::behavior_name(c.world.animate) << ','
               << c.seed << ',' << w * kDifferentialWindow << ',' << num(all[w]) << ',' << num(noise[w]) << '\n';
      }
    }
  }

  std::ofstream summary(dir / "summary.csv");
  summary << "signal,world,behavior,runs,end_loss,end_loss_sd,end_performance,ratio_vs_random,attention_ratio,"
             "attention_ratio_sd,failure\n";
  std::ofstream failures(dir / "failure_modes.csv");
  failures << "signal,world,behavior,failure\n";
  const std::string random_name(cur::signal_name(cur::SignalKind::Random));
  for (const auto& [key, signals] : table) {
    const auto& [world, behavior] = key;
    const auto rnd = signals.find(random_name);
    const Condition* random = rnd == signals.end() ? nullptr : &rnd->second;
    if (!random) warnings.push_back(fmt::format("no random condition for {}/{}: ratios omitted", world, behavior));
    for (const auto& [signal, cond] : signals) {
      std::string end, end_sd, perf, ratio, att, att_sd, label;
      if (!cond.end_losses.empty()) {
        const double m = harness::mean(cond.end_losses);
        end = num(m);
        end_sd = num(harness::sample_sd(cond.end_losses));
        perf = num(1.0 / m);
        if (random && !random->end_losses.empty()) {
          ratio = num(harness::ratio_vs_random(m, harness::mean(random->end_losses)));
        }
      }
      if (!cond.ratios.empty()) {
        att = num(harness::mean(cond.ratios));
        att_sd = num(harness::sample_sd(cond.ratios));
      }
      if (random) {
        try {
          label = harness::failure_name(harness::classify_failure(cond.ratios, random->ratios, env::parse_world(world)));
        } catch (const AnalysisError&) {
          label = "insufficient_seeds";
        }
        failures << signal << ',' << world << ',' << behavior << ',' << label << '\n';
      }
      summary << signal << ',' << world << ',' << behavior << ',' << cond.runs << ',' << end << ',' << end_sd << ','
              << perf << ',' << ratio << ',' << att << ',' << att_sd << ',' << label << '\n';
    }
  }

  std::set<std::string> signal_set;
  for (const auto& r : runs) signal_set.emplace(cur::signal_name(r.settings.run.curiosity.kind));
  const fs::path indicator_path = dir / "early_indicator.csv";
  const bool same_grid = std::all_of(runs.begin(), runs.end(), [&](const LoadedRun& r) {
    return r.settings.run.total_steps == runs.front().settings.run.total_steps &&
           r.settings.run.validate_every == runs.front().settings.run.validate_every;
  });
  if (runs.size() >= kIndicatorRuns && signal_set.size() >= kIndicatorSignals && same_grid) {
    std::vector<harness::IndicatorRun> pop;
    for (const auto& r : runs) {
      harness::IndicatorRun ir;
      ir.behavior = std::string(env::behavior_name(r.settings.run.world.animate));
      for (const auto& p : r.validation) {
        ir.validation_steps.push_back(p.step);
        ir.validation_losses.push_back(p.scalar);
      }
      std::uint32_t animate = 0;
      const std::size_t slot = r.record.slot_behavior.size() - 1;
      for (std::size_t a = 0; a < r.record.agent_slot.size(); ++a) {
        if (r.record.agent_slot[a] == slot) animate |= 1u << a;
      }
      for (std::uint32_t bits : r.record.visibility) ir.animate_visible.push_back((bits & animate) ? 1 : 0);
      pop.push_back(std::move(ir));
    }
    try {
      std::ostringstream out;
      out << "horizon,acc_performance,acc_attention\n";
      const auto& hc = runs.front().settings.run;
      for (std::uint64_t t = hc.validate_every; 2 * t < hc.total_steps; t += hc.validate_every) {
        const auto acc = harness::early_indicator(pop, t, kBuckets);
        out << t << ',' << num(acc.performance) << ',' << num(acc.attention) << '\n';
      }
      std::ofstream(indicator_path) << out.str();
    } catch (const Error& e) {
      warnings.push_back(std::string("early indicator skipped: ") + e.what());
    }
  } else {
    warnings.push_back("early indicator skipped: needs 30 runs over 3 signals on one schedule");
  }
  return warnings;
}

ReplayResult replay_events(const fs::path& events, const Settings& settings) {
  std::ifstream in(events);
  if (!in) throw ConfigError("cannot read events file " + events.string());
  env::Env e = fresh_env(settings.run);
  ReplayResult result;
  std::string line;
  while (std::getline(in, line)) {
    const bool last = in.eof();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      if (last) {
        result.truncated = true;
        break;
      }
      result.ok = false;
      result.divergence = result.verified + 1;
      result.message = fmt::format("malformed event at step {}", result.divergence);
      return result;
    }
    const std::uint64_t t = result.verified + 1;
    const auto fail = [&](const std::string& what) {
      result.ok = false;
      result.divergence = t;
      result.message = fmt::format("divergence at step {}: {}", t, what);
      return result;
    };
    if (j.value("t", std::uint64_t{0}) != t) return fail("step index out of sequence");
    const auto action = j.at("action").get<std::size_t>();
    if (action >= env::kNumActions) return fail("action out of range");
    e.step(env::action_from_index(action), e.zone_centres());
    if (j.at("state").get<std::string>() != hex64(e.state_digest())) return fail("environment state differs");
    std::vector<std::size_t> visible;
    for (std::size_t a = 0; a < e.n_agents(); ++a) {
      if (e.in_view()[a]) visible.push_back(a);
    }
    if (j.at("visible_agents").get<std::vector<std::size_t>>() != visible) return fail("visible agents differ");
    ++result.verified;
  }
  if (result.verified < settings.run.total_steps) result.truncated = true;
  result.message = result.truncated
                       ? fmt::format("log ends early; verified the first {} of {} steps", result.verified,
                                     settings.run.total_steps)
                       : fmt::format("verified {} steps", result.verified);
  return result;
}

int cli_main(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active world-model learning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "runs";
  std::string seeds_text, signals_text;
  std::size_t jobs = 1;
  std::string target, replay_config;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML configuration file")->required();
    sub->add_option("--set", overrides, "Override one key, section.key=value (repeatable)");
    sub->add_option("--out", out_dir, "Parent directory for run directories");
  };
  CLI::App* run = app.add_subcommand("run", "Run one experiment");
  add_common(run);
  CLI::App* sweep = app.add_subcommand("sweep", "Run every (signal, seed) cell");
  add_common(sweep);
  sweep->add_option("--seeds", seeds_text, "Seeds, e.g. 1-5 or 1,3,7")->required();
  sweep->add_option("--signals", signals_text, "Comma-separated signal names");
  sweep->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  CLI::App* analyze = app.add_subcommand("analyze", "Summarize a sweep directory");
  analyze->add_option("dir", target, "Sweep directory")->required();
  CLI::App* replay = app.add_subcommand("replay", "Re-simulate a run from its event log");
  replay->add_option("events", target, "events.jsonl or a run directory")->required();
  replay->add_option("--config", replay_config, "Run configuration (defaults to the run's config.yaml)");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (const char* env_out = std::getenv("AWML_OUT"); env_out && *env_out) out_dir = env_out;

  try {
    if (*run) {
      Settings s = load_settings(config_path, overrides);
      if (!run->count("--out") && !std::getenv("AWML_OUT")) out_dir = s.out;
      const fs::path dir = execute_run(s, out_dir);
      out << dir.string() << '\n';
      return kExitOk;
    }
    if (*sweep) {
      const Settings base = load_settings(config_path, overrides);
      if (!sweep->count("--out") && !std::getenv("AWML_OUT")) out_dir = base.out;
      const auto seeds = parse_seeds(seeds_text);
      if (seeds.empty()) throw ConfigError("--seeds: empty seed list");
      std::vector<cur::SignalKind> kinds;
      for (const auto& name : split_list(signals_text)) kinds.push_back(cur::parse_signal(name));
      if (kinds.empty()) kinds.push_back(base.run.curiosity.kind);

      std::vector<Settings> cells;
      for (auto k : kinds) {
        for (auto seed : seeds) {
          Settings s = base;
          s.run.curiosity.kind = k;
          s.run.seed = seed;
          cells.push_back(s);
        }
      }
      std::vector<std::string> status(cells.size()), where(cells.size());
      std::atomic<std::size_t> next{0};
      std::mutex log_mutex;
      auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          const fs::path done = find_completed_run(cells[i].run, out_dir);
          if (!done.empty()) {
            status[i] = "ok";
            where[i] = done.filename().string();
            continue;
          }
          try {
            where[i] = execute_run(cells[i], out_dir).filename().string();
            status[i] = "ok";
          } catch (const std::exception& ex) {
            status[i] = "failed";
            std::lock_guard lock(log_mutex);
            err << run_prefix(cells[i].run) << ": " << ex.what() << '\n';
          }
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < std::min(jobs, cells.size()); ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();

      std::ofstream index(fs::path(out_dir) / "sweep_index.csv");
      index << "signal,seed,status,run_dir\n";
      bool failed = false;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        index << cur::signal_name(cells[i].run.curiosity.kind) << ',' << cells[i].run.seed << ',' << status[i] << ','
              << where[i] << '\n';
        failed = failed || status[i] != "ok";
      }
      return failed ? kExitFailure : kExitOk;
    }
    if (*analyze) {
      for (const auto& w : analyze_sweep(target)) err << "warning: " << w << '\n';
      return kExitOk;
    }
    if (*replay) {
      fs::path events = target;
      if (fs::is_directory(events)) events /= "events.jsonl";
      const fs::path cfg = replay_config.empty() ? events.parent_path() / "config.yaml" : fs::path(replay_config);
      const Settings s = load_settings(cfg);
      const ReplayResult r = replay_events(events, s);
      (r.ok ? out : err) << r.message << '\n';
      return r.ok ? kExitOk : kExitFailure;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace awml::cli
