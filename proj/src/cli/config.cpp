#include "awml/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "awml/common/error.hpp"

namespace awml::cli {

namespace {

const char* const kSections[] = {"world", "room", "world_model", "dqn", "curiosity", "harness", "io"};

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> read;
  std::function<std::string()> write;
};

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected a number, got '" + text + "'");
  return value;
}

template <typename T>
Field bind_field(std::string section, std::string key, T& ref) {
  Field f{std::move(section), std::move(key), nullptr, nullptr};
  if constexpr (std::is_same_v<T, bool>) {
    f.read = [&ref](const std::string& s) {
      if (s == "true") {
        ref = true;
      } else if (s == "false") {
        ref = false;
      } else {
        throw ConfigError("expected true or false, got '" + s + "'");
      }
    };
    f.write = [&ref] { return std::string(ref ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    f.read = [&ref](const std::string& s) { ref = s; };
    f.write = [&ref] { return ref; };
  } else {
    f.read = [&ref](const std::string& s) { ref = parse_number<T>(s); };
    f.write = [&ref] { return fmt::format("{}", ref); };
  }
  return f;
}

template <typename E, typename Parse, typename Name>
Field bind_enum(std::string section, std::string key, E& ref, Parse parse, Name name) {
  return {std::move(section), std::move(key), [&ref, parse](const std::string& s) { ref = parse(s); },
          [&ref, name] { return std::string(name(ref)); }};
}

std::vector<Field> fields(Settings& s) {
  harness::RunConfig& r = s.run;
  env::BehaviorParams& b = r.behavior;
  return {
      bind_enum("world", "kind", r.world.kind, env::parse_world, env::world_name),
      bind_enum("world", "animate", r.world.animate, env::parse_behavior, env::behavior_name),
      bind_field("world", "periodic_speed", b.periodic_speed),
      bind_field("world", "noise_step", b.noise_step),
      bind_field("world", "reach_speed", b.reach_speed),
      bind_field("world", "reach_arrival", b.reach_arrival),
      bind_field("world", "reach_relocate_every", b.reach_relocate_every),
      bind_field("world", "chaser_speed", b.chaser_speed),
      bind_field("world", "runner_speed", b.runner_speed),
      bind_field("world", "runner_boundary", b.runner_boundary),
      bind_field("world", "runner_escape_min_dist", b.runner_escape_min_dist),
      bind_field("world", "peekaboo_speed", b.peekaboo_speed),
      bind_field("world", "stare_steps", b.stare_steps),
      bind_field("world", "peek_after", b.peek_after),
      bind_field("world", "mimic_delay", b.mimic_delay),
      bind_field("world", "mimic_noise", b.mimic_noise),
      bind_field("room", "half_extent", r.room.half_extent),
      bind_field("room", "fov_deg", r.room.fov_deg),
      bind_field("room", "zone_half_angle_deg", r.room.zone_half_angle_deg),
      bind_field("room", "r_min", r.room.r_min),
      bind_field("room", "r_max", r.room.r_max),
      bind_field("world_model", "tau_in", r.wm.tau_in),
      bind_field("world_model", "tau_out", r.wm.tau_out),
      bind_field("world_model", "hidden_single", r.wm.hidden_single),
      bind_field("world_model", "hidden_multi", r.wm.hidden_multi),
      bind_field("world_model", "mlp_hidden", r.wm.mlp_hidden),
      bind_field("world_model", "coord_scale", r.wm.coord_scale),
      bind_field("world_model", "squared", r.wm.squared),
      bind_field("world_model", "entangled", r.wm.entangled),
      bind_field("world_model", "batch_size", r.wm.batch_size),
      bind_field("world_model", "lr", r.wm.lr),
      bind_field("dqn", "discount", r.dqn.discount),
      bind_field("dqn", "nstep", r.dqn.nstep),
      bind_field("dqn", "batch_size", r.dqn.batch_size),
      bind_field("dqn", "target_sync", r.dqn.target_sync),
      bind_field("dqn", "capacity", r.dqn.capacity),
      bind_field("dqn", "learn_start", r.dqn.learn_start),
      bind_field("dqn", "hidden", r.dqn.hidden),
      bind_field("dqn", "history", r.dqn.history),
      bind_field("dqn", "lr", r.dqn.lr),
      bind_field("dqn", "eps_start", r.dqn.eps_start),
      bind_field("dqn", "eps_min", r.dqn.eps_min),
      bind_field("dqn", "eps_decay", r.dqn.eps_decay),
      bind_enum("curiosity", "signal", r.curiosity.kind, cur::parse_signal, cur::signal_name),
      bind_field("curiosity", "gamma", r.curiosity.gamma),
      bind_field("curiosity", "warm_start_at", r.curiosity.warm_start_at),
      bind_field("curiosity", "delta", r.curiosity.delta),
      bind_field("curiosity", "rnd_hidden", r.curiosity.rnd_hidden),
      bind_field("curiosity", "rnd_output", r.curiosity.rnd_output),
      bind_field("curiosity", "rnd_lr", r.curiosity.rnd_lr),
      bind_field("curiosity", "ensemble_size", r.curiosity.ensemble_size),
      bind_field("curiosity", "adversarial_include_ce", r.curiosity.adversarial_include_ce),
      bind_field("harness", "total_steps", r.total_steps),
      bind_field("harness", "steps_per_round", r.steps_per_round),
      bind_field("harness", "grad_steps_per_round", r.grad_steps_per_round),
      bind_field("harness", "validate_every", r.validate_every),
      bind_field("harness", "validation_steps", r.validation_steps),
      bind_field("harness", "checkpoint_every", r.checkpoint_every),
      bind_field("harness", "seed", r.seed),
      bind_field("io", "out", s.out),
  };
}

Field* find_field(std::vector<Field>& all, const std::string& section, const std::string& key) {
  for (auto& f : all) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

std::string where(const std::string& source, const YAML::Node& node) {
  const auto mark = node.Mark();
  if (mark.is_null()) return source;
  return fmt::format("{}:{}", source, mark.line + 1);
}

void apply(std::vector<Field>& all, const std::string& section, const std::string& key, const std::string& value,
           const std::string& location) {
  Field* f = find_field(all, section, key);
  if (!f) throw ConfigError(fmt::format("{}: unknown key '{}.{}'", location, section, key));
  try {
    f->read(value);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}.{}: {}", location, section, key, e.what()));
  }
}

}  // namespace

Settings parse_settings(const std::string& text, std::span<const std::string> overrides, const std::string& source) {
  Settings s;
  auto all = fields(s);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.mark.line + 1, e.msg));
  }
  if (root.IsDefined() && !root.IsNull()) {
    if (!root.IsMap()) throw ConfigError(source + ": top level must be a mapping of sections");
    for (const auto& sec : root) {
      const std::string section = sec.first.as<std::string>();
      if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections)) {
        throw ConfigError(fmt::format("{}: unknown section '{}'", where(source, sec.first), section));
      }
      if (sec.second.IsNull()) continue;
      if (!sec.second.IsMap()) throw ConfigError(fmt::format("{}: section '{}' must be a mapping", where(source, sec.first), section));
      for (const auto& kv : sec.second) {
        if (!kv.second.IsScalar()) {
          throw ConfigError(fmt::format("{}: {}.{} must be a scalar", where(source, kv.first), section,
                                        kv.first.as<std::string>()));
        }
        apply(all, section, kv.first.as<std::string>(), kv.second.Scalar(), where(source, kv.first));
      }
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("--set " + o + ": expected section.key=value");
    }
    apply(all, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1), "--set " + o);
  }
  try {
    s.run.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return s;
}

Settings load_settings(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_settings(text.str(), overrides, path.string());
}

std::string emit_settings(const Settings& settings) {
  Settings copy = settings;
  auto all = fields(copy);
  std::string out;
  std::string current;
  for (const auto& f : all) {
    if (f.section != current) {
      current = f.section;
      out += current + ":\n";
    }
    std::string value = f.write();
    if (f.section == "io") value = YAML::Dump(YAML::Node(value));
    out += fmt::format("  {}: {}\n", f.key, value);
  }
  return out;
}

}  // namespace awml::cli
