#include "awml/env/behavior.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "awml/common/error.hpp"

namespace awml::env {

namespace {

struct KindName {
  BehaviorKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 11> kKinds = {{
    {BehaviorKind::Static, "static"},
    {BehaviorKind::Periodic, "periodic"},
    {BehaviorKind::Noise, "noise"},
    {BehaviorKind::ReachDet, "reach_det"},
    {BehaviorKind::ReachStoch, "reach_stoch"},
    {BehaviorKind::ChaseDet, "chase_det"},
    {BehaviorKind::ChaseStoch, "chase_stoch"},
    {BehaviorKind::PeekabooDet, "peekaboo_det"},
    {BehaviorKind::PeekabooStoch, "peekaboo_stoch"},
    {BehaviorKind::MimicDet, "mimic_det"},
    {BehaviorKind::MimicStoch, "mimic_stoch"},
}};

constexpr int kMaxRejections = 256;

// Random step of exact length inside `region`.
Vec2 noise_step(Vec2 pos, double step, const Region& region, num::CounterRng& rng) {
  for (int k = 0; k < kMaxRejections; ++k) {
    const double angle = rng.uniform(0.0, 360.0);
    const Vec2 cand = pos + polar(step, angle);
    if (region.contains(cand, 0.0)) return cand;
  }
  return region.clamp(move_toward(pos, region.center(), step));
}

Vec2 reflect(Vec2 p, double center_deg) {
  const double a = 2.0 * center_deg * std::numbers::pi / 180.0;
  return {std::cos(a) * p.x + std::sin(a) * p.y, std::sin(a) * p.x - std::cos(a) * p.y};
}

void require_gaze(const StepContext& ctx, std::size_t n, BehaviorKind kind) {
  if (ctx.gazed.size() != n) {
    throw ContractError(std::string(behavior_name(kind)) + " step needs previous-step gaze flags");
  }
}

void step_runner(const BehaviorSpec& spec, const Layout& lay, BehaviorState& s, Vec2 chaser) {
  const auto& p = spec.params;
  Vec2& runner = s.pos[1];
  if (!s.escape_to && lay.zone.boundary_distance(runner) < p.runner_boundary) {
    if (spec.kind == BehaviorKind::ChaseDet) {
      s.escape_to = *std::max_element(lay.escapes.begin(), lay.escapes.end(), [&](Vec2 a, Vec2 b) {
        return distance(a, chaser) < distance(b, chaser);
      });
    } else {
      for (int k = 0; k < kMaxRejections && !s.escape_to; ++k) {
        const Vec2 cand = lay.zone.sample(s.rngs[1]);
        if (distance(cand, chaser) >= p.runner_escape_min_dist &&
            lay.zone.boundary_distance(cand) >= p.runner_boundary) {
          s.escape_to = cand;
        }
      }
      if (!s.escape_to) {
        s.escape_to = *std::max_element(lay.escapes.begin(), lay.escapes.end(), [&](Vec2 a, Vec2 b) {
          return distance(a, chaser) < distance(b, chaser);
        });
      }
    }
  }
  if (s.escape_to) {
    runner = move_toward(runner, *s.escape_to, p.runner_speed);
    if (runner == *s.escape_to) s.escape_to.reset();
    return;
  }
  Vec2 away = runner - chaser;
  if (norm(away) == 0.0) away = lay.zone.center() - runner;
  if (norm(away) == 0.0) return;
  runner = lay.zone.clamp(runner + (p.runner_speed / norm(away)) * away);
}

void step_peekaboo(const BehaviorSpec& spec, const Layout& lay, BehaviorState& s, bool gazed) {
  const auto& p = spec.params;
  Vec2& pos = s.pos[0];
  switch (s.peek) {
    case PeekPhase::Exposed:
      s.counter = gazed ? s.counter + 1 : 0;
      if (s.counter >= p.stare_steps) {
        s.peek = PeekPhase::Hidden;
        s.counter = 0;
      }
      break;
    case PeekPhase::Hidden:
      if (!gazed) {
        s.peek = PeekPhase::Exposed;
        s.counter = 0;
      } else if (++s.counter >= p.peek_after) {
        s.peek = PeekPhase::Peeking;
        s.counter = 0;
        s.target = spec.kind == BehaviorKind::PeekabooDet ? 0 : s.rngs[0].below(lay.peeks.size());
      }
      break;
    case PeekPhase::Peeking:
      if (!gazed) {
        s.peek = PeekPhase::Exposed;
        s.counter = 0;
      } else if (pos == lay.peeks[s.target]) {
        s.peek = PeekPhase::Hidden;
        s.counter = 0;
      }
      break;
  }
  const Vec2 goal = s.peek == PeekPhase::Exposed  ? lay.exposed
                    : s.peek == PeekPhase::Hidden ? lay.hide_spot
                                                  : lay.peeks[s.target];
  pos = move_toward(pos, goal, p.peekaboo_speed);
}

}  // namespace

std::string_view behavior_name(BehaviorKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

BehaviorKind parse_behavior(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  throw ConfigError("unknown behavior '" + std::string(name) + "'");
}

bool is_reach(BehaviorKind k) { return k == BehaviorKind::ReachDet || k == BehaviorKind::ReachStoch; }
bool is_chase(BehaviorKind k) { return k == BehaviorKind::ChaseDet || k == BehaviorKind::ChaseStoch; }
bool is_peekaboo(BehaviorKind k) { return k == BehaviorKind::PeekabooDet || k == BehaviorKind::PeekabooStoch; }
bool is_mimic(BehaviorKind k) { return k == BehaviorKind::MimicDet || k == BehaviorKind::MimicStoch; }
bool is_animate(BehaviorKind k) { return is_reach(k) || is_chase(k) || is_peekaboo(k) || is_mimic(k); }

std::size_t agent_count(BehaviorKind k) { return is_chase(k) || is_mimic(k) ? 2 : 1; }

std::size_t aux_count(BehaviorKind k) {
  if (is_reach(k)) return 3;
  if (is_peekaboo(k)) return 1;
  return 0;
}

void BehaviorParams::validate() const {
  for (double v : {periodic_speed, noise_step, reach_speed, reach_arrival, chaser_speed, runner_speed,
                   peekaboo_speed}) {
    if (!(v > 0.0)) throw ConfigError("behavior speeds and radii must be positive");
  }
  if (!(runner_boundary >= 0.0) || !(runner_escape_min_dist >= 0.0) || !(mimic_noise >= 0.0)) {
    throw ConfigError("behavior thresholds must be non-negative");
  }
  if (reach_relocate_every == 0 || stare_steps == 0 || peek_after == 0) {
    throw ConfigError("behavior step counts must be positive");
  }
}

Layout make_layout(int quadrant, const RoomConfig& room) {
  Layout lay;
  lay.zone = zone(quadrant, room);
  const double h = room.zone_half_angle_deg;
  const double mid = 0.5 * (room.r_min + room.r_max);
  lay.actor_half = lay.zone;
  lay.actor_half.phi_hi = 0.0;
  lay.imitator_half = lay.zone;
  lay.imitator_half.phi_lo = 0.0;
  lay.periodic_a = lay.zone.at(room.r_min + 1.0, -0.53 * h);
  lay.periodic_b = lay.zone.at(room.r_max - 1.0, 0.53 * h);
  lay.escapes = {lay.zone.at(room.r_min + 1.0, -0.4 * h), lay.zone.at(room.r_max - 1.0, -0.4 * h),
                 lay.zone.at(mid, 0.55 * h)};
  lay.chaser_start = lay.zone.at(mid - 1.0, -0.5 * h);
  lay.runner_start = lay.zone.at(mid + 1.0, 0.5 * h);
  lay.exposed = lay.zone.at(mid, -0.55 * h);
  lay.hide_object = lay.zone.at(mid - 0.5, 0.4 * h);
  lay.hide_spot = lay.zone.at(mid + 0.7, 0.4 * h);
  lay.peeks = {lay.zone.at(mid + 0.7, 0.05 * h), lay.zone.at(mid + 0.7, 0.75 * h), lay.zone.at(mid + 1.7, 0.4 * h)};
  return lay;
}

BehaviorState init_behavior(const BehaviorSpec& spec, const Layout& lay, std::uint64_t seed) {
  BehaviorState s;
  const std::size_t n = agent_count(spec.kind);
  for (std::size_t i = 0; i < n; ++i) {
    s.rngs.push_back(num::CounterRng::derive(seed, {static_cast<std::uint64_t>(spec.quadrant), i}));
  }
  switch (spec.kind) {
    case BehaviorKind::Static:
    case BehaviorKind::Noise:
    case BehaviorKind::ReachDet:
    case BehaviorKind::ReachStoch:
      s.pos = {lay.zone.center()};
      break;
    case BehaviorKind::Periodic:
      s.pos = {lay.periodic_a};
      s.target = 1;
      break;
    case BehaviorKind::ChaseDet:
    case BehaviorKind::ChaseStoch:
      s.pos = {lay.chaser_start, lay.runner_start};
      break;
    case BehaviorKind::PeekabooDet:
    case BehaviorKind::PeekabooStoch:
      s.pos = {lay.exposed};
      break;
    case BehaviorKind::MimicDet:
    case BehaviorKind::MimicStoch: {
      const Vec2 actor = lay.actor_half.center();
      s.pos = {actor, reflect(actor, lay.zone.center_deg)};
      s.history.assign(spec.params.mimic_delay + 1, actor);
      break;
    }
  }
  return s;
}

void behavior_step(const BehaviorSpec& spec, const Layout& lay, BehaviorState& s, const StepContext& ctx) {
  const auto& p = spec.params;
  switch (spec.kind) {
    case BehaviorKind::Static:
      break;
    case BehaviorKind::Periodic: {
      const Vec2 goal = s.target == 0 ? lay.periodic_a : lay.periodic_b;
      s.pos[0] = move_toward(s.pos[0], goal, p.periodic_speed);
      if (s.pos[0] == goal) s.target ^= 1;
      break;
    }
    case BehaviorKind::Noise:
      s.pos[0] = noise_step(s.pos[0], p.noise_step, lay.zone, s.rngs[0]);
      break;
    case BehaviorKind::ReachDet:
    case BehaviorKind::ReachStoch: {
      if (ctx.aux.size() != 3) throw ContractError("reach step needs its three object positions");
      s.pos[0] = lay.zone.clamp(move_toward(s.pos[0], ctx.aux[s.target], p.reach_speed));
      if (distance(s.pos[0], ctx.aux[s.target]) <= p.reach_arrival) {
        s.target = spec.kind == BehaviorKind::ReachDet ? (s.target + 1) % 3 : s.rngs[0].below(3);
      }
      break;
    }
    case BehaviorKind::ChaseDet:
    case BehaviorKind::ChaseStoch: {
      const Vec2 chaser = s.pos[0];
      const Vec2 runner = s.pos[1];
      step_runner(spec, lay, s, chaser);
      s.pos[0] = lay.zone.clamp(move_toward(chaser, runner, p.chaser_speed));
      break;
    }
    case BehaviorKind::PeekabooDet:
    case BehaviorKind::PeekabooStoch:
      require_gaze(ctx, 1, spec.kind);
      step_peekaboo(spec, lay, s, ctx.gazed[0]);
      s.pos[0] = lay.zone.clamp(s.pos[0]);
      break;
    case BehaviorKind::MimicDet:
    case BehaviorKind::MimicStoch: {
      s.pos[0] = noise_step(s.pos[0], p.noise_step, lay.actor_half, s.rngs[0]);
      s.history.push_back(s.pos[0]);
      while (s.history.size() > p.mimic_delay + 1) s.history.pop_front();
      Vec2 mirrored = reflect(s.history.front(), lay.zone.center_deg);
      if (spec.kind == BehaviorKind::MimicStoch) {
        mirrored = lay.imitator_half.clamp(
            mirrored + Vec2{p.mimic_noise * s.rngs[1].normal(), p.mimic_noise * s.rngs[1].normal()});
      }
      s.pos[1] = mirrored;
      break;
    }
  }
}

bool occluded(const BehaviorSpec& spec, const Layout& lay, const BehaviorState& s, std::size_t agent) {
  return is_peekaboo(spec.kind) && agent == 0 && s.peek == PeekPhase::Hidden && s.pos[0] == lay.hide_spot;
}

std::string phase_name(const BehaviorSpec& spec, const BehaviorState& s, std::size_t agent) {
  switch (spec.kind) {
    case BehaviorKind::Static:
      return "static";
    case BehaviorKind::Periodic:
      return s.target == 0 ? "to_a" : "to_b";
    case BehaviorKind::Noise:
      return "wander";
    case BehaviorKind::ReachDet:
    case BehaviorKind::ReachStoch:
      return "reach" + std::to_string(s.target);
    case BehaviorKind::ChaseDet:
    case BehaviorKind::ChaseStoch:
      if (agent == 0) return "chase";
      return s.escape_to ? "escape" : "flee";
    case BehaviorKind::PeekabooDet:
    case BehaviorKind::PeekabooStoch:
      return s.peek == PeekPhase::Exposed ? "exposed" : s.peek == PeekPhase::Hidden ? "hidden" : "peeking";
    case BehaviorKind::MimicDet:
    case BehaviorKind::MimicStoch:
      return agent == 0 ? "act" : "mimic";
  }
  return "unknown";
}

Vec2 mirror_across_diagonal(Vec2 p, int quadrant) { return reflect(p, quadrant_center_deg(quadrant)); }

}  // namespace awml::env
