#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "awml/env/geometry.hpp"
#include "awml/numcore/rng.hpp"

namespace awml::env {

enum class BehaviorKind {
  Static,
  Periodic,
  Noise,
  ReachDet,
  ReachStoch,
  ChaseDet,
  ChaseStoch,
  PeekabooDet,
  PeekabooStoch,
  MimicDet,
  MimicStoch,
};

std::string_view behavior_name(BehaviorKind kind);
// Accepts the names produced by behavior_name; throws ConfigError otherwise.
BehaviorKind parse_behavior(std::string_view name);
bool is_animate(BehaviorKind kind);
bool is_reach(BehaviorKind kind);
bool is_chase(BehaviorKind kind);
bool is_peekaboo(BehaviorKind kind);
bool is_mimic(BehaviorKind kind);
std::size_t agent_count(BehaviorKind kind);
// Auxiliary objects owned by the behavior's quadrant.
std::size_t aux_count(BehaviorKind kind);

struct BehaviorParams {
  double periodic_speed = 0.20;
  double noise_step = 0.25;
  double reach_speed = 0.20;
  double reach_arrival = 0.3;
  std::size_t reach_relocate_every = 500;
  double chaser_speed = 0.22;
  double runner_speed = 0.25;
  double runner_boundary = 0.5;
  double runner_escape_min_dist = 3.0;
  double peekaboo_speed = 0.25;
  std::size_t stare_steps = 5;
  std::size_t peek_after = 40;
  std::size_t mimic_delay = 10;
  double mimic_noise = 0.05;

  void validate() const;
  friend bool operator==(const BehaviorParams&, const BehaviorParams&) = default;
};

struct BehaviorSpec {
  BehaviorKind kind = BehaviorKind::Static;
  int quadrant = 1;
  BehaviorParams params;
};

// Fixed landmarks of a behavior inside its zone.
struct Layout {
  Region zone;
  Region actor_half;
  Region imitator_half;
  Vec2 periodic_a, periodic_b;
  std::vector<Vec2> escapes;
  Vec2 chaser_start, runner_start;
  Vec2 exposed, hide_object, hide_spot;
  std::vector<Vec2> peeks;
};

Layout make_layout(int quadrant, const RoomConfig& room);

enum class PeekPhase { Exposed, Hidden, Peeking };

struct BehaviorState {
  std::vector<Vec2> pos;
  std::vector<num::CounterRng> rngs;  // one stream per agent
  std::size_t target = 0;             // periodic endpoint, reach object or peek index
  std::size_t counter = 0;            // stare / hidden-stare counter
  PeekPhase peek = PeekPhase::Exposed;
  std::optional<Vec2> escape_to;      // runner escape destination
  std::deque<Vec2> history;           // actor positions, newest at the back

  friend bool operator==(const BehaviorState&, const BehaviorState&) = default;
};

struct StepContext {
  // Per agent: was it inside the gaze cone at the previous step.
  std::span<const bool> gazed;
  // Positions of the auxiliary objects owned by this behavior.
  std::span<const Vec2> aux;
};

BehaviorState init_behavior(const BehaviorSpec& spec, const Layout& layout, std::uint64_t seed);

// Advances every agent of the behavior by one tick. Throws ContractError when
// ctx lacks the gaze flags or objects that the kind depends on.
void behavior_step(const BehaviorSpec& spec, const Layout& layout, BehaviorState& state, const StepContext& ctx);

// True while an agent sits at its hiding spot behind the object.
bool occluded(const BehaviorSpec& spec, const Layout& layout, const BehaviorState& state, std::size_t agent);

// Reflection across the quadrant diagonal; maps the actor half-zone onto the
// imitator half-zone.
Vec2 mirror_across_diagonal(Vec2 p, int quadrant);

std::string phase_name(const BehaviorSpec& spec, const BehaviorState& state, std::size_t agent);

}  // namespace awml::env
