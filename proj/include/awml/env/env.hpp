#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "awml/env/behavior.hpp"
#include "awml/env/geometry.hpp"

namespace awml::env {

enum class WorldKind { Mixture, Noise };

std::string_view world_name(WorldKind kind);
WorldKind parse_world(std::string_view name);

struct WorldSpec {
  WorldKind kind = WorldKind::Mixture;
  BehaviorKind animate = BehaviorKind::ReachDet;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

// Behavior of each quadrant, 1..4 in order.
std::vector<BehaviorKind> world_behaviors(const WorldSpec& spec);

struct Observation {
  std::vector<Vec2> coords;          // masked coordinate per external agent
  std::vector<std::uint8_t> mask;    // 1 when the agent is in view
  std::vector<Vec2> aux;             // auxiliary object positions
  double ego_cos = 1.0;
  double ego_sin = 0.0;

  // [x, y, m] per agent, then aux x, y pairs, then cos, sin.
  std::vector<double> flat() const;
  static std::size_t dim(std::size_t n_agents, std::size_t n_aux) { return 3 * n_agents + 2 * n_aux + 2; }

  friend bool operator==(const Observation&, const Observation&) = default;
};

// Oracle encoder: in-view agents report their true coordinate, the rest the
// supplied estimate.
Observation encode(std::span<const Vec2> truth, std::span<const std::uint8_t> mask, std::span<const Vec2> aux,
                   const EgoState& ego, std::span<const Vec2> c_hat);

class Env {
 public:
  static Env reset(const WorldSpec& spec, const RoomConfig& room, const BehaviorParams& params = {});

  // Rotates the gaze, advances every behavior with the previous step's gaze
  // flags, then encodes. c_hat holds one estimate per external agent.
  Observation step(Action a, std::span<const Vec2> c_hat);
  Observation observe(std::span<const Vec2> c_hat) const;

  // Moves relocatable objects to fresh positions drawn from a stream forked
  // by `tag`; training draws are unaffected.
  void respawn_objects(std::uint64_t tag);

  std::uint64_t t() const { return t_; }
  const EgoState& ego() const { return ego_; }
  const WorldSpec& spec() const { return spec_; }
  const RoomConfig& room() const { return room_; }
  const BehaviorParams& params() const { return params_; }

  std::size_t n_agents() const { return n_agents_; }
  std::size_t n_aux() const;
  std::size_t obs_dim() const { return Observation::dim(n_agents(), n_aux()); }
  std::size_t n_slots() const { return slots_.size(); }
  const BehaviorSpec& slot_spec(std::size_t slot) const { return slots_[slot].spec; }
  const BehaviorState& slot_state(std::size_t slot) const { return slots_[slot].state; }
  const Layout& slot_layout(std::size_t slot) const { return slots_[slot].layout; }
  std::size_t slot_of_agent(std::size_t agent) const;
  std::size_t animate_slot() const { return slots_.size() - 1; }
  // Agent indices of each behavior slot, in slot order.
  std::vector<std::vector<std::size_t>> groups() const;

  std::vector<Vec2> positions() const;
  std::vector<Vec2> aux_positions() const;
  // Zone centre of each agent's quadrant; the default estimate before any
  // prediction exists.
  std::vector<Vec2> zone_centres() const;
  // Gaze-cone membership after the latest step.
  const std::vector<bool>& in_view() const { return in_view_; }
  std::vector<std::uint8_t> masks() const;
  std::string phase(std::size_t agent) const;
  // Hash of the true agent positions, masks, aux positions and gaze.
  std::uint64_t state_digest() const;

 private:
  struct Slot {
    BehaviorSpec spec;
    Layout layout;
    BehaviorState state;
    std::vector<Vec2> aux;
    num::CounterRng aux_rng;
    std::size_t first_agent = 0;
  };

  void place_objects(Slot& slot, num::CounterRng& rng) const;
  void refresh_view();

  WorldSpec spec_;
  RoomConfig room_;
  BehaviorParams params_;
  std::vector<Slot> slots_;
  std::size_t n_agents_ = 0;
  EgoState ego_;
  std::uint64_t t_ = 0;
  std::vector<bool> in_view_;
};

}  // namespace awml::env
