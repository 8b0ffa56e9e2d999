#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "awml/controller/dqn.hpp"
#include "awml/curiosity/curiosity.hpp"
#include "awml/env/env.hpp"
#include "awml/worldmodel/world_model.hpp"

namespace awml::harness {

struct RunConfig {
  env::WorldSpec world;  // world.seed is ignored; `seed` drives everything
  env::RoomConfig room;
  env::BehaviorParams behavior;
  wm::WMConfig wm;
  ctl::DQNConfig dqn;
  cur::CuriosityConfig curiosity;
  std::uint64_t total_steps = 200000;
  std::size_t steps_per_round = 40;
  std::size_t grad_steps_per_round = 10;
  std::uint64_t validate_every = 5000;
  std::size_t validation_steps = 2000;
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct StepEvent {
  std::uint64_t t = 0;
  std::uint8_t action = 0;
  double eps = 0.0;
  double reward = 0.0;
  std::vector<std::size_t> visible;
  std::uint64_t state = 0;  // Env::state_digest after the step

  friend bool operator==(const StepEvent&, const StepEvent&) = default;
};

struct BehaviorLoss {
  std::string behavior;
  double loss = 0.0;

  friend bool operator==(const BehaviorLoss&, const BehaviorLoss&) = default;
};

struct ValidationPoint {
  std::uint64_t step = 0;
  std::vector<BehaviorLoss> losses;
  double scalar = 0.0;  // the world's headline validation loss

  friend bool operator==(const ValidationPoint&, const ValidationPoint&) = default;
};

struct RunRecord {
  std::vector<ValidationPoint> validation;
  // Per environment step, bit a set when agent a was in the gaze cone.
  std::vector<std::uint32_t> visibility;
  std::vector<std::uint64_t> visible_steps;  // per agent
  std::vector<std::size_t> agent_slot;       // behavior slot of each agent
  std::vector<std::string> slot_behavior;    // behavior name of each slot
  std::uint64_t wm_updates = 0;
  std::uint64_t q_updates = 0;
  std::vector<std::uint64_t> checkpoints;  // steps at which checkpoints were taken

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunHooks {
  std::function<void(const StepEvent&)> on_event;
  std::function<void(const ValidationPoint&)> on_validation;
  std::function<void(std::uint64_t step, const wm::WorldModel&, const ctl::QNet&)> on_checkpoint;
};

RunRecord run_awml(const RunConfig& config, const RunHooks& hooks = {});

// Per-feature multipliers applied to observations before the Q-network.
std::vector<double> observation_scale(const wm::ObsLayout& layout, double coord_scale);

// B windows of tau_in + tau_out contiguous records drawn uniformly.
wm::Batch sample_wm_batch(const ctl::Replay& replay, std::size_t size, std::size_t tau_in, std::size_t tau_out,
                          num::CounterRng& rng);

// Recent observations and actions, oldest first, used to seed predictions.
struct History {
  std::vector<std::vector<double>> obs;
  std::vector<std::uint8_t> actions;
};

// Coordinate estimate for every agent after taking `next_action`: the world
// model's prediction once tau_in observations exist, else the zone centres.
std::vector<env::Vec2> estimate_positions(const wm::WorldModel& model, const env::Env& env, const History& history,
                                          std::uint8_t next_action);

// Gaze policy used by validation: the action whose rotation leaves the
// smallest bearing error to `target`; Stay inside the deadband.
env::Action pursuit_action(const env::EgoState& ego, env::Vec2 target, double deadband_deg);

struct ValidationRollout {
  std::vector<std::vector<double>> obs;
  std::vector<std::uint8_t> actions;
  std::vector<std::string> phases;  // phase of the slot's first agent per step
};

// Runs the hard-coded policy for `slot` on a copy of `env`. Reaching slots
// get fresh object positions first.
ValidationRollout validation_rollout(const wm::WorldModel& model, const env::Env& env, std::size_t slot,
                                     std::size_t steps, const History& history, std::uint64_t respawn_tag);

// Mean window loss of the slot's component over every window of the rollout.
double rollout_loss(const wm::WorldModel& model, const ValidationRollout& rollout, std::size_t slot,
                    const env::Env& env);

// Slot whose behavior is `kind`; ConfigError when the world has none.
std::size_t slot_of_behavior(const env::Env& env, env::BehaviorKind kind);

// Validation losses for every scored behavior plus the world scalar.
ValidationPoint validate_all(const wm::WorldModel& model, const env::Env& env, const History& history,
                             std::size_t steps, std::uint64_t step);

}  // namespace awml::harness
