#include "awml/harness/run.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "awml/common/error.hpp"

namespace awml::harness {

namespace {

enum Stream : std::uint64_t {
  kWmInit = 1,
  kSignal = 2,
  kQNet = 3,
  kActions = 4,
  kDqnSampling = 5,
  kWmSampling = 6,
};

constexpr std::size_t kMaxWindowRedraws = 64;

wm::ObsLayout layout_of(const env::Env& e) { return {e.n_agents(), e.n_aux()}; }

void push_history(History& h, std::vector<double> obs, std::uint8_t action, std::size_t keep) {
  h.obs.push_back(std::move(obs));
  h.actions.push_back(action);
  if (h.obs.size() > keep) {
    h.obs.erase(h.obs.begin(), h.obs.end() - static_cast<std::ptrdiff_t>(keep));
    h.actions.erase(h.actions.begin(), h.actions.end() - static_cast<std::ptrdiff_t>(keep));
  }
}

env::Vec2 slot_centroid(const env::Env& e, std::size_t slot) {
  const auto pos = e.positions();
  env::Vec2 c;
  std::size_t n = 0;
  for (std::size_t a = 0; a < e.n_agents(); ++a) {
    if (e.slot_of_agent(a) != slot) continue;
    c = c + pos[a];
    ++n;
  }
  return (1.0 / static_cast<double>(n)) * c;
}

std::size_t first_agent_of(const env::Env& e, std::size_t slot) {
  for (std::size_t a = 0; a < e.n_agents(); ++a) {
    if (e.slot_of_agent(a) == slot) return a;
  }
  throw ContractError("slot has no agents");
}

struct Step {
  std::vector<double> obs;
  std::uint8_t action = 0;
};

wm::Batch windows_from(const std::deque<Step>& steps, std::size_t first_end, std::size_t count, std::size_t tau_in,
                       std::size_t tau_out) {
  const std::size_t len = tau_in + tau_out;
  wm::Batch batch = wm::Batch::zeros(count, tau_in, tau_out, steps.front().obs.size());
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t end = first_end + b;
    for (std::size_t j = 0; j < len; ++j) {
      const Step& s = steps[end + 1 - len + j];
      std::copy(s.obs.begin(), s.obs.end(), batch.at(b, j));
      batch.actions[b * len + j] = s.action;
    }
  }
  return batch;
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  room.validate();
  behavior.validate();
  wm.validate();
  dqn.validate();
  curiosity.validate();
  if (steps_per_round == 0) throw ConfigError("harness.steps_per_round must be positive");
  if (grad_steps_per_round == 0) throw ConfigError("harness.grad_steps_per_round must be >= 1");
  if (validate_every == 0) throw ConfigError("harness.validate_every must be positive");
  if (validation_steps < wm.tau_in + wm.tau_out) {
    throw ConfigError("harness.validation_steps must cover at least one window");
  }
  if (dqn.capacity < wm.tau_in + wm.tau_out) throw ConfigError("dqn.capacity must hold one world-model window");
}

std::vector<double> observation_scale(const wm::ObsLayout& layout, double coord_scale) {
  std::vector<double> s(layout.dim(), 1.0);
  for (std::size_t a = 0; a < layout.n_agents; ++a) {
    s[layout.agent(a)] = 1.0 / coord_scale;
    s[layout.agent(a) + 1] = 1.0 / coord_scale;
  }
  for (std::size_t d = layout.aux_begin(); d < layout.ego_begin(); ++d) s[d] = 1.0 / coord_scale;
  return s;
}

wm::Batch sample_wm_batch(const ctl::Replay& replay, std::size_t size, std::size_t tau_in, std::size_t tau_out,
                          num::CounterRng& rng) {
  const std::size_t len = tau_in + tau_out;
  if (replay.size() < len) throw ContractError("sample_wm_batch: replay shorter than one window");
  const std::size_t span = replay.size() - len + 1;
  std::vector<std::size_t> starts;
  std::size_t skipped = 0;
  while (starts.size() < size) {
    const std::size_t i = rng.below(span);
    if (replay.at(i + len - 1).step - replay.at(i).step == len - 1) {
      starts.push_back(i);
    } else if (++skipped > kMaxWindowRedraws * size) {
      throw ContractError("sample_wm_batch: no contiguous window found");
    }
  }
  wm::Batch batch = wm::Batch::zeros(size, tau_in, tau_out, replay.obs_dim());
  for (std::size_t b = 0; b < size; ++b) {
    for (std::size_t j = 0; j < len; ++j) {
      const ctl::Record& r = replay.at(starts[b] + j);
      std::copy(r.obs.begin(), r.obs.end(), batch.at(b, j));
      batch.actions[b * len + j] = r.action;
    }
  }
  return batch;
}

std::vector<env::Vec2> estimate_positions(const wm::WorldModel& model, const env::Env& e, const History& history,
                                          std::uint8_t next_action) {
  const std::size_t tau_in = model.config().tau_in;
  if (history.obs.size() < tau_in) return e.zone_centres();
  const std::size_t first = history.obs.size() - tau_in;
  std::vector<double> flat;
  flat.reserve(tau_in * e.obs_dim());
  std::vector<std::uint8_t> actions;
  actions.reserve(tau_in + 1);
  for (std::size_t j = first; j < history.obs.size(); ++j) {
    flat.insert(flat.end(), history.obs[j].begin(), history.obs[j].end());
    actions.push_back(history.actions[j]);
  }
  actions.push_back(next_action);
  return wm::predict_next(model, flat, actions);
}

env::Action pursuit_action(const env::EgoState& ego, env::Vec2 target, double deadband_deg) {
  const double err = env::signed_diff_deg(ego.orientation_deg, env::bearing_deg(target));
  if (std::abs(err) <= deadband_deg) return env::Action::Stay;
  std::size_t best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < env::kNumActions; ++i) {
    const double gap = std::abs(err - env::rotation_deg(env::action_from_index(i)));
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return env::action_from_index(best);
}

ValidationRollout validation_rollout(const wm::WorldModel& model, const env::Env& source, std::size_t slot,
                                     std::size_t steps, const History& history, std::uint64_t respawn_tag) {
  env::Env e = source;
  const env::BehaviorKind kind = e.slot_spec(slot).kind;
  if (env::is_reach(kind)) e.respawn_objects(respawn_tag);
  const double deadband = env::is_peekaboo(kind) ? e.room().fov_deg / 4.0 : 0.0;
  const std::size_t first = first_agent_of(e, slot);
  const std::size_t tau_in = model.config().tau_in;

  History h = history;
  ValidationRollout out;
  out.obs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const env::Action a = pursuit_action(e.ego(), slot_centroid(e, slot), deadband);
    const auto action = static_cast<std::uint8_t>(a);
    const auto c_hat = estimate_positions(model, e, h, action);
    auto obs = e.step(a, c_hat).flat();
    out.actions.push_back(action);
    out.phases.push_back(e.phase(first));
    push_history(h, obs, action, tau_in);
    out.obs.push_back(std::move(obs));
  }
  return out;
}

double rollout_loss(const wm::WorldModel& model, const ValidationRollout& rollout, std::size_t slot,
                    const env::Env& e) {
  const std::size_t tau_in = model.config().tau_in;
  const std::size_t tau_out = model.config().tau_out;
  const std::size_t len = tau_in + tau_out;
  if (rollout.obs.size() < len) throw ContractError("rollout_loss: rollout shorter than one window");
  std::deque<Step> steps;
  for (std::size_t t = 0; t < rollout.obs.size(); ++t) steps.push_back({rollout.obs[t], rollout.actions[t]});
  const std::size_t count = rollout.obs.size() - len + 1;
  const wm::Batch batch = windows_from(steps, len - 1, count, tau_in, tau_out);
  const auto losses = model.window_losses(batch, model.component_of(first_agent_of(e, slot)));
  double sum = 0.0;
  for (const auto& l : losses) sum += l.total();
  return sum / static_cast<double>(losses.size());
}

std::size_t slot_of_behavior(const env::Env& e, env::BehaviorKind kind) {
  for (std::size_t s = 0; s < e.n_slots(); ++s) {
    if (e.slot_spec(s).kind == kind) return s;
  }
  throw ConfigError("world has no " + std::string(env::behavior_name(kind)) + " agent to validate");
}

ValidationPoint validate_all(const wm::WorldModel& model, const env::Env& e, const History& history,
                             std::size_t steps, std::uint64_t step) {
  std::vector<std::size_t> slots;
  if (e.spec().kind == env::WorldKind::Mixture) {
    slots = {slot_of_behavior(e, env::BehaviorKind::Static), slot_of_behavior(e, env::BehaviorKind::Periodic),
             e.animate_slot()};
  } else {
    slots = {e.animate_slot()};
  }
  ValidationPoint point;
  point.step = step;
  double sum = 0.0;
  for (std::size_t s : slots) {
    const auto rollout = validation_rollout(model, e, s, steps, history, step);
    const double loss = rollout_loss(model, rollout, s, e);
    point.losses.push_back({std::string(env::behavior_name(e.slot_spec(s).kind)), loss});
    sum += loss;
  }
  point.scalar = sum / static_cast<double>(slots.size());
  return point;
}

RunRecord run_awml(const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  env::WorldSpec world = config.world;
  world.seed = config.seed;
  env::Env e = env::Env::reset(world, config.room, config.behavior);
  const wm::ObsLayout layout = layout_of(e);
  const std::size_t tau_in = config.wm.tau_in;
  const std::size_t tau_out = config.wm.tau_out;
  const std::size_t len = tau_in + tau_out;

  auto rng_wm_init = num::CounterRng::derive(config.seed, {kWmInit});
  auto rng_signal = num::CounterRng::derive(config.seed, {kSignal});
  auto rng_qnet = num::CounterRng::derive(config.seed, {kQNet});
  auto rng_actions = num::CounterRng::derive(config.seed, {kActions});
  auto rng_dqn = num::CounterRng::derive(config.seed, {kDqnSampling});
  auto rng_batches = num::CounterRng::derive(config.seed, {kWmSampling});

  wm::WorldModel model(config.wm, layout, e.groups(), rng_wm_init);
  auto adam = wm::make_adam_states(model);
  auto signal = cur::make_signal(config.curiosity, model, rng_signal);
  ctl::Controller controller(layout.dim(), config.dqn, rng_qnet);
  ctl::Replay replay(config.dqn.capacity, layout.dim(), observation_scale(layout, config.wm.coord_scale));

  RunRecord record;
  record.visible_steps.assign(e.n_agents(), 0);
  for (std::size_t a = 0; a < e.n_agents(); ++a) record.agent_slot.push_back(e.slot_of_agent(a));
  for (std::size_t s = 0; s < e.n_slots(); ++s) {
    record.slot_behavior.emplace_back(env::behavior_name(e.slot_spec(s).kind));
  }

  // Newest observations first seed the Q-state and the predictions; the
  // initial observation stands in for the steps before t = 0.
  History history;
  push_history(history, e.observe(e.zone_centres()).flat(), 0, tau_in);
  const auto scale = observation_scale(layout, config.wm.coord_scale);
  std::deque<std::vector<double>> q_frames;
  std::deque<Step> trail;  // last len - 1 scored steps plus the current round
  std::vector<StepEvent> pending;
  std::uint64_t wm_updates = 0;

  auto scaled = [&](const std::vector<double>& obs) {
    std::vector<double> s(obs.size());
    for (std::size_t d = 0; d < obs.size(); ++d) s[d] = obs[d] * scale[d];
    return s;
  };
  for (std::size_t k = 0; k < config.dqn.history; ++k) q_frames.push_back(scaled(history.obs.back()));

  auto checkpoint = [&](std::uint64_t step) {
    record.checkpoints.push_back(step);
    if (hooks.on_checkpoint) hooks.on_checkpoint(step, model, controller.online());
  };

  for (std::uint64_t t = 1; t <= config.total_steps; ++t) {
    std::uint8_t action;
    double eps = 1.0;
    if (signal->drives_controller()) {
      std::vector<double> state;
      state.reserve(config.dqn.history * layout.dim());
      for (const auto& f : q_frames) state.insert(state.end(), f.begin(), f.end());
      eps = ctl::epsilon(config.dqn, t);
      action = static_cast<std::uint8_t>(ctl::select_action(controller.q(state), eps, rng_actions));
    } else {
      action = static_cast<std::uint8_t>(rng_actions.below(ctl::kNumActions));
    }
    const auto c_hat = estimate_positions(model, e, history, action);
    auto obs = e.step(env::action_from_index(action), c_hat).flat();

    StepEvent ev;
    ev.t = t;
    ev.action = action;
    ev.eps = eps;
    ev.state = e.state_digest();
    std::uint32_t bits = 0;
    for (std::size_t a = 0; a < e.n_agents(); ++a) {
      if (!e.in_view()[a]) continue;
      bits |= 1u << a;
      ++record.visible_steps[a];
      ev.visible.push_back(a);
    }
    record.visibility.push_back(bits);
    pending.push_back(std::move(ev));

    q_frames.pop_front();
    q_frames.push_back(scaled(obs));
    push_history(history, obs, action, tau_in);
    trail.push_back({std::move(obs), action});

    const bool round_end = t % config.steps_per_round == 0 || t == config.total_steps;
    if (round_end) {
      // Score each new step by the window that ends on it; steps without a
      // full window behind them earn nothing.
      const std::size_t fresh = pending.size();
      const std::size_t first_new = trail.size() - fresh;
      std::size_t first_scored = first_new;
      while (first_scored < trail.size() && first_scored + 1 < len) ++first_scored;
      const std::size_t scored = trail.size() - first_scored;
      std::vector<double> rewards(fresh, 0.0);
      if (scored > 0) {
        const auto r = signal->score(model, windows_from(trail, first_scored, scored, tau_in, tau_out));
        std::copy(r.begin(), r.end(), rewards.begin() + static_cast<std::ptrdiff_t>(fresh - scored));
      }
      for (std::size_t k = 0; k < fresh; ++k) {
        StepEvent& ev = pending[k];
        ev.reward = rewards[k];
        const Step& s = trail[first_new + k];
        replay.store(s.obs, s.action, ev.reward, ev.t);
        if (hooks.on_event) hooks.on_event(ev);
      }
      pending.clear();
      while (trail.size() > len - 1) trail.pop_front();

      if (replay.size() >= config.dqn.learn_start && replay.size() >= len) {
        signal->begin_round(model);
        for (std::size_t m = 0; m < config.grad_steps_per_round; ++m) {
          const wm::Batch batch = sample_wm_batch(replay, config.wm.batch_size, tau_in, tau_out, rng_batches);
          wm::wm_train_step(model, batch, adam);
          ++wm_updates;
          signal->after_step(model, batch, wm_updates);
          if (signal->drives_controller()) controller.update(replay, rng_dqn);
        }
      }
    }

    if (t % config.validate_every == 0) {
      ValidationPoint point = validate_all(model, e, history, config.validation_steps, t);
      if (hooks.on_validation) hooks.on_validation(point);
      record.validation.push_back(std::move(point));
    }
    if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0 && t != config.total_steps) checkpoint(t);
  }
  if (config.total_steps > 0) checkpoint(config.total_steps);
  record.wm_updates = wm_updates;
  record.q_updates = controller.updates();
  return record;
}

}  // namespace awml::harness
