#include "awml/env/env.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "awml/common/error.hpp"

namespace awml::env {

namespace {
constexpr double kMinObjectSpacing = 2.0;
constexpr int kMaxPlacementTries = 1024;
}  // namespace

std::string_view world_name(WorldKind kind) { return kind == WorldKind::Mixture ? "mixture" : "noise"; }

WorldKind parse_world(std::string_view name) {
  if (name == "mixture") return WorldKind::Mixture;
  if (name == "noise") return WorldKind::Noise;
  throw ConfigError("unknown world kind '" + std::string(name) + "' (expected mixture or noise)");
}

void WorldSpec::validate() const {
  if (!is_animate(animate)) {
    throw ConfigError("world.animate must be an animate behavior, got '" + std::string(behavior_name(animate)) + "'");
  }
}

std::vector<BehaviorKind> world_behaviors(const WorldSpec& spec) {
  spec.validate();
  if (spec.kind == WorldKind::Mixture) {
    return {BehaviorKind::Static, BehaviorKind::Periodic, BehaviorKind::Noise, spec.animate};
  }
  return {BehaviorKind::Noise, BehaviorKind::Noise, BehaviorKind::Noise, spec.animate};
}

std::vector<double> Observation::flat() const {
  std::vector<double> out;
  out.reserve(dim(coords.size(), aux.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    out.push_back(coords[i].x);
    out.push_back(coords[i].y);
    out.push_back(mask[i]);
  }
  for (const auto& a : aux) {
    out.push_back(a.x);
    out.push_back(a.y);
  }
  out.push_back(ego_cos);
  out.push_back(ego_sin);
  return out;
}

Observation encode(std::span<const Vec2> truth, std::span<const std::uint8_t> mask, std::span<const Vec2> aux,
                   const EgoState& ego, std::span<const Vec2> c_hat) {
  if (c_hat.size() != truth.size() || mask.size() != truth.size()) {
    throw ContractError("encode: one estimate and one mask per external agent required");
  }
  Observation obs;
  obs.coords.resize(truth.size());
  obs.mask.assign(mask.begin(), mask.end());
  for (std::size_t i = 0; i < truth.size(); ++i) obs.coords[i] = mask[i] ? truth[i] : c_hat[i];
  obs.aux.assign(aux.begin(), aux.end());
  const double rad = ego.orientation_deg * std::numbers::pi / 180.0;
  obs.ego_cos = std::cos(rad);
  obs.ego_sin = std::sin(rad);
  return obs;
}

Env Env::reset(const WorldSpec& spec, const RoomConfig& room, const BehaviorParams& params) {
  spec.validate();
  room.validate();
  params.validate();
  Env env;
  env.spec_ = spec;
  env.room_ = room;
  env.params_ = params;
  const auto kinds = world_behaviors(spec);
  for (std::size_t q = 0; q < kinds.size(); ++q) {
    Slot slot;
    const int quadrant = static_cast<int>(q) + 1;
    slot.spec = {kinds[q], quadrant, params};
    slot.layout = make_layout(quadrant, room);
    slot.state = init_behavior(slot.spec, slot.layout, spec.seed);
    slot.aux_rng = num::CounterRng::derive(spec.seed, {static_cast<std::uint64_t>(quadrant), 1000});
    slot.first_agent = env.n_agents_;
    env.n_agents_ += agent_count(kinds[q]);
    if (is_peekaboo(kinds[q])) slot.aux = {slot.layout.hide_object};
    env.slots_.push_back(std::move(slot));
  }
  for (auto& slot : env.slots_) {
    if (is_reach(slot.spec.kind)) env.place_objects(slot, slot.aux_rng);
  }
  env.refresh_view();
  return env;
}

void Env::place_objects(Slot& slot, num::CounterRng& rng) const {
  const Region& z = slot.layout.zone;
  const std::size_t n = aux_count(slot.spec.kind);
  slot.aux.clear();
  int tries = 0;
  while (slot.aux.size() < n) {
    const Vec2 cand = z.sample(rng);
    bool ok = z.boundary_distance(cand) >= 0.5;
    for (const auto& o : slot.aux) ok = ok && distance(o, cand) >= kMinObjectSpacing;
    if (ok || ++tries > kMaxPlacementTries) {
      slot.aux.push_back(cand);
      tries = 0;
    }
  }
}

void Env::respawn_objects(std::uint64_t tag) {
  for (auto& slot : slots_) {
    if (!is_reach(slot.spec.kind)) continue;
    num::CounterRng rng = slot.aux_rng.fork(tag);
    place_objects(slot, rng);
  }
}

void Env::refresh_view() {
  in_view_.assign(n_agents_, false);
  for (const auto& slot : slots_) {
    for (std::size_t i = 0; i < slot.state.pos.size(); ++i) {
      in_view_[slot.first_agent + i] = visible(ego_, slot.state.pos[i], room_);
    }
  }
}

Observation Env::step(Action a, std::span<const Vec2> c_hat) {
  ++t_;
  ego_ = rotate(ego_, a);
  for (auto& slot : slots_) {
    if (is_reach(slot.spec.kind) && t_ % params_.reach_relocate_every == 0) place_objects(slot, slot.aux_rng);
    bool gazed[2] = {false, false};
    const std::size_t n = slot.state.pos.size();
    for (std::size_t i = 0; i < n; ++i) gazed[i] = in_view_[slot.first_agent + i];
    behavior_step(slot.spec, slot.layout, slot.state, {std::span<const bool>(gazed, n), slot.aux});
  }
  refresh_view();
  return observe(c_hat);
}

Observation Env::observe(std::span<const Vec2> c_hat) const {
  const auto truth = positions();
  return encode(truth, masks(), aux_positions(), ego_, c_hat);
}

std::size_t Env::n_aux() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.aux.size();
  return n;
}

std::size_t Env::slot_of_agent(std::size_t agent) const {
  for (std::size_t s = slots_.size(); s-- > 0;) {
    if (agent >= slots_[s].first_agent) return s;
  }
  throw ContractError("agent index out of range");
}

std::vector<std::vector<std::size_t>> Env::groups() const {
  std::vector<std::vector<std::size_t>> g;
  for (const auto& s : slots_) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < s.state.pos.size(); ++i) members.push_back(s.first_agent + i);
    g.push_back(std::move(members));
  }
  return g;
}

std::vector<Vec2> Env::positions() const {
  std::vector<Vec2> out;
  out.reserve(n_agents_);
  for (const auto& s : slots_) out.insert(out.end(), s.state.pos.begin(), s.state.pos.end());
  return out;
}

std::vector<Vec2> Env::aux_positions() const {
  std::vector<Vec2> out;
  for (const auto& s : slots_) out.insert(out.end(), s.aux.begin(), s.aux.end());
  return out;
}

std::vector<Vec2> Env::zone_centres() const {
  std::vector<Vec2> out;
  for (const auto& s : slots_) {
    for (std::size_t i = 0; i < s.state.pos.size(); ++i) out.push_back(s.layout.zone.center());
  }
  return out;
}

std::vector<std::uint8_t> Env::masks() const {
  std::vector<std::uint8_t> m(n_agents_, 0);
  for (const auto& s : slots_) {
    for (std::size_t i = 0; i < s.state.pos.size(); ++i) {
      const std::size_t a = s.first_agent + i;
      m[a] = in_view_[a] && !occluded(s.spec, s.layout, s.state, i);
    }
  }
  return m;
}

std::string Env::phase(std::size_t agent) const {
  const std::size_t s = slot_of_agent(agent);
  return phase_name(slots_[s].spec, slots_[s].state, agent - slots_[s].first_agent);
}

std::uint64_t Env::state_digest() const {
  std::uint64_t h = num::mix64(t_);
  const auto fold = [&h](double v) { h = num::mix64(h ^ std::bit_cast<std::uint64_t>(v)); };
  for (const auto& p : positions()) {
    fold(p.x);
    fold(p.y);
  }
  for (auto m : masks()) fold(m);
  for (const auto& a : aux_positions()) {
    fold(a.x);
    fold(a.y);
  }
  fold(ego_.orientation_deg);
  return h;
}

}  // namespace awml::env
