#include "awml/worldmodel/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "awml/common/error.hpp"
#include "awml/env/geometry.hpp"
#include "awml/numcore/checkpoint.hpp"

namespace awml::wm {

using num::ParamSet;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

constexpr std::size_t kActionDim = env::kNumActions;

double bce_with_logit(double z, double m) {
  return std::max(z, 0.0) - z * m + std::log1p(std::exp(-std::abs(z)));
}

std::vector<Var> input_steps(const WorldModel& model, Tape& tape, std::size_t k, const Batch& batch) {
  std::vector<Var> steps;
  steps.reserve(batch.steps());
  for (std::size_t j = 0; j < batch.steps(); ++j) steps.push_back(tape.constant(model.component_input(k, batch, j)));
  return steps;
}

void check_batch(const WorldModel& model, const Batch& batch) {
  if (batch.size == 0) throw ContractError("world model batch is empty");
  if (batch.obs_dim != model.layout().dim()) throw SchemaError("batch observation width does not match the model");
  if (batch.tau_in != model.config().tau_in) throw ContractError("window is shorter or longer than tau_in");
  if (batch.tau_out == 0) throw ContractError("window has no target steps");
  if (batch.obs.size() != batch.size * batch.steps() * batch.obs_dim || batch.actions.size() != batch.size * batch.steps()) {
    throw SchemaError("batch storage does not match its declared shape");
  }
}

}  // namespace

void WMConfig::validate() const {
  if (tau_in == 0 || tau_out == 0) throw ConfigError("world_model: tau_in and tau_out must be >= 1");
  if (hidden_single == 0 || hidden_multi == 0) throw ConfigError("world_model: hidden sizes must be positive");
  if (!(coord_scale > 0.0)) throw ConfigError("world_model: coord_scale must be positive");
  if (batch_size == 0) throw ConfigError("world_model: batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("world_model: lr must be positive");
}

void scale_observation(const ObsLayout& layout, const double* obs, double scale, double* out) {
  const double inv = 1.0 / scale;
  for (std::size_t a = 0; a < layout.n_agents; ++a) {
    out[3 * a] = obs[3 * a] * inv;
    out[3 * a + 1] = obs[3 * a + 1] * inv;
    out[3 * a + 2] = obs[3 * a + 2];
  }
  for (std::size_t q = layout.aux_begin(); q < layout.ego_begin(); ++q) out[q] = obs[q] * inv;
  out[layout.ego_begin()] = obs[layout.ego_begin()];
  out[layout.ego_begin() + 1] = obs[layout.ego_begin() + 1];
}

void check_groups(const std::vector<Group>& groups, std::size_t n_agents) {
  std::vector<int> seen(n_agents, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw SchemaError("empty agent group");
    for (auto a : g) {
      if (a >= n_agents) throw SchemaError("group names agent " + std::to_string(a) + " out of range");
      ++seen[a];
    }
  }
  for (std::size_t a = 0; a < n_agents; ++a) {
    if (seen[a] != 1) throw SchemaError("groups must partition the agents (agent " + std::to_string(a) + ")");
  }
}

Batch Batch::zeros(std::size_t size, std::size_t tau_in, std::size_t tau_out, std::size_t obs_dim) {
  Batch b;
  b.size = size;
  b.tau_in = tau_in;
  b.tau_out = tau_out;
  b.obs_dim = obs_dim;
  b.obs.assign(size * (tau_in + tau_out) * obs_dim, 0.0);
  b.actions.assign(size * (tau_in + tau_out), 0);
  return b;
}

WorldModel::WorldModel(const WMConfig& config, ObsLayout layout, std::vector<Group> groups, num::CounterRng& rng)
    : config_(config), layout_(layout) {
  config_.validate();
  check_groups(groups, layout.n_agents);
  if (config_.entangled) {
    Group all(layout.n_agents);
    for (std::size_t a = 0; a < all.size(); ++a) all[a] = a;
    groups_ = {all};
  } else {
    groups_ = std::move(groups);
  }
  for (const auto& g : groups_) {
    const std::size_t hidden = config_.hidden_for(g.size());
    num::LstmMlpSpec spec;
    spec.input = 3 * g.size() + 2 * layout_.n_aux + 2 + 1 + kActionDim;
    spec.hidden = hidden;
    spec.mlp_hidden = config_.mlp_hidden ? config_.mlp_hidden : hidden;
    spec.output = 3 * g.size();
    spec.layers = 2;
    specs_.push_back(spec);
    components_.push_back(num::init_lstm_mlp(spec, rng));
  }
}

std::size_t WorldModel::component_of(std::size_t agent) const {
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    if (std::find(groups_[k].begin(), groups_[k].end(), agent) != groups_[k].end()) return k;
  }
  throw ContractError("agent " + std::to_string(agent) + " has no component");
}

Tensor WorldModel::component_input(std::size_t k, const Batch& batch, std::size_t j) const {
  const Group& g = groups_[k];
  const double inv = 1.0 / config_.coord_scale;
  Tensor x = Tensor::matrix(batch.size, specs_[k].input);
  const bool observed = j < batch.tau_in;
  for (std::size_t b = 0; b < batch.size; ++b) {
    double* row = x.data() + b * specs_[k].input;
    std::size_t c = 0;
    if (observed) {
      const double* o = batch.at(b, j);
      for (auto a : g) {
        row[c++] = o[layout_.agent(a)] * inv;
        row[c++] = o[layout_.agent(a) + 1] * inv;
        row[c++] = o[layout_.agent(a) + 2];
      }
      for (std::size_t q = 0; q < 2 * layout_.n_aux; ++q) row[c++] = o[layout_.aux_begin() + q] * inv;
      row[c++] = o[layout_.ego_begin()];
      row[c++] = o[layout_.ego_begin() + 1];
      row[c++] = 1.0;
    } else {
      c += 3 * g.size() + 2 * layout_.n_aux + 3;
    }
    const std::uint8_t act = batch.action(b, j);
    if (act >= kActionDim) throw ValidationError("action index out of range in batch");
    row[c + act] = 1.0;
  }
  return x;
}

Tensor WorldModel::component_target(std::size_t k, const Batch& batch) const {
  const Group& g = groups_[k];
  Tensor y = Tensor::matrix(batch.tau_out * batch.size, 3 * g.size());
  for (std::size_t t = 0; t < batch.tau_out; ++t) {
    for (std::size_t b = 0; b < batch.size; ++b) {
      const double* o = batch.at(b, batch.tau_in + t);
      double* row = y.data() + (t * batch.size + b) * 3 * g.size();
      for (std::size_t i = 0; i < g.size(); ++i) {
        row[3 * i] = o[layout_.agent(g[i])];
        row[3 * i + 1] = o[layout_.agent(g[i]) + 1];
        row[3 * i + 2] = o[layout_.agent(g[i]) + 2];
      }
    }
  }
  return y;
}

Prediction WorldModel::predict(const Batch& batch) const {
  check_batch(*this, batch);
  Prediction pred;
  pred.size = batch.size;
  pred.tau_out = batch.tau_out;
  pred.n_agents = layout_.n_agents;
  pred.values.assign(batch.size * batch.tau_out * layout_.n_agents * 3, 0.0);
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    Tape tape(Tape::Mode::Inference);
    const auto steps = input_steps(*this, tape, k, batch);
    const Tensor& out = tape.value(num::forward_lstm_mlp(tape, components_[k], specs_[k], steps, {}, batch.tau_in).out);
    const Group& g = groups_[k];
    for (std::size_t t = 0; t < batch.tau_out; ++t) {
      for (std::size_t b = 0; b < batch.size; ++b) {
        const double* row = out.data() + (t * batch.size + b) * 3 * g.size();
        for (std::size_t i = 0; i < g.size(); ++i) {
          double* dst = pred.values.data() + ((b * batch.tau_out + t) * layout_.n_agents + g[i]) * 3;
          dst[0] = row[3 * i] * config_.coord_scale;
          dst[1] = row[3 * i + 1] * config_.coord_scale;
          dst[2] = row[3 * i + 2];
        }
      }
    }
  }
  return pred;
}

std::vector<WindowLoss> WorldModel::window_losses(const Batch& batch, std::optional<std::size_t> component) const {
  if (component && *component >= groups_.size()) throw ContractError("component index out of range");
  const Prediction pred = predict(batch);
  std::vector<WindowLoss> out(batch.size);
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    if (component && *component != k) continue;
    for (std::size_t b = 0; b < batch.size; ++b) {
      for (std::size_t t = 0; t < batch.tau_out; ++t) {
        const double* o = batch.at(b, batch.tau_in + t);
        for (auto a : groups_[k]) {
          const double* p = pred.at(b, t, a);
          const double m = o[layout_.agent(a) + 2];
          if (m != 0.0) {
            const double dx = p[0] - o[layout_.agent(a)];
            const double dy = p[1] - o[layout_.agent(a) + 1];
            const double sq = dx * dx + dy * dy;
            out[b].coord += m * (config_.squared ? sq : std::sqrt(sq));
          }
          out[b].ce += bce_with_logit(p[2], m);
        }
      }
    }
  }
  return out;
}

Var WorldModel::component_loss(Tape& tape, std::size_t k, const Batch& batch) const {
  check_batch(*this, batch);
  const auto steps = input_steps(*this, tape, k, batch);
  const Var out = num::forward_lstm_mlp(tape, components_[k], specs_[k], steps, {}, batch.tau_in).out;
  num::CoordLossOptions opts;
  opts.coord_scale = config_.coord_scale;
  opts.squared = config_.squared;
  return tape.coord_mask_loss(out, component_target(k, batch), opts);
}

bool WorldModel::same_schema(const WorldModel& other) const {
  if (components_.size() != other.components_.size()) return false;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (!components_[k].same_schema(other.components_[k]) || groups_[k] != other.groups_[k]) return false;
  }
  return true;
}

bool operator==(const WorldModel& a, const WorldModel& b) {
  if (!a.same_schema(b)) return false;
  for (std::size_t k = 0; k < a.components_.size(); ++k) {
    if (!(a.components_[k] == b.components_[k])) return false;
  }
  return true;
}

std::vector<num::AdamState> make_adam_states(const WorldModel& model) {
  std::vector<num::AdamState> states;
  num::AdamConfig cfg;
  cfg.lr = model.config().lr;
  for (std::size_t k = 0; k < model.n_components(); ++k) states.emplace_back(model.params(k), cfg);
  return states;
}

double wm_train_step(WorldModel& model, const Batch& batch, std::vector<num::AdamState>& adam) {
  if (adam.size() != model.n_components()) throw SchemaError("one Adam state per component required");
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size);
  for (std::size_t k = 0; k < model.n_components(); ++k) {
    Tape tape;
    const Var loss = tape.scale(model.component_loss(tape, k, batch), inv);
    total += tape.value(loss).item();
    const ParamSet grads = num::backward(tape, loss, model.params(k));
    num::adam_step(adam[k], model.params(k), grads);
  }
  return total;
}

void old_model_update(WorldModel& old_model, const WorldModel& new_model, double gamma) {
  if (!old_model.same_schema(new_model)) throw SchemaError("old_model_update: world model schemas differ");
  for (std::size_t k = 0; k < old_model.n_components(); ++k) {
    num::ema_blend_into(old_model.params(k), new_model.params(k), gamma);
  }
}

bool warm_start_sync(WorldModel& old_model, const WorldModel& new_model, std::uint64_t update_counter,
                     std::uint64_t sync_at) {
  if (update_counter != sync_at) return false;
  if (!old_model.same_schema(new_model)) throw SchemaError("warm_start_sync: world model schemas differ");
  for (std::size_t k = 0; k < old_model.n_components(); ++k) old_model.params(k) = new_model.params(k);
  return true;
}

std::vector<env::Vec2> predict_next(const WorldModel& model, std::span<const double> history,
                                    std::span<const std::uint8_t> actions) {
  const std::size_t tau_in = model.config().tau_in;
  const std::size_t dim = model.layout().dim();
  if (history.size() != tau_in * dim || actions.size() != tau_in + 1) {
    throw ContractError("predict_next needs tau_in observations and tau_in + 1 actions");
  }
  Batch batch = Batch::zeros(1, tau_in, 1, dim);
  std::copy(history.begin(), history.end(), batch.obs.begin());
  std::copy(actions.begin(), actions.end(), batch.actions.begin());
  const Prediction pred = model.predict(batch);
  std::vector<env::Vec2> out(model.layout().n_agents);
  for (std::size_t a = 0; a < out.size(); ++a) {
    const double* p = pred.at(0, 0, a);
    out[a] = {p[0], p[1]};
  }
  return out;
}

void save_world_model(const std::filesystem::path& stem, const WorldModel& model) {
  ParamSet merged;
  for (std::size_t k = 0; k < model.n_components(); ++k) {
    for (const auto& e : model.params(k)) merged.add("c" + std::to_string(k) + "." + e.name, e.value);
  }
  num::save_checkpoint(stem, merged);
}

void load_world_model(const std::filesystem::path& stem, WorldModel& model) {
  const ParamSet merged = num::load_checkpoint(stem);
  std::size_t expected = 0;
  for (std::size_t k = 0; k < model.n_components(); ++k) {
    ParamSet& p = model.params(k);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Tensor& src = merged.at("c" + std::to_string(k) + "." + p.entry(i).name);
      if (src.shape() != p.tensor(i).shape()) throw SchemaError("checkpoint shape mismatch for " + p.entry(i).name);
      p.tensor(i) = src;
      ++expected;
    }
  }
  if (expected != merged.size()) throw SchemaError("checkpoint holds entries the model does not have");
}

}  // namespace awml::wm
