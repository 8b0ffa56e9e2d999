#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "awml/env/geometry.hpp"
#include "awml/numcore/adam.hpp"
#include "awml/numcore/layers.hpp"
#include "awml/numcore/param_set.hpp"
#include "awml/numcore/rng.hpp"
#include "awml/numcore/tensor.hpp"

namespace awml::wm {

using Group = std::vector<std::size_t>;

struct WMConfig {
  std::size_t tau_in = 10;
  std::size_t tau_out = 5;
  std::size_t hidden_single = 256;  // LSTM width for one-agent groups
  std::size_t hidden_multi = 512;   // LSTM width for groups of two or more
  std::size_t mlp_hidden = 0;       // 0: same as the LSTM width
  double coord_scale = 10.0;        // inputs are divided, outputs multiplied by this
  bool squared = false;             // squared distance in the coordinate term
  bool entangled = false;           // one joint network over every agent
  std::size_t batch_size = 256;
  double lr = 1e-4;

  std::size_t hidden_for(std::size_t group_size) const {
    return group_size >= 2 ? hidden_multi : hidden_single;
  }
  void validate() const;
  friend bool operator==(const WMConfig&, const WMConfig&) = default;
};

// Position of every field inside a flattened observation.
struct ObsLayout {
  std::size_t n_agents = 0;
  std::size_t n_aux = 0;

  std::size_t dim() const { return 3 * n_agents + 2 * n_aux + 2; }
  std::size_t agent(std::size_t i) const { return 3 * i; }
  std::size_t aux_begin() const { return 3 * n_agents; }
  std::size_t ego_begin() const { return 3 * n_agents + 2 * n_aux; }
};

// Copies one observation with coordinates and aux positions divided by `scale`.
void scale_observation(const ObsLayout& layout, const double* obs, double scale, double* out);

// Groups must partition 0..n_agents-1. Throws SchemaError otherwise.
void check_groups(const std::vector<Group>& groups, std::size_t n_agents);

// B windows of tau_in observed steps followed by tau_out target steps.
// obs is [B][tau_in + tau_out][obs_dim]; actions[b][j] is the action that
// produced observation j of window b.
struct Batch {
  std::size_t size = 0;
  std::size_t tau_in = 0;
  std::size_t tau_out = 0;
  std::size_t obs_dim = 0;
  std::vector<double> obs;
  std::vector<std::uint8_t> actions;

  std::size_t steps() const { return tau_in + tau_out; }
  const double* at(std::size_t b, std::size_t j) const { return obs.data() + (b * steps() + j) * obs_dim; }
  double* at(std::size_t b, std::size_t j) { return obs.data() + (b * steps() + j) * obs_dim; }
  std::uint8_t action(std::size_t b, std::size_t j) const { return actions[b * steps() + j]; }

  static Batch zeros(std::size_t size, std::size_t tau_in, std::size_t tau_out, std::size_t obs_dim);
};

// Loss split of one window: coordinate term and mask cross-entropy term.
struct WindowLoss {
  double coord = 0.0;
  double ce = 0.0;
  double total() const { return coord + ce; }
};

// Per agent and target step: predicted coordinates and mask logit.
struct Prediction {
  std::size_t size = 0;
  std::size_t tau_out = 0;
  std::size_t n_agents = 0;
  // [b][t][agent] -> (x, y, logit), coordinates already rescaled.
  std::vector<double> values;

  const double* at(std::size_t b, std::size_t t, std::size_t agent) const {
    return values.data() + ((b * tau_out + t) * n_agents + agent) * 3;
  }
};

class WorldModel {
 public:
  WorldModel() = default;
  WorldModel(const WMConfig& config, ObsLayout layout, std::vector<Group> groups, num::CounterRng& rng);

  const WMConfig& config() const { return config_; }
  const ObsLayout& layout() const { return layout_; }
  std::size_t n_components() const { return components_.size(); }
  const Group& group(std::size_t k) const { return groups_[k]; }
  const num::ParamSet& params(std::size_t k) const { return components_[k]; }
  num::ParamSet& params(std::size_t k) { return components_[k]; }
  const num::LstmMlpSpec& spec(std::size_t k) const { return specs_[k]; }
  std::size_t input_dim(std::size_t k) const { return specs_[k].input; }
  // Component that predicts `agent`.
  std::size_t component_of(std::size_t agent) const;

  // Runs every component on the batch (without gradients).
  Prediction predict(const Batch& batch) const;

  // Per-window loss summed over every component, or of one component only.
  std::vector<WindowLoss> window_losses(const Batch& batch, std::optional<std::size_t> component = {}) const;

  // Records component k on `tape`: returns the summed loss over the batch.
  num::Var component_loss(num::Tape& tape, std::size_t k, const Batch& batch) const;

  // Component input for step j of every window, [B x input_dim(k)].
  num::Tensor component_input(std::size_t k, const Batch& batch, std::size_t j) const;
  // Targets of component k, rows ordered (t, b), [tau_out * B x 3 |I_k|].
  num::Tensor component_target(std::size_t k, const Batch& batch) const;

  bool same_schema(const WorldModel& other) const;
  friend bool operator==(const WorldModel& a, const WorldModel& b);

 private:
  WMConfig config_;
  ObsLayout layout_;
  std::vector<Group> groups_;
  std::vector<num::LstmMlpSpec> specs_;
  std::vector<num::ParamSet> components_;
};

// One Adam step per component on its batch-mean loss. Returns the summed
// batch-mean loss before the step.
double wm_train_step(WorldModel& model, const Batch& batch, std::vector<num::AdamState>& adam);
std::vector<num::AdamState> make_adam_states(const WorldModel& model);

// old := gamma * old + (1 - gamma) * new, per component.
void old_model_update(WorldModel& old_model, const WorldModel& new_model, double gamma);
// At update_counter == sync_at, old := new. Returns whether it fired.
bool warm_start_sync(WorldModel& old_model, const WorldModel& new_model, std::uint64_t update_counter,
                     std::uint64_t sync_at = 100);

// Predicted coordinates of every agent for the step after the last observed
// one. `history` holds tau_in observations, `actions` their producing
// actions followed by the action about to be taken.
std::vector<env::Vec2> predict_next(const WorldModel& model, std::span<const double> history,
                                    std::span<const std::uint8_t> actions);

void save_world_model(const std::filesystem::path& stem, const WorldModel& model);
// Loads parameters into a model of identical structure.
void load_world_model(const std::filesystem::path& stem, WorldModel& model);

}  // namespace awml::wm
