#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "awml/numcore/adam.hpp"
#include "awml/numcore/layers.hpp"
#include "awml/numcore/param_set.hpp"
#include "awml/numcore/rng.hpp"

namespace awml::ctl {

constexpr std::size_t kNumActions = 9;
using QValues = std::array<double, kNumActions>;

struct DQNConfig {
  double discount = 0.99;
  std::size_t nstep = 200;
  std::size_t batch_size = 256;
  std::uint64_t target_sync = 1000;  // Q-updates between target copies
  std::size_t capacity = 200000;
  std::size_t learn_start = 1000;  // buffered samples before any update
  std::size_t hidden = 512;
  std::size_t history = 3;  // observations per state
  double lr = 1e-4;
  double eps_start = 1.0;
  double eps_min = 0.025;
  double eps_decay = 1e-4;  // per environment step

  void validate() const;
  friend bool operator==(const DQNConfig&, const DQNConfig&) = default;
};

double epsilon(const DQNConfig& config, std::uint64_t step);

struct QNet {
  num::MlpSpec spec;
  num::ParamSet params;
};

QNet make_qnet(std::size_t obs_dim, const DQNConfig& config, num::CounterRng& rng);

// state holds `history` consecutive observations, oldest first.
QValues q_values(const QNet& net, std::span<const double> state);

// Uniform with probability eps, else the argmax with the lowest index on ties.
std::size_t select_action(const QValues& q, double eps, num::CounterRng& rng);
std::size_t greedy_action(const QValues& q);

// sum_i discount^i rewards[i] + discount^n bootstrap, n = rewards.size().
double nstep_return(std::span<const double> rewards, double discount, double bootstrap);

// One record per environment step: the observation it produced, the
// action that produced it, and the curiosity reward scored at collection.
struct Record {
  std::vector<double> obs;
  std::uint8_t action = 0;
  double reward = 0.0;
  std::uint64_t step = 0;
};

class Replay {
 public:
  // feature_scale, when given, multiplies each observation feature inside
  // state_before; stored records stay raw.
  Replay(std::size_t capacity, std::size_t obs_dim, std::vector<double> feature_scale = {});

  // Appends; evicts the oldest record at capacity. Steps must increase.
  void store(std::span<const double> obs, std::uint8_t action, double reward, std::uint64_t step);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return records_.size(); }
  std::size_t obs_dim() const { return obs_dim_; }
  // i = 0 is the oldest retained record.
  const Record& at(std::size_t i) const { return records_[(head_ + i) % records_.size()]; }

  // State preceding record i: observations i - history .. i - 1.
  std::vector<double> state_before(std::size_t i, std::size_t history) const;
  // True when records i - history .. i + n - 1 exist and their steps are consecutive.
  bool segment_ok(std::size_t i, std::size_t history, std::size_t n) const;

 private:
  std::vector<Record> records_;
  std::size_t obs_dim_;
  std::vector<double> scale_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

struct TdStats {
  double loss = 0.0;
  double mean_target = 0.0;
  std::size_t redraws = 0;
  bool updated = false;
};

struct TdBatch {
  std::vector<double> states;  // [B x history * obs_dim]
  std::vector<std::size_t> actions;
  std::vector<double> targets;
};

// Samples start records with a full contiguous n-step segment and builds the
// bootstrapped targets with `target_net`. Empty when no segment fits.
TdBatch sample_td_batch(const QNet& target_net, const Replay& replay, const DQNConfig& config,
                        num::CounterRng& rng, std::size_t* redraws = nullptr);

// Mean squared TD error of `net` on a prepared batch; gradient written to grads.
double td_loss(const QNet& net, const TdBatch& batch, num::ParamSet* grads = nullptr);

class Controller {
 public:
  Controller(std::size_t obs_dim, const DQNConfig& config, num::CounterRng& rng);

  const DQNConfig& config() const { return config_; }
  const QNet& online() const { return online_; }
  QNet& online() { return online_; }
  const QNet& target() const { return target_; }
  std::uint64_t updates() const { return updates_; }

  QValues q(std::span<const double> state) const { return q_values(online_, state); }
  // One DQN step; no-op while the replay holds fewer than learn_start records.
  TdStats update(const Replay& replay, num::CounterRng& rng);

 private:
  DQNConfig config_;
  QNet online_;
  QNet target_;
  num::AdamState adam_;
  std::uint64_t updates_ = 0;
};

void save_qnet(const std::filesystem::path& stem, const QNet& net);

}  // namespace awml::ctl
