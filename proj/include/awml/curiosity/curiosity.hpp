#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "awml/numcore/adam.hpp"
#include "awml/numcore/layers.hpp"
#include "awml/numcore/param_set.hpp"
#include "awml/numcore/rng.hpp"
#include "awml/worldmodel/world_model.hpp"

namespace awml::cur {

enum class SignalKind { GammaProgress, DeltaProgress, Rnd, Disagreement, Adversarial, Random };

std::string_view signal_name(SignalKind kind);
SignalKind parse_signal(std::string_view name);

struct CuriosityConfig {
  SignalKind kind = SignalKind::GammaProgress;
  double gamma = 0.9995;
  std::uint64_t warm_start_at = 100;  // world-model update at which old := new
  std::size_t delta = 1;              // snapshot lag, in update rounds
  std::size_t rnd_hidden = 128;
  std::size_t rnd_output = 64;
  double rnd_lr = 1e-4;
  std::size_t ensemble_size = 3;
  bool adversarial_include_ce = false;

  void validate() const;
  friend bool operator==(const CuriosityConfig&, const CuriosityConfig&) = default;
};

// reward = L(old) - L(live) per window.
std::vector<double> reward_gamma_progress(const wm::WorldModel& old_model, const wm::WorldModel& live,
                                          const wm::Batch& windows);

// Coordinate term of the live model's loss, optionally plus the mask term.
std::vector<double> reward_adversarial(const wm::WorldModel& live, const wm::Batch& windows,
                                       bool include_ce = false);

// Per window: population variance across members of every predicted
// coordinate, averaged over agents, axes and target steps.
std::vector<double> reward_disagreement(std::span<const wm::Prediction> members);

struct DeltaState {
  std::size_t delta = 1;
  std::deque<wm::WorldModel> snapshots;

  // Called at the start of every update round with the pre-round model.
  void push(const wm::WorldModel& live);
};

// Zero for every window until a snapshot exists.
std::vector<double> reward_delta_progress(const DeltaState& state, const wm::WorldModel& live,
                                          const wm::Batch& windows);

struct RndState {
  num::MlpSpec spec;
  num::ParamSet target;
  num::ParamSet predictor;
  num::AdamState adam;
  std::uint64_t target_fingerprint = 0;
};

RndState make_rnd(std::size_t input, std::size_t hidden, std::size_t output, double lr, num::CounterRng& rng);
// features is [B x input]; returns one reward per row.
std::vector<double> reward_rnd(const RndState& state, const num::Tensor& features);
// One Adam step on the batch-mean of the same objective. Returns the pre-step loss.
double train_rnd(RndState& state, const num::Tensor& features);

// Observation at the last step of each window, coordinates rescaled like the
// world-model inputs.
num::Tensor rnd_features(const wm::WorldModel& live, const wm::Batch& windows);

// Common interface every signal exposes to the training loop.
class Signal {
 public:
  virtual ~Signal() = default;
  virtual SignalKind kind() const = 0;
  // Reward for each window of freshly collected data.
  virtual std::vector<double> score(const wm::WorldModel& live, const wm::Batch& windows) = 0;
  // Start of an update round, before any gradient step.
  virtual void begin_round(const wm::WorldModel&) {}
  // After every gradient step of the live model on `batch`; `updates` is the
  // number of steps taken so far, this one included.
  virtual void after_step(const wm::WorldModel&, const wm::Batch&, std::uint64_t) {}
  // False when actions are drawn uniformly and the Q-network is bypassed.
  virtual bool drives_controller() const { return true; }
};

std::unique_ptr<Signal> make_signal(const CuriosityConfig& config, const wm::WorldModel& live, num::CounterRng& rng);

class GammaProgressSignal final : public Signal {
 public:
  GammaProgressSignal(const CuriosityConfig& config, const wm::WorldModel& live);
  SignalKind kind() const override { return SignalKind::GammaProgress; }
  std::vector<double> score(const wm::WorldModel& live, const wm::Batch& windows) override;
  void after_step(const wm::WorldModel& live, const wm::Batch& batch, std::uint64_t updates) override;
  const wm::WorldModel& old_model() const { return old_; }

 private:
  double gamma_;
  std::uint64_t warm_start_at_;
  wm::WorldModel old_;
};

class DeltaProgressSignal final : public Signal {
 public:
  explicit DeltaProgressSignal(std::size_t delta) { state_.delta = delta; }
  SignalKind kind() const override { return SignalKind::DeltaProgress; }
  std::vector<double> score(const wm::WorldModel& live, const wm::Batch& windows) override;
  void begin_round(const wm::WorldModel& live) override { state_.push(live); }
  const DeltaState& state() const { return state_; }

 private:
  DeltaState state_;
};

class RndSignal final : public Signal {
 public:
  RndSignal(const CuriosityConfig& config, const wm::WorldModel& live, num::CounterRng& rng);
  SignalKind kind() const override { return SignalKind::Rnd; }
  std::vector<double> score(const wm::WorldModel& live, const wm::Batch& windows) override;
  void after_step(const wm::WorldModel& live, const wm::Batch& batch, std::uint64_t updates) override;
  const RndState& state() const { return state_; }

 private:
  RndState state_;
};

// Member 0 is the live model; the others train in lockstep on its batches.
class DisagreementSignal final : public Signal {
 public:
  DisagreementSignal(const CuriosityConfig& config, const wm::WorldModel& live, num::CounterRng& rng);
  SignalKind kind() const override { return SignalKind::Disagreement; }
  std::vector<double> score(const wm::WorldModel& live, const wm::Batch& windows) override;
  void after_step(const wm::WorldModel& live, const wm::Batch& batch, std::uint64_t updates) override;
  std::size_t size() const { return extra_.size() + 1; }

 private:
  std::vector<wm::WorldModel> extra_;
  std::vector<std::vector<num::AdamState>> adam_;
};

class AdversarialSignal final : public Signal {
 public:
  explicit AdversarialSignal(bool include_ce) : include_ce_(include_ce) {}
  SignalKind kind() const override { return SignalKind::Adversarial; }
  std::vector<double> score(const wm::WorldModel& live, const wm::Batch& windows) override {
    return reward_adversarial(live, windows, include_ce_);
  }

 private:
  bool include_ce_;
};

class RandomSignal final : public Signal {
 public:
  SignalKind kind() const override { return SignalKind::Random; }
  std::vector<double> score(const wm::WorldModel&, const wm::Batch& windows) override {
    return std::vector<double>(windows.size, 0.0);
  }
  bool drives_controller() const override { return false; }
};

}  // namespace awml::cur
