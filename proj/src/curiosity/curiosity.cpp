#include "awml/curiosity/curiosity.hpp"

#include <string>

#include "awml/common/error.hpp"
#include "awml/numcore/tape.hpp"

namespace awml::cur {

using num::Tensor;

namespace {

constexpr std::string_view kNames[] = {"gamma_progress", "delta_progress", "rnd",
                                       "disagreement",   "adversarial",    "random"};

std::vector<double> totals(const std::vector<wm::WindowLoss>& losses) {
  std::vector<double> out(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) out[i] = losses[i].total();
  return out;
}

std::vector<double> difference(const wm::WorldModel& old_model, const wm::WorldModel& live, const wm::Batch& windows) {
  std::vector<double> r = totals(old_model.window_losses(windows));
  const auto fresh = live.window_losses(windows);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= fresh[i].total();
  return r;
}

}  // namespace

std::string_view signal_name(SignalKind kind) { return kNames[static_cast<int>(kind)]; }

SignalKind parse_signal(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    if (kNames[i] == name) return static_cast<SignalKind>(i);
  }
  throw ConfigError("unknown curiosity kind '" + std::string(name) +
                    "' (expected gamma_progress, delta_progress, rnd, disagreement, adversarial or random)");
}

void CuriosityConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("curiosity.gamma must lie in (0, 1)");
  if (delta == 0) throw ConfigError("curiosity.delta must be >= 1");
  if (rnd_hidden == 0 || rnd_output == 0) throw ConfigError("curiosity.rnd sizes must be positive");
  if (!(rnd_lr > 0.0)) throw ConfigError("curiosity.rnd_lr must be positive");
  if (ensemble_size < 2) throw ConfigError("curiosity.ensemble_size must be >= 2");
}

std::vector<double> reward_gamma_progress(const wm::WorldModel& old_model, const wm::WorldModel& live,
                                          const wm::Batch& windows) {
  if (!old_model.same_schema(live)) throw SchemaError("gamma progress: old and live models differ in schema");
  return difference(old_model, live, windows);
}

std::vector<double> reward_adversarial(const wm::WorldModel& live, const wm::Batch& windows, bool include_ce) {
  const auto losses = live.window_losses(windows);
  std::vector<double> r(losses.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = include_ce ? losses[i].total() : losses[i].coord;
  return r;
}

std::vector<double> reward_disagreement(std::span<const wm::Prediction> members) {
  if (members.size() < 2) throw ConfigError("disagreement needs at least two ensemble members");
  const wm::Prediction& first = members[0];
  for (const auto& m : members) {
    if (m.size != first.size || m.tau_out != first.tau_out || m.n_agents != first.n_agents) {
      throw SchemaError("disagreement: member predictions differ in shape");
    }
  }
  const double n = static_cast<double>(members.size());
  const std::size_t per_window = first.tau_out * first.n_agents;
  std::vector<double> out(first.size, 0.0);
  for (std::size_t b = 0; b < first.size; ++b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < first.tau_out; ++t) {
      for (std::size_t a = 0; a < first.n_agents; ++a) {
        for (int axis = 0; axis < 2; ++axis) {
          // Centre on member 0 so large common offsets do not cancel badly.
          const double ref = first.at(b, t, a)[axis];
          double s = 0.0, s2 = 0.0;
          for (const auto& m : members) {
            const double d = m.at(b, t, a)[axis] - ref;
            s += d;
            s2 += d * d;
          }
          const double mean = s / n;
          acc += std::max(0.0, s2 / n - mean * mean);
        }
      }
    }
    out[b] = acc / static_cast<double>(2 * per_window);
  }
  return out;
}

void DeltaState::push(const wm::WorldModel& live) {
  snapshots.push_back(live);
  while (snapshots.size() > delta) snapshots.pop_front();
}

std::vector<double> reward_delta_progress(const DeltaState& state, const wm::WorldModel& live,
                                          const wm::Batch& windows) {
  if (state.snapshots.empty()) return std::vector<double>(windows.size, 0.0);
  return difference(state.snapshots.front(), live, windows);
}

RndState make_rnd(std::size_t input, std::size_t hidden, std::size_t output, double lr, num::CounterRng& rng) {
  RndState s;
  s.spec = {input, hidden, output};
  num::CounterRng target_rng = rng.fork(1);
  num::CounterRng predictor_rng = rng.fork(2);
  s.target = num::init_mlp(s.spec, target_rng);
  s.predictor = num::init_mlp(s.spec, predictor_rng);
  num::AdamConfig cfg;
  cfg.lr = lr;
  s.adam = num::AdamState(s.predictor, cfg);
  s.target_fingerprint = num::fingerprint(s.target);
  return s;
}

namespace {

// Squared error per row, averaged over output units.
num::Var rnd_row_errors(num::Tape& tape, const RndState& state, const Tensor& features) {
  const num::Var x = tape.constant(features);
  const num::Var target = tape.constant(tape.value(num::forward_mlp(tape, state.target, state.spec, x)));
  const num::Var diff = tape.sub(num::forward_mlp(tape, state.predictor, state.spec, x), target);
  return tape.scale(tape.mul(diff, diff), 1.0 / static_cast<double>(state.spec.output));
}

}  // namespace

std::vector<double> reward_rnd(const RndState& state, const Tensor& features) {
  num::Tape tape(num::Tape::Mode::Inference);
  const Tensor& err = tape.value(rnd_row_errors(tape, state, features));
  std::vector<double> out(err.rows(), 0.0);
  for (std::size_t r = 0; r < err.rows(); ++r) {
    for (std::size_t c = 0; c < err.cols(); ++c) out[r] += err.at(r, c);
  }
  return out;
}

double train_rnd(RndState& state, const Tensor& features) {
  num::Tape tape;
  const num::Var loss =
      tape.scale(tape.sum(rnd_row_errors(tape, state, features)), 1.0 / static_cast<double>(features.rows()));
  const double value = tape.value(loss).item();
  const num::ParamSet grads = num::backward(tape, loss, state.predictor);
  num::adam_step(state.adam, state.predictor, grads);
  return value;
}

Tensor rnd_features(const wm::WorldModel& live, const wm::Batch& windows) {
  const std::size_t dim = live.layout().dim();
  Tensor x = Tensor::matrix(windows.size, dim);
  for (std::size_t b = 0; b < windows.size; ++b) {
    wm::scale_observation(live.layout(), windows.at(b, windows.steps() - 1), live.config().coord_scale,
                          x.data() + b * dim);
  }
  return x;
}

GammaProgressSignal::GammaProgressSignal(const CuriosityConfig& config, const wm::WorldModel& live)
    : gamma_(config.gamma), warm_start_at_(config.warm_start_at), old_(live) {}

std::vector<double> GammaProgressSignal::score(const wm::WorldModel& live, const wm::Batch& windows) {
  return reward_gamma_progress(old_, live, windows);
}

void GammaProgressSignal::after_step(const wm::WorldModel& live, const wm::Batch&, std::uint64_t updates) {
  if (!wm::warm_start_sync(old_, live, updates, warm_start_at_)) wm::old_model_update(old_, live, gamma_);
}

std::vector<double> DeltaProgressSignal::score(const wm::WorldModel& live, const wm::Batch& windows) {
  return reward_delta_progress(state_, live, windows);
}

RndSignal::RndSignal(const CuriosityConfig& config, const wm::WorldModel& live, num::CounterRng& rng)
    : state_(make_rnd(live.layout().dim(), config.rnd_hidden, config.rnd_output, config.rnd_lr, rng)) {}

std::vector<double> RndSignal::score(const wm::WorldModel& live, const wm::Batch& windows) {
  return reward_rnd(state_, rnd_features(live, windows));
}

void RndSignal::after_step(const wm::WorldModel& live, const wm::Batch& batch, std::uint64_t) {
  train_rnd(state_, rnd_features(live, batch));
}

DisagreementSignal::DisagreementSignal(const CuriosityConfig& config, const wm::WorldModel& live,
                                       num::CounterRng& rng) {
  if (config.ensemble_size < 2) throw ConfigError("disagreement needs at least two ensemble members");
  std::vector<wm::Group> groups;
  for (std::size_t k = 0; k < live.n_components(); ++k) groups.push_back(live.group(k));
  wm::WMConfig cfg = live.config();
  // Groups are already merged when entangled.
  cfg.entangled = false;
  for (std::size_t i = 1; i < config.ensemble_size; ++i) {
    num::CounterRng member_rng = rng.fork(i);
    extra_.emplace_back(cfg, live.layout(), groups, member_rng);
    adam_.push_back(wm::make_adam_states(extra_.back()));
  }
}

std::vector<double> DisagreementSignal::score(const wm::WorldModel& live, const wm::Batch& windows) {
  std::vector<wm::Prediction> preds;
  preds.reserve(size());
  preds.push_back(live.predict(windows));
  for (const auto& m : extra_) preds.push_back(m.predict(windows));
  return reward_disagreement(preds);
}

void DisagreementSignal::after_step(const wm::WorldModel&, const wm::Batch& batch, std::uint64_t) {
  for (std::size_t i = 0; i < extra_.size(); ++i) wm::wm_train_step(extra_[i], batch, adam_[i]);
}

std::unique_ptr<Signal> make_signal(const CuriosityConfig& config, const wm::WorldModel& live, num::CounterRng& rng) {
  config.validate();
  switch (config.kind) {
    case SignalKind::GammaProgress:
      return std::make_unique<GammaProgressSignal>(config, live);
    case SignalKind::DeltaProgress:
      return std::make_unique<DeltaProgressSignal>(config.delta);
    case SignalKind::Rnd:
      return std::make_unique<RndSignal>(config, live, rng);
    case SignalKind::Disagreement:
      return std::make_unique<DisagreementSignal>(config, live, rng);
    case SignalKind::Adversarial:
      return std::make_unique<AdversarialSignal>(config.adversarial_include_ce);
    case SignalKind::Random:
      return std::make_unique<RandomSignal>();
  }
  throw ConfigError("unhandled curiosity kind");
}

}  // namespace awml::cur
