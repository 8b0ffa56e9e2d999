#include "awml/controller/dqn.hpp"

#include <algorithm>
#include <cmath>

#include "awml/common/error.hpp"
#include "awml/numcore/checkpoint.hpp"
#include "awml/numcore/tape.hpp"

namespace awml::ctl {

using num::Tensor;

namespace {
constexpr std::size_t kMaxRedraws = 64;
}

void DQNConfig::validate() const {
  if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("dqn.discount must lie in (0, 1)");
  if (nstep == 0) throw ConfigError("dqn.nstep must be >= 1");
  if (batch_size == 0) throw ConfigError("dqn.batch_size must be positive");
  if (target_sync == 0) throw ConfigError("dqn.target_sync must be positive");
  if (capacity == 0) throw ConfigError("dqn.capacity must be positive");
  if (hidden == 0 || history == 0) throw ConfigError("dqn.hidden and dqn.history must be positive");
  if (!(lr > 0.0)) throw ConfigError("dqn.lr must be positive");
  if (!(eps_min >= 0.0 && eps_min <= eps_start && eps_start <= 1.0)) {
    throw ConfigError("dqn epsilon bounds must satisfy 0 <= eps_min <= eps_start <= 1");
  }
  if (!(eps_decay >= 0.0)) throw ConfigError("dqn.eps_decay must be nonnegative");
}

double epsilon(const DQNConfig& config, std::uint64_t step) {
  return std::max(config.eps_min, config.eps_start - config.eps_decay * static_cast<double>(step));
}

QNet make_qnet(std::size_t obs_dim, const DQNConfig& config, num::CounterRng& rng) {
  QNet net;
  net.spec = {config.history * obs_dim, config.hidden, kNumActions};
  net.params = num::init_mlp(net.spec, rng);
  return net;
}

QValues q_values(const QNet& net, std::span<const double> state) {
  if (state.size() != net.spec.input) {
    throw ContractError("q_values: state has " + std::to_string(state.size()) + " values, expected " +
                        std::to_string(net.spec.input));
  }
  num::Tape tape(num::Tape::Mode::Inference);
  const num::Var x = tape.constant(Tensor({1, state.size()}, std::vector<double>(state.begin(), state.end())));
  const Tensor& out = tape.value(num::forward_mlp(tape, net.params, net.spec, x));
  QValues q;
  std::copy(out.data(), out.data() + kNumActions, q.begin());
  return q;
}

std::size_t greedy_action(const QValues& q) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < kNumActions; ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

std::size_t select_action(const QValues& q, double eps, num::CounterRng& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ContractError("select_action: eps outside [0, 1]");
  if (rng.uniform() < eps) return rng.below(kNumActions);
  return greedy_action(q);
}

double nstep_return(std::span<const double> rewards, double discount, double bootstrap) {
  double g = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) g = rewards[i] + discount * g;
  return g;
}

Replay::Replay(std::size_t capacity, std::size_t obs_dim, std::vector<double> feature_scale)
    : records_(capacity), obs_dim_(obs_dim), scale_(std::move(feature_scale)) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  if (!scale_.empty() && scale_.size() != obs_dim) throw SchemaError("replay: one scale per feature required");
}

void Replay::store(std::span<const double> obs, std::uint8_t action, double reward, std::uint64_t step) {
  if (obs.size() != obs_dim_) throw ContractError("replay: observation width mismatch");
  if (action >= kNumActions) throw ContractError("replay: action out of range");
  if (size_ > 0 && step <= at(size_ - 1).step) throw ContractError("replay: step indices must increase");
  std::size_t slot;
  if (size_ < records_.size()) {
    slot = (head_ + size_) % records_.size();
    ++size_;
  } else {
    slot = head_;
    head_ = (head_ + 1) % records_.size();
  }
  Record& r = records_[slot];
  r.obs.assign(obs.begin(), obs.end());
  r.action = action;
  r.reward = reward;
  r.step = step;
}

std::vector<double> Replay::state_before(std::size_t i, std::size_t history) const {
  if (i < history || i > size_) throw ContractError("replay: not enough history before record");
  std::vector<double> s;
  s.reserve(history * obs_dim_);
  for (std::size_t j = i - history; j < i; ++j) {
    const auto& o = at(j).obs;
    for (std::size_t d = 0; d < obs_dim_; ++d) s.push_back(scale_.empty() ? o[d] : o[d] * scale_[d]);
  }
  return s;
}

bool Replay::segment_ok(std::size_t i, std::size_t history, std::size_t n) const {
  if (i < history || i + n > size_) return false;
  return at(i + n - 1).step - at(i - history).step == history + n - 1;
}

TdBatch sample_td_batch(const QNet& target_net, const Replay& replay, const DQNConfig& config,
                        num::CounterRng& rng, std::size_t* redraws) {
  TdBatch batch;
  const std::size_t h = config.history;
  const std::size_t n = config.nstep;
  if (replay.size() < h + n) return batch;
  const std::size_t lo = h;
  const std::size_t span = replay.size() - n - h + 1;
  std::size_t skipped = 0;
  std::vector<std::size_t> starts;
  while (starts.size() < config.batch_size) {
    const std::size_t i = lo + rng.below(span);
    if (replay.segment_ok(i, h, n)) {
      starts.push_back(i);
    } else if (++skipped > kMaxRedraws * config.batch_size) {
      break;
    }
  }
  if (redraws) *redraws = skipped;
  if (starts.empty()) return batch;

  const std::size_t width = h * replay.obs_dim();
  const std::size_t b = starts.size();
  Tensor next({b, width});
  batch.states.reserve(b * width);
  for (std::size_t k = 0; k < b; ++k) {
    const auto s = replay.state_before(starts[k], h);
    batch.states.insert(batch.states.end(), s.begin(), s.end());
    const auto s_next = replay.state_before(starts[k] + n, h);
    std::copy(s_next.begin(), s_next.end(), next.data() + k * width);
    batch.actions.push_back(replay.at(starts[k]).action);
  }
  num::Tape tape(num::Tape::Mode::Inference);
  const Tensor& q_next = tape.value(num::forward_mlp(tape, target_net.params, target_net.spec, tape.constant(next)));
  std::vector<double> rewards(n);
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t j = 0; j < n; ++j) rewards[j] = replay.at(starts[k] + j).reward;
    const double* row = q_next.data() + k * kNumActions;
    batch.targets.push_back(nstep_return(rewards, config.discount, *std::max_element(row, row + kNumActions)));
  }
  return batch;
}

double td_loss(const QNet& net, const TdBatch& batch, num::ParamSet* grads) {
  const std::size_t b = batch.actions.size();
  if (b == 0 || batch.targets.size() != b || batch.states.size() != b * net.spec.input) {
    throw ContractError("td_loss: malformed batch");
  }
  num::Tape tape(grads ? num::Tape::Mode::Record : num::Tape::Mode::Inference);
  const num::Var x = tape.constant(Tensor({b, net.spec.input}, batch.states));
  const num::Var q = tape.pick_cols(num::forward_mlp(tape, net.params, net.spec, x), batch.actions);
  const num::Var err = tape.sub(q, tape.constant(Tensor({b, 1}, batch.targets)));
  const num::Var loss = tape.mean(tape.mul(err, err));
  if (grads) *grads = num::backward(tape, loss, net.params);
  return tape.value(loss).item();
}

Controller::Controller(std::size_t obs_dim, const DQNConfig& config, num::CounterRng& rng)
    : config_(config) {
  config_.validate();
  online_ = make_qnet(obs_dim, config_, rng);
  target_ = online_;
  num::AdamConfig adam;
  adam.lr = config_.lr;
  adam_ = num::AdamState(online_.params, adam);
}

TdStats Controller::update(const Replay& replay, num::CounterRng& rng) {
  TdStats stats;
  if (replay.size() < config_.learn_start) return stats;
  const TdBatch batch = sample_td_batch(target_, replay, config_, rng, &stats.redraws);
  if (batch.actions.empty()) return stats;
  num::ParamSet grads;
  stats.loss = td_loss(online_, batch, &grads);
  num::adam_step(adam_, online_.params, grads);
  double tq = 0.0;
  for (double t : batch.targets) tq += t;
  stats.mean_target = tq / static_cast<double>(batch.targets.size());
  stats.updated = true;
  if (++updates_ % config_.target_sync == 0) target_ = online_;
  return stats;
}

void save_qnet(const std::filesystem::path& stem, const QNet& net) { num::save_checkpoint(stem, net.params); }

}  // namespace awml::ctl
