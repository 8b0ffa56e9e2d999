#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "awml/common/error.hpp"
#include "awml/curiosity/curiosity.hpp"
#include "awml/numcore/gradcheck.hpp"

using namespace awml;
using namespace awml::cur;
using num::CounterRng;
using num::ParamSet;
using num::Tensor;

namespace {

wm::WMConfig tiny_config(std::size_t tau_in = 3, std::size_t tau_out = 2) {
  wm::WMConfig c;
  c.tau_in = tau_in;
  c.tau_out = tau_out;
  c.hidden_single = 5;
  c.hidden_multi = 7;
  return c;
}

void zero_params(wm::WorldModel& m) {
  for (std::size_t k = 0; k < m.n_components(); ++k) {
    for (std::size_t i = 0; i < m.params(k).size(); ++i) m.params(k).tensor(i).fill(0.0);
  }
}

wm::Batch random_batch(const wm::WorldModel& m, std::size_t size, CounterRng& rng) {
  const auto& c = m.config();
  wm::Batch b = wm::Batch::zeros(size, c.tau_in, c.tau_out, m.layout().dim());
  for (std::size_t w = 0; w < size; ++w) {
    for (std::size_t j = 0; j < b.steps(); ++j) {
      double* o = b.at(w, j);
      for (std::size_t a = 0; a < m.layout().n_agents; ++a) {
        o[3 * a] = rng.uniform(-15.0, 15.0);
        o[3 * a + 1] = rng.uniform(-15.0, 15.0);
        o[3 * a + 2] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      }
      for (std::size_t q = m.layout().aux_begin(); q < m.layout().ego_begin(); ++q) o[q] = rng.uniform(-15.0, 15.0);
      o[m.layout().ego_begin()] = 1.0;
      b.actions[w * b.steps() + j] = static_cast<std::uint8_t>(rng.below(9));
    }
  }
  return b;
}

// One window, one agent, one target step at (3, 4) in view.
wm::Batch triangle_batch() {
  wm::Batch b = wm::Batch::zeros(1, 1, 1, 5);
  b.at(0, 1)[0] = 3.0;
  b.at(0, 1)[1] = 4.0;
  b.at(0, 1)[2] = 1.0;
  return b;
}

wm::WorldModel zero_model() {
  CounterRng rng(0);
  wm::WorldModel m(tiny_config(1, 1), {1, 0}, {{0}}, rng);
  zero_params(m);
  return m;
}

wm::Prediction constant_prediction(double x, double y) {
  wm::Prediction p;
  p.size = 1;
  p.tau_out = 1;
  p.n_agents = 1;
  p.values = {x, y, 0.0};
  return p;
}

}  // namespace

TEST(Signals, NamesRoundTrip) {
  for (auto k : {SignalKind::GammaProgress, SignalKind::DeltaProgress, SignalKind::Rnd, SignalKind::Disagreement,
                 SignalKind::Adversarial, SignalKind::Random}) {
    EXPECT_EQ(parse_signal(signal_name(k)), k);
  }
  EXPECT_THROW(parse_signal("novelty"), ConfigError);
}

TEST(GammaProgress, ZeroWhenModelsAgree) {
  CounterRng rng(1);
  wm::WorldModel m(tiny_config(), {3, 1}, {{0}, {1, 2}}, rng);
  CounterRng data(2);
  for (double r : reward_gamma_progress(m, m, random_batch(m, 8, data))) EXPECT_EQ(r, 0.0);
}

TEST(GammaProgress, HandBuiltTriangle) {
  const wm::WorldModel old_model = zero_model();
  wm::WorldModel fitted = zero_model();
  fitted.params(0).at("mlp1.b") = Tensor::vector({0.3, 0.4, 0.0});
  const auto r = reward_gamma_progress(old_model, fitted, triangle_batch());
  EXPECT_NEAR(r[0], 5.0, 1e-12);
}

TEST(GammaProgress, AntisymmetricAndPositiveForBetterModel) {
  CounterRng rng(3);
  wm::WorldModel a(tiny_config(), {2, 0}, {{0}, {1}}, rng);
  wm::WorldModel b(tiny_config(), {2, 0}, {{0}, {1}}, rng);
  CounterRng data(4);
  const wm::Batch w = random_batch(a, 10, data);
  const auto ab = reward_gamma_progress(a, b, w);
  const auto ba = reward_gamma_progress(b, a, w);
  for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_EQ(ab[i], -ba[i]);

  const wm::WorldModel old_model = zero_model();
  wm::WorldModel fitted = zero_model();
  fitted.params(0).at("mlp1.b") = Tensor::vector({0.3, 0.4, 30.0});
  EXPECT_GT(reward_gamma_progress(old_model, fitted, triangle_batch())[0], 0.0);
}

TEST(GammaProgress, SignalWarmStartsThenBlends) {
  CounterRng rng(5);
  wm::WorldModel live(tiny_config(), {1, 0}, {{0}}, rng);
  CuriosityConfig cfg;
  cfg.gamma = 0.5;
  cfg.warm_start_at = 2;
  GammaProgressSignal sig(cfg, live);
  const wm::WorldModel initial = live;
  for (std::size_t i = 0; i < live.params(0).size(); ++i) live.params(0).tensor(i).fill(1.0);
  wm::Batch unused;
  sig.after_step(live, unused, 1);
  const wm::WorldModel expected = [&] {
    wm::WorldModel e = initial;
    wm::old_model_update(e, live, 0.5);
    return e;
  }();
  EXPECT_TRUE(sig.old_model() == expected);
  sig.after_step(live, unused, 2);
  EXPECT_TRUE(sig.old_model() == live);
}

TEST(DeltaProgress, ZeroBeforeFirstSnapshotAndWhenEqual) {
  CounterRng rng(6);
  wm::WorldModel live(tiny_config(), {2, 0}, {{0}, {1}}, rng);
  CounterRng data(7);
  const wm::Batch w = random_batch(live, 4, data);
  DeltaState s;
  for (double r : reward_delta_progress(s, live, w)) EXPECT_EQ(r, 0.0);
  s.push(live);
  for (double r : reward_delta_progress(s, live, w)) EXPECT_EQ(r, 0.0);
}

TEST(DeltaProgress, KeepsAtMostDeltaSnapshots) {
  CounterRng rng(8);
  wm::WorldModel live(tiny_config(), {1, 0}, {{0}}, rng);
  DeltaState s;
  s.delta = 2;
  for (int i = 0; i < 5; ++i) {
    live.params(0).at("mlp1.b")[0] = i;
    s.push(live);
    EXPECT_LE(s.snapshots.size(), 2u);
  }
  EXPECT_EQ(s.snapshots.front().params(0).at("mlp1.b")[0], 3.0);
}

TEST(DeltaProgress, AgreesWithGammaProgressAsGammaVanishes) {
  CounterRng rng(9);
  wm::WorldModel live(tiny_config(), {2, 1}, {{0}, {1}}, rng);
  CounterRng data(10);
  const wm::Batch train = random_batch(live, 16, data);
  const wm::Batch probe = random_batch(live, 6, data);

  DeltaProgressSignal delta(1);
  CounterRng other(11);
  wm::WorldModel ema_old(tiny_config(), {2, 1}, {{0}, {1}}, other);
  // One round: snapshot, then a few gradient steps of the live model.
  delta.begin_round(live);
  wm::old_model_update(ema_old, live, 1e-13);
  auto adam = wm::make_adam_states(live);
  for (int i = 0; i < 5; ++i) wm::wm_train_step(live, train, adam);

  const auto rd = delta.score(live, probe);
  const auto rg = reward_gamma_progress(ema_old, live, probe);
  for (std::size_t i = 0; i < rd.size(); ++i) {
    EXPECT_NE(rd[i], 0.0);
    EXPECT_NEAR(rd[i], rg[i], 1e-9);
  }
}

TEST(Rnd, ZeroWhenPredictorCopiesTarget) {
  CounterRng rng(12);
  RndState s = make_rnd(7, 16, 8, 1e-3, rng);
  s.predictor = s.target;
  CounterRng data(13);
  Tensor x = Tensor::matrix(5, 7);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = data.normal();
  for (double r : reward_rnd(s, x)) EXPECT_EQ(r, 0.0);
}

TEST(Rnd, RewardFallsOnRepeatedObservationAndTargetStaysFixed) {
  CounterRng rng(14);
  RndState s = make_rnd(7, 128, 64, 1e-4, rng);
  const std::uint64_t fp = num::fingerprint(s.target);
  CounterRng data(15);
  Tensor x = Tensor::matrix(1, 7);
  for (std::size_t i = 0; i < 7; ++i) x[i] = data.normal();
  double prev = reward_rnd(s, x)[0];
  EXPECT_GT(prev, 0.0);
  for (int step = 0; step < 50; ++step) {
    train_rnd(s, x);
    const double r = reward_rnd(s, x)[0];
    EXPECT_LT(r, prev) << "step " << step;
    prev = r;
  }
  EXPECT_EQ(num::fingerprint(s.target), fp);
  EXPECT_EQ(s.target_fingerprint, fp);
}

TEST(Rnd, DistinctObservationsGiveDistinctRewards) {
  CounterRng rng(16);
  RndState s = make_rnd(11, 128, 64, 1e-4, rng);
  CounterRng data(17);
  Tensor x = Tensor::matrix(200, 11);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = data.normal();
  const auto r = reward_rnd(s, x);
  std::set<double> distinct(r.begin(), r.end());
  EXPECT_EQ(distinct.size(), r.size());
  for (double v : r) EXPECT_GT(v, 0.0);
}

TEST(Rnd, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(300 + seed);
    RndState s = make_rnd(6, 5, 4, 1e-3, rng);
    CounterRng data(400 + seed);
    Tensor x = Tensor::matrix(3, 6);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = data.normal();
    const auto loss = [&](const ParamSet& p) {
      RndState probe = s;
      probe.predictor = p;
      double total = 0.0;
      for (double r : reward_rnd(probe, x)) total += r;
      return total / 3.0;
    };
    // Recover the analytic gradient from one Adam-free tape pass.
    num::Tape tape;
    const num::Var xin = tape.constant(x);
    const num::Var target = tape.constant(tape.value(num::forward_mlp(tape, s.target, s.spec, xin)));
    const num::Var diff = tape.sub(num::forward_mlp(tape, s.predictor, s.spec, xin), target);
    const num::Var l = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / (4.0 * 3.0));
    const ParamSet analytic = num::backward(tape, l, s.predictor);
    EXPECT_NEAR(tape.value(l).item(), loss(s.predictor), 1e-14);
    const ParamSet numeric = num::finite_diff_grad(loss, s.predictor, 1e-5);
    const auto cmp = num::compare_gradients(analytic, numeric, num::gradient_floor(tape.value(l).item()));
    EXPECT_LT(cmp.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Disagreement, PopulationVarianceOfScalarOutputs) {
  const std::vector<wm::Prediction> preds = {constant_prediction(1, 1), constant_prediction(2, 2),
                                             constant_prediction(3, 3)};
  EXPECT_NEAR(reward_disagreement(preds)[0], 2.0 / 3.0, 1e-15);
}

TEST(Disagreement, IdenticalMembersGiveZeroAndShiftIsIgnored) {
  CounterRng rng(18);
  wm::WorldModel m(tiny_config(), {3, 0}, {{0}, {1, 2}}, rng);
  CounterRng data(19);
  const wm::Batch w = random_batch(m, 5, data);
  const wm::Prediction p = m.predict(w);
  const std::vector<wm::Prediction> same = {p, p, p};
  for (double r : reward_disagreement(same)) EXPECT_EQ(r, 0.0);

  wm::WorldModel m2(tiny_config(), {3, 0}, {{0}, {1, 2}}, rng);
  wm::WorldModel m3(tiny_config(), {3, 0}, {{0}, {1, 2}}, rng);
  std::vector<wm::Prediction> mixed = {p, m2.predict(w), m3.predict(w)};
  const auto base = reward_disagreement(mixed);
  for (auto& q : mixed) {
    for (std::size_t i = 0; i < q.values.size(); ++i) q.values[i] += (i % 3 == 2 ? 0.0 : 123.25);
  }
  const auto shifted = reward_disagreement(mixed);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_GT(base[i], 0.0);
    EXPECT_NEAR(shifted[i], base[i], 1e-12 * std::max(1.0, base[i]));
  }
}

TEST(Disagreement, NeedsTwoMembers) {
  EXPECT_THROW(reward_disagreement(std::vector<wm::Prediction>{constant_prediction(0, 0)}), ConfigError);
  CuriosityConfig cfg;
  cfg.kind = SignalKind::Disagreement;
  cfg.ensemble_size = 1;
  CounterRng rng(20);
  const wm::WorldModel live = zero_model();
  EXPECT_THROW(make_signal(cfg, live, rng), ConfigError);
}

TEST(Adversarial, TriangleAndPerfectFit) {
  const wm::WorldModel zero = zero_model();
  EXPECT_NEAR(reward_adversarial(zero, triangle_batch())[0], 5.0, 1e-15);
  wm::WorldModel fitted = zero_model();
  fitted.params(0).at("mlp1.b") = Tensor::vector({0.3, 0.4, 0.0});
  EXPECT_NEAR(reward_adversarial(fitted, triangle_batch())[0], 0.0, 1e-12);
}

TEST(Adversarial, EqualsLossWithoutMaskTerm) {
  CounterRng rng(21);
  wm::WorldModel m(tiny_config(), {3, 1}, {{0}, {1}, {2}}, rng);
  CounterRng data(22);
  const wm::Batch w = random_batch(m, 6, data);
  const auto losses = m.window_losses(w);
  const auto r = reward_adversarial(m, w);
  const auto with_ce = reward_adversarial(m, w, true);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(r[i], losses[i].total() - losses[i].ce, 1e-12);
    EXPECT_GE(r[i], 0.0);
    EXPECT_EQ(with_ce[i], losses[i].total());
  }
}

TEST(RandomSignal, AlwaysZeroAndBypassesController) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CounterRng rng(seed);
    wm::WorldModel m(tiny_config(), {2, 0}, {{0}, {1}}, rng);
    CuriosityConfig cfg;
    cfg.kind = SignalKind::Random;
    auto sig = make_signal(cfg, m, rng);
    EXPECT_FALSE(sig->drives_controller());
    CounterRng data(seed + 10);
    for (double r : sig->score(m, random_batch(m, 4, data))) EXPECT_EQ(r, 0.0);
  }
}

TEST(Signals, EveryKindSharesTheInterface) {
  CounterRng rng(23);
  wm::WorldModel live(tiny_config(), {3, 2}, {{0}, {1, 2}}, rng);
  CounterRng data(24);
  const wm::Batch w = random_batch(live, 6, data);
  for (auto k : {SignalKind::GammaProgress, SignalKind::DeltaProgress, SignalKind::Rnd, SignalKind::Disagreement,
                 SignalKind::Adversarial, SignalKind::Random}) {
    CuriosityConfig cfg;
    cfg.kind = k;
    CounterRng sig_rng(25);
    auto sig = make_signal(cfg, live, sig_rng);
    EXPECT_EQ(sig->kind(), k);
    wm::WorldModel model = live;
    auto adam = wm::make_adam_states(model);
    for (std::uint64_t u = 1; u <= 3; ++u) {
      sig->begin_round(model);
      wm::wm_train_step(model, w, adam);
      sig->after_step(model, w, u);
    }
    const auto r = sig->score(model, w);
    ASSERT_EQ(r.size(), w.size) << signal_name(k);
    for (double v : r) EXPECT_TRUE(std::isfinite(v)) << signal_name(k);
    if (k == SignalKind::Disagreement || k == SignalKind::Adversarial || k == SignalKind::Rnd) {
      for (double v : r) EXPECT_GE(v, 0.0) << signal_name(k);
    }
  }
}
