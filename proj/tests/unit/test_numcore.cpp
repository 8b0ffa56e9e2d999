#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "awml/common/error.hpp"
#include "awml/numcore/adam.hpp"
#include "awml/numcore/checkpoint.hpp"
#include "awml/numcore/gradcheck.hpp"
#include "awml/numcore/layers.hpp"
#include "awml/numcore/param_set.hpp"
#include "awml/numcore/rng.hpp"
#include "awml/numcore/tape.hpp"

using namespace awml;
using namespace awml::num;

namespace {

ParamSet scalar_params(std::vector<std::pair<std::string, std::vector<double>>> entries) {
  ParamSet p;
  for (auto& [name, values] : entries) p.add(name, Tensor::vector(values));
  return p;
}

// Hand-set 2-layer, 1-unit LSTM with a 1-1-1 head; values mirrored in
// tests/oracles/numcore_oracle.py.
ParamSet oracle_lstm() {
  ParamSet p;
  p.add("lstm0.wx", Tensor({1, 4}, {0.5, -0.3, 0.8, 0.2}));
  p.add("lstm0.wh", Tensor({1, 4}, {0.1, 0.4, -0.6, 0.3}));
  p.add("lstm0.b", Tensor::vector({0.05, 1.0, -0.1, 0.2}));
  p.add("lstm1.wx", Tensor({1, 4}, {-0.7, 0.6, 0.9, -0.4}));
  p.add("lstm1.wh", Tensor({1, 4}, {0.2, -0.5, 0.3, 0.7}));
  p.add("lstm1.b", Tensor::vector({0.0, 1.0, 0.15, -0.05}));
  p.add("mlp0.w", Tensor({1, 1}, {1.3}));
  p.add("mlp0.b", Tensor::vector({-0.2}));
  p.add("mlp1.w", Tensor({1, 1}, {-0.9}));
  p.add("mlp1.b", Tensor::vector({0.4}));
  return p;
}

const LstmMlpSpec kOracleSpec{1, 1, 1, 1, 2};

Tensor random_tensor(Shape shape, CounterRng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

}  // namespace

TEST(Tensor, RejectsZeroDimensionAndLengthMismatch) {
  EXPECT_THROW(Tensor(Shape{2, 0}), SchemaError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), SchemaError);
  EXPECT_EQ(Tensor::scalar(3.0).item(), 3.0);
  EXPECT_THROW(Tensor::matrix(2, 2).item(), ContractError);
}

TEST(ParamSet, DuplicateNamesRejected) {
  ParamSet p;
  p.add("a", Tensor::vector({1}));
  EXPECT_THROW(p.add("a", Tensor::vector({2})), SchemaError);
}

TEST(ParamSet, FlattenRoundTripKeepsOrder) {
  ParamSet p = scalar_params({{"z", {1, 2}}, {"a", {3}}});
  EXPECT_EQ(p.flatten(), (std::vector<double>{1, 2, 3}));
  p.assign_flat(std::vector<double>{4, 5, 6});
  EXPECT_EQ(p.at("a")[0], 6.0);
  EXPECT_EQ(p.entry(0).name, "z");
}

TEST(LstmMlp, ZeroNetGivesZeroOutput) {
  const LstmMlpSpec spec{3, 4, 5, 6, 2};
  CounterRng rng(1);
  ParamSet p = init_lstm_mlp(spec, rng);
  for (std::size_t i = 0; i < p.size(); ++i) p.tensor(i).fill(0.0);
  CounterRng in(2);
  const Tensor out = forward_lstm_mlp(p, spec, random_tensor({7, 3}, in));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmMlp, MatchesScalarRecursionOracle) {
  const ParamSet p = oracle_lstm();
  EXPECT_NEAR(forward_lstm_mlp(p, kOracleSpec, Tensor({1, 1}, {0.7}))[0], 0.5076921019682885, 1e-14);
  const Tensor out = forward_lstm_mlp(p, kOracleSpec, Tensor({3, 1}, {0.7, -1.2, 0.3}));
  EXPECT_NEAR(out[0], 0.5076921019682885, 1e-14);
  EXPECT_NEAR(out[1], 0.48754983016823517, 1e-14);
  EXPECT_NEAR(out[2], 0.460695854258121, 1e-14);
}

TEST(LstmMlp, CarriedStateChangesRepeatedInput) {
  const Tensor out = forward_lstm_mlp(oracle_lstm(), kOracleSpec, Tensor({2, 1}, {0.7, 0.7}));
  EXPECT_NE(out[0], out[1]);
}

TEST(LstmMlp, BatchedRowsMatchSingleSequences) {
  const LstmMlpSpec spec{2, 3, 4, 3, 2};
  CounterRng rng(5);
  const ParamSet p = init_lstm_mlp(spec, rng);
  const Tensor a = random_tensor({4, 2}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  Tape tape(Tape::Mode::Inference);
  std::vector<Var> steps;
  for (std::size_t t = 0; t < 4; ++t) {
    steps.push_back(tape.constant(Tensor({2, 2}, {a.at(t, 0), a.at(t, 1), b.at(t, 0), b.at(t, 1)})));
  }
  const Tensor& batched = tape.value(forward_lstm_mlp(tape, p, spec, steps, {}, 1).out);
  const Tensor sa = forward_lstm_mlp(p, spec, a);
  const Tensor sb = forward_lstm_mlp(p, spec, b);
  ASSERT_EQ(batched.rows(), 6u);
  for (std::size_t t = 1; t < 4; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_DOUBLE_EQ(batched.at(2 * (t - 1), c), sa.at(t, c));
      EXPECT_DOUBLE_EQ(batched.at(2 * (t - 1) + 1, c), sb.at(t, c));
    }
  }
}

TEST(LstmMlp, SchemaAndFiniteChecks) {
  CounterRng rng(3);
  const ParamSet p = init_lstm_mlp({2, 3, 4, 3, 2}, rng);
  EXPECT_THROW(forward_lstm_mlp(p, {2, 4, 4, 3, 2}, Tensor::matrix(2, 2)), SchemaError);
  EXPECT_THROW(forward_lstm_mlp(p, {2, 3, 4, 3, 2}, Tensor::matrix(2, 3)), SchemaError);
  Tensor bad = Tensor::matrix(2, 2);
  bad[1] = std::nan("");
  EXPECT_THROW(forward_lstm_mlp(p, {2, 3, 4, 3, 2}, bad), ValidationError);
}

TEST(LstmMlp, InitUsesForgetBiasOne) {
  CounterRng rng(4);
  const ParamSet p = init_lstm_mlp({2, 3, 4, 3, 2}, rng);
  const Tensor& b = p.at("lstm1.b");
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(b[k], (k >= 3 && k < 6) ? 1.0 : 0.0);
  const double bound = 1.0 / std::sqrt(5.0);
  for (double v : p.at("lstm0.wx").values()) EXPECT_LE(std::abs(v), bound);
}

TEST(Backward, SumGivesOnes) {
  ParamSet p = scalar_params({{"a", {1, -2, 3}}, {"b", {0.5}}});
  Tape tape;
  const Var s = tape.add(tape.sum(tape.param(p, "a")), tape.sum(tape.param(p, "b")));
  const ParamSet g = backward(tape, s, p);
  for (const auto& e : g) {
    for (double v : e.value.values()) EXPECT_EQ(v, 1.0);
  }
}

TEST(Backward, ConstantLossGivesZeros) {
  ParamSet p = scalar_params({{"a", {1, 2}}});
  Tape tape;
  tape.param(p, "a");
  const Var c = tape.constant(Tensor::scalar(0.0));
  const ParamSet g = backward(tape, c, p);
  for (double v : g.at("a").values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  ParamSet p = scalar_params({{"a", {1, 2}}});
  Tape tape;
  const Var a = tape.param(p, "a");
  EXPECT_THROW(tape.backward(a), ContractError);
}

TEST(Backward, UnusedEntriesAreZero) {
  ParamSet p = scalar_params({{"a", {1, 2}}, {"unused", {7}}});
  Tape tape;
  const ParamSet g = backward(tape, tape.sum(tape.tanh(tape.param(p, "a"))), p);
  EXPECT_EQ(g.at("unused")[0], 0.0);
  EXPECT_NEAR(g.at("a")[0], 1.0 - std::pow(std::tanh(1.0), 2), 1e-15);
}

TEST(GradCheck, LstmMlpWithMaskedLoss) {
  CounterRng rng(11);
  for (int inst = 0; inst < 20; ++inst) {
    const LstmMlpSpec spec{2 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3), 3 * (1 + rng.below(2)), 2};
    const std::size_t steps = 2 + rng.below(3);
    const std::size_t batch = 1 + rng.below(3);
    const std::size_t head = rng.below(steps);
    const ParamSet params = init_lstm_mlp(spec, rng);
    std::vector<Tensor> seq;
    for (std::size_t t = 0; t < steps; ++t) seq.push_back(random_tensor({batch, spec.input}, rng));
    Tensor target = random_tensor({(steps - head) * batch, spec.output}, rng);
    for (std::size_t r = 0; r < target.rows(); ++r) {
      for (std::size_t a = 0; a < spec.output / 3; ++a) target.at(r, 3 * a + 2) = rng.below(2);
    }
    const CoordLossOptions opts{2.0, inst % 2 == 1, true, true};
    auto loss_of = [&](Tape& tape, const ParamSet& p) {
      std::vector<Var> vars;
      for (const auto& s : seq) vars.push_back(tape.constant(s));
      return tape.coord_mask_loss(forward_lstm_mlp(tape, p, spec, vars, {}, head).out, target, opts);
    };
    Tape tape;
    const Var loss = loss_of(tape, params);
    const double floor = gradient_floor(tape.value(loss).item());
    const ParamSet analytic = backward(tape, loss, params);
    const ParamSet numeric = finite_diff_grad(
        [&](const ParamSet& p) {
          Tape t(Tape::Mode::Inference);
          return t.value(loss_of(t, p)).item();
        },
        params, 1e-5);
    const GradComparison cmp = compare_gradients(analytic, numeric, floor);
    EXPECT_LT(cmp.max_rel_error, 1e-4) << "instance " << inst << " entry " << params.entry(cmp.entry).name
                                       << "[" << cmp.index << "] analytic " << cmp.analytic << " numeric "
                                       << cmp.numeric;
  }
}

TEST(GradCheck, MlpSquaredError) {
  CounterRng rng(12);
  for (int inst = 0; inst < 20; ++inst) {
    const MlpSpec spec{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(4)};
    const ParamSet params = init_mlp(spec, rng);
    const std::size_t batch = 1 + rng.below(4);
    const Tensor x = random_tensor({batch, spec.input}, rng);
    const Tensor y = random_tensor({batch, spec.output}, rng);
    auto loss_of = [&](Tape& tape, const ParamSet& p) {
      const Var d = tape.sub(forward_mlp(tape, p, spec, tape.constant(x)), tape.constant(y));
      return tape.mean(tape.mul(d, d));
    };
    Tape tape;
    const ParamSet analytic = backward(tape, loss_of(tape, params), params);
    const ParamSet numeric = finite_diff_grad(
        [&](const ParamSet& p) {
          Tape t(Tape::Mode::Inference);
          return t.value(loss_of(t, p)).item();
        },
        params, 1e-5);
    EXPECT_LT(compare_gradients(analytic, numeric).max_rel_error, 1e-4) << "instance " << inst;
  }
}

TEST(GradCheck, ElementwiseOps) {
  CounterRng rng(13);
  ParamSet p;
  p.add("a", random_tensor({3, 4}, rng));
  p.add("b", random_tensor({4, 2}, rng));
  p.add("c", random_tensor({3, 2}, rng));
  const std::vector<std::size_t> pick{1, 0, 1};
  auto loss_of = [&](Tape& t, const ParamSet& ps) {
    const Var m = t.matmul(t.param(ps, "a"), t.param(ps, "b"));
    const Var s = t.sigmoid(t.mul(m, t.param(ps, "c")));
    const Var cat = t.concat_rows(std::vector<Var>{s, t.scale(t.slice_cols(t.param(ps, "a"), 1, 3), 0.5)});
    return t.sum(t.add(t.pick_cols(t.tanh(cat), std::vector<std::size_t>{1, 0, 1, 0, 1, 1}),
                       t.constant(Tensor::matrix(6, 1, 0.1))));
  };
  (void)pick;
  Tape tape;
  const ParamSet analytic = backward(tape, loss_of(tape, p), p);
  const ParamSet numeric = finite_diff_grad(
      [&](const ParamSet& ps) {
        Tape t(Tape::Mode::Inference);
        return t.value(loss_of(t, ps)).item();
      },
      p, 1e-5);
  EXPECT_LT(compare_gradients(analytic, numeric).max_rel_error, 1e-4);
}

TEST(CoordLoss, ThreeFourFiveFixture) {
  Tape tape;
  const Var pred = tape.constant(Tensor({1, 3}, {3.0, 4.0, 0.0}));
  const Var loss = tape.coord_mask_loss(pred, Tensor({1, 3}, {0.0, 0.0, 1.0}), {});
  EXPECT_NEAR(tape.value(loss).item(), 5.0 + std::log(2.0), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet p = scalar_params({{"w", {0.3, -2.0, 5.0}}});
  AdamState st(p, {0.1, 0.9, 0.999, 1e-8});
  adam_step(st, p, scalar_params({{"w", {1, 1, 1}}}));
  EXPECT_NEAR(p.at("w")[0], 0.2, 1e-8);
  EXPECT_NEAR(p.at("w")[1], -2.1, 1e-8);
  EXPECT_NEAR(p.at("w")[2], 4.9, 1e-8);
  EXPECT_EQ(st.t(), 1u);
}

TEST(Adam, ZeroGradientLeavesParams) {
  ParamSet p = scalar_params({{"w", {0.3, -2.0}}});
  const ParamSet before = p;
  AdamState st(p, {});
  adam_step(st, p, p.zeros_like());
  EXPECT_TRUE(p == before);
  EXPECT_EQ(st.t(), 1u);
}

TEST(Adam, ThreeStepRecurrenceOracle) {
  ParamSet p = scalar_params({{"w", {0.5}}});
  AdamState st(p, {0.1, 0.9, 0.999, 1e-8});
  const double expected[] = {0.400000001, 0.40526315884210523, 0.37168382338454065};
  const double grads[] = {1.0, -1.0, 1.0};
  for (int k = 0; k < 3; ++k) {
    adam_step(st, p, scalar_params({{"w", {grads[k]}}}));
    EXPECT_NEAR(p.at("w")[0], expected[k], 1e-15);
  }
}

TEST(Adam, SchemaMismatchAndMonotoneCounter) {
  ParamSet p = scalar_params({{"w", {0.5, 1.0}}});
  AdamState st(p, {});
  EXPECT_THROW(adam_step(st, p, scalar_params({{"w", {1.0}}})), SchemaError);
  CounterRng rng(8);
  for (std::uint64_t k = 1; k <= 50; ++k) {
    adam_step(st, p, scalar_params({{"w", {rng.normal(), rng.normal()}}}));
    EXPECT_EQ(st.t(), k);
    for (double v : st.v().tensor(0).values()) EXPECT_GE(v, 0.0);
  }
}

TEST(Ema, Examples) {
  const ParamSet old = scalar_params({{"w", {0.0}}});
  const ParamSet fresh = scalar_params({{"w", {1.0}}});
  EXPECT_NEAR(ema_blend(old, fresh, 0.9).at("w")[0], 0.1, 1e-15);
  EXPECT_TRUE(ema_blend(fresh, fresh, 0.9) == fresh);
  EXPECT_THROW(ema_blend(old, fresh, 1.0), ConfigError);
  EXPECT_THROW(ema_blend(old, fresh, 0.0), ConfigError);
}

TEST(Ema, RepeatedBlendsEqualGeometricMixture) {
  const double gamma = 0.97;
  CounterRng rng(21);
  const ParamSet init = scalar_params({{"w", {rng.normal(), rng.normal()}}});
  std::vector<ParamSet> seq;
  for (int k = 0; k < 60; ++k) seq.push_back(scalar_params({{"w", {rng.normal(), rng.normal()}}}));
  ParamSet blended = init;
  for (const auto& s : seq) ema_blend_into(blended, s, gamma);
  const std::size_t k = seq.size();
  for (std::size_t c = 0; c < 2; ++c) {
    double direct = std::pow(gamma, double(k)) * init.at("w")[c];
    for (std::size_t i = 1; i <= k; ++i) direct += (1 - gamma) * std::pow(gamma, double(k - i)) * seq[i - 1].at("w")[c];
    EXPECT_NEAR(blended.at("w")[c], direct, 1e-10);
  }
}

TEST(Ema, ConvexityProperty) {
  CounterRng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const ParamSet a = scalar_params({{"w", {rng.normal(), rng.normal(), rng.normal()}}});
    const ParamSet b = scalar_params({{"w", {rng.normal(), rng.normal(), rng.normal()}}});
    const double gamma = rng.uniform(1e-6, 1 - 1e-6);
    const ParamSet c = ema_blend(a, b, gamma);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(c.at("w")[i], std::min(a.at("w")[i], b.at("w")[i]));
      EXPECT_LE(c.at("w")[i], std::max(a.at("w")[i], b.at("w")[i]));
    }
  }
}

TEST(FiniteDiff, Examples) {
  const ParamSet p = scalar_params({{"p", {3.0}}});
  const ParamSet sq = finite_diff_grad([](const ParamSet& q) { return q.at("p")[0] * q.at("p")[0]; }, p, 1e-5);
  EXPECT_NEAR(sq.at("p")[0], 6.0, 1e-6);
  const ParamSet flat = finite_diff_grad([](const ParamSet&) { return 4.0; }, p, 1e-5);
  EXPECT_EQ(flat.at("p")[0], 0.0);
  EXPECT_THROW(finite_diff_grad([](const ParamSet& q) { return std::sqrt(q.at("p")[0] - 3.0); }, p, 1e-5),
               ValidationError);
}

TEST(Determinism, SameSeedSameParams) {
  const LstmMlpSpec spec{3, 4, 5, 6, 2};
  CounterRng r1 = CounterRng::derive(99, {1, 2});
  CounterRng r2 = CounterRng::derive(99, {1, 2});
  ParamSet a = init_lstm_mlp(spec, r1);
  ParamSet b = init_lstm_mlp(spec, r2);
  AdamState sa(a, {}), sb(b, {});
  for (int k = 0; k < 5; ++k) {
    ParamSet g = a.zeros_like();
    for (std::size_t i = 0; i < g.size(); ++i) g.tensor(i).fill(0.01 * (k + 1));
    adam_step(sa, a, g);
    adam_step(sb, b, g);
    ema_blend_into(a, b, 0.5);
    ema_blend_into(b, a, 0.5);
  }
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  EXPECT_TRUE(a == b);
}

TEST(Rng, StreamsAreIndependentOfDerivationPath) {
  CounterRng a = CounterRng::derive(7, {1, 0});
  CounterRng b = CounterRng::derive(7, {2, 0});
  EXPECT_NE(a.next_u64(), b.next_u64());
  CounterRng c = CounterRng::derive(7, {1, 0});
  c.next_u64();
  EXPECT_EQ(a.next_u64(), c.next_u64());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  CounterRng rng(31);
  ParamSet p = init_lstm_mlp({2, 3, 4, 3, 2}, rng);
  p.tensor(0)[0] = -0.0;
  p.tensor(1)[0] = 1e-310;
  const auto dir = std::filesystem::temp_directory_path() / "awml_ckpt_test";
  save_checkpoint(dir / "model", p);
  const ParamSet q = load_checkpoint(dir / "model");
  EXPECT_TRUE(p == q);
  EXPECT_TRUE(std::signbit(q.tensor(0)[0]));
  std::filesystem::remove_all(dir);
}
