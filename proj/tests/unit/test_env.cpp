#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "awml/common/error.hpp"
#include "awml/env/env.hpp"

using namespace awml;
using namespace awml::env;

namespace {

const RoomConfig kRoom{};

std::vector<Vec2> centres(const Env& e) { return e.zone_centres(); }

const BehaviorKind kAnimate[] = {BehaviorKind::ReachDet,    BehaviorKind::ReachStoch,    BehaviorKind::ChaseDet,
                                 BehaviorKind::ChaseStoch,  BehaviorKind::PeekabooDet,   BehaviorKind::PeekabooStoch,
                                 BehaviorKind::MimicDet,    BehaviorKind::MimicStoch};

}  // namespace

TEST(Rotate, Examples) {
  EXPECT_NEAR(rotate({350.0}, Action::R24).orientation_deg, 14.0, 1e-12);
  EXPECT_EQ(rotate({123.0}, Action::Stay).orientation_deg, 123.0);
  EXPECT_NEAR(rotate(rotate({77.0}, Action::L12), Action::R12).orientation_deg, 77.0, 1e-12);
  EXPECT_NEAR(rotate({5.0}, Action::L96).orientation_deg, 269.0, 1e-12);
}

TEST(Rotate, OrientationAlwaysNormalized) {
  num::CounterRng rng(3);
  EgoState e{0.0};
  for (int k = 0; k < 100000; ++k) {
    e = rotate(e, action_from_index(rng.below(kNumActions)));
    ASSERT_GE(e.orientation_deg, 0.0);
    ASSERT_LT(e.orientation_deg, 360.0);
  }
}

TEST(Actions, NineSignedRotations) {
  std::set<double> rot;
  for (std::size_t i = 0; i < kNumActions; ++i) rot.insert(rotation_deg(action_from_index(i)));
  EXPECT_EQ(rot, (std::set<double>{-96, -48, -24, -12, 0, 12, 24, 48, 96}));
  EXPECT_THROW(action_from_index(9), ContractError);
}

TEST(Visible, Examples) {
  EXPECT_TRUE(visible({45.0}, polar(5.0, 45.0), kRoom));
  EXPECT_FALSE(visible({45.0}, polar(5.0, 225.0), kRoom));
  EXPECT_TRUE(visible({45.0}, polar(5.0, 45.0 + 25.0), kRoom));
  EXPECT_TRUE(visible({45.0}, polar(5.0, 45.0 - 25.0), kRoom));
  EXPECT_FALSE(visible({45.0}, polar(5.0, 45.0 + 25.01), kRoom));
  EXPECT_TRUE(visible({355.0}, polar(5.0, 10.0), kRoom));
  EXPECT_THROW(visible({0.0}, {0.0, 0.0}, kRoom), GeometryError);
}

TEST(RoomConfig, RejectsOverlappingCone) {
  RoomConfig bad;
  bad.fov_deg = 60.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_NO_THROW(kRoom.validate());
}

TEST(Behavior, StaticNeverMoves) {
  Env e = Env::reset({WorldKind::Mixture, BehaviorKind::ReachDet, 1}, kRoom);
  const Vec2 start = e.positions()[0];
  num::CounterRng rng(4);
  for (int k = 0; k < 5000; ++k) {
    e.step(action_from_index(rng.below(9)), centres(e));
    ASSERT_EQ(e.positions()[0], start);
  }
}

TEST(Behavior, PeriodicRoundTrip) {
  const BehaviorSpec spec{BehaviorKind::Periodic, 2, {}};
  const Layout lay = make_layout(2, kRoom);
  BehaviorState s = init_behavior(spec, lay, 9);
  ASSERT_EQ(s.pos[0], lay.periodic_a);
  const double d = distance(lay.periodic_a, lay.periodic_b);
  const int steps = static_cast<int>(std::ceil(2.0 * d / spec.params.periodic_speed));
  for (int k = 0; k < steps; ++k) behavior_step(spec, lay, s, {});
  EXPECT_LE(distance(s.pos[0], lay.periodic_a), spec.params.periodic_speed);
}

TEST(Behavior, NoiseStaysInZoneWithExactStep) {
  const BehaviorSpec spec{BehaviorKind::Noise, 3, {}};
  const Layout lay = make_layout(3, kRoom);
  BehaviorState s = init_behavior(spec, lay, 17);
  for (int k = 0; k < 1000000; ++k) {
    const Vec2 before = s.pos[0];
    behavior_step(spec, lay, s, {});
    ASSERT_TRUE(lay.zone.contains(s.pos[0])) << "step " << k;
    ASSERT_NEAR(distance(before, s.pos[0]), spec.params.noise_step, 1e-12) << "step " << k;
  }
}

TEST(Behavior, MimicDetMirrorsWithDelay) {
  const BehaviorSpec spec{BehaviorKind::MimicDet, 4, {}};
  const Layout lay = make_layout(4, kRoom);
  BehaviorState s = init_behavior(spec, lay, 5);
  std::vector<Vec2> actor{s.pos[0]};
  const std::size_t d = spec.params.mimic_delay;
  for (std::size_t t = 1; t <= 3000; ++t) {
    behavior_step(spec, lay, s, {});
    actor.push_back(s.pos[0]);
    if (t >= d) {
      const Vec2 want = mirror_across_diagonal(actor[t - d], 4);
      ASSERT_EQ(s.pos[1], want) << "t=" << t;
      // Independent polar form of the reflection.
      const double phi = lay.zone.phi_of(actor[t - d]);
      const Vec2 polar_form = lay.zone.at(norm(actor[t - d]), -phi);
      ASSERT_NEAR(s.pos[1].x, polar_form.x, 1e-12);
      ASSERT_NEAR(s.pos[1].y, polar_form.y, 1e-12);
    }
    ASSERT_TRUE(lay.actor_half.contains(s.pos[0]));
    ASSERT_TRUE(lay.imitator_half.contains(s.pos[1], 1e-9));
  }
}

TEST(Behavior, MimicStochIsNoisyCopy) {
  const BehaviorSpec spec{BehaviorKind::MimicStoch, 1, {}};
  const Layout lay = make_layout(1, kRoom);
  BehaviorState s = init_behavior(spec, lay, 5);
  std::vector<Vec2> actor{s.pos[0]};
  double err = 0.0;
  const std::size_t d = spec.params.mimic_delay;
  for (std::size_t t = 1; t <= 2000; ++t) {
    behavior_step(spec, lay, s, {});
    actor.push_back(s.pos[0]);
    if (t >= d) err = std::max(err, distance(s.pos[1], mirror_across_diagonal(actor[t - d], 1)));
  }
  EXPECT_GT(err, 0.0);
  EXPECT_LT(err, 0.5);
}

TEST(Behavior, PeekabooContingency) {
  const BehaviorSpec spec{BehaviorKind::PeekabooDet, 1, {}};
  const Layout lay = make_layout(1, kRoom);
  BehaviorState s = init_behavior(spec, lay, 1);
  const bool seen[1] = {true};
  std::vector<PeekPhase> phases;
  for (int k = 0; k < 400; ++k) {
    behavior_step(spec, lay, s, {seen, {}});
    if (phases.empty() || phases.back() != s.peek) phases.push_back(s.peek);
  }
  ASSERT_GE(phases.size(), 4u);
  EXPECT_EQ(phases[0], PeekPhase::Exposed);
  EXPECT_EQ(phases[1], PeekPhase::Hidden);
  EXPECT_EQ(phases[2], PeekPhase::Peeking);
  EXPECT_EQ(phases[3], PeekPhase::Hidden);

  // Look away while hidden or peeking: back to Exposed, and at the exposed
  // spot within the travel time.
  const bool unseen[1] = {false};
  behavior_step(spec, lay, s, {unseen, {}});
  EXPECT_EQ(s.peek, PeekPhase::Exposed);
  const double travel = distance(s.pos[0], lay.exposed) / spec.params.peekaboo_speed;
  for (int k = 0; k < static_cast<int>(std::ceil(travel)); ++k) behavior_step(spec, lay, s, {unseen, {}});
  EXPECT_EQ(s.pos[0], lay.exposed);
}

TEST(Behavior, PeekabooNeedsGaze) {
  const BehaviorSpec spec{BehaviorKind::PeekabooStoch, 1, {}};
  const Layout lay = make_layout(1, kRoom);
  BehaviorState s = init_behavior(spec, lay, 1);
  EXPECT_THROW(behavior_step(spec, lay, s, {}), ContractError);
  const BehaviorSpec reach{BehaviorKind::ReachDet, 1, {}};
  BehaviorState r = init_behavior(reach, lay, 1);
  EXPECT_THROW(behavior_step(reach, lay, r, {}), ContractError);
}

TEST(Behavior, ChaseRunnerEscapes) {
  const BehaviorSpec spec{BehaviorKind::ChaseDet, 2, {}};
  const Layout lay = make_layout(2, kRoom);
  BehaviorState s = init_behavior(spec, lay, 2);
  int escapes = 0;
  bool was = false;
  for (int k = 0; k < 5000; ++k) {
    behavior_step(spec, lay, s, {});
    ASSERT_TRUE(lay.zone.contains(s.pos[0]));
    ASSERT_TRUE(lay.zone.contains(s.pos[1]));
    if (s.escape_to && !was) ++escapes;
    was = s.escape_to.has_value();
  }
  EXPECT_GT(escapes, 5);
}

TEST(Encode, Examples) {
  const std::vector<Vec2> truth{{3, 4}, {-5, 6}};
  const std::vector<Vec2> c_hat{{1, 2}, {1, 2}};
  const std::vector<std::uint8_t> all{1, 1};
  const Observation o = encode(truth, all, {}, {90.0}, c_hat);
  EXPECT_EQ(o.coords, truth);
  const std::vector<std::uint8_t> some{1, 0};
  const Observation p = encode(truth, some, {}, {90.0}, c_hat);
  EXPECT_EQ(p.coords[1], (Vec2{1, 2}));
  EXPECT_EQ(p.mask[1], 0);
  const std::vector<Vec2> moved{{3, 4}, {-7, 7}};
  EXPECT_EQ(encode(moved, some, {}, {90.0}, c_hat), p);
  EXPECT_NEAR(p.ego_sin, 1.0, 1e-15);
  EXPECT_EQ(p.flat().size(), Observation::dim(2, 0));
}

TEST(Env, ResetCompositions) {
  const Env m = Env::reset({WorldKind::Mixture, BehaviorKind::ChaseDet, 3}, kRoom);
  EXPECT_EQ(m.slot_spec(0).kind, BehaviorKind::Static);
  EXPECT_EQ(m.slot_spec(1).kind, BehaviorKind::Periodic);
  EXPECT_EQ(m.slot_spec(2).kind, BehaviorKind::Noise);
  EXPECT_EQ(m.slot_spec(3).kind, BehaviorKind::ChaseDet);
  EXPECT_EQ(m.n_agents(), 5u);
  const Env n = Env::reset({WorldKind::Noise, BehaviorKind::ReachDet, 3}, kRoom);
  for (int q = 0; q < 3; ++q) EXPECT_EQ(n.slot_spec(q).kind, BehaviorKind::Noise);
  EXPECT_EQ(n.slot_spec(3).kind, BehaviorKind::ReachDet);
  EXPECT_EQ(n.n_aux(), 3u);
  EXPECT_THROW(Env::reset({WorldKind::Noise, BehaviorKind::Noise, 3}, kRoom), ConfigError);
}

TEST(Env, SameSeedSameStream) {
  for (BehaviorKind animate : kAnimate) {
    Env a = Env::reset({WorldKind::Mixture, animate, 42}, kRoom);
    Env b = Env::reset({WorldKind::Mixture, animate, 42}, kRoom);
    EXPECT_EQ(a.positions(), b.positions());
    num::CounterRng rng(8);
    for (int k = 0; k < 3000; ++k) {
      const Action act = action_from_index(rng.below(9));
      ASSERT_EQ(a.step(act, centres(a)), b.step(act, centres(b)));
    }
  }
}

TEST(Env, StayInFrontOfStaticRepeats) {
  Env e = Env::reset({WorldKind::Mixture, BehaviorKind::ReachDet, 1}, kRoom);
  // Turn toward quadrant 1 (45 deg) with R24, R24 = 48 deg.
  e.step(Action::R24, centres(e));
  const Observation first = e.step(Action::R24, centres(e));
  ASSERT_EQ(first.mask[0], 1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(e.step(Action::Stay, centres(e)), first);
}

TEST(Env, RandomRolloutExclusivityAndContainment) {
  for (BehaviorKind animate : kAnimate) {
    for (WorldKind world : {WorldKind::Mixture, WorldKind::Noise}) {
      Env e = Env::reset({world, animate, 77}, kRoom);
      num::CounterRng rng(9);
      const int steps = animate == BehaviorKind::ReachDet && world == WorldKind::Mixture ? 100000 : 12000;
      for (int k = 0; k < steps; ++k) {
        e.step(action_from_index(rng.below(9)), centres(e));
        std::set<std::size_t> slots;
        for (std::size_t i = 0; i < e.n_agents(); ++i) {
          if (e.in_view()[i]) slots.insert(e.slot_of_agent(i));
        }
        ASSERT_LE(slots.size(), 1u) << "step " << k;
        const auto pos = e.positions();
        for (std::size_t i = 0; i < pos.size(); ++i) {
          ASSERT_TRUE(e.slot_layout(e.slot_of_agent(i)).zone.contains(pos[i])) << "agent " << i << " step " << k;
        }
      }
    }
  }
}

TEST(Env, ReachRespawnMovesObjects) {
  Env e = Env::reset({WorldKind::Noise, BehaviorKind::ReachDet, 5}, kRoom);
  const auto before = e.aux_positions();
  Env clone = e;
  clone.respawn_objects(1);
  EXPECT_NE(clone.aux_positions(), before);
  EXPECT_EQ(e.aux_positions(), before);
}

TEST(Env, ReachObjectsRelocatePeriodically) {
  Env e = Env::reset({WorldKind::Noise, BehaviorKind::ReachStoch, 5}, kRoom);
  const auto start = e.aux_positions();
  for (int k = 0; k < 499; ++k) e.step(Action::Stay, centres(e));
  EXPECT_EQ(e.aux_positions(), start);
  e.step(Action::Stay, centres(e));
  EXPECT_NE(e.aux_positions(), start);
}

TEST(Env, PeekabooHidesFromSteadyGaze) {
  Env e = Env::reset({WorldKind::Noise, BehaviorKind::PeekabooDet, 5}, kRoom);
  // Face quadrant 4 (315 deg): L48 from 0 lands on 312.
  e.step(Action::L48, centres(e));
  int hidden_masked = 0;
  for (int k = 0; k < 300; ++k) {
    const Observation o = e.step(Action::Stay, centres(e));
    if (e.phase(3) == "hidden" && e.in_view()[3] && o.mask[3] == 0) ++hidden_masked;
  }
  EXPECT_GT(hidden_masked, 0);
}
