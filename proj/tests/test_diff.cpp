// Copyright 2026 The danosim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

namespace danosim {
namespace {

using testing::at_rest;

ParamVector params_of(const Scene& s, std::initializer_list<const char*> names) {
  ParamVector p;
  for (const char* n : names) p.entries.push_back({n, get_param(s, n), 0.0, 1e9});
  return p;
}

// Bar sliding and spinning on the ground while the pusher closes in.
State sliding_state(const Scene& s) {
  State x = testing::push_start(s);
  x[0].linear_velocity = Vec3(0.6, 0.1, 0.0);
  x[0].angular_velocity = Vec3(0.0, 0.0, 1.5);
  x[1].position = x[0].position - Vec3(0.079, 0, 0);
  x[1].linear_velocity = Vec3(0.8, 0, 0);
  return x;
}

TEST(Layout, Dimensions) {
  Scene one;
  one.bodies = {testing::sphere_body("s", 0.1, 1.0, false, true)};
  EXPECT_EQ(state_tangent_layout(one).state_dim, 12);
  EXPECT_EQ(state_tangent_layout(testing::strike_scene()).state_dim, 36);
  const Scene push = testing::push_scene();
  EXPECT_EQ(state_tangent_layout(push).state_dim, 24);
  EXPECT_EQ(state_tangent_layout(push).control_dim, 6);
}

TEST(Layout, RetractLocalRoundTrip) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  State x = {at_rest(Vec3(0.1, 0.2, 0.3)), at_rest(Vec3(-1, 0, 0))};
  x[1].orientation = quat_exp(Vec3(0.3, -0.2, 0.5));
  VecX d(24);
  for (int i = 0; i < 24; ++i) d[i] = 0.3 * n(rng);
  EXPECT_LT((local_coordinates(x, retract(x, d)) - d).norm(), 1e-12);
}

TEST(Params, NamesResolve) {
  Scene s = testing::push_scene();
  set_param(s, "alpha.bar", 321.0);
  EXPECT_EQ(s.bodies[1].alpha, 321.0);
  set_param(s, "contact.bar.ground.sliding_friction", 0.61);
  EXPECT_EQ(s.contacts[0].params.sliding_friction, 0.61);
  // pair lookup is order-insensitive
  EXPECT_EQ(get_param(s, "contact.ground.bar.sliding_friction"), 0.61);
  EXPECT_THROW(get_param(s, "alpha.pusher"), DomainError);
  EXPECT_THROW(get_param(s, "contact.bar.ground.bogus"), DomainError);
  EXPECT_THROW(get_param(s, "contact.pusher.ground.impact_spring"), DomainError);
  EXPECT_THROW(get_param(s, "mass"), DomainError);
}

TEST(Params, Validation) {
  ParamVector p;
  p.entries = {{"alpha.bar", 5.0, 0.0, 1.0}};
  EXPECT_THROW(p.validate(), DomainError);
  p.entries = {{"alpha.bar", 0.5, 0.0, 1.0}, {"alpha.bar", 0.5, 0.0, 1.0}};
  EXPECT_THROW(p.validate(), DomainError);
}

TEST(StepJacobian, FreeBodyLinearBlocks) {
  Scene s;
  s.bodies = {testing::sphere_body("s", 0.1, 2.0, true, true)};
  BodyState x = at_rest(Vec3(0.5, -0.2, 3.0));
  x.linear_velocity = Vec3(0.3, 0.1, -2.0);
  const VecX u = VecX::Zero(6);
  const StepJacobians J = step_jacobians(s, {x}, u, {});
  ASSERT_EQ(J.A.rows(), 12);
  ASSERT_EQ(J.B.cols(), 6);
  EXPECT_LT((J.A.block<3, 3>(0, 6) - s.dt * Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT((J.A.block<3, 3>(0, 0) - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT((J.A.block<3, 3>(6, 6) - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT((J.B.block<3, 3>(6, 0) - (s.dt / 2.0) * Mat3::Identity()).norm(), 1e-9);
}

TEST(StepJacobian, SpringDerivativeAtRest) {
  const Scene s = testing::drop_scene();
  const State x = testing::settle(s, {at_rest(Vec3(0, 0, 0.0124))}, 100);
  State still = x;
  still[0].linear_velocity.setZero();
  still[0].angular_velocity.setZero();
  const auto c = evaluate_contacts(s, still)[0];
  const ParamVector p = params_of(s, {"contact.bar.ground.impact_spring"});
  const StepJacobians J = step_jacobians(s, still, VecX(), p);
  const double expected = s.dt * c.psi * c.normal.z() / s.bodies[1].mass();
  EXPECT_NEAR(J.C(8, 0), expected, 1e-6 * expected);
}

TEST(StepJacobian, RichardsonConsistentInContact) {
  const Scene s = testing::push_scene();
  const State x = sliding_state(s);
  ASSERT_GT(evaluate_contacts(s, x)[0].psi, 0.0);
  ASSERT_GT(evaluate_contacts(s, x)[1].psi, 0.0);
  VecX u(6);
  u << 1.0, 0.2, 0.0, 0.0, 0.0, 0.0;
  const ParamVector p =
      params_of(s, {"alpha.bar", "contact.bar.ground.sliding_friction", "contact.bar.pusher.impact_spring"});
  JacobianOptions a, b;
  b.h_rel = 0.5 * a.h_rel;
  const StepJacobians Ja = step_jacobians(s, x, u, p, a), Jb = step_jacobians(s, x, u, p, b);
  EXPECT_LT((Ja.A - Jb.A).norm() / Jb.A.norm(), 1e-4);
  EXPECT_LT((Ja.B - Jb.B).norm() / Jb.B.norm(), 1e-4);
  EXPECT_LT((Ja.C - Jb.C).norm() / Jb.C.norm(), 1e-4);
}

TEST(StepJacobian, WorkersDoNotChangeResult) {
  const Scene s = testing::push_scene();
  const State x = sliding_state(s);
  const ParamVector p = params_of(s, {"alpha.bar", "contact.bar.ground.sliding_friction"});
  JacobianOptions one, four;
  four.workers = 4;
  const StepJacobians a = step_jacobians(s, x, VecX::Zero(6), p, one);
  const StepJacobians b = step_jacobians(s, x, VecX::Zero(6), p, four);
  EXPECT_EQ(a.A, b.A);
  EXPECT_EQ(a.B, b.B);
  EXPECT_EQ(a.C, b.C);
}

TEST(StepJacobian, OneSidedAtBound) {
  const Scene s = testing::push_scene();
  const State x = sliding_state(s);
  ParamVector central = params_of(s, {"contact.bar.ground.sliding_friction"});
  ParamVector at_lo = central, at_hi = central;
  at_lo.entries[0].lo = central.entries[0].value;
  at_hi.entries[0].hi = central.entries[0].value;
  const auto c = step_jacobians(s, x, VecX::Zero(6), central).C;
  const auto lo = step_jacobians(s, x, VecX::Zero(6), at_lo).C;
  const auto hi = step_jacobians(s, x, VecX::Zero(6), at_hi).C;
  EXPECT_LT((lo - c).norm(), 1e-4 * c.norm());
  EXPECT_LT((hi - c).norm(), 1e-4 * c.norm());
  ParamVector pinned = central;
  pinned.entries[0].lo = pinned.entries[0].hi = central.entries[0].value;
  EXPECT_THROW(step_jacobians(s, x, VecX::Zero(6), pinned), DomainError);
}

TEST(StepJacobian, RejectsBadStep) {
  const Scene s = testing::drop_scene();
  JacobianOptions o;
  o.h_rel = 0.0;
  EXPECT_THROW(step_jacobians(s, {at_rest(Vec3(0, 0, 1))}, VecX(), {}, o), DomainError);
}

TEST(StepJacobian, DivergenceNamesColumn) {
  Scene s = testing::drop_scene();
  s.contacts[0].params.impact_spring = 1e300;
  try {
    step_jacobians(s, {at_rest(Vec3(0, 0, 0.0124))}, VecX(), {});
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(RolloutGradient, ZeroAtGroundTruth) {
  const Scene s = testing::push_scene();
  const State x0 = sliding_state(s);
  const MatX u = MatX::Constant(6, 10, 0.5);
  const Trajectory truth = simulate(s, x0, u, 10);
  RolloutLoss loss;
  loss.stage = [&](int t, const State& x) {
    return t == 10 ? local_coordinates(truth.states[10], x).squaredNorm() : 0.0;
  };
  const auto g = rollout_gradient(s, loss, x0, u, params_of(s, {"alpha.bar"}), 10);
  EXPECT_LT(g.controls.norm(), 1e-9);
  EXPECT_LT(g.params.norm(), 1e-9);
}

TEST(RolloutGradient, SingleStepChainRule) {
  const Scene s = testing::push_scene();
  const State x0 = sliding_state(s);
  VecX u(6);
  u << 0.5, -0.2, 0.1, 0.0, 0.0, 0.0;
  const Vec3 target(0.2, 0.1, 0.0);
  RolloutLoss loss;
  loss.stage = [&](int t, const State& x) { return t == 1 ? (x[0].position - target).squaredNorm() : 0.0; };
  const auto g = rollout_gradient(s, loss, x0, u, {}, 1);
  const StepJacobians J = step_jacobians(s, x0, u, {});
  const State x1 = step(s, x0, u);
  const VecX expected = 2.0 * J.B.topRows<3>().transpose() * (x1[0].position - target);
  EXPECT_LT((g.controls.col(0) - expected).norm(), 1e-6 * expected.norm() + 1e-12);
}

TEST(RolloutGradient, MatchesEndToEndDifferences) {
  const Scene s = testing::push_scene();
  const State x0 = sliding_state(s);
  const int T = 20;
  MatX u(6, T);
  for (int t = 0; t < T; ++t) u.col(t) << 1.0 + 0.05 * t, 0.3, 0.0, 0.0, 0.0, 0.01;
  const Vec3 goal(0.3, 0.05, 0.01);
  RolloutLoss loss;
  loss.stage = [&](int t, const State& x) {
    return (t == T ? 10.0 : 0.1) * (x[0].position - goal).squaredNorm() + 0.01 * x[1].linear_velocity.squaredNorm();
  };
  loss.control = [](int, const VecX& v) { return 1e-3 * v.squaredNorm(); };
  const ParamVector p = params_of(s, {"alpha.bar", "contact.bar.ground.sliding_friction"});
  const auto g = rollout_gradient(s, loss, x0, u, p, T);

  auto total = [&](const MatX& uu, const ParamVector& pp) {
    return evaluate_rollout_loss(loss, simulate(with_params(s, pp), x0, uu, T), uu);
  };
  for (int t : {0, 7, 19})
    for (int k : {0, 1, 5}) {
      const double h = 1e-5;
      MatX up = u, um = u;
      up(k, t) += h;
      um(k, t) -= h;
      const double fd = (total(up, p) - total(um, p)) / (2 * h);
      EXPECT_NEAR(g.controls(k, t), fd, 1e-3 * std::max(std::abs(fd), 1e-3 * g.controls.cwiseAbs().maxCoeff()));
    }
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(p.entries[k].value));
    ParamVector pp = p, pm = p;
    pp.entries[k].value += h;
    pm.entries[k].value -= h;
    const double fd = (total(u, pp) - total(u, pm)) / (2 * h);
    EXPECT_NEAR(g.params[k], fd, 1e-3 * std::abs(fd));
  }
}

TEST(TrajectoryParamJacobian, MatchesStepComposition) {
  const Scene s = testing::push_scene();
  const State x0 = sliding_state(s);
  const MatX u = MatX::Constant(6, 5, 0.3);
  const ParamVector p = params_of(s, {"contact.bar.ground.sliding_friction"});
  const auto J = trajectory_param_jacobian(s, x0, u, p, 5);
  ASSERT_EQ(J.size(), 6u);
  EXPECT_EQ(J[0].norm(), 0.0);
  // forward sensitivity recursion S_{t+1} = A_t S_t + C_t
  const Trajectory traj = simulate(s, x0, u, 5);
  MatX S = MatX::Zero(24, 1);
  for (int t = 0; t < 5; ++t) {
    const StepJacobians sj = step_jacobians(s, traj.states[t], u.col(t), p);
    S = sj.A * S + sj.C;
  }
  EXPECT_LT((S - J[5]).norm(), 1e-4 * J[5].norm());
}

}  // namespace
}  // namespace danosim
