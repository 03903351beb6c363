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

#include <sstream>

#include "fixtures.hpp"

namespace danosim {
namespace {

using testing::at_rest;

Scene free_scene(Body body, bool gravity) {
  body.gravity = gravity;
  Scene s;
  s.bodies = {testing::ground_body(), std::move(body)};
  return s;
}

void expect_unit_quaternions(const Trajectory& traj) {
  for (const auto& st : traj.states)
    for (const auto& b : st) ASSERT_NEAR(b.orientation.norm(), 1.0, 1e-9);
}

TEST(Step, FreeBodyConstantVelocity) {
  const Scene s = free_scene(testing::sphere_body("s", 0.05, 1.0, false, false), false);
  BodyState x = at_rest(Vec3(0, 0, 1));
  x.linear_velocity = Vec3(1, 0, 0);
  const State y = step(s, {x}, VecX());
  EXPECT_NEAR((y[0].position - Vec3(0.01, 0, 1)).norm(), 0.0, 1e-15);
  EXPECT_EQ(y[0].linear_velocity, Vec3(1, 0, 0));
}

TEST(Step, FreeFallOneStep) {
  const Scene s = free_scene(testing::sphere_body("s", 0.05, 1.0, false, true), true);
  const State y = step(s, {at_rest(Vec3(0, 0, 1))}, VecX());
  EXPECT_NEAR(y[0].linear_velocity.z(), -0.0981, 1e-15);
  EXPECT_NEAR(y[0].position.z(), 1.0 - 0.000981, 1e-15);
}

TEST(Step, PrincipalAxisSpinIsFixedPoint) {
  const Scene s = free_scene(testing::dano_body("b", testing::share(testing::bunny_model())), false);
  const Mat3 j = s.bodies[1].inertia();
  Eigen::SelfAdjointEigenSolver<Mat3> es(j);
  BodyState x = at_rest(Vec3(0, 0, 1));
  x.angular_velocity = 3.0 * es.eigenvectors().col(0);
  State st = {x};
  for (int i = 0; i < 100; ++i) {
    const State y = step(s, st, VecX());
    EXPECT_LT((y[0].angular_velocity - st[0].angular_velocity).norm(), 1e-12);
    st = y;
  }
}

TEST(Step, ControlWrenchFrames) {
  Scene s = free_scene(testing::sphere_body("s", 0.05, 2.0, true, false), false);
  BodyState x = at_rest(Vec3(0, 0, 1));
  x.orientation = quat_exp(Vec3(0, 0, 0.5 * std::numbers::pi));
  VecX u(6);
  u << 4, 0, 0, 0, 0, 0.002;
  const State y = step(s, {x}, u);
  EXPECT_NEAR((y[0].linear_velocity - Vec3(0.02, 0, 0)).norm(), 0.0, 1e-15);  // world-frame force
  const double inertia = 0.4 * 2.0 * 0.05 * 0.05;
  EXPECT_NEAR((y[0].angular_velocity - Vec3(0, 0, 0.01 * 0.002 / inertia)).norm(), 0.0, 1e-12);  // body torque
}

TEST(Step, ValidatesSizes) {
  const Scene s = free_scene(testing::sphere_body("s", 0.05, 1.0, true, false), false);
  EXPECT_THROW(step(s, {at_rest(Vec3::Zero())}, VecX::Zero(3)), DomainError);
  EXPECT_THROW(step(s, {}, VecX::Zero(6)), DomainError);
}

TEST(Step, DivergenceNamesStep) {
  Scene s = testing::drop_scene();
  s.contacts[0].params.impact_spring = 1e300;
  BodyState x = at_rest(Vec3(0, 0, 0.01));
  x.linear_velocity = Vec3(0, 0, -1);
  try {
    simulate(s, {x}, MatX(), 50);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    EXPECT_EQ(e.category(), "simulate");
  }
}

TEST(Simulate, ZeroSteps) {
  const Scene s = testing::drop_scene();
  const Trajectory t = simulate(s, {at_rest(Vec3(0, 0, 0.515))}, MatX(), 0);
  ASSERT_EQ(t.states.size(), 1u);
  EXPECT_EQ(t.states[0][0].position, Vec3(0, 0, 0.515));
}

TEST(Simulate, DropComesToRest) {
  const Scene s = testing::drop_scene();
  const Trajectory t = simulate(s, {at_rest(Vec3(0, 0, 0.515))}, MatX(), 200);
  expect_unit_quaternions(t);
  const BodyState& last = t.states.back()[0];
  EXPECT_LT(last.linear_velocity.norm(), 1e-3);
  const auto c = evaluate_contacts(s, t.states.back())[0];
  const double mg = s.bodies[1].mass() * 9.81;
  EXPECT_NEAR(c.psi * s.contacts[0].params.impact_spring, mg, 0.1 * mg);
  EXPECT_GT(c.force.z(), 0.0);  // repulsive: pushes the ball up
}

TEST(Simulate, RestingPenetrationStableUnderDtHalving) {
  auto rest_psi = [](double dt) {
    const Scene s = testing::drop_scene(dt);
    const int steps = static_cast<int>(std::lround(3.0 / dt));
    const Trajectory t = simulate(s, {at_rest(Vec3(0, 0, 0.515))}, MatX(), steps);
    return evaluate_contacts(s, t.states.back())[0].psi;
  };
  const double a = rest_psi(0.01), b = rest_psi(0.005);
  EXPECT_NEAR(a, b, 0.05 * b);
}

TEST(Simulate, MechanicalEnergyNeverExceedsInitial) {
  // Kinetic plus gravitational energy; the contact spring only stores energy.
  const Scene s = testing::drop_scene();
  const Trajectory t = simulate(s, {at_rest(Vec3(0, 0, 0.515))}, MatX(), 200);
  const double m = s.bodies[1].mass();
  const double e0 = m * 9.81 * 0.515;
  for (const auto& st : t.states) EXPECT_LE(kinetic_energy(s, st) + m * 9.81 * st[0].position.z(), e0 * (1 + 1e-9));
}

TEST(Simulate, StrikePropagatesThroughBothBalls) {
  const Scene s = testing::strike_scene();
  State st = {at_rest(Vec3(0.0, 0, 0.08)), at_rest(Vec3(0.2, 0, 0.08)), at_rest(Vec3(-0.5, 0, 0.08))};
  for (int i = 0; i < 100; ++i) st = step(s, st, VecX(), i);  // let the balls settle
  st[2].position.z() = st[0].position.z();
  const double p_striker = 2.0;
  st[2].linear_velocity = Vec3(p_striker, 0, 0);
  const double p0 = linear_momentum(s, st).x();
  const double first0 = s.bodies[1].mass() * st[0].linear_velocity.x();
  const double second0 = s.bodies[2].mass() * st[1].linear_velocity.x();
  const Trajectory t = simulate(s, st, MatX(), 150);
  expect_unit_quaternions(t);
  double first = first0, second = second0, striker = p_striker;
  for (const auto& x : t.states) {
    for (const auto& b : x) ASSERT_TRUE(b.finite());
    first = std::max(first, s.bodies[1].mass() * x[0].linear_velocity.x());
    second = std::max(second, s.bodies[2].mass() * x[1].linear_velocity.x());
    striker = std::min(striker, x[2].linear_velocity.x());
    // ball-ball and ball-sphere contacts only exchange momentum; the ground only removes it
    EXPECT_LE(linear_momentum(s, x).x(), p0 + 1e-3 * p_striker);
  }
  EXPECT_LT(striker, 0.5 * p_striker);
  EXPECT_GT(first - first0, 0.4 * p_striker);
  EXPECT_GT(second - second0, 0.05 * p_striker);
  EXPECT_LT(linear_momentum(s, t.states.back()).x(), 0.1 * p0);
}

TEST(Simulate, Deterministic) {
  const Scene s = testing::strike_scene();
  BodyState striker = at_rest(Vec3(-0.5, 0, 0.09));
  striker.linear_velocity = Vec3(2.0, 0, 0);
  const State x0 = {at_rest(Vec3(0.0, 0, 0.09)), at_rest(Vec3(0.19, 0, 0.09)), striker};
  const Trajectory a = simulate(s, x0, MatX(), 60), b = simulate(s, x0, MatX(), 60);
  for (std::size_t t = 0; t < a.states.size(); ++t)
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(a.states[t][k].position, b.states[t][k].position);
      EXPECT_EQ(a.states[t][k].orientation.coeffs(), b.states[t][k].orientation.coeffs());
    }
}

TEST(Conservation, LinearMomentumFreeFlight) {
  Scene s;
  s.bodies = {testing::dano_body("b", testing::share(testing::bunny_model())),
              testing::sphere_body("s", 0.05, 1.5, false, false)};
  s.bodies[0].gravity = false;
  BodyState a = at_rest(Vec3(0, 0, 1)), b = at_rest(Vec3(2, 0, 1));
  a.linear_velocity = Vec3(0.3, -0.2, 0.1);
  a.angular_velocity = Vec3(1, 2, -3);
  b.linear_velocity = Vec3(-1, 0, 0.5);
  State st = {a, b};
  Vec3 p = linear_momentum(s, st);
  for (int i = 0; i < 500; ++i) {
    st = step(s, st, VecX());
    const Vec3 q = linear_momentum(s, st);
    EXPECT_LT((q - p).norm(), 1e-12);
    p = q;
  }
}

TEST(Conservation, AngularMomentumSecondOrderPerStep) {
  const auto model = testing::share(testing::bunny_model());
  auto drift = [&](double dt) {
    Scene s = free_scene(testing::dano_body("b", model), false);
    s.dt = dt;
    BodyState x = at_rest(Vec3(0, 0, 1));
    x.angular_velocity = Vec3(2.0, -1.0, 3.0);
    const Vec3 l0 = spin_momentum(s.bodies[1], x);
    const State y = step(s, {x}, VecX());
    return (spin_momentum(s.bodies[1], y[0]) - l0).norm();
  };
  const double ratio = drift(0.01) / drift(0.005);
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.5);
}

TEST(TrajectoryFile, RoundTripAndRowCount) {
  const Scene s = testing::drop_scene();
  const Trajectory t = simulate(s, {at_rest(Vec3(0, 0, 0.515))}, MatX(), 25);
  std::stringstream ss;
  write_trajectory(ss, s, t, "scene: drop\nseed: 7");
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("# scene: drop\n# seed: 7\n", 0), 0u);
  int rows = 0;
  std::istringstream lines(text);
  std::string l;
  while (std::getline(lines, l))
    if (!l.empty() && l[0] != '#' && l != kTrajectoryHeader) ++rows;
  EXPECT_EQ(rows, 26);
  const Trajectory r = parse_trajectory(ss, s);
  ASSERT_EQ(r.states.size(), t.states.size());
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    EXPECT_EQ(r.states[i][0].position, t.states[i][0].position);
    EXPECT_EQ(r.states[i][0].linear_velocity, t.states[i][0].linear_velocity);
  }
}

TEST(TrajectoryFile, MissingHeaderRejected) {
  const Scene s = testing::drop_scene();
  std::istringstream in("0,1,0,0,0,1,0,0,0,0,0,0,0,0,0\n");
  EXPECT_THROW(parse_trajectory(in, s), ParseError);
}

TEST(SceneValidation, Rules) {
  Scene s = testing::drop_scene();
  s.dt = 0.0;
  EXPECT_THROW(s.validate(), DomainError);
  s = testing::drop_scene();
  s.contacts[0].b = 7;
  EXPECT_THROW(s.validate(), DomainError);
  s = testing::drop_scene();
  s.bodies.push_back(testing::ground_body());
  EXPECT_THROW(s.validate(), DomainError);
  s = testing::drop_scene();
  std::swap(s.contacts[0].a, s.contacts[0].b);
  EXPECT_THROW(s.validate(), DomainError);
  EXPECT_NO_THROW(testing::drop_scene().validate());
  EXPECT_NO_THROW(testing::strike_scene().validate());
}

}  // namespace
}  // namespace danosim
