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

#pragma once

#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "danosim/common.hpp"
#include "danosim/contact.hpp"
#include "danosim/dano.hpp"
#include "danosim/field.hpp"

namespace danosim {

// Pose of the body's centre-of-mass frame. For density-field bodies the axes
// coincide with the field frame and the origin sits at the model's COM.
struct BodyState {
  Vec3 position = Vec3::Zero();          // COM, world
  Quat orientation = Quat::Identity();
  Vec3 linear_velocity = Vec3::Zero();   // world
  Vec3 angular_velocity = Vec3::Zero();  // body frame

  bool finite() const {
    return position.allFinite() && orientation.coeffs().allFinite() && linear_velocity.allFinite() &&
           angular_velocity.allFinite();
  }
};

using State = std::vector<BodyState>;  // one entry per dynamic body

struct DanoBody {
  std::shared_ptr<const DanoModel> model;
  AnyField field;  // needed only for contact with another density-field body
};

struct SphereBody {
  double radius = 0.05;
  double mass = 1.0;
};

struct StaticBody {
  PrimitiveShape shape;
};

struct Body {
  std::string name;
  std::variant<DanoBody, SphereBody, StaticBody> kind;
  bool actuated = false;
  bool gravity = true;
  double alpha = 1.0;  // mass scale for density-field bodies

  bool is_static() const { return std::holds_alternative<StaticBody>(kind); }
  bool is_dano() const { return std::holds_alternative<DanoBody>(kind); }

  double mass() const {
    if (const auto* d = std::get_if<DanoBody>(&kind)) return alpha * d->model->unit_mass;
    if (const auto* s = std::get_if<SphereBody>(&kind)) return s->mass;
    return std::numeric_limits<double>::infinity();
  }
  // Inertia about the COM in the body frame.
  Mat3 inertia() const {
    if (const auto* d = std::get_if<DanoBody>(&kind))
      return alpha * DanoModel::inertia_about_com(d->model->unit_inertia, d->model->unit_mass, d->model->com);
    if (const auto* s = std::get_if<SphereBody>(&kind))
      return (0.4 * s->mass * s->radius * s->radius) * Mat3::Identity();
    return Mat3::Zero();
  }
  // Maps the field frame of a density-field body to world.
  Pose field_pose(const BodyState& s) const {
    Pose p;
    p.rotation = s.orientation;
    if (const auto* d = std::get_if<DanoBody>(&kind)) p.translation = s.position - (s.orientation * d->model->com);
    else p.translation = s.position;
    return p;
  }
};

struct ContactPair {
  int a = 0;  // density-field body
  int b = 1;
  ContactParams params;
};

struct Scene {
  std::vector<Body> bodies;
  std::vector<ContactPair> contacts;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  double dt = 0.01;
  int horizon = 100;
  double primitive_smoothing = 0.0;  // membership ramp width for primitive contact, m

  int body_index(const std::string& name) const {
    for (std::size_t i = 0; i < bodies.size(); ++i)
      if (bodies[i].name == name) return static_cast<int>(i);
    return -1;
  }
  // Slot of a body in State, or -1 for static bodies.
  int slot(int body) const {
    if (bodies.at(body).is_static()) return -1;
    int s = 0;
    for (int i = 0; i < body; ++i)
      if (!bodies[i].is_static()) ++s;
    return s;
  }
  std::vector<int> dynamic_bodies() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < bodies.size(); ++i)
      if (!bodies[i].is_static()) out.push_back(static_cast<int>(i));
    return out;
  }
  std::vector<int> actuated_bodies() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < bodies.size(); ++i)
      if (bodies[i].actuated && !bodies[i].is_static()) out.push_back(static_cast<int>(i));
    return out;
  }
  int state_size() const { return static_cast<int>(dynamic_bodies().size()); }
  int control_size() const { return 6 * static_cast<int>(actuated_bodies().size()); }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("time step dt must be > 0");
    if (horizon < 0) throw DomainError("horizon must be >= 0");
    int ground = 0;
    for (const auto& b : bodies) {
      if (const auto* st = std::get_if<StaticBody>(&b.kind)) {
        validate_shape(st->shape);
        if (std::holds_alternative<HalfSpace>(st->shape)) ++ground;
        if (b.actuated) throw DomainError("static body '" + b.name + "' cannot be actuated");
        continue;
      }
      if (!(b.mass() > 0.0) || !std::isfinite(b.mass())) throw DomainError("body '" + b.name + "' needs mass > 0");
      Eigen::SelfAdjointEigenSolver<Mat3> es(b.inertia());
      if (!(es.eigenvalues().minCoeff() > 0.0))
        throw DomainError("body '" + b.name + "' inertia is not positive definite");
    }
    if (ground > 1) throw DomainError("at most one static half-space per scene");
    for (const auto& c : contacts) {
      const int n = static_cast<int>(bodies.size());
      if (c.a < 0 || c.b < 0 || c.a >= n || c.b >= n || c.a == c.b)
        throw DomainError("contact pair references a missing body");
      if (!bodies[c.a].is_dano()) throw DomainError("contact body A must be a density-field body");
      if (bodies[c.b].is_dano() && !(std::get<DanoBody>(bodies[c.b].kind).field &&
                                     std::get<DanoBody>(bodies[c.a].kind).field))
        throw DomainError("contact between density-field bodies needs both fields loaded");
      c.params.validate();
    }
  }

 private:
  static void validate_shape(const PrimitiveShape& s) { danosim::validate(s); }
};

// Shape of a dynamic primitive body placed at its state.
inline PrimitiveShape world_shape(const Body& body, const BodyState* state) {
  if (const auto* st = std::get_if<StaticBody>(&body.kind)) return st->shape;
  const auto& sp = std::get<SphereBody>(body.kind);
  return Sphere{state->position, sp.radius};
}

inline BodyKinematics kinematics(const Body& body, const BodyState* s) {
  BodyKinematics k;
  if (!s) return k;
  k.com = s->position;
  k.linear_velocity = s->linear_velocity;
  k.rotation = s->orientation;
  k.angular_velocity = s->orientation * s->angular_velocity;
  k.inv_mass = 1.0 / body.mass();
  k.inv_inertia = 1.0 / Eigen::SelfAdjointEigenSolver<Mat3>(body.inertia(), Eigen::EigenvaluesOnly).eigenvalues()(0);
  return k;
}

// Contact wrench of one pair at the current configuration.
inline ContactResult evaluate_contact(const Scene& scene, const ContactPair& pair, const State& state) {
  const Body& a = scene.bodies[pair.a];
  const Body& b = scene.bodies[pair.b];
  const int sa = scene.slot(pair.a), sb = scene.slot(pair.b);
  const BodyState& xa = state.at(sa);
  const BodyState* xb = sb >= 0 ? &state.at(sb) : nullptr;
  const auto& da = std::get<DanoBody>(a.kind);
  const Pose pa = a.field_pose(xa);

  Overlap ov;
  Vec3 n = Vec3::Zero();
  if (const auto* db = std::get_if<DanoBody>(&b.kind)) {
    const Pose pb = b.field_pose(*xb);
    ov = overlap_dano_dano(*da.model, pa, da.field, *db->model, pb, db->field);
    if (ov.in_contact()) n = contact_normal_dano_dano(*da.model, pa, da.field, *db->model, pb, db->field);
  } else {
    const PrimitiveShape shape = world_shape(b, xb);
    ov = overlap_primitive(*da.model, pa, shape, scene.primitive_smoothing);
    if (ov.in_contact()) n = contact_normal_primitive(shape, ov.chi);
  }
  return contact_wrench(ov.psi, ov.chi, n, kinematics(a, &xa), kinematics(b, xb), pair.params, scene.dt);
}

inline std::vector<ContactResult> evaluate_contacts(const Scene& scene, const State& state) {
  std::vector<ContactResult> out;
  out.reserve(scene.contacts.size());
  for (const auto& c : scene.contacts) out.push_back(evaluate_contact(scene, c, state));
  return out;
}

// One semi-implicit Euler step. Contact, gravity and control wrenches are all
// evaluated at the current configuration; positions and orientations advance
// with the updated velocities.
inline State step(const Scene& scene, const State& state, const VecX& controls, int step_index = 0) {
  const auto dyn = scene.dynamic_bodies();
  if (state.size() != dyn.size()) throw DomainError("state size does not match the scene's dynamic bodies");
  if (controls.size() != scene.control_size()) throw DomainError("control vector size does not match actuated bodies");

  std::vector<Vec3> force(dyn.size(), Vec3::Zero());
  std::vector<Vec3> torque_world(dyn.size(), Vec3::Zero());  // about each COM
  std::vector<Vec3> torque_body(dyn.size(), Vec3::Zero());

  for (std::size_t s = 0; s < dyn.size(); ++s) {
    const Body& b = scene.bodies[dyn[s]];
    if (b.gravity) force[s] += b.mass() * scene.gravity;
  }
  {
    const auto act = scene.actuated_bodies();
    for (std::size_t k = 0; k < act.size(); ++k) {
      const int s = scene.slot(act[k]);
      force[s] += controls.segment<3>(6 * k);
      torque_body[s] += controls.segment<3>(6 * k + 3);
    }
  }
  for (const auto& pair : scene.contacts) {
    const ContactResult r = evaluate_contact(scene, pair, state);
    if (r.psi == 0.0) continue;
    const int sa = scene.slot(pair.a), sb = scene.slot(pair.b);
    force[sa] += r.force;
    torque_world[sa] += r.friction_torque + (r.chi - state[sa].position).cross(r.force);
    if (sb >= 0) {
      force[sb] -= r.force;
      torque_world[sb] += -r.friction_torque + (r.chi - state[sb].position).cross(-r.force);
    }
  }

  State next(state.size());
  for (std::size_t s = 0; s < dyn.size(); ++s) {
    const Body& b = scene.bodies[dyn[s]];
    const BodyState& x = state[s];
    const Mat3 j = b.inertia();
    const Vec3 tau = x.orientation.conjugate() * torque_world[s] + torque_body[s];
    const Vec3& w = x.angular_velocity;

    BodyState& y = next[s];
    y.linear_velocity = x.linear_velocity + (scene.dt / b.mass()) * force[s];
    y.angular_velocity = w + scene.dt * j.ldlt().solve(tau - w.cross(j * w));
    y.position = x.position + scene.dt * y.linear_velocity;
    y.orientation = (x.orientation * quat_exp(scene.dt * y.angular_velocity)).normalized();
    if (!y.finite())
      throw DivergenceError("non-finite state at step " + std::to_string(step_index) + " for body '" + b.name + "'");
  }
  return next;
}

struct Trajectory {
  std::vector<State> states;  // horizon + 1 entries
};

// controls: one column per step (control_size x horizon); may be empty when
// the scene has no actuated bodies.
inline Trajectory simulate(const Scene& scene, const State& initial, const MatX& controls, int horizon) {
  if (horizon < 0) throw DomainError("horizon must be >= 0");
  const int nu = scene.control_size();
  if (nu > 0 && (controls.rows() != nu || controls.cols() < horizon))
    throw DomainError("control sequence must be control_size x horizon");
  Trajectory traj;
  traj.states.reserve(horizon + 1);
  traj.states.push_back(initial);
  const VecX zero = VecX::Zero(nu);
  for (int t = 0; t < horizon; ++t)
    traj.states.push_back(step(scene, traj.states.back(), nu > 0 ? VecX(controls.col(t)) : zero, t));
  return traj;
}

inline Trajectory simulate(const Scene& scene, const State& initial) {
  return simulate(scene, initial, MatX::Zero(scene.control_size(), scene.horizon), scene.horizon);
}

// ---------------------------------------------------------------------------
// Trajectory CSV: optional '#' preamble, mandatory header, one row per
// (step, body).

inline constexpr const char* kTrajectoryHeader = "t,body_id,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz";

inline void write_trajectory(std::ostream& out, const Scene& scene, const Trajectory& traj,
                             const std::string& preamble = {}) {
  using detail::fmt_double;
  if (!preamble.empty()) {
    std::istringstream lines(preamble);
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  out << kTrajectoryHeader << '\n';
  const auto dyn = scene.dynamic_bodies();
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    for (std::size_t s = 0; s < dyn.size(); ++s) {
      const BodyState& x = traj.states[t][s];
      out << fmt_double(static_cast<double>(t) * scene.dt) << ',' << dyn[s];
      for (double v : {x.position.x(), x.position.y(), x.position.z(), x.orientation.w(), x.orientation.x(),
                       x.orientation.y(), x.orientation.z(), x.linear_velocity.x(), x.linear_velocity.y(),
                       x.linear_velocity.z(), x.angular_velocity.x(), x.angular_velocity.y(),
                       x.angular_velocity.z()})
        out << ',' << fmt_double(v);
      out << '\n';
    }
  }
}

inline void save_trajectory(const std::string& path, const Scene& scene, const Trajectory& traj,
                            const std::string& preamble = {}) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write trajectory '" + path + "'");
  write_trajectory(out, scene, traj, preamble);
}

inline Trajectory parse_trajectory(std::istream& in, const Scene& scene, const std::string& source = "<stream>") {
  const auto dyn = scene.dynamic_bodies();
  std::string raw;
  int lineno = 0;
  bool header = false;
  Trajectory traj;
  auto fail = [&](const std::string& msg) { throw ParseError(source + ":" + std::to_string(lineno) + ": " + msg); };
  std::size_t row_in_step = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw[0] == '#') continue;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    if (!header) {
      std::string compact;
      for (char c : line)
        if (c != ' ' && c != '\t') compact += c;
      if (compact != kTrajectoryHeader) fail("expected header '" + std::string(kTrajectoryHeader) + "'");
      header = true;
      continue;
    }
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double d = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) fail("malformed number '" + cell + "'");
      v.push_back(d);
    }
    if (v.size() != 15) fail("expected 15 columns");
    if (row_in_step == 0) traj.states.emplace_back(dyn.size());
    const int body = static_cast<int>(v[1]);
    if (body != dyn[row_in_step]) fail("unexpected body_id " + std::to_string(body));
    BodyState& x = traj.states.back()[row_in_step];
    x.position = Vec3(v[2], v[3], v[4]);
    x.orientation = Quat(v[5], v[6], v[7], v[8]);
    x.linear_velocity = Vec3(v[9], v[10], v[11]);
    x.angular_velocity = Vec3(v[12], v[13], v[14]);
    row_in_step = (row_in_step + 1) % dyn.size();
  }
  if (!header) throw ParseError(source + ": missing trajectory header");
  if (row_in_step != 0) throw ParseError(source + ": incomplete final step");
  return traj;
}

inline Trajectory load_trajectory(const std::string& path, const Scene& scene) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trajectory '" + path + "'");
  return parse_trajectory(in, scene, path);
}

// Total linear momentum of the dynamic bodies.
inline Vec3 linear_momentum(const Scene& scene, const State& state) {
  Vec3 p = Vec3::Zero();
  const auto dyn = scene.dynamic_bodies();
  for (std::size_t s = 0; s < dyn.size(); ++s) p += scene.bodies[dyn[s]].mass() * state[s].linear_velocity;
  return p;
}

// Angular momentum of one body about its own COM, world frame.
inline Vec3 spin_momentum(const Body& body, const BodyState& x) {
  return x.orientation * (body.inertia() * x.angular_velocity);
}

inline double kinetic_energy(const Scene& scene, const State& state) {
  double e = 0.0;
  const auto dyn = scene.dynamic_bodies();
  for (std::size_t s = 0; s < dyn.size(); ++s) {
    const Body& b = scene.bodies[dyn[s]];
    const BodyState& x = state[s];
    e += 0.5 * b.mass() * x.linear_velocity.squaredNorm() +
         0.5 * x.angular_velocity.dot(b.inertia() * x.angular_velocity);
  }
  return e;
}

}  // namespace danosim
