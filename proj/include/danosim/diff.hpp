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

// Simulation derivatives by central finite differences in a tangent layout,
// and a discrete adjoint that chains per-step Jacobians into rollout
// gradients.
//
// Tangent layout, per dynamic body in scene order (12 entries):
//   [0, 3)   position                     (world)
//   [3, 6)   rotation, q <- q * exp(d)    (body frame axis-angle)
//   [6, 9)   linear velocity              (world)
//   [9, 12)  angular velocity             (body frame)
// Controls: 6 per actuated body, force (world) then torque (body).

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "danosim/common.hpp"
#include "danosim/dynamics.hpp"

namespace danosim {

inline constexpr int kBodyTangent = 12;

struct TangentLayout {
  int state_dim = 0;
  int control_dim = 0;
  std::vector<int> bodies;          // scene indices of the dynamic bodies
  std::vector<int> actuated;        // scene indices of the actuated bodies
  int offset(int slot) const { return kBodyTangent * slot; }
};

inline TangentLayout state_tangent_layout(const Scene& scene) {
  TangentLayout l;
  l.bodies = scene.dynamic_bodies();
  l.actuated = scene.actuated_bodies();
  l.state_dim = kBodyTangent * static_cast<int>(l.bodies.size());
  l.control_dim = 6 * static_cast<int>(l.actuated.size());
  return l;
}

inline State retract(const State& x, const VecX& dx) {
  State y = x;
  for (std::size_t s = 0; s < x.size(); ++s) {
    const auto d = dx.segment<kBodyTangent>(kBodyTangent * s);
    y[s].position += d.segment<3>(0);
    y[s].orientation = (x[s].orientation * quat_exp(d.segment<3>(3))).normalized();
    y[s].linear_velocity += d.segment<3>(6);
    y[s].angular_velocity += d.segment<3>(9);
  }
  return y;
}

// Tangent coordinates of x relative to ref, so retract(ref, local(ref, x)) == x.
inline VecX local_coordinates(const State& ref, const State& x) {
  VecX d(kBodyTangent * ref.size());
  for (std::size_t s = 0; s < ref.size(); ++s) {
    d.segment<3>(kBodyTangent * s) = x[s].position - ref[s].position;
    d.segment<3>(kBodyTangent * s + 3) = quat_log(ref[s].orientation.conjugate() * x[s].orientation);
    d.segment<3>(kBodyTangent * s + 6) = x[s].linear_velocity - ref[s].linear_velocity;
    d.segment<3>(kBodyTangent * s + 9) = x[s].angular_velocity - ref[s].angular_velocity;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Parameters
//
// Names: "alpha.<body>" or "contact.<bodyA>.<bodyB>.<param>" with <param> one
// of ContactParams::kNames.

struct ParamEntry {
  std::string name;
  double value = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct ParamVector {
  std::vector<ParamEntry> entries;

  std::size_t size() const { return entries.size(); }
  VecX values() const {
    VecX v(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) v[i] = entries[i].value;
    return v;
  }
  void set_values(const VecX& v) {
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].value = v[i];
  }
  VecX lower() const {
    VecX v(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) v[i] = entries[i].lo;
    return v;
  }
  VecX upper() const {
    VecX v(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) v[i] = entries[i].hi;
    return v;
  }
  void validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (!(e.lo <= e.value && e.value <= e.hi)) throw DomainError("parameter " + e.name + " outside its bounds");
      for (std::size_t j = 0; j < i; ++j)
        if (entries[j].name == e.name) throw DomainError("duplicate parameter " + e.name);
    }
  }
};

namespace detail {

inline std::vector<std::string> split_dots(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == '.') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double* param_slot(Scene& scene, const std::string& name) {
  const auto parts = split_dots(name);
  if (parts.size() == 2 && parts[0] == "alpha") {
    const int b = scene.body_index(parts[1]);
    if (b < 0 || !scene.bodies[b].is_dano()) throw DomainError("unknown density-field body in parameter " + name);
    return &scene.bodies[b].alpha;
  }
  if (parts.size() == 4 && parts[0] == "contact") {
    const int a = scene.body_index(parts[1]);
    const int b = scene.body_index(parts[2]);
    const int k = ContactParams::index_of(parts[3]);
    if (k < 0) throw DomainError("unknown contact parameter in " + name);
    for (auto& c : scene.contacts)
      if ((c.a == a && c.b == b) || (c.a == b && c.b == a)) return &c.params.at(k);
    throw DomainError("no contact pair for parameter " + name);
  }
  throw DomainError("malformed parameter name '" + name + "'");
}

}  // namespace detail

inline double get_param(const Scene& scene, const std::string& name) {
  return *detail::param_slot(const_cast<Scene&>(scene), name);
}

inline void set_param(Scene& scene, const std::string& name, double value) {
  *detail::param_slot(scene, name) = value;
}

inline Scene with_params(const Scene& scene, const ParamVector& params) {
  Scene s = scene;
  for (const auto& e : params.entries) set_param(s, e.name, e.value);
  return s;
}

// ---------------------------------------------------------------------------
// Step Jacobians

struct StepJacobians {
  MatX A;  // d next / d state   (state_dim x state_dim)
  MatX B;  // d next / d control (state_dim x control_dim)
  MatX C;  // d next / d params  (state_dim x n_params)
  VecX state_steps, control_steps, param_steps;
};

struct JacobianOptions {
  double h_rel = 2e-6;
  bool want_state = true;
  bool want_control = true;
  bool want_params = true;
  int workers = 1;
};

namespace detail {

inline double fd_step(double h_rel, double value) { return h_rel * std::max(1.0, std::abs(value)); }

// Forward and backward step sizes for a bounded parameter; one-sided when the
// central stencil would leave the bounds.
inline std::pair<double, double> bounded_steps(double h, double value, double lo, double hi) {
  double hp = h, hm = h;
  if (value + hp > hi) hp = 0.0;
  if (value - hm < lo) hm = 0.0;
  if (hp == 0.0 && hm == 0.0) throw DomainError("parameter bounds too tight for a finite-difference step");
  return {hp, hm};
}

}  // namespace detail

inline StepJacobians step_jacobians(const Scene& scene, const State& x, const VecX& u, const ParamVector& params,
                                    const JacobianOptions& opt = {}) {
  if (!(opt.h_rel > 0.0)) throw DomainError("h_rel must be > 0");
  const TangentLayout layout = state_tangent_layout(scene);
  const int nx = layout.state_dim, nu = layout.control_dim, np = static_cast<int>(params.size());
  const Scene base = with_params(scene, params);
  const State y0 = step(base, x, u);

  StepJacobians J;
  J.A = MatX::Zero(nx, opt.want_state ? nx : 0);
  J.B = MatX::Zero(nx, opt.want_control ? nu : 0);
  J.C = MatX::Zero(nx, opt.want_params ? np : 0);
  J.state_steps = VecX::Zero(J.A.cols());
  J.control_steps = VecX::Zero(J.B.cols());
  J.param_steps = VecX::Zero(J.C.cols());

  const int ncols = static_cast<int>(J.A.cols() + J.B.cols() + J.C.cols());
  auto column = [&](std::size_t c) {
    int col = static_cast<int>(c);
    try {
      if (col < J.A.cols()) {
        const int within = col % kBodyTangent;
        const int slot = col / kBodyTangent;
        double value = 0.0;
        if (within < 3) value = x[slot].position[within];
        else if (within >= 6 && within < 9) value = x[slot].linear_velocity[within - 6];
        else if (within >= 9) value = x[slot].angular_velocity[within - 9];
        const double h = detail::fd_step(opt.h_rel, value);
        VecX d = VecX::Zero(nx);
        d[col] = h;
        const State yp = step(base, retract(x, d), u);
        const State ym = step(base, retract(x, -d), u);
        J.A.col(col) = (local_coordinates(y0, yp) - local_coordinates(y0, ym)) / (2.0 * h);
        J.state_steps[col] = h;
        return;
      }
      col -= static_cast<int>(J.A.cols());
      if (col < J.B.cols()) {
        const double h = detail::fd_step(opt.h_rel, u[col]);
        VecX up = u, um = u;
        up[col] += h;
        um[col] -= h;
        J.B.col(col) =
            (local_coordinates(y0, step(base, x, up)) - local_coordinates(y0, step(base, x, um))) / (2.0 * h);
        J.control_steps[col] = h;
        return;
      }
      col -= static_cast<int>(J.B.cols());
      const ParamEntry& e = params.entries[col];
      const double h = detail::fd_step(opt.h_rel, e.value);
      const auto [hp, hm] = detail::bounded_steps(h, e.value, e.lo, e.hi);
      Scene sp = base, sm = base;
      set_param(sp, e.name, e.value + hp);
      set_param(sm, e.name, e.value - hm);
      J.C.col(col) = (local_coordinates(y0, step(sp, x, u)) - local_coordinates(y0, step(sm, x, u))) / (hp + hm);
      J.param_steps[col] = hp + hm;
    } catch (const DivergenceError& err) {
      throw DivergenceError("Jacobian column " + std::to_string(c) + ": " + err.what());
    }
  };
  parallel_for(static_cast<std::size_t>(ncols), opt.workers, column);
  return J;
}

// ---------------------------------------------------------------------------
// Rollout gradient

// Loss = sum_t stage(t, x_t) for t = 0..T plus sum_t control(t, u_t).
struct RolloutLoss {
  std::function<double(int, const State&)> stage;
  std::function<double(int, const VecX&)> control;  // optional
};

struct RolloutGradient {
  double loss = 0.0;
  MatX controls;   // control_dim x T
  VecX params;
  VecX initial_state;  // tangent gradient w.r.t. x_0
  Trajectory trajectory;
};

namespace detail {

// Tangent gradient of a scalar function of one state, central differences.
inline VecX state_gradient(const std::function<double(const State&)>& f, const State& x, double h = 1e-6) {
  const int n = kBodyTangent * static_cast<int>(x.size());
  VecX g(n);
  for (int i = 0; i < n; ++i) {
    VecX d = VecX::Zero(n);
    d[i] = h;
    g[i] = (f(retract(x, d)) - f(retract(x, -d))) / (2.0 * h);
  }
  return g;
}

inline VecX control_gradient(const std::function<double(const VecX&)>& f, const VecX& u, double h = 1e-6) {
  VecX g(u.size());
  for (int i = 0; i < u.size(); ++i) {
    VecX up = u, um = u;
    up[i] += h;
    um[i] -= h;
    g[i] = (f(up) - f(um)) / (2.0 * h);
  }
  return g;
}

}  // namespace detail

inline double evaluate_rollout_loss(const RolloutLoss& loss, const Trajectory& traj, const MatX& controls) {
  double l = 0.0;
  for (std::size_t t = 0; t < traj.states.size(); ++t) l += loss.stage(static_cast<int>(t), traj.states[t]);
  if (loss.control)
    for (int t = 0; t + 1 < static_cast<int>(traj.states.size()); ++t) l += loss.control(t, controls.col(t));
  return l;
}

// Discrete adjoint over per-step Jacobians:
//   lambda_T = dl/dx_T
//   lambda_t = dl/dx_t + A_t^T lambda_{t+1}
//   dL/du_t  = B_t^T lambda_{t+1} (+ control term),  dL/dtheta += C_t^T lambda_{t+1}
inline RolloutGradient rollout_gradient(const Scene& scene, const RolloutLoss& loss, const State& x0,
                                        const MatX& controls, const ParamVector& params, int horizon,
                                        const JacobianOptions& opt = {}) {
  const Scene base = with_params(scene, params);
  const TangentLayout layout = state_tangent_layout(scene);
  RolloutGradient g;
  g.trajectory = simulate(base, x0, controls, horizon);
  g.loss = evaluate_rollout_loss(loss, g.trajectory, controls);
  g.controls = MatX::Zero(layout.control_dim, horizon);
  g.params = VecX::Zero(params.size());

  auto stage_grad = [&](int t) {
    return detail::state_gradient([&](const State& s) { return loss.stage(t, s); }, g.trajectory.states[t]);
  };
  VecX lambda = stage_grad(horizon);
  for (int t = horizon - 1; t >= 0; --t) {
    const VecX u = layout.control_dim > 0 ? VecX(controls.col(t)) : VecX();
    const StepJacobians J = step_jacobians(scene, g.trajectory.states[t], u, params, opt);
    if (layout.control_dim > 0) {
      g.controls.col(t) = J.B.transpose() * lambda;
      if (loss.control)
        g.controls.col(t) += detail::control_gradient([&](const VecX& v) { return loss.control(t, v); }, u);
    }
    if (params.size() > 0) g.params += J.C.transpose() * lambda;
    lambda = stage_grad(t) + J.A.transpose() * lambda;
  }
  g.initial_state = lambda;
  return g;
}

// Sensitivity of a whole rollout to the parameters, one forward rollout pair
// per parameter. Returns one matrix per time step (state_dim x n_params).
inline std::vector<MatX> trajectory_param_jacobian(const Scene& scene, const State& x0, const MatX& controls,
                                                   const ParamVector& params, int horizon,
                                                   const JacobianOptions& opt = {}) {
  const Scene base = with_params(scene, params);
  const Trajectory nominal = simulate(base, x0, controls, horizon);
  const int nx = state_tangent_layout(scene).state_dim;
  std::vector<MatX> out(horizon + 1, MatX::Zero(nx, params.size()));
  parallel_for(params.size(), opt.workers, [&](std::size_t k) {
    const ParamEntry& e = params.entries[k];
    const double h = detail::fd_step(opt.h_rel, e.value);
    const auto [hp, hm] = detail::bounded_steps(h, e.value, e.lo, e.hi);
    Scene sp = base, sm = base;
    set_param(sp, e.name, e.value + hp);
    set_param(sm, e.name, e.value - hm);
    Trajectory tp, tm;
    try {
      tp = simulate(sp, x0, controls, horizon);
      tm = simulate(sm, x0, controls, horizon);
    } catch (const DivergenceError& err) {
      throw DivergenceError("parameter column " + e.name + ": " + err.what());
    }
    for (int t = 0; t <= horizon; ++t)
      out[t].col(k) = (local_coordinates(nominal.states[t], tp.states[t]) -
                       local_coordinates(nominal.states[t], tm.states[t])) /
                      (hp + hm);
  });
  return out;
}

}  // namespace danosim
