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

// Parameter identification from observed trajectories: single-shooting
// least squares on weighted tangent residuals, solved by bounded
// Levenberg-damped Gauss-Newton.

#pragma once

#include <Eigen/Cholesky>
#include <string>
#include <vector>

#include "danosim/common.hpp"
#include "danosim/diff.hpp"
#include "danosim/dynamics.hpp"

namespace danosim {

struct Observation {
  Trajectory states;  // states[0] is the initial condition
  MatX controls;      // control_dim x (states.size() - 1); empty if unactuated
};

struct GaussNewtonSettings {
  int max_iterations = 20;
  double lambda0 = 1e-6;
  double lambda_max = 1e12;
  double gradient_tol = 1e-12;
  double step_tol = 1e-10;
  double h_rel = 1e-6;
  int workers = 1;
};

struct SysIdProblem {
  Scene scene;
  std::vector<Observation> observations;
  VecX weights;  // per tangent coordinate of one step; empty = defaults
  ParamVector params;
  GaussNewtonSettings settings;

  // 1 on positions, 0.1 on rotations, 0 on velocities.
  static VecX default_weights(const Scene& scene) {
    const int nb = static_cast<int>(scene.dynamic_bodies().size());
    VecX w = VecX::Zero(kBodyTangent * nb);
    for (int s = 0; s < nb; ++s) {
      w.segment<3>(kBodyTangent * s).setConstant(1.0);
      w.segment<3>(kBodyTangent * s + 3).setConstant(0.1);
    }
    return w;
  }

  VecX resolved_weights() const { return weights.size() > 0 ? weights : default_weights(scene); }

  void validate() const {
    if (observations.empty()) throw DomainError("system identification needs at least one trajectory");
    for (const auto& o : observations)
      if (o.states.states.size() < 2) throw DomainError("every observed trajectory needs length >= 2");
    const VecX w = resolved_weights();
    if (w.size() != kBodyTangent * static_cast<int>(scene.dynamic_bodies().size()))
      throw DomainError("weight vector size does not match the tangent layout");
    if ((w.array() < 0.0).any()) throw DomainError("weights must be >= 0");
    for (const auto& e : params.entries)
      if (!(e.lo < e.hi)) throw DomainError("bounds of " + e.name + " must satisfy min < max");
    params.validate();
  }
};

// Stacked W^(1/2) (x_hat_t - x_t) over t >= 1 and all observations.
inline VecX trajectory_residuals(const SysIdProblem& problem, const VecX& theta) {
  ParamVector p = problem.params;
  p.set_values(theta);
  for (const auto& e : p.entries)
    if (!(e.lo <= e.value && e.value <= e.hi)) throw DomainError("parameter " + e.name + " outside its bounds");
  const Scene scene = with_params(problem.scene, p);
  const VecX sqrt_w = problem.resolved_weights().array().sqrt();
  const int nx = static_cast<int>(sqrt_w.size());
  int rows = 0;
  for (const auto& o : problem.observations) rows += nx * static_cast<int>(o.states.states.size() - 1);
  VecX r(rows);
  int at = 0;
  for (const auto& o : problem.observations) {
    const int horizon = static_cast<int>(o.states.states.size()) - 1;
    const Trajectory sim = simulate(scene, o.states.states[0], o.controls, horizon);
    for (int t = 1; t <= horizon; ++t) {
      r.segment(at, nx) = sqrt_w.cwiseProduct(local_coordinates(sim.states[t], o.states.states[t]));
      at += nx;
    }
  }
  return r;
}

// Central-difference Jacobian of a vector function over bounded parameters.
template <typename Fn>
MatX bounded_fd_jacobian(Fn&& f, const VecX& theta, const VecX& lo, const VecX& hi, double h_rel, int workers,
                         const VecX& f0) {
  MatX J(f0.size(), theta.size());
  parallel_for(static_cast<std::size_t>(theta.size()), workers, [&](std::size_t k) {
    const double h = detail::fd_step(h_rel, theta[k]);
    const auto [hp, hm] = detail::bounded_steps(h, theta[k], lo[k], hi[k]);
    VecX tp = theta, tm = theta;
    tp[k] += hp;
    tm[k] -= hm;
    const VecX fp = hp > 0.0 ? f(tp) : f0;
    const VecX fm = hm > 0.0 ? f(tm) : f0;
    J.col(k) = (fp - fm) / (hp + hm);
  });
  return J;
}

enum class StopReason { kGradient, kStep, kMaxIterations, kStalled };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kGradient: return "gradient";
    case StopReason::kStep: return "step";
    case StopReason::kMaxIterations: return "max_iterations";
    case StopReason::kStalled: return "stalled";
  }
  return "?";
}

struct FitResult {
  VecX theta;
  std::vector<double> loss_history;  // one entry per accepted iterate, starting at theta0
  int iterations = 0;
  int rejected_steps = 0;
  StopReason reason = StopReason::kMaxIterations;
  double gradient_norm = 0.0;
};

inline FitResult gauss_newton_fit(const SysIdProblem& problem, const VecX& theta0) {
  problem.validate();
  const auto& cfg = problem.settings;
  const VecX lo = problem.params.lower(), hi = problem.params.upper();
  if ((theta0.array() < lo.array()).any() || (theta0.array() > hi.array()).any())
    throw DomainError("initial parameters outside their bounds");

  auto residuals = [&](const VecX& th) { return trajectory_residuals(problem, th); };
  FitResult out;
  out.theta = theta0;
  VecX r = residuals(out.theta);
  double loss = r.squaredNorm();
  out.loss_history.push_back(loss);
  double lambda = cfg.lambda0;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const MatX J = bounded_fd_jacobian(residuals, out.theta, lo, hi, cfg.h_rel, cfg.workers, r);
    const VecX g = J.transpose() * r;
    out.gradient_norm = g.norm();
    if (out.gradient_norm < cfg.gradient_tol) {
      out.reason = StopReason::kGradient;
      return out;
    }
    const MatX JtJ = J.transpose() * J;
    bool accepted = false;
    while (!accepted) {
      const MatX H = JtJ + lambda * MatX::Identity(JtJ.rows(), JtJ.cols());
      const VecX delta = H.ldlt().solve(-g);
      const VecX cand = (out.theta + delta).cwiseMax(lo).cwiseMin(hi);
      if ((cand - out.theta).norm() < cfg.step_tol * (1.0 + out.theta.norm())) {
        out.reason = StopReason::kStep;
        return out;
      }
      double cand_loss = std::numeric_limits<double>::infinity();
      VecX cand_r;
      try {
        cand_r = residuals(cand);
        cand_loss = cand_r.squaredNorm();
      } catch (const DivergenceError&) {
        // treated as a rejected trial step
      }
      if (cand_loss < loss) {
        out.theta = cand;
        r = std::move(cand_r);
        loss = cand_loss;
        out.loss_history.push_back(loss);
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
      } else {
        ++out.rejected_steps;
        lambda *= 10.0;
        if (lambda > cfg.lambda_max) {
          out.reason = StopReason::kStalled;
          return out;
        }
      }
    }
    out.iterations = it + 1;
  }
  out.reason = StopReason::kMaxIterations;
  return out;
}

}  // namespace danosim
