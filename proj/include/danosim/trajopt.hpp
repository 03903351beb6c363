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

// Trajectory optimization with iterative LQR over finite-difference
// simulation Jacobians. Control bounds are handled by an augmented
// Lagrangian penalty whose weight grows between outer iterations.

#pragma once

#include <Eigen/Cholesky>
#include <limits>
#include <vector>

#include "danosim/common.hpp"
#include "danosim/diff.hpp"
#include "danosim/dynamics.hpp"

namespace danosim {

struct PenaltySchedule {
  double rho0 = 1.0;
  double growth = 10.0;
  int max_outer = 6;
  double tolerance = 1e-3;
};

struct IlqrSettings {
  int max_iterations = 50;   // per outer iteration
  double mu0 = 1e-6;         // initial Q_uu regularization
  double mu_max = 1e10;
  double tolerance = 1e-6;   // relative cost decrease to stop an inner loop
  double h_rel = 1e-6;
  int line_search_steps = 10;
  int workers = 1;
};

struct TrajOptProblem {
  Scene scene;
  int horizon = 100;
  State x0;
  State goal;
  VecX Q, R, Qf;  // diagonal weights: state_dim, control_dim, state_dim
  VecX u_lo, u_hi;
  PenaltySchedule penalty;
  IlqrSettings settings;

  void validate() const {
    const TangentLayout l = state_tangent_layout(scene);
    if (horizon < 2) throw DomainError("horizon must be >= 2");
    if (l.control_dim == 0) throw DomainError("trajectory optimization needs an actuated body");
    if (static_cast<int>(x0.size()) * kBodyTangent != l.state_dim ||
        static_cast<int>(goal.size()) * kBodyTangent != l.state_dim)
      throw DomainError("initial or goal state does not match the scene");
    if (Q.size() != l.state_dim || Qf.size() != l.state_dim || R.size() != l.control_dim)
      throw DomainError("cost weight sizes do not match the tangent layout");
    if ((Q.array() < 0).any() || (Qf.array() < 0).any() || (R.array() < 0).any())
      throw DomainError("cost weights must be >= 0");
    if (u_lo.size() != l.control_dim || u_hi.size() != l.control_dim)
      throw DomainError("control bound sizes do not match the control layout");
    if (!u_lo.allFinite() || !u_hi.allFinite()) throw DomainError("control bounds must be finite");
    if ((u_lo.array() > u_hi.array()).any()) throw DomainError("control bounds must satisfy min <= max");
    if (!(penalty.rho0 > 0) || !(penalty.growth >= 1))
      throw DomainError("penalty schedule must have rho0 > 0, growth >= 1");
  }
};

// Augmented Lagrangian state for the bound constraints u <= hi and lo <= u.
struct ConstraintState {
  double rho = 1.0;
  MatX lambda_hi, lambda_lo;  // control_dim x T
};

inline ConstraintState initial_constraints(const TrajOptProblem& p) {
  const int nu = static_cast<int>(p.R.size());
  return {p.penalty.rho0, MatX::Zero(nu, p.horizon), MatX::Zero(nu, p.horizon)};
}

struct CostTerms {
  double state = 0.0;
  double control = 0.0;
  double penalty = 0.0;
  double total() const { return state + control + penalty; }
};

namespace detail {

// (1/2rho) (max(0, lambda + rho c)^2 - lambda^2) and its first two derivatives in c.
inline void al_term(double c, double lambda, double rho, double& value, double& d1, double& d2) {
  const double a = std::max(0.0, lambda + rho * c);
  value = (a * a - lambda * lambda) / (2.0 * rho);
  d1 = a;
  d2 = a > 0.0 ? rho : 0.0;
}

}  // namespace detail

inline CostTerms cost_terms(const TrajOptProblem& p, const Trajectory& traj, const MatX& controls,
                            const ConstraintState& cs) {
  if (static_cast<int>(traj.states.size()) != p.horizon + 1 || controls.cols() != p.horizon ||
      controls.rows() != p.R.size())
    throw DomainError("trajectory or control length does not match the horizon");
  CostTerms c;
  for (int t = 0; t <= p.horizon; ++t) {
    const VecX e = local_coordinates(p.goal, traj.states[t]);
    const VecX& w = t == p.horizon ? p.Qf : p.Q;
    c.state += 0.5 * e.dot(w.cwiseProduct(e));
  }
  for (int t = 0; t < p.horizon; ++t) {
    const auto u = controls.col(t);
    c.control += 0.5 * u.dot(p.R.cwiseProduct(u));
    for (int j = 0; j < u.size(); ++j) {
      double v, d1, d2;
      detail::al_term(u[j] - p.u_hi[j], cs.lambda_hi(j, t), cs.rho, v, d1, d2);
      c.penalty += v;
      detail::al_term(p.u_lo[j] - u[j], cs.lambda_lo(j, t), cs.rho, v, d1, d2);
      c.penalty += v;
    }
  }
  return c;
}

inline double evaluate_cost(const TrajOptProblem& p, const Trajectory& traj, const MatX& controls,
                            const ConstraintState& cs) {
  return cost_terms(p, traj, controls, cs).total();
}

inline double evaluate_cost(const TrajOptProblem& p, const Trajectory& traj, const MatX& controls) {
  return evaluate_cost(p, traj, controls, initial_constraints(p));
}

inline double max_bound_violation(const TrajOptProblem& p, const MatX& controls) {
  double v = 0.0;
  for (int t = 0; t < controls.cols(); ++t)
    for (int j = 0; j < controls.rows(); ++j)
      v = std::max({v, controls(j, t) - p.u_hi[j], p.u_lo[j] - controls(j, t)});
  return v;
}

struct TrajOptResult {
  Trajectory states;
  MatX controls;
  std::vector<double> cost_history;  // accepted iterates, including the initial rollout of each phase
  std::vector<int> history_phase;    // outer (penalty) iteration of each history entry
  int iterations = 0;
  bool converged = false;  // last inner loop hit the tolerance and the bounds hold
  bool ill_conditioned = false;
  double max_violation = 0.0;
  CostTerms final_terms;
};

inline TrajOptResult ilqr_solve(const TrajOptProblem& p, const MatX& u_init) {
  p.validate();
  const auto& cfg = p.settings;
  const int T = p.horizon;
  const int nu = static_cast<int>(p.R.size());
  if (u_init.rows() != nu || u_init.cols() != T) throw DomainError("initial controls must be control_dim x horizon");
  if (!u_init.allFinite()) throw DomainError("initial controls must be finite");

  ConstraintState cs = initial_constraints(p);
  TrajOptResult out;
  out.controls = u_init;
  out.states = simulate(p.scene, p.x0, out.controls, T);
  const ParamVector no_params;
  JacobianOptions jopt;
  jopt.h_rel = cfg.h_rel;
  jopt.want_params = false;
  jopt.workers = cfg.workers;

  for (int outer = 0; outer < p.penalty.max_outer; ++outer) {
    double cost = evaluate_cost(p, out.states, out.controls, cs);
    out.cost_history.push_back(cost);
    out.history_phase.push_back(outer);
    double mu = cfg.mu0;

    std::vector<MatX> A(T), B(T);
    bool stale = true;
    bool stationary = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      ++out.iterations;
      if (stale) {
        // Linearize along the current rollout.
        for (int t = 0; t < T; ++t) {
          const StepJacobians J = step_jacobians(p.scene, out.states.states[t], out.controls.col(t), no_params, jopt);
          A[t] = J.A;
          B[t] = J.B;
        }
        stale = false;
      }

      std::vector<VecX> k(T);
      std::vector<MatX> K(T);
      double dv1 = 0.0, dv2 = 0.0;
      bool solved = false;
      while (!solved) {
        const VecX eT = local_coordinates(p.goal, out.states.states[T]);
        VecX Vx = p.Qf.cwiseProduct(eT);
        MatX Vxx = p.Qf.asDiagonal();
        dv1 = dv2 = 0.0;
        solved = true;
        for (int t = T - 1; t >= 0; --t) {
          const VecX e = local_coordinates(p.goal, out.states.states[t]);
          const VecX u = out.controls.col(t);
          VecX lu = p.R.cwiseProduct(u);
          VecX luu = p.R;
          for (int j = 0; j < nu; ++j) {
            double v, d1, d2;
            detail::al_term(u[j] - p.u_hi[j], cs.lambda_hi(j, t), cs.rho, v, d1, d2);
            lu[j] += d1;
            luu[j] += d2;
            detail::al_term(p.u_lo[j] - u[j], cs.lambda_lo(j, t), cs.rho, v, d1, d2);
            lu[j] -= d1;
            luu[j] += d2;
          }
          const VecX Qx = p.Q.cwiseProduct(e) + A[t].transpose() * Vx;
          const VecX Qu = lu + B[t].transpose() * Vx;
          const MatX VxxA = Vxx * A[t];
          const MatX Qxx = MatX(p.Q.asDiagonal()) + A[t].transpose() * VxxA;
          const MatX Qux = B[t].transpose() * VxxA;
          MatX Quu = MatX(luu.asDiagonal()) + B[t].transpose() * Vxx * B[t];
          Quu.diagonal().array() += mu;
          Eigen::LLT<MatX> llt(Quu);
          if (llt.info() != Eigen::Success) {
            solved = false;
            break;
          }
          k[t] = -llt.solve(Qu);
          K[t] = -llt.solve(Qux);
          dv1 += k[t].dot(Qu);
          dv2 += 0.5 * k[t].dot(Quu * k[t]);
          Vx = Qx + K[t].transpose() * (Quu * k[t]) + K[t].transpose() * Qu + Qux.transpose() * k[t];
          Vxx = Qxx + K[t].transpose() * Quu * K[t] + K[t].transpose() * Qux + Qux.transpose() * K[t];
          Vxx = 0.5 * (Vxx + Vxx.transpose()).eval();
        }
        if (!solved) {
          mu *= 10.0;
          if (mu > cfg.mu_max) break;
        }
      }
      if (!solved) {
        out.ill_conditioned = true;
        break;
      }

      // Predicted decrease of a full step below tolerance: stationary point.
      if (-(dv1 + dv2) < cfg.tolerance * std::max(1.0, std::abs(cost))) {
        stationary = true;
        break;
      }

      // Line search; candidates are independent rollouts.
      const int ns = cfg.line_search_steps;
      std::vector<double> cand_cost(ns, std::numeric_limits<double>::infinity());
      std::vector<Trajectory> cand_traj(ns);
      std::vector<MatX> cand_u(ns);
      parallel_for(static_cast<std::size_t>(ns), cfg.workers, [&](std::size_t i) {
        const double a = std::pow(0.5, static_cast<double>(i));
        MatX u(nu, T);
        Trajectory tr;
        tr.states.reserve(T + 1);
        tr.states.push_back(p.x0);
        try {
          for (int t = 0; t < T; ++t) {
            const VecX dx = local_coordinates(out.states.states[t], tr.states[t]);
            u.col(t) = out.controls.col(t) + a * k[t] + K[t] * dx;
            tr.states.push_back(step(p.scene, tr.states[t], u.col(t), t));
          }
        } catch (const DivergenceError&) {
          return;
        }
        cand_cost[i] = evaluate_cost(p, tr, u, cs);
        cand_traj[i] = std::move(tr);
        cand_u[i] = std::move(u);
      });
      int pick = -1;
      for (int i = 0; i < ns; ++i) {
        const double a = std::pow(0.5, static_cast<double>(i));
        const double expected = -(a * dv1 + a * a * dv2);
        const double actual = cost - cand_cost[i];
        if (std::isfinite(cand_cost[i]) && actual > 0.0 && (expected <= 0.0 || actual >= 1e-4 * expected)) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        mu *= 10.0;
        if (mu > cfg.mu_max) {
          out.ill_conditioned = true;
          break;
        }
        continue;
      }
      const double prev = cost;
      cost = cand_cost[pick];
      out.states = std::move(cand_traj[pick]);
      out.controls = std::move(cand_u[pick]);
      out.cost_history.push_back(cost);
      out.history_phase.push_back(outer);
      mu = std::max(cfg.mu0, mu / 10.0);
      stale = true;
      if (prev - cost < cfg.tolerance * std::max(1.0, std::abs(prev))) {
        stationary = true;
        break;
      }
    }
    if (out.ill_conditioned) break;

    out.max_violation = max_bound_violation(p, out.controls);
    if (out.max_violation <= p.penalty.tolerance) {
      out.converged = stationary;
      break;
    }
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < nu; ++j) {
        cs.lambda_hi(j, t) = std::max(0.0, cs.lambda_hi(j, t) + cs.rho * (out.controls(j, t) - p.u_hi[j]));
        cs.lambda_lo(j, t) = std::max(0.0, cs.lambda_lo(j, t) + cs.rho * (p.u_lo[j] - out.controls(j, t)));
      }
    cs.rho *= p.penalty.growth;
  }
  out.max_violation = max_bound_violation(p, out.controls);
  out.final_terms = cost_terms(p, out.states, out.controls, cs);
  return out;
}

}  // namespace danosim
