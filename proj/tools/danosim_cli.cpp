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

// danosim command-line driver.
//
// Exit status: 0 success, 1 gradcheck above tolerance, 2 usage, 3 parse,
// 4 domain, 5 simulation divergence, 6 optimizer failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "danosim/danosim.hpp"
#include "danosim/scene_config.hpp"

namespace {

using namespace danosim;
using detail::fmt_double;

struct Options {
  std::string scene;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<double> dt;
  std::optional<int> horizon;
  std::vector<std::string> sets;
  int workers = default_workers();
  double tolerance = 1e-3;
  double h_rel = 2e-6;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SceneConfig load_config(const Options& o) {
  SceneConfig cfg = parse_scene(o.scene, o.seed);
  if (o.dt) {
    if (!(*o.dt > 0)) throw UsageError("--dt must be > 0");
    cfg.dt = *o.dt;
  }
  if (o.horizon) {
    if (*o.horizon < 0) throw UsageError("--horizon must be >= 0");
    cfg.horizon = *o.horizon;
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects name=value, got '" + s + "'");
    const std::string value = s.substr(eq + 1);
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size())
      throw UsageError("--set value for '" + s.substr(0, eq) + "' is not a number");
    apply_override(cfg, s.substr(0, eq), v);
  }
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

std::filesystem::path out_dir(const Options& o) {
  std::filesystem::path p(o.out);
  std::filesystem::create_directories(p);
  return p;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write '" + path.string() + "'");
  return f;
}

void write_preamble(std::ostream& out, const std::string& echo) {
  std::istringstream lines(echo);
  std::string l;
  while (std::getline(lines, l)) out << "# " << l << '\n';
}

std::string vec_str(const Vec3& v) { return fmt_double(v.x()) + " " + fmt_double(v.y()) + " " + fmt_double(v.z()); }

DanoConfig body_dano_config(const BodySpec& b) {
  DanoConfig c = b.dano;
  if (b.alpha) c.alpha = *b.alpha;
  return c;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_build_dano(const Options& o) {
  const SceneConfig cfg = load_config(o);
  const auto dir = out_dir(o);
  const std::string echo = cfg.echo();
  int built = 0;
  for (const auto& b : cfg.bodies) {
    if (b.type != BodySpec::Type::kDano) continue;
    if (!b.has_field()) {
      std::cerr << "note: body '" << b.name << "' has no field; skipped\n";
      continue;
    }
    AnyField field;
    if (!b.grid_path.empty()) field = load_grid_field(b.grid_path);
    else field = IndicatorField::sphere(b.field_center, b.field_radius);
    const DanoModel m = build_dano(field, body_dano_config(b));
    const auto path = dir / (b.name + ".dano");
    auto f = open_out(path);
    write_preamble(f, echo);
    write_dano(f, m);
    std::cout << b.name << ": " << m.size() << " points, mass " << fmt_double(m.mass()) << " -> " << path.string()
              << '\n';
    ++built;
  }
  if (built == 0) throw DomainError("no density-field body with a field to preprocess");
  return 0;
}

int run_mass_props(const Options& o) {
  const SceneConfig cfg = load_config(o);
  const auto dir = out_dir(o);
  std::ostringstream csv;
  write_preamble(csv, cfg.echo());
  csv << "body,mass,cx,cy,cz,ixx,ixy,ixz,iyx,iyy,iyz,izx,izy,izz,p1,p2,p3\n";
  int rows = 0;
  for (const auto& b : cfg.bodies) {
    if (b.type != BodySpec::Type::kDano) continue;
    DanoModel m = *resolve_model(b, nullptr);
    if (b.alpha) m.alpha = *b.alpha;
    const Mat3 j = m.inertia_com();
    const Vec3 p = Eigen::SelfAdjointEigenSolver<Mat3>(j).eigenvalues();
    std::cout << b.name << '\n'
              << "  mass      " << fmt_double(m.mass()) << '\n'
              << "  com       " << vec_str(m.com) << '\n'
              << "  principal " << vec_str(p) << '\n';
    csv << b.name << ',' << fmt_double(m.mass()) << ',' << fmt_double(m.com.x()) << ',' << fmt_double(m.com.y())
        << ',' << fmt_double(m.com.z());
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) csv << ',' << fmt_double(j(r, c));
    csv << ',' << fmt_double(p.x()) << ',' << fmt_double(p.y()) << ',' << fmt_double(p.z()) << '\n';
    ++rows;
  }
  if (rows == 0) throw DomainError("scene has no density-field body");
  auto f = open_out(dir / "mass_props.csv");
  f << csv.str();
  return 0;
}

int run_simulate(const Options& o) {
  const SceneConfig cfg = load_config(o);
  const Scene scene = build_scene(cfg);
  const int nu = state_tangent_layout(scene).control_dim;
  const Trajectory traj = simulate(scene, initial_state(cfg), MatX::Zero(nu, cfg.horizon), cfg.horizon);
  const auto path = out_dir(o) / "trajectory.csv";
  save_trajectory(path.string(), scene, traj, cfg.echo());
  std::cout << "simulated " << cfg.horizon << " steps -> " << path.string() << '\n';
  return 0;
}

int run_sysid(const Options& o) {
  const SceneConfig cfg = load_config(o);
  const Scene scene = build_scene(cfg);
  SysIdProblem p = build_sysid(cfg, scene);
  p.settings.workers = o.workers;
  const VecX theta0 = p.params.values();
  const FitResult fit = gauss_newton_fit(p, theta0);
  const auto dir = out_dir(o);
  const std::string echo = cfg.echo();

  auto params = open_out(dir / "params.csv");
  write_preamble(params, echo);
  params << "name,init,fitted,min,max\n";
  for (std::size_t k = 0; k < p.params.size(); ++k) {
    const auto& e = p.params.entries[k];
    params << e.name << ',' << fmt_double(theta0[k]) << ',' << fmt_double(fit.theta[k]) << ',' << fmt_double(e.lo)
           << ',' << fmt_double(e.hi) << '\n';
    std::cout << e.name << " = " << fmt_double(fit.theta[k]) << '\n';
  }
  auto loss = open_out(dir / "loss_history.csv");
  write_preamble(loss, echo);
  loss << "iteration,loss\n";
  for (std::size_t i = 0; i < fit.loss_history.size(); ++i) loss << i << ',' << fmt_double(fit.loss_history[i]) << '\n';
  std::cout << "stopped: " << to_string(fit.reason) << " after " << fit.iterations << " iterations, loss "
            << fmt_double(fit.loss_history.back()) << '\n';
  if (fit.reason == StopReason::kStalled && fit.iterations == 0)
    throw OptimizeError("no accepted Gauss-Newton step (damping limit reached)");
  return 0;
}

int run_trajopt(const Options& o) {
  const SceneConfig cfg = load_config(o);
  const Scene scene = build_scene(cfg);
  TrajOptProblem p = build_trajopt(cfg, scene);
  p.settings.workers = o.workers;
  const int nu = state_tangent_layout(scene).control_dim;
  const TrajOptResult r = ilqr_solve(p, cfg.trajopt.initial_controls.expand(nu, p.horizon));
  const auto dir = out_dir(o);
  const std::string echo = cfg.echo();

  save_trajectory((dir / "trajectory.csv").string(), scene, r.states, echo);
  auto u = open_out(dir / "controls.csv");
  write_preamble(u, echo);
  u << "t";
  for (int j = 0; j < nu; ++j) u << ",u" << j;
  u << '\n';
  for (int t = 0; t < r.controls.cols(); ++t) {
    u << fmt_double(t * scene.dt);
    for (int j = 0; j < nu; ++j) u << ',' << fmt_double(r.controls(j, t));
    u << '\n';
  }
  auto c = open_out(dir / "cost_history.csv");
  write_preamble(c, echo);
  c << "iteration,phase,cost\n";
  for (std::size_t i = 0; i < r.cost_history.size(); ++i)
    c << i << ',' << r.history_phase[i] << ',' << fmt_double(r.cost_history[i]) << '\n';
  std::cout << (r.converged ? "converged" : "not converged") << " after " << r.iterations << " iterations, cost "
            << fmt_double(r.cost_history.back()) << ", max bound violation " << fmt_double(r.max_violation) << '\n';
  if (r.ill_conditioned) throw OptimizeError("backward pass regularization exceeded its limit");
  return 0;
}

// Compares the adjoint parameter gradient of a fixed rollout loss with
// central differences of the loss itself, one row per parameter.
int run_gradcheck(const Options& o) {
  const SceneConfig cfg = load_config(o);
  const Scene scene = build_scene(cfg);
  const int nu = state_tangent_layout(scene).control_dim;
  const int T = cfg.horizon;
  if (T < 1) throw UsageError("gradcheck needs a horizon >= 1");

  ParamVector params;
  if (cfg.sysid.present) {
    params.entries = cfg.sysid.params;
  } else {
    for (const auto& b : scene.bodies)
      if (b.is_dano()) params.entries.push_back({"alpha." + b.name, b.alpha});
    for (const auto& c : scene.contacts)
      for (std::size_t k = 0; k < ContactParams::kNames.size(); ++k)
        params.entries.push_back({"contact." + scene.bodies[c.a].name + "." + scene.bodies[c.b].name + "." +
                                      ContactParams::kNames[k],
                                  c.params.at(k), 0.0});
  }
  for (auto& e : params.entries) e.value = get_param(scene, e.name);
  if (params.size() == 0) throw DomainError("no parameters to check");

  const MatX u = cfg.trajopt.present ? cfg.trajopt.initial_controls.expand(nu, T) : MatX::Zero(nu, T);
  const State x0 = initial_state(cfg);
  RolloutLoss loss;
  loss.stage = [&](int, const State& x) {
    double l = 0.0;
    for (std::size_t s = 0; s < x.size(); ++s)
      l += (x[s].position - x0[s].position).squaredNorm() + 0.01 * x[s].linear_velocity.squaredNorm() +
           1e-4 * x[s].angular_velocity.squaredNorm();
    return l;
  };
  JacobianOptions opt;
  opt.h_rel = o.h_rel;
  opt.workers = o.workers;
  const RolloutGradient g = rollout_gradient(scene, loss, x0, u, params, T, opt);

  VecX fd(params.size());
  parallel_for(params.size(), o.workers, [&](std::size_t k) {
    const auto& e = params.entries[k];
    const double h = detail::fd_step(o.h_rel, e.value);
    const auto [hp, hm] = detail::bounded_steps(h, e.value, e.lo, e.hi);
    ParamVector pp = params, pm = params;
    pp.entries[k].value += hp;
    pm.entries[k].value -= hm;
    const double lp = evaluate_rollout_loss(loss, simulate(with_params(scene, pp), x0, u, T), u);
    const double lm = evaluate_rollout_loss(loss, simulate(with_params(scene, pm), x0, u, T), u);
    fd[k] = (lp - lm) / (hp + hm);
  });

  // Columns with a negligible gradient are judged against the largest one.
  const double floor = std::max(1e-6 * fd.cwiseAbs().maxCoeff(), 1e-300);
  bool ok = true;
  std::printf("%-48s %24s %24s %10s\n", "parameter", "adjoint", "finite_diff", "rel_err");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double err = std::abs(g.params[k] - fd[k]) / std::max(std::abs(fd[k]), floor);
    ok = ok && err < o.tolerance;
    std::printf("%-48s %24.17g %24.17g %10.3e\n", params.entries[k].name.c_str(), g.params[k], fd[k], err);
  }
  std::printf("loss %.17g over %d steps: %s (tolerance %g)\n", g.loss, T, ok ? "PASS" : "FAIL", o.tolerance);
  return ok ? 0 : 1;
}

int exit_code(const Error& e) {
  const std::string& c = e.category();
  if (c == "parse") return 3;
  if (c == "domain") return 4;
  if (c == "simulate") return 5;
  if (c == "optimize") return 6;
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"danosim: rigid-body simulation with density-field geometry"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scene", o.scene, "scene config file")->required();
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--dt", o.dt, "override the time step");
    sub->add_option("--horizon", o.horizon, "override the horizon");
    sub->add_option("--set", o.sets, "parameter override name=value (repeatable)");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  };

  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Entry entries[] = {
      {"build-dano", "preprocess density fields into .dano models", run_build_dano},
      {"mass-props", "print and write mass properties", run_mass_props},
      {"simulate", "roll out the scene with zero controls", run_simulate},
      {"sysid", "fit parameters to observed trajectories", run_sysid},
      {"trajopt", "optimize controls with iLQR", run_trajopt},
      {"gradcheck", "compare adjoint gradients with finite differences", run_gradcheck},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    add_common(sub);
    if (std::string(e.name) == "gradcheck") {
      sub->add_option("--tolerance", o.tolerance, "relative error tolerance")->capture_default_str();
      sub->add_option("--h-rel", o.h_rel, "relative finite-difference step")->capture_default_str();
    }
    subs.emplace_back(sub, e.fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [sub, fn] : subs) {
    if (!sub->parsed()) continue;
    try {
      return fn(o);
    } catch (const UsageError& e) {
      std::cerr << "error: usage: " << e.what() << '\n';
      return 2;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return exit_code(e);
    } catch (const std::filesystem::filesystem_error& e) {
      std::cerr << "error: parse: " << e.what() << '\n';
      return 3;
    }
  }
  return 2;
}
