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

// Fields and scenes shared by the unit and acceptance suites.

#pragma once

#include <cmath>
#include <memory>
#include <numbers>

#include "danosim/danosim.hpp"

namespace danosim::testing {

// 1 inside r_in, 0 outside r_out, cubic smoothstep in between.
struct RadialFalloff {
  Vec3 center = Vec3::Zero();
  double r_in = 0.06;
  double r_out = 0.1;

  static double smoothstep(double s) { return s <= 0 ? 0 : s >= 1 ? 1 : s * s * (3 - 2 * s); }

  double density(const Vec3& x) const {
    const double r = (x - center).norm();
    return smoothstep((r_out - r) / (r_out - r_in));
  }
  Aabb bounds() const {
    const Vec3 e = Vec3::Constant(r_out * 1.05);
    return {center - e, center + e};
  }
  // Radius at which the profile equals phi (0 < phi < 1), by bisection.
  double radius_for(double phi) const {
    double lo = r_in, hi = r_out;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (smoothstep((r_out - mid) / (r_out - r_in)) > phi) lo = mid;
      else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
};

struct GaussianBlob {
  Vec3 center = Vec3::Zero();
  double sigma = 0.1;
  double density(const Vec3& x) const { return std::exp(-(x - center).squaredNorm() / (2 * sigma * sigma)); }
  Aabb bounds() const {
    const Vec3 e = Vec3::Constant(5 * sigma);
    return {center - e, center + e};
  }
};

inline double soft_box(const Vec3& x, const Vec3& half, double edge) {
  double v = 1.0;
  for (int a = 0; a < 3; ++a) v *= std::clamp((half[a] - std::abs(x[a])) / edge + 0.5, 0.0, 1.0);
  return v;
}

// Block of half extents `half`, density 1 inside, linear edge ramp of one cell.
inline GridDensityField block_grid(const Vec3& half, double spacing) {
  std::array<int, 3> dims;
  Vec3 origin;
  for (int a = 0; a < 3; ++a) {
    dims[a] = static_cast<int>(std::ceil(2 * half[a] / spacing)) + 3;
    origin[a] = -0.5 * (dims[a] - 1) * spacing;
  }
  return GridDensityField::from_function(origin, Vec3::Constant(spacing), dims,
                                         [&](const Vec3& x) { return soft_box(x, half, spacing); });
}

// A bunny-like blob: union of soft ellipsoids (body, head, two ears), as a
// grid, standing in for a learned density field.
inline GridDensityField bunny_grid(double spacing = 0.008) {
  struct Ell {
    Vec3 c, r;
  };
  const Ell parts[] = {{{0.0, 0.0, 0.045}, {0.075, 0.06, 0.05}},
                       {{0.06, 0.0, 0.09}, {0.035, 0.032, 0.032}},
                       {{0.055, 0.015, 0.135}, {0.012, 0.008, 0.03}},
                       {{0.055, -0.015, 0.135}, {0.012, 0.008, 0.03}}};
  const Vec3 lo(-0.1, -0.08, -0.02), hi(0.12, 0.08, 0.18);
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil((hi[a] - lo[a]) / spacing)) + 1;
  return GridDensityField::from_function(lo, Vec3::Constant(spacing), dims, [&](const Vec3& x) {
    double best = 0.0;
    for (const auto& p : parts) {
      const double q = ((x - p.c).array() / p.r.array()).matrix().norm();
      // density 1 well inside, smooth falloff across the shell q in [0.8, 1.1]
      const double s = std::clamp((1.1 - q) / 0.3, 0.0, 1.0);
      best = std::max(best, s * s * (3 - 2 * s));
    }
    return best;
  });
}

inline std::shared_ptr<const DanoModel> share(DanoModel m) { return std::make_shared<const DanoModel>(std::move(m)); }

inline Body ground_body() {
  Body g;
  g.name = "ground";
  g.kind = StaticBody{HalfSpace{Vec3::UnitZ(), 0.0}};
  return g;
}

inline Body dano_body(const std::string& name, std::shared_ptr<const DanoModel> model, AnyField field = {}) {
  Body b;
  b.name = name;
  b.alpha = model->alpha;
  b.kind = DanoBody{std::move(model), std::move(field)};
  return b;
}

inline Body sphere_body(const std::string& name, double radius, double mass, bool actuated, bool gravity) {
  Body b;
  b.name = name;
  b.kind = SphereBody{radius, mass};
  b.actuated = actuated;
  b.gravity = gravity;
  return b;
}

// Indicator sphere of radius 0.1 m at the origin, every interior sample kept.
inline DanoModel indicator_sphere_model(std::size_t samples = 20000, double alpha = 1000.0, std::uint64_t seed = 7) {
  DanoConfig cfg;
  cfg.samples = samples;
  cfg.mass_samples = 200000;
  cfg.seed = seed;
  cfg.band_lo = 0.5;
  cfg.band_hi = 1.0;
  cfg.alpha = alpha;
  cfg.degenerate = DegenerateNormals::kKeepZero;
  cfg.h = 0.002;
  return build_dano(IndicatorField::sphere(Vec3::Zero(), 0.1), cfg);
}

// Flat block (soap-bar like) 0.1 x 0.06 x 0.03 m with density 1 inside.
inline GridDensityField soap_grid() { return block_grid(Vec3(0.05, 0.03, 0.015), 0.005); }

inline DanoModel soap_model(double alpha = 500.0) {
  DanoConfig cfg;
  cfg.samples = 5000;
  cfg.mass_samples = 100000;
  cfg.seed = 3;
  cfg.band_lo = 0.05;
  cfg.band_hi = 1.0;
  cfg.alpha = alpha;
  cfg.degenerate = DegenerateNormals::kKeepZero;
  return build_dano(soap_grid(), cfg);
}

inline DanoModel bunny_model(double alpha = 400.0, std::uint64_t seed = 11) {
  DanoConfig cfg;
  cfg.samples = 5000;
  cfg.mass_samples = 100000;
  cfg.seed = seed;
  cfg.band_lo = 0.05;
  cfg.band_hi = 0.95;
  cfg.alpha = alpha;
  return build_dano(bunny_grid(), cfg);
}

inline BodyState at_rest(const Vec3& position) {
  BodyState s;
  s.position = position;
  return s;
}

// Soap-like bar over the ground, mid-range spring and damper.
inline Scene drop_scene(double dt = 0.01) {
  static const auto model = share(soap_model());
  Scene s;
  s.dt = dt;
  s.primitive_smoothing = 0.002;
  s.bodies = {ground_body(), dano_body("bar", model)};
  ContactPair c;
  c.a = 1;
  c.b = 0;
  c.params.impact_spring = 5e4;
  c.params.impact_damper = 5e5;
  s.contacts = {c};
  return s;
}

// A sphere flies into the first of two soft balls resting on the ground side
// by side along x.
inline Scene strike_scene() {
  static const auto model = [] {
    DanoConfig cfg;
    cfg.samples = 5000;
    cfg.seed = 8;
    cfg.alpha = 1000.0;
    return share(build_dano(RadialFalloff{}, cfg));
  }();
  Scene s;
  s.primitive_smoothing = 0.002;
  s.bodies = {ground_body(), dano_body("first", model, RadialFalloff{}), dano_body("second", model, RadialFalloff{}),
              sphere_body("striker", 0.05, 1.0, false, false)};
  auto pair = [](int a, int b) {
    ContactPair c;
    c.a = a;
    c.b = b;
    return c;
  };
  s.contacts = {pair(1, 0), pair(2, 0), pair(1, 3), pair(1, 2)};
  return s;
}

// Soap-like bar resting on the ground and an actuated spherical effector
// without gravity. Contact pairs: bar-ground, bar-pusher.
inline Scene push_scene(double dt = 0.01) {
  Scene s = drop_scene(dt);
  s.bodies.push_back(sphere_body("pusher", 0.03, 1.0, true, false));
  ContactPair c;
  c.a = 1;
  c.b = 2;
  s.contacts.push_back(c);
  return s;
}

inline State settle(const Scene& scene, State x, int steps) {
  for (int i = 0; i < steps; ++i) x = step(scene, x, VecX::Zero(scene.control_size()), i);
  return x;
}

// Bar resting flat at the origin, pusher behind it along -x.
inline State push_start(const Scene& scene) {
  State x = {at_rest(Vec3(0, 0, 0.0124)), at_rest(Vec3(-0.12, 0, 0.015))};
  return settle(scene, x, 50);
}

// Bar resting on the ground, launched along +x.
inline State slide_start(const Scene& scene, double speed = 1.0) {
  State x = settle(scene, {at_rest(Vec3(0, 0, 0.0124))}, 50);
  x[0].linear_velocity = Vec3(speed, 0, 0);
  return x;
}

}  // namespace danosim::testing
