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

// Probabilistic interpenetration contact. The overlap volume psi is the
// integral of the product of two densities, estimated from the precomputed
// contact points of each density-field body. All forces are applied at the
// overlap centroid chi.
//
// Convention: the contact normal n points from body B into body A, so the
// spring term psi * I_spring * n pushes A out of B.

#pragma once

#include <array>
#include <string>

#include "danosim/common.hpp"
#include "danosim/dano.hpp"
#include "danosim/field.hpp"

namespace danosim {

struct ContactParams {
  double impact_spring = 5.5e4;   // N per unit psi
  double impact_damper = 5.5e5;   // N s/m per unit psi
  double sliding_friction = 0.5;
  double sliding_drag = 0.05;     // s/m
  double rolling_friction = 0.05; // m
  double rolling_drag = 0.05;     // m s
  double torsional_friction = 0.05;
  double torsional_drag = 0.05;

  static constexpr std::array<const char*, 8> kNames = {
      "impact_spring",    "impact_damper", "sliding_friction",   "sliding_drag",
      "rolling_friction", "rolling_drag",  "torsional_friction", "torsional_drag"};

  // Nominal ranges; values outside are allowed but worth a warning.
  static constexpr std::array<std::array<double, 2>, 8> kNominal = {{{1e4, 1e5},
                                                                      {1e5, 1e6},
                                                                      {0.0, 1.0},
                                                                      {0.0, 0.1},
                                                                      {0.0, 0.1},
                                                                      {0.0, 0.1},
                                                                      {0.0, 0.1},
                                                                      {0.0, 0.1}}};

  double& at(std::size_t i) {
    switch (i) {
      case 0: return impact_spring;
      case 1: return impact_damper;
      case 2: return sliding_friction;
      case 3: return sliding_drag;
      case 4: return rolling_friction;
      case 5: return rolling_drag;
      case 6: return torsional_friction;
      case 7: return torsional_drag;
      default: throw DomainError("contact parameter index out of range");
    }
  }
  double at(std::size_t i) const { return const_cast<ContactParams*>(this)->at(i); }

  static int index_of(const std::string& name) {
    for (std::size_t i = 0; i < kNames.size(); ++i)
      if (name == kNames[i]) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    for (std::size_t i = 0; i < 8; ++i)
      if (!(at(i) >= 0.0) || !std::isfinite(at(i)))
        throw DomainError(std::string("contact parameter ") + kNames[i] + " must be finite and >= 0");
  }

  bool operator==(const ContactParams&) const = default;
};

inline constexpr double kFrictionSmoothing = 1e-6;  // m/s and rad/s
inline constexpr double kNormalGain = 1.0;
inline constexpr double kChannelGain = 0.25;         // per-step velocity fraction, see contact_wrench

struct Overlap {
  double psi = 0.0;
  Vec3 chi = Vec3::Zero();  // world frame; meaningful only when in_contact()
  bool in_contact() const { return psi > 0.0; }
};

// Overlap of a density-field body with a primitive. `pose` maps the model's
// field frame to world. `smoothing` is the membership ramp width (0 = exact
// indicator).
inline Overlap overlap_primitive(const DanoModel& dano, const Pose& pose, const PrimitiveShape& shape,
                                 double smoothing = 0.0) {
  if (dano.size() == 0) throw DomainError("dano has no contact points");
  // Express the primitive in the field frame; membership is invariant under
  // the rigid map so the per-point loop needs no transform.
  PrimitiveShape local;
  double reach = 0.0;
  const Vec3 box_center = 0.5 * (dano.box.lo + dano.box.hi);
  const double box_radius = 0.5 * dano.box.extent().norm();
  if (const auto* h = std::get_if<HalfSpace>(&shape)) {
    HalfSpace l;
    l.normal = pose.rotation.conjugate() * h->normal;
    l.offset = h->normal.dot(pose.translation) + h->offset;
    local = l;
    reach = l.normal.dot(box_center) + l.offset;
  } else {
    const auto& s = std::get<Sphere>(shape);
    Sphere l{pose.apply_inverse(s.center), s.radius};
    local = l;
    reach = (box_center - l.center).norm() - l.radius;
  }
  Overlap out;
  if (reach > box_radius + 0.5 * smoothing) return out;

  double wsum = 0.0;
  Vec3 xsum = Vec3::Zero();
  for (std::size_t i = 0; i < dano.size(); ++i) {
    const double m = primitive_membership(local, dano.points[i], smoothing);
    if (m == 0.0) continue;
    const double w = m * dano.densities[i];
    wsum += w;
    xsum += w * dano.points[i];
  }
  if (wsum > 0.0) {
    out.psi = dano.cell_volume * wsum;
    out.chi = pose.apply(xsum / wsum);
  }
  return out;
}

// Overlap of two density-field bodies: union of both point sets, own density
// from the model, the other body's density queried online. Each point set is
// its own Monte Carlo estimate of the product integral; the two are averaged.
template <DensityFieldLike FieldA, DensityFieldLike FieldB>
Overlap overlap_dano_dano(const DanoModel& a, const Pose& pose_a, const FieldA& field_a, const DanoModel& b,
                          const Pose& pose_b, const FieldB& field_b) {
  if (a.size() == 0 || b.size() == 0) throw DomainError("dano has no contact points");
  Overlap out;
  {
    const Vec3 ca = pose_a.apply(0.5 * (a.box.lo + a.box.hi));
    const Vec3 cb = pose_b.apply(0.5 * (b.box.lo + b.box.hi));
    if ((ca - cb).norm() > 0.5 * (a.box.extent().norm() + b.box.extent().norm())) return out;
  }
  const Pose a_to_b = pose_b.inverse() * pose_a;
  const Pose b_to_a = a_to_b.inverse();
  double wa = 0.0;
  Vec3 xa = Vec3::Zero();  // accumulated in A's frame
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double cross = field_b.density(a_to_b.apply(a.points[i]));
    if (cross == 0.0) continue;
    const double w = 0.5 * a.cell_volume * a.densities[i] * cross;
    wa += w;
    xa += w * a.points[i];
  }
  double wb = 0.0;
  Vec3 xb = Vec3::Zero();  // accumulated in B's frame
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double cross = field_a.density(b_to_a.apply(b.points[i]));
    if (cross == 0.0) continue;
    const double w = 0.5 * b.cell_volume * b.densities[i] * cross;
    wb += w;
    xb += w * b.points[i];
  }
  const double wsum = wa + wb;
  if (wsum > 0.0) {
    out.psi = wsum;
    out.chi = (pose_a.rotation * xa + wa * pose_a.translation + pose_b.rotation * xb + wb * pose_b.translation) / wsum;
  }
  return out;
}

inline Vec3 contact_normal_primitive(const PrimitiveShape& shape, const Vec3& chi) {
  if (const auto* h = std::get_if<HalfSpace>(&shape)) return h->normal;
  const auto& s = std::get<Sphere>(shape);
  const Vec3 d = chi - s.center;
  const double n = d.norm();
  if (n < 1e-12) throw DomainError("degenerate contact normal: overlap centroid at sphere center");
  return d / n;
}

// Density-weighted average of the precomputed outward normals, oriented from
// B into A.
template <DensityFieldLike FieldA, DensityFieldLike FieldB>
Vec3 contact_normal_dano_dano(const DanoModel& a, const Pose& pose_a, const FieldA& field_a, const DanoModel& b,
                              const Pose& pose_b, const FieldB& field_b) {
  const Pose a_to_b = pose_b.inverse() * pose_a;
  const Pose b_to_a = a_to_b.inverse();
  Vec3 na = Vec3::Zero(), nb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double cross = field_b.density(a_to_b.apply(a.points[i]));
    if (cross != 0.0) na += (a.cell_volume * a.densities[i] * cross) * a.normals[i];
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double cross = field_a.density(b_to_a.apply(b.points[i]));
    if (cross != 0.0) nb += (b.cell_volume * b.densities[i] * cross) * b.normals[i];
  }
  // outward normals of A point toward B, so the sum below points from A to B
  const Vec3 nbar = pose_a.rotation * na - pose_b.rotation * nb;
  const double len = nbar.norm();
  if (len < 1e-12) throw DomainError("degenerate contact normal between density-field bodies");
  return -nbar / len;
}

// Rigid-body kinematics needed to evaluate relative contact velocity. The
// inverse-mass terms are zero for static bodies.
struct BodyKinematics {
  Vec3 com = Vec3::Zero();             // world
  Vec3 linear_velocity = Vec3::Zero(); // world, of the COM
  Vec3 angular_velocity = Vec3::Zero();// world
  Quat rotation = Quat::Identity();
  double inv_mass = 0.0;
  double inv_inertia = 0.0;  // 1 / smallest principal moment

  Vec3 point_velocity(const Vec3& p) const { return linear_velocity + angular_velocity.cross(p - com); }
};

struct ContactResult {
  double psi = 0.0;
  Vec3 chi = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  Vec3 force = Vec3::Zero();               // on A, world frame
  Vec3 torque = Vec3::Zero();              // on A about its COM, A's body frame
  Vec3 friction_torque = Vec3::Zero();     // tau_n + tau_t, world frame
};

namespace detail {
inline Vec3 smooth_unit(const Vec3& u, double eps) { return u / std::max(u.norm(), eps); }

// Smooth factor that keeps gain * factor below limit: 1 / (1 + (gain/limit)^4)^(1/4).
inline double soft_cap(double gain, double limit) {
  const double r = gain / limit;
  return 1.0 / std::sqrt(std::sqrt(1.0 + r * r * r * r));
}
}  // namespace detail

// Contact wrench on A. With dt > 0 the impact damper is smoothly capped
// (soft_cap) so that one explicit step removes less than kNormalGain of the
// normal approach velocity; a deep impact would otherwise reverse and amplify
// it. Each tangential channel (sliding, rolling, torsion) is limited to
// kChannelGain of its relative velocity per step: the dry-friction band is
// sized for a coefficient no smaller than the top of its nominal range and
// drag coefficients are softly scaled down. Summed over the three coupled
// channels the friction terms then cannot overshoot and chatter around zero
// relative velocity. With dt == 0 the band is exactly kFrictionSmoothing and
// both dampers are unchanged.
inline ContactResult contact_wrench(double psi, const Vec3& chi, const Vec3& n, const BodyKinematics& a,
                                    const BodyKinematics& b, const ContactParams& p, double dt = 0.0) {
  if (!(psi >= 0.0)) throw DomainError("overlap volume psi must be >= 0");
  ContactResult r;
  r.psi = psi;
  r.chi = chi;
  if (psi == 0.0) return r;
  if (std::abs(n.norm() - 1.0) > 1e-9) throw DomainError("contact normal must be a unit vector");
  r.normal = n;

  const Vec3 v = a.point_velocity(chi) - b.point_velocity(chi);
  const Vec3 v_n = v.dot(n) * n;
  const Vec3 v_t = v - v_n;
  const Vec3 w = a.angular_velocity - b.angular_velocity;
  const Vec3 w_n = w.dot(n) * n;
  const Vec3 w_t = w - w_n;

  double damper = p.impact_damper;
  if (dt > 0.0) {
    const double inv_n = a.inv_mass + (chi - a.com).cross(n).squaredNorm() * a.inv_inertia + b.inv_mass +
                         (chi - b.com).cross(n).squaredNorm() * b.inv_inertia;
    damper *= detail::soft_cap(dt * psi * damper * inv_n, kNormalGain);
  }
  const Vec3 f_n = psi * (p.impact_spring * n - damper * v_n);
  const double fn = f_n.norm();

  double eps_slide = kFrictionSmoothing;
  double eps_twist = kFrictionSmoothing, eps_roll = kFrictionSmoothing;
  double drag_slide = p.sliding_drag, drag_twist = p.torsional_drag, drag_roll = p.rolling_drag;
  if (dt > 0.0) {
    // conservative inverse effective mass at chi over both bodies
    const double inv_m = a.inv_mass + (chi - a.com).squaredNorm() * a.inv_inertia + b.inv_mass +
                         (chi - b.com).squaredNorm() * b.inv_inertia;
    const double inv_i = a.inv_inertia + b.inv_inertia;
    // Sized for a coefficient of at least the top of its nominal range, so
    // that inside the band the force still scales with mu.
    auto band = [&](double mu, int k, double inv) {
      return std::max(kFrictionSmoothing, dt * fn * std::max(mu, ContactParams::kNominal[k][1]) * inv / kChannelGain);
    };
    auto drag = [&](double c, double inv) { return c * detail::soft_cap(dt * fn * c * inv, kChannelGain); };
    eps_slide = band(p.sliding_friction, 2, inv_m);
    eps_twist = band(p.torsional_friction, 6, inv_i);
    eps_roll = band(p.rolling_friction, 4, inv_i);
    drag_slide = drag(p.sliding_drag, inv_m);
    drag_twist = drag(p.torsional_drag, inv_i);
    drag_roll = drag(p.rolling_drag, inv_i);
  }

  const Vec3 f_t = -fn * (p.sliding_friction * detail::smooth_unit(v_t, eps_slide) + drag_slide * v_t);
  const Vec3 tau_n = -fn * (p.torsional_friction * detail::smooth_unit(w_n, eps_twist) + drag_twist * w_n);
  const Vec3 tau_t = -fn * (p.rolling_friction * detail::smooth_unit(w_t, eps_roll) + drag_roll * w_t);

  r.force = f_n + f_t;
  r.friction_torque = tau_n + tau_t;
  r.torque = a.rotation.conjugate() * (r.friction_torque + (chi - a.com).cross(r.force));
  return r;
}

}  // namespace danosim
