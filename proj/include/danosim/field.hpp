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

// Volumetric density fields: grid-backed fields queried by trilinear
// interpolation, indicator densities of analytic primitives, and a small
// type-erased handle so bodies can keep a field alive for online queries.

#pragma once

#include <array>
#include <concepts>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "danosim/common.hpp"

namespace danosim {

struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  double volume() const { return (hi - lo).prod(); }
  Vec3 extent() const { return hi - lo; }
  bool contains(const Vec3& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

// Rigid transform x -> R x + t.
struct Pose {
  Vec3 translation = Vec3::Zero();
  Quat rotation = Quat::Identity();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Vec3 apply_inverse(const Vec3& x) const { return rotation.conjugate() * (x - translation); }
  Pose inverse() const {
    Pose p;
    p.rotation = rotation.conjugate();
    p.translation = -(p.rotation * translation);
    return p;
  }
  // (this * other).apply(x) == this->apply(other.apply(x))
  Pose operator*(const Pose& other) const {
    Pose p;
    p.rotation = (rotation * other.rotation).normalized();
    p.translation = rotation * other.translation + translation;
    return p;
  }
  bool is_normalized(double tol = 1e-9) const { return std::abs(rotation.norm() - 1.0) <= tol; }
};

// ---------------------------------------------------------------------------
// Primitives

// {x : a.x + b <= 0}, a is the outward unit normal.
struct HalfSpace {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};

// {x : |x - c| - r <= 0}
struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

using PrimitiveShape = std::variant<HalfSpace, Sphere>;

inline void validate(const PrimitiveShape& shape) {
  if (const auto* h = std::get_if<HalfSpace>(&shape)) {
    if (!h->normal.allFinite() || std::abs(h->normal.norm() - 1.0) > 1e-9)
      throw DomainError("half-space normal must have unit norm");
    if (!std::isfinite(h->offset)) throw DomainError("half-space offset is not finite");
  } else {
    const auto& s = std::get<Sphere>(shape);
    if (!s.center.allFinite()) throw DomainError("sphere center is not finite");
    if (!(s.radius > 0.0) || !std::isfinite(s.radius)) throw DomainError("sphere radius must be > 0");
  }
}

// Implicit function f, negative inside, zero on the boundary.
inline double primitive_level(const PrimitiveShape& shape, const Vec3& x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, HalfSpace>) {
          return s.normal.dot(x) + s.offset;
        } else {
          return (x - s.center).norm() - s.radius;
        }
      },
      shape);
}

// Indicator density: 1 inside (boundary inclusive), 0 outside.
inline double eval_primitive_density(const PrimitiveShape& shape, const Vec3& x) {
  require_finite(x, "query point");
  return primitive_level(shape, x) <= 0.0 ? 1.0 : 0.0;
}

// Membership weight used by the contact sums. With width == 0 this is the
// exact indicator; with width > 0 it is a C2 quintic ramp from 1 at
// f = -width/2 to 0 at f = +width/2, so the overlap varies smoothly with pose.
inline double primitive_membership(const PrimitiveShape& shape, const Vec3& x, double width) {
  const double f = primitive_level(shape, x);
  if (width <= 0.0) return f <= 0.0 ? 1.0 : 0.0;
  const double s = 0.5 - f / width;
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (s * (s * 6.0 - 15.0) + 10.0);
}

// ---------------------------------------------------------------------------
// Field concept and implementations

template <typename F>
concept DensityFieldLike = requires(const F& f, const Vec3& x) {
  { f.density(x) } -> std::convertible_to<double>;
  { f.bounds() } -> std::convertible_to<Aabb>;
};

// Indicator density of a primitive restricted to a finite sampling box.
class IndicatorField {
 public:
  IndicatorField(PrimitiveShape shape, Aabb box) : shape_(std::move(shape)), box_(box) { validate(shape_); }

  static IndicatorField sphere(const Vec3& center, double radius) {
    const Vec3 r = Vec3::Constant(radius);
    return IndicatorField(Sphere{center, radius}, Aabb{center - r, center + r});
  }

  double density(const Vec3& x) const {
    require_finite(x, "query point");
    if (!box_.contains(x)) return 0.0;
    return eval_primitive_density(shape_, x);
  }
  Aabb bounds() const { return box_; }
  const PrimitiveShape& shape() const { return shape_; }

 private:
  PrimitiveShape shape_;
  Aabb box_;
};

// Dense node grid. Node (i, j, k) sits at origin + (i, j, k) * spacing and
// values are stored x-fastest. The grid is surrounded by an implicit ring of
// zero-valued nodes, so the interpolant is continuous everywhere and its
// support is the node box grown by one spacing on every side.
class GridDensityField {
 public:
  GridDensityField() = default;
  GridDensityField(Vec3 origin, Vec3 spacing, std::array<int, 3> dims, std::vector<double> values)
      : origin_(std::move(origin)), spacing_(std::move(spacing)), dims_(dims), values_(std::move(values)) {
    for (int a = 0; a < 3; ++a) {
      if (dims_[a] < 2) throw DomainError("grid dims must be >= 2 per axis");
      if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a])) throw DomainError("grid spacing must be > 0");
    }
    if (!origin_.allFinite()) throw DomainError("grid origin is not finite");
    const std::size_t expected = node_count();
    if (values_.size() != expected)
      throw DomainError("value count " + std::to_string(values_.size()) + " does not match dims (" +
                        std::to_string(expected) + ")");
    for (double v : values_)
      if (!std::isfinite(v) || v < 0.0) throw DomainError("grid values must be finite and >= 0");
  }

  // Sample `fn` at every node.
  template <typename Fn>
  static GridDensityField from_function(const Vec3& origin, const Vec3& spacing, std::array<int, 3> dims, Fn&& fn) {
    std::vector<double> values(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    std::size_t idx = 0;
    for (int k = 0; k < dims[2]; ++k)
      for (int j = 0; j < dims[1]; ++j)
        for (int i = 0; i < dims[0]; ++i)
          values[idx++] = fn(Vec3(origin.x() + i * spacing.x(), origin.y() + j * spacing.y(),
                                  origin.z() + k * spacing.z()));
    return GridDensityField(origin, spacing, dims, std::move(values));
  }

  const Vec3& origin() const { return origin_; }
  const Vec3& spacing() const { return spacing_; }
  const std::array<int, 3>& dims() const { return dims_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t node_count() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }

  double node(int i, int j, int k) const {
    if (i < 0 || j < 0 || k < 0 || i >= dims_[0] || j >= dims_[1] || k >= dims_[2]) return 0.0;
    return values_[(static_cast<std::size_t>(k) * dims_[1] + j) * dims_[0] + i];
  }

  Vec3 node_position(int i, int j, int k) const {
    return origin_ + Vec3(i * spacing_.x(), j * spacing_.y(), k * spacing_.z());
  }

  Aabb bounds() const {
    Vec3 hi;
    for (int a = 0; a < 3; ++a) hi[a] = origin_[a] + dims_[a] * spacing_[a];
    return Aabb{origin_ - spacing_, hi};
  }

  double density(const Vec3& x) const {
    require_finite(x, "query point");
    Eigen::Array3d u = ((x - origin_).array() / spacing_.array());
    for (int a = 0; a < 3; ++a) {
      if (u[a] <= -1.0 || u[a] >= dims_[a]) return 0.0;
      // snap onto node planes within rounding so nodes return their stored value
      const double r = std::round(u[a]);
      if (std::abs(u[a] - r) < 1e-10) u[a] = r;
    }
    const int i = static_cast<int>(std::floor(u[0]));
    const int j = static_cast<int>(std::floor(u[1]));
    const int k = static_cast<int>(std::floor(u[2]));
    const double fx = u[0] - i, fy = u[1] - j, fz = u[2] - k;
    const double c00 = node(i, j, k) * (1 - fx) + node(i + 1, j, k) * fx;
    const double c10 = node(i, j + 1, k) * (1 - fx) + node(i + 1, j + 1, k) * fx;
    const double c01 = node(i, j, k + 1) * (1 - fx) + node(i + 1, j, k + 1) * fx;
    const double c11 = node(i, j + 1, k + 1) * (1 - fx) + node(i + 1, j + 1, k + 1) * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
  }

  double max_value() const { return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end()); }

 private:
  Vec3 origin_ = Vec3::Zero();
  Vec3 spacing_ = Vec3::Ones();
  std::array<int, 3> dims_{2, 2, 2};
  std::vector<double> values_ = std::vector<double>(8, 0.0);
};

inline double eval_density(const GridDensityField& field, const Vec3& x) { return field.density(x); }

// Central finite difference of the density, one axis at a time.
template <DensityFieldLike Field>
Vec3 density_gradient(const Field& field, const Vec3& x, double h) {
  if (!(h > 0.0)) throw DomainError("gradient step h must be > 0");
  require_finite(x, "query point");
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    g[a] = (field.density(xp) - field.density(xm)) / (2.0 * h);
  }
  return g;
}

// One grid spacing (smallest axis) for grids; 1% of the smallest box extent
// for anything else.
template <DensityFieldLike Field>
double default_gradient_step(const Field& field) {
  if constexpr (std::is_same_v<Field, GridDensityField>) {
    return field.spacing().minCoeff();
  } else {
    return 0.01 * field.bounds().extent().minCoeff();
  }
}

// Type-erased, shared, immutable field handle.
class AnyField {
 public:
  AnyField() = default;
  template <DensityFieldLike Field>
    requires(!std::is_same_v<std::decay_t<Field>, AnyField>)
  AnyField(Field field)  // NOLINT(google-explicit-constructor)
      : self_(std::make_shared<Model<Field>>(std::move(field))) {}

  explicit operator bool() const { return static_cast<bool>(self_); }
  double density(const Vec3& x) const { return self_->density(x); }
  Aabb bounds() const { return self_->bounds(); }
  double default_step() const { return self_->default_step(); }
  // Non-null when the handle wraps a GridDensityField.
  const GridDensityField* as_grid() const { return self_ ? self_->as_grid() : nullptr; }

 private:
  struct Concept {
    virtual ~Concept() = default;
    virtual double density(const Vec3& x) const = 0;
    virtual Aabb bounds() const = 0;
    virtual double default_step() const = 0;
    virtual const GridDensityField* as_grid() const = 0;
  };
  template <typename Field>
  struct Model final : Concept {
    explicit Model(Field f) : field(std::move(f)) {}
    double density(const Vec3& x) const override { return field.density(x); }
    Aabb bounds() const override { return field.bounds(); }
    double default_step() const override { return default_gradient_step(field); }
    const GridDensityField* as_grid() const override {
      if constexpr (std::is_same_v<Field, GridDensityField>) return &field;
      else return nullptr;
    }
    Field field;
  };
  std::shared_ptr<const Concept> self_;
};

// ---------------------------------------------------------------------------
// Grid file I/O
//
//   # comment
//   dims: nx ny nz
//   origin: x y z
//   spacing: sx sy sz
//   v0
//   v1
//   ...           (x fastest, then y, then z)

namespace detail {

inline std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  std::string s = pos == std::string::npos ? line : line.substr(0, pos);
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline GridDensityField parse_grid_field(std::istream& in, const std::string& source = "<stream>") {
  std::array<int, 3> dims{};
  Vec3 origin, spacing;
  bool have_dims = false, have_origin = false, have_spacing = false;
  std::vector<double> values;
  std::string raw;
  int lineno = 0;
  auto fail = [&](const std::string& msg) { throw ParseError(source + ":" + std::to_string(lineno) + ": " + msg); };

  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon != std::string::npos) {
      if (!values.empty()) fail("malformed header: header line after density values");
      const std::string key = detail::strip_comment(line.substr(0, colon));
      std::istringstream rest(line.substr(colon + 1));
      if (key == "dims") {
        if (!(rest >> dims[0] >> dims[1] >> dims[2])) fail("malformed header: dims needs 3 integers");
        for (int d : dims)
          if (d < 2) fail("malformed header: dims must be >= 2 per axis");
        have_dims = true;
      } else if (key == "origin") {
        if (!(rest >> origin.x() >> origin.y() >> origin.z())) fail("malformed header: origin needs 3 numbers");
        have_origin = true;
      } else if (key == "spacing") {
        if (!(rest >> spacing.x() >> spacing.y() >> spacing.z())) fail("malformed header: spacing needs 3 numbers");
        if ((spacing.array() <= 0.0).any()) fail("malformed header: spacing must be > 0");
        have_spacing = true;
      } else {
        fail("malformed header: unknown key '" + key + "'");
      }
      std::string extra;
      if (rest >> extra) fail("malformed header: trailing token '" + extra + "' after " + key);
      continue;
    }
    if (!(have_dims && have_origin && have_spacing))
      fail("malformed header: dims, origin and spacing must precede values");
    std::istringstream tokens(line);
    std::string tok;
    while (tokens >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) fail("bad density value '" + tok + "'");
      if (v < 0.0) fail("negative density " + tok);
      values.push_back(v);
    }
  }
  if (!(have_dims && have_origin && have_spacing)) fail("malformed header: missing dims, origin or spacing");
  const std::size_t expected = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (values.size() != expected)
    throw ParseError(source + ": value count " + std::to_string(values.size()) + " does not match dims (" +
                     std::to_string(expected) + " expected)");
  return GridDensityField(origin, spacing, dims, std::move(values));
}

inline GridDensityField load_grid_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open grid field file '" + path + "'");
  return parse_grid_field(in, path);
}

inline void write_grid_field(std::ostream& out, const GridDensityField& field) {
  const auto& d = field.dims();
  out << "dims: " << d[0] << ' ' << d[1] << ' ' << d[2] << '\n';
  out << "origin: " << detail::fmt_double(field.origin().x()) << ' ' << detail::fmt_double(field.origin().y()) << ' '
      << detail::fmt_double(field.origin().z()) << '\n';
  out << "spacing: " << detail::fmt_double(field.spacing().x()) << ' ' << detail::fmt_double(field.spacing().y())
      << ' ' << detail::fmt_double(field.spacing().z()) << '\n';
  for (double v : field.values()) out << detail::fmt_double(v) << '\n';
}

inline void save_grid_field(const std::string& path, const GridDensityField& field) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write grid field file '" + path + "'");
  write_grid_field(out, field);
}

}  // namespace danosim
