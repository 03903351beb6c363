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

// Offline preprocessing of a density field into a dynamics-augmented object:
// uniform Monte Carlo samples, mass properties, a density band of contact
// points and their outward normals.

#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "danosim/common.hpp"
#include "danosim/field.hpp"

namespace danosim {

inline constexpr const char* kGeneratorId = "mt19937_64/u53";

// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw. Avoids
// std::uniform_real_distribution, whose output is library specific.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct SampleSet {
  std::vector<Vec3> points;
  std::vector<double> densities;
  double cell_volume = 0.0;  // box volume / sample count
  Aabb box;

  std::size_t size() const { return points.size(); }
};

template <DensityFieldLike Field>
SampleSet sample_uniform(const Field& field, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample count must be >= 1");
  const Aabb box = field.bounds();
  if (!box.lo.allFinite() || !box.hi.allFinite() || !(box.volume() > 0.0))
    throw DomainError("field must declare a finite, non-degenerate bounding box");
  SampleSet s;
  s.box = box;
  s.cell_volume = box.volume() / static_cast<double>(n);
  s.points.resize(n);
  s.densities.resize(n);
  std::mt19937_64 rng(seed);
  const Vec3 ext = box.extent();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform_unit(rng), v = uniform_unit(rng), w = uniform_unit(rng);
    s.points[i] = box.lo + Vec3(u * ext.x(), v * ext.y(), w * ext.z());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double d = field.density(s.points[i]);
    if (!std::isfinite(d) || d < 0.0) throw DomainError("field returned an invalid density");
    s.densities[i] = d;
  }
  return s;
}

struct MassProperties {
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  // about the field-frame origin
};

// Monte Carlo mass, centre of mass and origin-frame inertia. Sums run in index
// order so the result is bit-stable.
inline MassProperties estimate_mass_properties(const SampleSet& samples, double alpha) {
  if (samples.size() == 0) throw DomainError("sample set is empty");
  if (!(alpha > 0.0)) throw DomainError("alpha must be > 0");
  double sum = 0.0;
  Vec3 first = Vec3::Zero();
  Mat3 second = Mat3::Zero();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = samples.densities[i];
    if (d == 0.0) continue;
    const Vec3& x = samples.points[i];
    sum += d;
    first += d * x;
    second += d * (x.squaredNorm() * Mat3::Identity() - x * x.transpose());
  }
  if (!(sum > 0.0)) throw DomainError("empty object: all sampled densities are zero");
  MassProperties mp;
  mp.mass = alpha * (samples.cell_volume * sum);
  mp.com = first / sum;
  mp.inertia = alpha * (samples.cell_volume * second);
  // exact symmetry
  mp.inertia = 0.5 * (mp.inertia + mp.inertia.transpose()).eval();
  return mp;
}

inline std::vector<std::size_t> select_surface_candidates(const SampleSet& samples, double band_lo, double band_hi) {
  if (!(band_lo >= 0.0) || !(band_lo < band_hi)) throw DomainError("density band must satisfy 0 <= lo < hi");
  std::vector<std::size_t> keep;
  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = samples.densities[i];
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
    if (d >= band_lo && d <= band_hi) keep.push_back(i);
  }
  if (keep.empty()) {
    std::ostringstream os;
    os << "no surface candidates in band [" << band_lo << ", " << band_hi << "]; observed densities span [" << dmin
       << ", " << dmax << "]";
    throw DomainError(os.str());
  }
  return keep;
}

struct NormalResult {
  std::vector<Vec3> normals;        // one per point; zero where dropped
  std::vector<std::size_t> kept;    // indices with a valid normal
  std::vector<std::size_t> dropped; // indices with a vanishing gradient
};

template <DensityFieldLike Field>
NormalResult compute_normals(const Field& field, const std::vector<Vec3>& points, double h) {
  if (!(h > 0.0)) throw DomainError("gradient step h must be > 0");
  NormalResult r;
  r.normals.assign(points.size(), Vec3::Zero());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 g = density_gradient(field, points[i], h);
    const double gn = g.norm();
    if (gn < 1e-12) {
      r.dropped.push_back(i);
      continue;
    }
    r.normals[i] = -g / gn;
    r.kept.push_back(i);
  }
  return r;
}

enum class DegenerateNormals {
  kDrop,      // remove the point from the contact set
  kKeepZero,  // keep the point for overlap sums with a zero normal
};

struct DanoConfig {
  std::size_t samples = 5000;         // contact-phase sample count
  std::size_t mass_samples = 100000;  // independent draw for mass properties
  std::uint64_t seed = 0;
  double band_lo = 0.05;              // fraction of the max observed density
  double band_hi = 0.95;
  double h = 0.0;                     // gradient step; <= 0 means field default
  double alpha = 1000.0;
  DegenerateNormals degenerate = DegenerateNormals::kDrop;

  std::string echo() const {
    std::ostringstream os;
    os << std::setprecision(17) << "samples=" << samples << " mass_samples=" << mass_samples << " seed=" << seed
       << " band_lo=" << band_lo << " band_hi=" << band_hi << " h=" << h << " alpha=" << alpha
       << " degenerate=" << (degenerate == DegenerateNormals::kDrop ? "drop" : "keep");
    return os.str();
  }
};

// Contact points are in the field frame. Mass properties are stored per unit
// alpha so the mass scale can be changed without resampling.
struct DanoModel {
  std::vector<Vec3> points;
  std::vector<double> densities;
  std::vector<Vec3> normals;  // unit, or zero when the gradient vanished
  double cell_volume = 0.0;
  double alpha = 1.0;
  double unit_mass = 0.0;           // mass / alpha
  Vec3 com = Vec3::Zero();
  Mat3 unit_inertia = Mat3::Zero(); // origin-frame inertia / alpha
  Aabb box;
  std::size_t dropped_normals = 0;
  std::string generator = kGeneratorId;
  std::string config_echo;

  std::size_t size() const { return points.size(); }
  double mass() const { return alpha * unit_mass; }
  Mat3 inertia() const { return alpha * unit_inertia; }
  // Inertia about the centre of mass (parallel-axis transfer).
  Mat3 inertia_com() const { return alpha * inertia_about_com(unit_inertia, unit_mass, com); }

  static Mat3 inertia_about_com(const Mat3& origin_inertia, double mass, const Vec3& com) {
    Mat3 j = origin_inertia - mass * (com.squaredNorm() * Mat3::Identity() - com * com.transpose());
    return 0.5 * (j + j.transpose());
  }
};

template <DensityFieldLike Field>
DanoModel build_dano(const Field& field, const DanoConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw DomainError("alpha must be > 0");
  DanoModel m;
  m.alpha = cfg.alpha;
  m.config_echo = cfg.echo();

  const SampleSet mass_set = sample_uniform(field, cfg.mass_samples, cfg.seed);
  const MassProperties unit = estimate_mass_properties(mass_set, 1.0);
  m.unit_mass = unit.mass;
  m.com = unit.com;
  m.unit_inertia = unit.inertia;

  // independent stream for the contact samples
  const SampleSet contact = sample_uniform(field, cfg.samples, cfg.seed ^ 0x9E3779B97F4A7C15ull);
  m.cell_volume = contact.cell_volume;
  m.box = contact.box;
  const double dmax = *std::max_element(contact.densities.begin(), contact.densities.end());
  const auto candidates = select_surface_candidates(contact, cfg.band_lo * dmax, cfg.band_hi * dmax);

  std::vector<Vec3> pts;
  pts.reserve(candidates.size());
  for (auto i : candidates) pts.push_back(contact.points[i]);
  const double h = cfg.h > 0.0 ? cfg.h : default_gradient_step(field);
  const NormalResult nr = compute_normals(field, pts, h);
  m.dropped_normals = nr.dropped.size();

  for (std::size_t k = 0; k < pts.size(); ++k) {
    const bool valid = nr.normals[k].squaredNorm() > 0.0;
    if (!valid && cfg.degenerate == DegenerateNormals::kDrop) continue;
    m.points.push_back(pts[k]);
    m.densities.push_back(contact.densities[candidates[k]]);
    m.normals.push_back(nr.normals[k]);
  }
  if (m.points.empty()) throw DomainError("no contact points left after dropping degenerate normals");
  return m;
}

// ---------------------------------------------------------------------------
// Model file
//
// Header lines `key: values`, then `px py pz density nx ny nz` per point.

inline void write_dano(std::ostream& out, const DanoModel& m) {
  using detail::fmt_double;
  auto vec = [](const Vec3& v) { return fmt_double(v.x()) + ' ' + fmt_double(v.y()) + ' ' + fmt_double(v.z()); };
  out << "# danosim dano model\n";
  out << "generator: " << m.generator << '\n';
  out << "config: " << m.config_echo << '\n';
  out << "alpha: " << fmt_double(m.alpha) << '\n';
  out << "mass: " << fmt_double(m.mass()) << '\n';
  out << "unit_mass: " << fmt_double(m.unit_mass) << '\n';
  out << "com: " << vec(m.com) << '\n';
  const Mat3 j = m.inertia();
  out << "inertia:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << ' ' << fmt_double(j(r, c));
  out << '\n';
  out << "unit_inertia:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << ' ' << fmt_double(m.unit_inertia(r, c));
  out << '\n';
  out << "cell_volume: " << fmt_double(m.cell_volume) << '\n';
  out << "box: " << vec(m.box.lo) << ' ' << vec(m.box.hi) << '\n';
  out << "dropped_normals: " << m.dropped_normals << '\n';
  out << "n_points: " << m.size() << '\n';
  for (std::size_t i = 0; i < m.size(); ++i)
    out << vec(m.points[i]) << ' ' << fmt_double(m.densities[i]) << ' ' << vec(m.normals[i]) << '\n';
}

inline void save_dano(const std::string& path, const DanoModel& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write dano model '" + path + "'");
  write_dano(out, m);
}

inline DanoModel parse_dano(std::istream& in, const std::string& source = "<stream>") {
  DanoModel m;
  std::string raw;
  int lineno = 0;
  long long n_points = -1;
  bool have_unit_mass = false, have_unit_inertia = false, have_cv = false, have_com = false, have_alpha = false;
  auto fail = [&](const std::string& msg) { throw ParseError(source + ":" + std::to_string(lineno) + ": " + msg); };
  auto read3 = [&](std::istream& s, Vec3& v, const char* key) {
    if (!(s >> v.x() >> v.y() >> v.z())) fail(std::string("malformed ") + key);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (n_points < 0) {
      if (colon == std::string::npos) fail("expected header line 'key: value'");
      const std::string key = line.substr(0, colon);
      const std::string rest_s = line.substr(colon + 1);
      std::istringstream rest(rest_s);
      if (key == "generator") {
        rest >> m.generator;
      } else if (key == "config") {
        m.config_echo = detail::strip_comment(rest_s);
      } else if (key == "alpha") {
        if (!(rest >> m.alpha) || !(m.alpha > 0.0)) fail("malformed alpha");
        have_alpha = true;
      } else if (key == "mass" || key == "inertia") {
        // derived from the unit values; kept in the file for readers
      } else if (key == "unit_mass") {
        if (!(rest >> m.unit_mass) || !(m.unit_mass > 0.0)) fail("malformed unit_mass");
        have_unit_mass = true;
      } else if (key == "com") {
        read3(rest, m.com, "com");
        have_com = true;
      } else if (key == "unit_inertia") {
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            if (!(rest >> m.unit_inertia(r, c))) fail("malformed unit_inertia");
        have_unit_inertia = true;
      } else if (key == "cell_volume") {
        if (!(rest >> m.cell_volume) || !(m.cell_volume > 0.0)) fail("malformed cell_volume");
        have_cv = true;
      } else if (key == "box") {
        read3(rest, m.box.lo, "box");
        read3(rest, m.box.hi, "box");
      } else if (key == "dropped_normals") {
        rest >> m.dropped_normals;
      } else if (key == "n_points") {
        if (!(rest >> n_points) || n_points < 1) fail("malformed n_points");
        if (!(have_unit_mass && have_unit_inertia && have_cv && have_com && have_alpha))
          fail("header incomplete before n_points (need alpha, unit_mass, com, unit_inertia, cell_volume)");
        m.points.reserve(n_points);
      } else {
        fail("unknown header key '" + key + "'");
      }
      continue;
    }
    std::istringstream row(line);
    Vec3 p, n;
    double d;
    if (!(row >> p.x() >> p.y() >> p.z() >> d >> n.x() >> n.y() >> n.z())) fail("malformed point row");
    if (!std::isfinite(d) || d < 0.0) fail("negative density");
    m.points.push_back(p);
    m.densities.push_back(d);
    m.normals.push_back(n);
  }
  if (n_points < 0) throw ParseError(source + ": missing n_points header");
  if (static_cast<long long>(m.points.size()) != n_points)
    throw ParseError(source + ": point count " + std::to_string(m.points.size()) + " does not match n_points " +
                     std::to_string(n_points));
  return m;
}

inline DanoModel load_dano(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dano model '" + path + "'");
  return parse_dano(in, path);
}

}  // namespace danosim
