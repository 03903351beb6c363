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

// YAML scene and problem configuration. Parsing is strict: unknown keys and
// malformed values are errors carrying the file name and line. The grammar
// is documented in README.md.
//
// This header needs yaml-cpp; the rest of the library does not.

#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "danosim/common.hpp"
#include "danosim/contact.hpp"
#include "danosim/dano.hpp"
#include "danosim/diff.hpp"
#include "danosim/dynamics.hpp"
#include "danosim/field.hpp"
#include "danosim/sysid.hpp"
#include "danosim/trajopt.hpp"

namespace danosim {

struct BodySpec {
  enum class Type { kHalfSpace, kStaticSphere, kSphere, kDano };
  std::string name;
  Type type = Type::kDano;
  // primitives
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  Vec3 center = Vec3::Zero();
  double radius = 0.05;
  double mass = 1.0;
  // density-field bodies
  std::string model_path;  // precomputed DANO file; built from the field if empty
  std::string grid_path;   // grid field file
  bool field_sphere = false;
  Vec3 field_center = Vec3::Zero();
  double field_radius = 0.1;
  DanoConfig dano;
  std::optional<double> alpha;
  // dynamic bodies
  bool actuated = false;
  bool gravity = true;
  BodyState initial;

  bool is_static() const { return type == Type::kHalfSpace || type == Type::kStaticSphere; }
  bool has_field() const { return field_sphere || !grid_path.empty(); }
};

struct ContactSpec {
  std::string a, b;
  ContactParams params;
};

// Piecewise-constant controls: `value` for the first `steps` steps, then zero.
struct ControlSpec {
  VecX value;
  int steps = -1;  // -1: whole horizon

  MatX expand(int control_dim, int horizon) const {
    MatX u = MatX::Zero(control_dim, horizon);
    if (value.size() == 0) return u;
    if (value.size() != control_dim)
      throw DomainError("control value has " + std::to_string(value.size()) + " entries, expected " +
                        std::to_string(control_dim));
    const int n = steps < 0 ? horizon : std::min(steps, horizon);
    for (int t = 0; t < n; ++t) u.col(t) = value;
    return u;
  }
};

struct ObservationSpec {
  std::string trajectory_path;            // recorded trajectory, or
  std::map<std::string, double> truth;    // synthesize with these parameter values
  ControlSpec controls;
  std::map<std::string, BodyState> initial;  // per-body initial-state overrides (synthetic only)
};

// Per-axis weights; the config accepts a scalar or a 3-vector for each block.
struct TangentWeights {
  Vec3 position = Vec3::Zero(), rotation = Vec3::Zero(), velocity = Vec3::Zero(), angular_velocity = Vec3::Zero();

  void fill(VecX& w, int slot) const {
    w.segment<3>(kBodyTangent * slot) = position;
    w.segment<3>(kBodyTangent * slot + 3) = rotation;
    w.segment<3>(kBodyTangent * slot + 6) = velocity;
    w.segment<3>(kBodyTangent * slot + 9) = angular_velocity;
  }
};

struct SysIdSpec {
  bool present = false;
  std::vector<ObservationSpec> observations;
  std::vector<ParamEntry> params;  // value = initial guess
  TangentWeights weights{Vec3::Constant(1.0), Vec3::Constant(0.1), Vec3::Zero(), Vec3::Zero()};
  GaussNewtonSettings settings;
};

struct GoalSpec {
  std::string body;
  BodyState state;
  TangentWeights stage, final;
};

struct TrajOptSpec {
  bool present = false;
  int horizon = 100;
  std::vector<GoalSpec> goals;
  double force_weight = 1e-3, torque_weight = 1e-3;
  double force_bound = 10.0, torque_bound = 1.0;
  PenaltySchedule penalty;
  IlqrSettings settings;
  ControlSpec initial_controls;
};

struct SceneConfig {
  std::string source;      // file the config was read from
  std::string source_dir;  // relative paths resolve here
  std::uint64_t seed = 0;
  double dt = 0.01;
  int horizon = 100;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  double primitive_smoothing = 0.0;
  std::vector<BodySpec> bodies;
  std::vector<ContactSpec> contacts;
  SysIdSpec sysid;
  TrajOptSpec trajopt;
  std::vector<std::string> warnings;

  std::string echo() const;
};

namespace detail {

inline std::string where(const std::string& source, const YAML::Node& n) {
  return source + ":" + std::to_string(n.Mark().line + 1);
}

class YamlReader {
 public:
  explicit YamlReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    throw ParseError(where(source_, n) + ": " + msg);
  }

  void expect_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& n, const std::string& what, const std::set<std::string>& allowed) const {
    expect_map(n, what);
    for (const auto& kv : n) {
      const std::string k = kv.first.as<std::string>();
      if (!allowed.count(k)) fail(kv.first, "unknown key '" + k + "' in " + what);
    }
  }

  double real(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a number");
    try {
      const double v = n.as<double>();
      if (!std::isfinite(v)) fail(n, what + " must be finite");
      return v;
    } catch (const YAML::BadConversion&) {
      fail(n, what + " must be a number, got '" + n.Scalar() + "'");
    }
  }

  long long integer(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be an integer");
    try {
      return n.as<long long>();
    } catch (const YAML::BadConversion&) {
      fail(n, what + " must be an integer, got '" + n.Scalar() + "'");
    }
  }

  std::uint64_t unsigned_integer(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a non-negative integer");
    try {
      return n.as<std::uint64_t>();
    } catch (const YAML::BadConversion&) {
      fail(n, what + " must be a non-negative integer, got '" + n.Scalar() + "'");
    }
  }

  bool boolean(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be true or false");
    try {
      return n.as<bool>();
    } catch (const YAML::BadConversion&) {
      fail(n, what + " must be true or false, got '" + n.Scalar() + "'");
    }
  }

  std::string string(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a string");
    return n.Scalar();
  }

  VecX vector(const YAML::Node& n, const std::string& what, int size = -1) const {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    if (size >= 0 && static_cast<int>(n.size()) != size)
      fail(n, what + " must have " + std::to_string(size) + " entries");
    VecX v(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) v[i] = real(n[i], what);
    return v;
  }

  Vec3 vec3(const YAML::Node& n, const std::string& what) const { return vector(n, what, 3); }

  Quat quat(const YAML::Node& n, const std::string& what) const {
    const VecX v = vector(n, what + " (w, x, y, z)", 4);
    const Quat q(v[0], v[1], v[2], v[3]);
    if (std::abs(q.norm() - 1.0) > 1e-6) fail(n, what + " must be a unit quaternion");
    return q.normalized();
  }

  std::string path(const YAML::Node& n, const std::string& what, const std::string& base) const {
    const std::filesystem::path p(string(n, what));
    const std::filesystem::path full = p.is_absolute() ? p : std::filesystem::path(base) / p;
    if (!std::filesystem::exists(full)) fail(n, what + " file not found: " + full.string());
    return full.lexically_normal().string();
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

inline void read_state(const YamlReader& r, const YAML::Node& n, BodyState& s, const std::string& what) {
  if (n["position"]) s.position = r.vec3(n["position"], what + ".position");
  if (n["orientation"]) s.orientation = r.quat(n["orientation"], what + ".orientation");
  if (n["velocity"]) s.linear_velocity = r.vec3(n["velocity"], what + ".velocity");
  if (n["angular_velocity"]) s.angular_velocity = r.vec3(n["angular_velocity"], what + ".angular_velocity");
}

inline TangentWeights read_weights(const YamlReader& r, const YAML::Node& n, const std::string& what,
                                   TangentWeights w = {}) {
  r.check_keys(n, what, {"position", "rotation", "velocity", "angular_velocity"});
  auto block = [&](const char* key, Vec3& v) {
    const auto b = n[key];
    if (!b) return;
    const std::string name = what + "." + key;
    v = b.IsScalar() ? Vec3::Constant(r.real(b, name)) : r.vec3(b, name);
    if ((v.array() < 0.0).any()) r.fail(b, name + " must be >= 0");
  };
  block("position", w.position);
  block("rotation", w.rotation);
  block("velocity", w.velocity);
  block("angular_velocity", w.angular_velocity);
  return w;
}

inline ControlSpec read_controls(const YamlReader& r, const YAML::Node& n, const std::string& what) {
  r.check_keys(n, what, {"value", "steps"});
  ControlSpec c;
  if (n["value"]) c.value = r.vector(n["value"], what + ".value");
  if (n["steps"]) {
    c.steps = static_cast<int>(r.integer(n["steps"], what + ".steps"));
    if (c.steps < -1) r.fail(n["steps"], what + ".steps must be >= 0, or -1 for the whole horizon");
  }
  return c;
}

inline const std::set<std::string> kStateKeys = {"position", "orientation", "velocity", "angular_velocity"};

inline std::set<std::string> with_state_keys(std::set<std::string> keys) {
  keys.insert(kStateKeys.begin(), kStateKeys.end());
  return keys;
}

inline BodySpec read_body(const YamlReader& r, const YAML::Node& n, const std::string& base, std::uint64_t seed) {
  r.expect_map(n, "body");
  if (!n["name"]) r.fail(n, "body needs a name");
  if (!n["type"]) r.fail(n, "body needs a type");
  BodySpec b;
  b.name = r.string(n["name"], "body name");
  const std::string what = "body '" + b.name + "'";
  const std::string type = r.string(n["type"], what + " type");
  if (type == "halfspace") {
    b.type = BodySpec::Type::kHalfSpace;
    r.check_keys(n, what, {"name", "type", "normal", "offset"});
    if (n["normal"]) b.normal = r.vec3(n["normal"], what + ".normal");
    if (n["offset"]) b.offset = r.real(n["offset"], what + ".offset");
    if (std::abs(b.normal.norm() - 1.0) > 1e-9) r.fail(n, what + " normal must have unit length");
    return b;
  }
  if (type == "static_sphere") {
    b.type = BodySpec::Type::kStaticSphere;
    r.check_keys(n, what, {"name", "type", "center", "radius"});
    if (n["center"]) b.center = r.vec3(n["center"], what + ".center");
    if (n["radius"]) b.radius = r.real(n["radius"], what + ".radius");
    if (!(b.radius > 0)) r.fail(n, what + " radius must be > 0");
    return b;
  }
  if (type == "sphere") {
    b.type = BodySpec::Type::kSphere;
    r.check_keys(n, what, with_state_keys({"name", "type", "radius", "mass", "actuated", "gravity"}));
    if (n["radius"]) b.radius = r.real(n["radius"], what + ".radius");
    if (n["mass"]) b.mass = r.real(n["mass"], what + ".mass");
    if (!(b.radius > 0)) r.fail(n, what + " radius must be > 0");
    if (!(b.mass > 0)) r.fail(n, what + " mass must be > 0");
  } else if (type == "dano") {
    b.type = BodySpec::Type::kDano;
    r.check_keys(n, what, with_state_keys({"name", "type", "model", "field", "dano", "alpha", "actuated", "gravity"}));
    if (n["model"]) b.model_path = r.path(n["model"], what + " model", base);
    if (const auto f = n["field"]) {
      r.check_keys(f, what + " field", {"grid", "sphere"});
      if (f["grid"] && f["sphere"]) r.fail(f, what + " field takes one of grid or sphere");
      if (f["grid"]) b.grid_path = r.path(f["grid"], what + " grid", base);
      if (const auto s = f["sphere"]) {
        r.check_keys(s, what + " field sphere", {"center", "radius"});
        b.field_sphere = true;
        if (s["center"]) b.field_center = r.vec3(s["center"], what + " sphere center");
        if (s["radius"]) b.field_radius = r.real(s["radius"], what + " sphere radius");
        if (!(b.field_radius > 0)) r.fail(s, what + " sphere radius must be > 0");
      }
      if (!b.has_field()) r.fail(f, what + " field needs grid or sphere");
    }
    if (b.model_path.empty() && !b.has_field()) r.fail(n, what + " needs a model file or a field");
    b.dano.seed = seed;
    if (const auto d = n["dano"]) {
      r.check_keys(d, what + " dano", {"samples", "mass_samples", "seed", "band", "h", "alpha", "degenerate"});
      if (d["samples"]) b.dano.samples = r.unsigned_integer(d["samples"], what + " samples");
      if (d["mass_samples"]) b.dano.mass_samples = r.unsigned_integer(d["mass_samples"], what + " mass_samples");
      if (d["seed"]) b.dano.seed = r.unsigned_integer(d["seed"], what + " seed");
      if (d["band"]) {
        const VecX band = r.vector(d["band"], what + " band", 2);
        b.dano.band_lo = band[0];
        b.dano.band_hi = band[1];
      }
      if (d["h"]) b.dano.h = r.real(d["h"], what + " h");
      if (d["alpha"]) b.dano.alpha = r.real(d["alpha"], what + " dano alpha");
      if (d["degenerate"]) {
        const std::string mode = r.string(d["degenerate"], what + " degenerate");
        if (mode == "drop") b.dano.degenerate = DegenerateNormals::kDrop;
        else if (mode == "keep_zero") b.dano.degenerate = DegenerateNormals::kKeepZero;
        else r.fail(d["degenerate"], what + " degenerate must be drop or keep_zero");
      }
    }
    if (n["alpha"]) {
      b.alpha = r.real(n["alpha"], what + ".alpha");
      if (!(*b.alpha > 0)) r.fail(n["alpha"], what + " alpha must be > 0");
    }
  } else {
    r.fail(n["type"], "unknown body type '" + type + "' (halfspace, static_sphere, sphere, dano)");
  }
  if (n["actuated"]) b.actuated = r.boolean(n["actuated"], what + ".actuated");
  if (n["gravity"]) b.gravity = r.boolean(n["gravity"], what + ".gravity");
  read_state(r, n, b.initial, what);
  return b;
}

inline void warn_table_ranges(SceneConfig& cfg, const ContactSpec& c) {
  for (std::size_t i = 0; i < ContactParams::kNames.size(); ++i) {
    const double v = c.params.at(i);
    const auto& range = ContactParams::kNominal[i];
    if (v < range[0] || v > range[1]) {
      std::ostringstream os;
      os << "contact " << c.a << "/" << c.b << ": " << ContactParams::kNames[i] << " = " << v
         << " outside the nominal range [" << range[0] << ", " << range[1] << "]";
      cfg.warnings.push_back(os.str());
    }
  }
}

}  // namespace detail

// Parses a config document; `source` names it in messages and `base_dir`
// resolves relative paths. `seed_override` replaces the top-level seed.
inline SceneConfig parse_scene_text(const std::string& text, const std::string& source, const std::string& base_dir,
                                    std::optional<std::uint64_t> seed_override = std::nullopt) {
  detail::YamlReader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  SceneConfig cfg;
  cfg.source = source;
  cfg.source_dir = base_dir;
  if (!root.IsMap()) throw ParseError(source + ": config must be a mapping");
  r.check_keys(root, "config", {"seed", "scene", "bodies", "contacts", "sysid", "trajopt"});
  if (root["seed"]) cfg.seed = r.unsigned_integer(root["seed"], "seed");
  if (seed_override) cfg.seed = *seed_override;

  if (const auto s = root["scene"]) {
    r.check_keys(s, "scene", {"dt", "horizon", "gravity", "primitive_smoothing"});
    if (s["dt"]) cfg.dt = r.real(s["dt"], "scene.dt");
    if (s["horizon"]) cfg.horizon = static_cast<int>(r.integer(s["horizon"], "scene.horizon"));
    if (s["gravity"]) cfg.gravity = r.vec3(s["gravity"], "scene.gravity");
    if (s["primitive_smoothing"])
      cfg.primitive_smoothing = r.real(s["primitive_smoothing"], "scene.primitive_smoothing");
    if (!(cfg.dt > 0)) r.fail(s, "scene.dt must be > 0");
    if (cfg.horizon < 0) r.fail(s, "scene.horizon must be >= 0");
    if (cfg.primitive_smoothing < 0) r.fail(s, "scene.primitive_smoothing must be >= 0");
  }

  const auto bodies = root["bodies"];
  if (!bodies || !bodies.IsSequence() || bodies.size() == 0) r.fail(root, "config needs a non-empty 'bodies' list");
  std::set<std::string> names;
  for (const auto& bn : bodies) {
    BodySpec b = detail::read_body(r, bn, base_dir, cfg.seed);
    if (!names.insert(b.name).second) r.fail(bn, "duplicate body name '" + b.name + "'");
    cfg.bodies.push_back(std::move(b));
  }

  if (const auto cs = root["contacts"]) {
    if (!cs.IsSequence()) r.fail(cs, "contacts must be a list");
    for (const auto& cn : cs) {
      std::set<std::string> keys = {"bodies"};
      for (const char* k : ContactParams::kNames) keys.insert(k);
      r.check_keys(cn, "contact", keys);
      if (!cn["bodies"]) r.fail(cn, "contact needs 'bodies: [A, B]'");
      const auto pair = cn["bodies"];
      if (!pair.IsSequence() || pair.size() != 2) r.fail(pair, "contact bodies must be a list of two names");
      ContactSpec c;
      c.a = r.string(pair[0], "contact body");
      c.b = r.string(pair[1], "contact body");
      for (const auto& name : {c.a, c.b})
        if (!names.count(name)) r.fail(pair, "contact references unknown body '" + name + "'");
      for (std::size_t i = 0; i < ContactParams::kNames.size(); ++i)
        if (const auto v = cn[ContactParams::kNames[i]]) {
          c.params.at(i) = r.real(v, ContactParams::kNames[i]);
          if (c.params.at(i) < 0) r.fail(v, std::string(ContactParams::kNames[i]) + " must be >= 0");
        }
      detail::warn_table_ranges(cfg, c);
      cfg.contacts.push_back(c);
    }
  }

  if (const auto s = root["sysid"]) {
    cfg.sysid.present = true;
    r.check_keys(s, "sysid", {"observations", "params", "weights", "max_iterations", "h_rel", "lambda0"});
    if (!s["observations"] || !s["observations"].IsSequence()) r.fail(s, "sysid needs an 'observations' list");
    for (const auto& on : s["observations"]) {
      r.check_keys(on, "observation", {"trajectory", "truth", "controls", "initial"});
      ObservationSpec o;
      if (on["trajectory"]) o.trajectory_path = r.path(on["trajectory"], "observation trajectory", base_dir);
      if (const auto t = on["truth"]) {
        r.expect_map(t, "observation truth");
        for (const auto& kv : t) o.truth[r.string(kv.first, "parameter name")] = r.real(kv.second, "truth value");
      }
      if (o.trajectory_path.empty() == o.truth.empty())
        r.fail(on, "observation takes exactly one of 'trajectory' or 'truth'");
      if (on["controls"]) o.controls = detail::read_controls(r, on["controls"], "observation controls");
      if (const auto init = on["initial"]) {
        if (o.truth.empty()) r.fail(init, "observation 'initial' applies to synthetic observations only");
        r.expect_map(init, "observation initial");
        for (const auto& kv : init) {
          const std::string body = r.string(kv.first, "body name");
          if (!names.count(body)) r.fail(kv.first, "unknown body '" + body + "'");
          r.check_keys(kv.second, "initial state of " + body, detail::kStateKeys);
          BodyState st;
          for (const auto& b : cfg.bodies)
            if (b.name == body) st = b.initial;
          detail::read_state(r, kv.second, st, body);
          o.initial[body] = st;
        }
      }
      cfg.sysid.observations.push_back(std::move(o));
    }
    if (!s["params"] || !s["params"].IsSequence() || s["params"].size() == 0)
      r.fail(s, "sysid needs a non-empty 'params' list");
    for (const auto& pn : s["params"]) {
      r.check_keys(pn, "sysid param", {"name", "init", "min", "max"});
      for (const char* k : {"name", "init", "min", "max"})
        if (!pn[k]) r.fail(pn, std::string("sysid param needs '") + k + "'");
      ParamEntry e;
      e.name = r.string(pn["name"], "param name");
      e.value = r.real(pn["init"], e.name + " init");
      e.lo = r.real(pn["min"], e.name + " min");
      e.hi = r.real(pn["max"], e.name + " max");
      if (!(e.lo < e.hi)) r.fail(pn, e.name + " bounds must satisfy min < max");
      if (e.value < e.lo || e.value > e.hi) r.fail(pn, e.name + " init outside [min, max]");
      cfg.sysid.params.push_back(e);
    }
    if (s["weights"]) cfg.sysid.weights = detail::read_weights(r, s["weights"], "sysid weights", cfg.sysid.weights);
    if (s["max_iterations"])
      cfg.sysid.settings.max_iterations = static_cast<int>(r.integer(s["max_iterations"], "max_iterations"));
    if (s["h_rel"]) cfg.sysid.settings.h_rel = r.real(s["h_rel"], "h_rel");
    if (s["lambda0"]) cfg.sysid.settings.lambda0 = r.real(s["lambda0"], "lambda0");
  }

  if (const auto s = root["trajopt"]) {
    auto& t = cfg.trajopt;
    t.present = true;
    r.check_keys(s, "trajopt", {"horizon", "goals", "control_weight", "control_bound", "penalty", "max_iterations",
                                "initial_controls", "h_rel", "tolerance"});
    if (s["horizon"]) t.horizon = static_cast<int>(r.integer(s["horizon"], "trajopt.horizon"));
    if (t.horizon < 2) r.fail(s, "trajopt.horizon must be >= 2");
    if (const auto gs = s["goals"]) {
      if (!gs.IsSequence()) r.fail(gs, "trajopt.goals must be a list");
      for (const auto& gn : gs) {
        r.check_keys(gn, "goal", detail::with_state_keys({"body", "stage", "final"}));
        if (!gn["body"]) r.fail(gn, "goal needs 'body'");
        GoalSpec g;
        g.body = r.string(gn["body"], "goal body");
        if (!names.count(g.body)) r.fail(gn, "goal references unknown body '" + g.body + "'");
        for (const auto& b : cfg.bodies)
          if (b.name == g.body) g.state = b.initial;
        detail::read_state(r, gn, g.state, "goal " + g.body);
        if (gn["stage"]) g.stage = detail::read_weights(r, gn["stage"], "goal stage weights");
        if (gn["final"]) g.final = detail::read_weights(r, gn["final"], "goal final weights");
        t.goals.push_back(g);
      }
    }
    if (const auto w = s["control_weight"]) {
      r.check_keys(w, "control_weight", {"force", "torque"});
      if (w["force"]) t.force_weight = r.real(w["force"], "control_weight.force");
      if (w["torque"]) t.torque_weight = r.real(w["torque"], "control_weight.torque");
      if (t.force_weight < 0 || t.torque_weight < 0) r.fail(w, "control weights must be >= 0");
    }
    if (const auto b = s["control_bound"]) {
      r.check_keys(b, "control_bound", {"force", "torque"});
      if (b["force"]) t.force_bound = r.real(b["force"], "control_bound.force");
      if (b["torque"]) t.torque_bound = r.real(b["torque"], "control_bound.torque");
      if (!(t.force_bound > 0) || !(t.torque_bound > 0)) r.fail(b, "control bounds must be > 0");
    }
    if (const auto p = s["penalty"]) {
      r.check_keys(p, "penalty", {"rho0", "growth", "max_outer", "tolerance"});
      if (p["rho0"]) t.penalty.rho0 = r.real(p["rho0"], "penalty.rho0");
      if (p["growth"]) t.penalty.growth = r.real(p["growth"], "penalty.growth");
      if (p["max_outer"]) t.penalty.max_outer = static_cast<int>(r.integer(p["max_outer"], "penalty.max_outer"));
      if (p["tolerance"]) t.penalty.tolerance = r.real(p["tolerance"], "penalty.tolerance");
    }
    if (s["max_iterations"])
      t.settings.max_iterations = static_cast<int>(r.integer(s["max_iterations"], "max_iterations"));
    if (s["h_rel"]) t.settings.h_rel = r.real(s["h_rel"], "h_rel");
    if (s["tolerance"]) t.settings.tolerance = r.real(s["tolerance"], "trajopt.tolerance");
    if (s["initial_controls"]) t.initial_controls = detail::read_controls(r, s["initial_controls"], "initial_controls");
  }
  return cfg;
}

inline SceneConfig parse_scene(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ParseError("scene file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  return parse_scene_text(ss.str(), path, dir.string(), seed_override);
}

// ---------------------------------------------------------------------------
// Echo

namespace detail {

inline void emit_vec(YAML::Emitter& e, const auto& v) {
  e << YAML::Flow << YAML::BeginSeq;
  for (int i = 0; i < v.size(); ++i) e << v[i];
  e << YAML::EndSeq;
}

inline void emit_state(YAML::Emitter& e, const BodyState& s) {
  const Eigen::Vector4d q(s.orientation.w(), s.orientation.x(), s.orientation.y(), s.orientation.z());
  e << YAML::Key << "position" << YAML::Value;
  emit_vec(e, s.position);
  e << YAML::Key << "orientation" << YAML::Value;
  emit_vec(e, q);
  e << YAML::Key << "velocity" << YAML::Value;
  emit_vec(e, s.linear_velocity);
  e << YAML::Key << "angular_velocity" << YAML::Value;
  emit_vec(e, s.angular_velocity);
}

inline void emit_weights(YAML::Emitter& e, const TangentWeights& w) {
  e << YAML::BeginMap;
  for (const auto& [key, v] : {std::pair{"position", &w.position}, std::pair{"rotation", &w.rotation},
                               std::pair{"velocity", &w.velocity},
                               std::pair{"angular_velocity", &w.angular_velocity}}) {
    e << YAML::Key << key << YAML::Value;
    emit_vec(e, *v);
  }
  e << YAML::EndMap;
}

inline void emit_controls(YAML::Emitter& e, const ControlSpec& c) {
  e << YAML::BeginMap << YAML::Key << "value" << YAML::Value;
  emit_vec(e, c.value);
  e << YAML::Key << "steps" << YAML::Value << c.steps << YAML::EndMap;
}

}  // namespace detail

inline std::string SceneConfig::echo() const {
  using detail::emit_vec;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "seed" << YAML::Value << seed;
  e << YAML::Key << "scene" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dt" << YAML::Value << dt << YAML::Key << "horizon" << YAML::Value << horizon;
  e << YAML::Key << "gravity" << YAML::Value;
  emit_vec(e, gravity);
  e << YAML::Key << "primitive_smoothing" << YAML::Value << primitive_smoothing << YAML::EndMap;

  e << YAML::Key << "bodies" << YAML::Value << YAML::BeginSeq;
  for (const auto& b : bodies) {
    e << YAML::BeginMap << YAML::Key << "name" << YAML::Value << b.name;
    switch (b.type) {
      case BodySpec::Type::kHalfSpace:
        e << YAML::Key << "type" << YAML::Value << "halfspace" << YAML::Key << "normal" << YAML::Value;
        emit_vec(e, b.normal);
        e << YAML::Key << "offset" << YAML::Value << b.offset;
        break;
      case BodySpec::Type::kStaticSphere:
        e << YAML::Key << "type" << YAML::Value << "static_sphere" << YAML::Key << "center" << YAML::Value;
        emit_vec(e, b.center);
        e << YAML::Key << "radius" << YAML::Value << b.radius;
        break;
      case BodySpec::Type::kSphere:
        e << YAML::Key << "type" << YAML::Value << "sphere" << YAML::Key << "radius" << YAML::Value << b.radius
          << YAML::Key << "mass" << YAML::Value << b.mass;
        break;
      case BodySpec::Type::kDano:
        e << YAML::Key << "type" << YAML::Value << "dano";
        if (!b.model_path.empty()) e << YAML::Key << "model" << YAML::Value << b.model_path;
        if (b.has_field()) {
          e << YAML::Key << "field" << YAML::Value << YAML::BeginMap;
          if (!b.grid_path.empty()) {
            e << YAML::Key << "grid" << YAML::Value << b.grid_path;
          } else {
            e << YAML::Key << "sphere" << YAML::Value << YAML::BeginMap << YAML::Key << "center" << YAML::Value;
            emit_vec(e, b.field_center);
            e << YAML::Key << "radius" << YAML::Value << b.field_radius << YAML::EndMap;
          }
          e << YAML::EndMap;
        }
        e << YAML::Key << "dano" << YAML::Value << YAML::BeginMap;
        e << YAML::Key << "samples" << YAML::Value << static_cast<std::uint64_t>(b.dano.samples);
        e << YAML::Key << "mass_samples" << YAML::Value << static_cast<std::uint64_t>(b.dano.mass_samples);
        e << YAML::Key << "seed" << YAML::Value << b.dano.seed << YAML::Key << "band" << YAML::Value;
        emit_vec(e, Eigen::Vector2d(b.dano.band_lo, b.dano.band_hi));
        e << YAML::Key << "h" << YAML::Value << b.dano.h << YAML::Key << "alpha" << YAML::Value << b.dano.alpha;
        e << YAML::Key << "degenerate" << YAML::Value
          << (b.dano.degenerate == DegenerateNormals::kDrop ? "drop" : "keep_zero") << YAML::EndMap;
        if (b.alpha) e << YAML::Key << "alpha" << YAML::Value << *b.alpha;
        break;
    }
    if (!b.is_static()) {
      e << YAML::Key << "actuated" << YAML::Value << b.actuated << YAML::Key << "gravity" << YAML::Value
        << b.gravity;
      detail::emit_state(e, b.initial);
    }
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;

  e << YAML::Key << "contacts" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : contacts) {
    e << YAML::BeginMap << YAML::Key << "bodies" << YAML::Value << YAML::Flow << YAML::BeginSeq << c.a << c.b
      << YAML::EndSeq;
    for (std::size_t i = 0; i < ContactParams::kNames.size(); ++i)
      e << YAML::Key << ContactParams::kNames[i] << YAML::Value << c.params.at(i);
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;

  if (sysid.present) {
    e << YAML::Key << "sysid" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "observations" << YAML::Value << YAML::BeginSeq;
    for (const auto& o : sysid.observations) {
      e << YAML::BeginMap;
      if (!o.trajectory_path.empty()) {
        e << YAML::Key << "trajectory" << YAML::Value << o.trajectory_path;
      } else {
        e << YAML::Key << "truth" << YAML::Value << YAML::BeginMap;
        for (const auto& [k, v] : o.truth) e << YAML::Key << k << YAML::Value << v;
        e << YAML::EndMap;
      }
      e << YAML::Key << "controls" << YAML::Value;
      detail::emit_controls(e, o.controls);
      if (!o.initial.empty()) {
        e << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
        for (const auto& [k, s] : o.initial) {
          e << YAML::Key << k << YAML::Value << YAML::BeginMap;
          detail::emit_state(e, s);
          e << YAML::EndMap;
        }
        e << YAML::EndMap;
      }
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
    e << YAML::Key << "params" << YAML::Value << YAML::BeginSeq;
    for (const auto& p : sysid.params)
      e << YAML::BeginMap << YAML::Key << "name" << YAML::Value << p.name << YAML::Key << "init" << YAML::Value
        << p.value << YAML::Key << "min" << YAML::Value << p.lo << YAML::Key << "max" << YAML::Value << p.hi
        << YAML::EndMap;
    e << YAML::EndSeq;
    e << YAML::Key << "weights" << YAML::Value;
    detail::emit_weights(e, sysid.weights);
    e << YAML::Key << "max_iterations" << YAML::Value << sysid.settings.max_iterations;
    e << YAML::Key << "h_rel" << YAML::Value << sysid.settings.h_rel;
    e << YAML::Key << "lambda0" << YAML::Value << sysid.settings.lambda0 << YAML::EndMap;
  }

  if (trajopt.present) {
    const auto& t = trajopt;
    e << YAML::Key << "trajopt" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "horizon" << YAML::Value << t.horizon;
    e << YAML::Key << "goals" << YAML::Value << YAML::BeginSeq;
    for (const auto& g : t.goals) {
      e << YAML::BeginMap << YAML::Key << "body" << YAML::Value << g.body;
      detail::emit_state(e, g.state);
      e << YAML::Key << "stage" << YAML::Value;
      detail::emit_weights(e, g.stage);
      e << YAML::Key << "final" << YAML::Value;
      detail::emit_weights(e, g.final);
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
    e << YAML::Key << "control_weight" << YAML::Value << YAML::BeginMap << YAML::Key << "force" << YAML::Value
      << t.force_weight << YAML::Key << "torque" << YAML::Value << t.torque_weight << YAML::EndMap;
    e << YAML::Key << "control_bound" << YAML::Value << YAML::BeginMap << YAML::Key << "force" << YAML::Value
      << t.force_bound << YAML::Key << "torque" << YAML::Value << t.torque_bound << YAML::EndMap;
    e << YAML::Key << "penalty" << YAML::Value << YAML::BeginMap << YAML::Key << "rho0" << YAML::Value
      << t.penalty.rho0 << YAML::Key << "growth" << YAML::Value << t.penalty.growth << YAML::Key << "max_outer"
      << YAML::Value << t.penalty.max_outer << YAML::Key << "tolerance" << YAML::Value << t.penalty.tolerance
      << YAML::EndMap;
    e << YAML::Key << "max_iterations" << YAML::Value << t.settings.max_iterations;
    e << YAML::Key << "h_rel" << YAML::Value << t.settings.h_rel;
    e << YAML::Key << "tolerance" << YAML::Value << t.settings.tolerance;
    e << YAML::Key << "initial_controls" << YAML::Value;
    detail::emit_controls(e, t.initial_controls);
    e << YAML::EndMap;
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Overrides and scene construction

// Applies a parameter override (same names as the diff module).
inline void apply_override(SceneConfig& cfg, const std::string& name, double value) {
  const auto parts = detail::split_dots(name);
  if (parts.size() == 2 && parts[0] == "alpha") {
    for (auto& b : cfg.bodies)
      if (b.name == parts[1] && b.type == BodySpec::Type::kDano) {
        if (!(value > 0)) throw DomainError("alpha must be > 0");
        b.alpha = value;
        return;
      }
    throw DomainError("unknown density-field body in override " + name);
  }
  if (parts.size() == 4 && parts[0] == "contact") {
    const int k = ContactParams::index_of(parts[3]);
    if (k < 0) throw DomainError("unknown contact parameter in override " + name);
    if (value < 0) throw DomainError("override " + name + " must be >= 0");
    for (auto& c : cfg.contacts)
      if ((c.a == parts[1] && c.b == parts[2]) || (c.a == parts[2] && c.b == parts[1])) {
        c.params.at(k) = value;
        cfg.warnings.erase(std::remove_if(cfg.warnings.begin(), cfg.warnings.end(),
                                          [&](const std::string& w) {
                                            return w.rfind("contact " + c.a + "/" + c.b + ": ", 0) == 0;
                                          }),
                           cfg.warnings.end());
        detail::warn_table_ranges(cfg, c);
        return;
      }
    throw DomainError("no contact pair for override " + name);
  }
  throw DomainError("malformed override name '" + name + "'");
}

inline std::shared_ptr<const DanoModel> resolve_model(const BodySpec& b, AnyField* field_out) {
  AnyField field;
  if (!b.grid_path.empty()) field = load_grid_field(b.grid_path);
  else if (b.field_sphere) field = IndicatorField::sphere(b.field_center, b.field_radius);
  if (field_out) *field_out = field;
  if (!b.model_path.empty()) return std::make_shared<const DanoModel>(load_dano(b.model_path));
  return std::make_shared<const DanoModel>(build_dano(field, b.dano));
}

inline Scene build_scene(const SceneConfig& cfg) {
  Scene s;
  s.dt = cfg.dt;
  s.horizon = cfg.horizon;
  s.gravity = cfg.gravity;
  s.primitive_smoothing = cfg.primitive_smoothing;
  for (const auto& bs : cfg.bodies) {
    Body b;
    b.name = bs.name;
    b.actuated = bs.actuated;
    b.gravity = bs.gravity;
    switch (bs.type) {
      case BodySpec::Type::kHalfSpace: b.kind = StaticBody{HalfSpace{bs.normal, bs.offset}}; break;
      case BodySpec::Type::kStaticSphere: b.kind = StaticBody{Sphere{bs.center, bs.radius}}; break;
      case BodySpec::Type::kSphere: b.kind = SphereBody{bs.radius, bs.mass}; break;
      case BodySpec::Type::kDano: {
        DanoBody d;
        d.model = resolve_model(bs, &d.field);
        b.alpha = bs.alpha.value_or(d.model->alpha);
        b.kind = std::move(d);
        break;
      }
    }
    s.bodies.push_back(std::move(b));
  }
  for (const auto& cs : cfg.contacts) {
    ContactPair p;
    p.a = s.body_index(cs.a);
    p.b = s.body_index(cs.b);
    p.params = cs.params;
    if (!s.bodies[p.a].is_dano() && s.bodies[p.b].is_dano()) std::swap(p.a, p.b);
    s.contacts.push_back(p);
  }
  s.validate();
  return s;
}

inline State initial_state(const SceneConfig& cfg) {
  State x;
  for (const auto& b : cfg.bodies)
    if (!b.is_static()) x.push_back(b.initial);
  return x;
}

// Initial state with per-body overrides.
inline State initial_state(const SceneConfig& cfg, const std::map<std::string, BodyState>& overrides) {
  State x;
  for (const auto& b : cfg.bodies) {
    if (b.is_static()) continue;
    const auto it = overrides.find(b.name);
    x.push_back(it == overrides.end() ? b.initial : it->second);
  }
  return x;
}

inline TrajOptProblem build_trajopt(const SceneConfig& cfg, const Scene& scene) {
  if (!cfg.trajopt.present) throw DomainError("config has no trajopt section");
  const auto& t = cfg.trajopt;
  TrajOptProblem p;
  p.scene = scene;
  p.horizon = t.horizon;
  p.x0 = initial_state(cfg);
  p.goal = p.x0;
  const TangentLayout l = state_tangent_layout(scene);
  p.Q = VecX::Zero(l.state_dim);
  p.Qf = VecX::Zero(l.state_dim);
  for (const auto& g : t.goals) {
    const int slot = scene.slot(scene.body_index(g.body));
    if (slot < 0) throw DomainError("goal body '" + g.body + "' is static");
    p.goal[slot] = g.state;
    g.stage.fill(p.Q, slot);
    g.final.fill(p.Qf, slot);
  }
  p.R = VecX::Zero(l.control_dim);
  p.u_lo = VecX::Zero(l.control_dim);
  p.u_hi = VecX::Zero(l.control_dim);
  for (int a = 0; a < l.control_dim / 6; ++a) {
    p.R.segment<3>(6 * a).setConstant(t.force_weight);
    p.R.segment<3>(6 * a + 3).setConstant(t.torque_weight);
    p.u_hi.segment<3>(6 * a).setConstant(t.force_bound);
    p.u_hi.segment<3>(6 * a + 3).setConstant(t.torque_bound);
  }
  p.u_lo = -p.u_hi;
  p.penalty = t.penalty;
  p.settings = t.settings;
  return p;
}

// Builds the identification problem; synthetic observations are simulated
// here with their ground-truth parameters.
inline SysIdProblem build_sysid(const SceneConfig& cfg, const Scene& scene) {
  if (!cfg.sysid.present) throw DomainError("config has no sysid section");
  SysIdProblem p;
  p.scene = scene;
  p.params.entries = cfg.sysid.params;
  for (const auto& e : p.params.entries) (void)get_param(scene, e.name);  // name check
  const TangentLayout l = state_tangent_layout(scene);
  p.weights = VecX::Zero(l.state_dim);
  for (int s = 0; s < static_cast<int>(l.bodies.size()); ++s) cfg.sysid.weights.fill(p.weights, s);
  p.settings = cfg.sysid.settings;
  for (const auto& o : cfg.sysid.observations) {
    Observation obs;
    obs.controls = o.controls.expand(l.control_dim, cfg.horizon);
    if (!o.trajectory_path.empty()) {
      obs.states = load_trajectory(o.trajectory_path, scene);
      const int horizon = static_cast<int>(obs.states.states.size()) - 1;
      obs.controls = o.controls.expand(l.control_dim, horizon);
    } else {
      Scene truth = scene;
      for (const auto& [k, v] : o.truth) set_param(truth, k, v);
      obs.states = simulate(truth, initial_state(cfg, o.initial), obs.controls, cfg.horizon);
    }
    p.observations.push_back(std::move(obs));
  }
  return p;
}

}  // namespace danosim
