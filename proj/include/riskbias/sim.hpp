// Copyright 2026 The riskbias Authors
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

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskbias/checkpoint.hpp"
#include "riskbias/errors.hpp"
#include "riskbias/parallel.hpp"
#include "riskbias/rng.hpp"
#include "riskbias/trajectory.hpp"

namespace riskbias {

/// Road-crossing scene generator settings. The robot drives along +x on the
/// line y = 0 and is at the origin at t = 0 (the last observed step). The
/// pedestrian starts below the road and walks across it with a constant
/// heading. It approaches at `ped_past_speed` during the observed window and
/// commits to a slow or fast mode at t = 0, so the past does not reveal the
/// mode.
struct SimConfig {
  double dt = 0.1;
  int past_steps = 10;
  int future_steps = 50;

  double robot_speed = 14.0;
  double robot_speed_std = 2.0;     // random-acceleration flavor only
  double robot_accel_std = 1.0;     // m/s^2 per step, random flavor only

  double ped_speed_slow = 1.0;
  double ped_speed_fast = 2.0;
  double ped_past_speed = 1.5;
  double mode_prob_fast = 0.5;
  double speed_noise_std = 0.1;

  double heading_min = std::numbers::pi / 2 - 0.35;
  double heading_max = std::numbers::pi / 2 + 0.35;
  double lateral_min = 1.5;  // distance below the road at t = 0
  double lateral_max = 4.0;
  double spawn_jitter = 4.0;  // longitudinal slack around the slow-mode meeting point
  double meet_lag = 1.5;      // s the robot trails the slow mode at the centerline

  double speed_scale = 1.0;  // test-time shift of both mode speeds

  double horizon() const { return dt * future_steps; }

  void validate() const {
    auto fail = [](const std::string& what) { throw DomainError("sim config: " + what); };
    if (!(dt > 0.0)) fail("dt must be positive");
    if (past_steps < 2) fail("past_steps must be at least 2");
    if (future_steps < 2) fail("future_steps must be at least 2");
    if (!(mode_prob_fast >= 0.0 && mode_prob_fast <= 1.0)) fail("mode_prob_fast outside [0, 1]");
    if (!(speed_scale > 0.0)) fail("speed_scale must be positive");
    if (speed_noise_std < 0.0 || robot_speed_std < 0.0 || robot_accel_std < 0.0)
      fail("standard deviations must be non-negative");
    if (ped_speed_slow < 0.0 || ped_speed_fast < 0.0 || ped_past_speed < 0.0 ||
        robot_speed < 0.0)
      fail("speeds must be non-negative");
    if (heading_max < heading_min) fail("heading range is empty");
    if (lateral_max < lateral_min || lateral_min < 0.0) fail("lateral range is invalid");
    if (spawn_jitter < 0.0) fail("spawn_jitter must be non-negative");
    if (meet_lag < 0.0) fail("meet_lag must be non-negative");
  }

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig, dt, past_steps, future_steps, robot_speed,
                                   robot_speed_std, robot_accel_std, ped_speed_slow,
                                   ped_speed_fast, ped_past_speed, mode_prob_fast,
                                   speed_noise_std, heading_min, heading_max, lateral_min,
                                   lateral_max, spawn_jitter, meet_lag, speed_scale)

/// Returns `config` with the pedestrian mode speeds scaled by `scale`.
inline SimConfig shift_distribution(const SimConfig& config, double scale) {
  if (!(scale > 0.0)) throw DomainError("shift_distribution: scale must be positive");
  SimConfig out = config;
  out.speed_scale = config.speed_scale * scale;
  return out;
}

enum class PedMode : std::uint8_t { kSlow = 0, kFast = 1 };
enum class RobotFlavor { kConstantVelocity, kRandomAccel };

inline std::string to_string(RobotFlavor f) {
  return f == RobotFlavor::kConstantVelocity ? "constant_velocity" : "random_accel";
}

inline RobotFlavor parse_robot_flavor(const std::string& s) {
  if (s == "constant_velocity") return RobotFlavor::kConstantVelocity;
  if (s == "random_accel") return RobotFlavor::kRandomAccel;
  throw UsageError("unknown robot flavor '" + s + "'");
}

struct RobotDynamics {
  enum class Kind { kConstantVelocity, kDoubleIntegrator };
  Kind kind = Kind::kConstantVelocity;
  Vec2 position;
  double speed = 14.0;  // along +x
  std::vector<double> accels;
};

/// Future positions p_1..p_steps of the longitudinal double integrator
///   p_{t+1} = p_t + v_t dt,  v_{t+1} = v_t + a_t dt.
/// The constant-velocity kind ignores `accels`.
inline Trajectory rollout_robot(const RobotDynamics& dyn, int steps, double dt) {
  if (steps < 0) throw UsageError("rollout_robot: negative step count");
  const bool integrate = dyn.kind == RobotDynamics::Kind::kDoubleIntegrator;
  if (integrate && dyn.accels.size() < static_cast<std::size_t>(steps))
    throw UsageError("rollout_robot: " + std::to_string(dyn.accels.size()) +
                     " accelerations for " + std::to_string(steps) + " steps");
  Trajectory out;
  out.dt = dt;
  out.positions.reserve(static_cast<std::size_t>(steps));
  double x = dyn.position.x;
  double v = dyn.speed;
  for (int t = 0; t < steps; ++t) {
    x = x + v * dt;
    if (integrate) v = v + dyn.accels[static_cast<std::size_t>(t)] * dt;
    out.positions.push_back({x, dyn.position.y});
  }
  return out;
}

struct Scene {
  Trajectory x;        // pedestrian past, past_steps points ending at t = 0
  Trajectory y;        // pedestrian future, t = dt .. future_steps * dt
  Trajectory y_robot;  // robot past (past_steps points) followed by future
  PedMode mode = PedMode::kSlow;
  double robot_speed0 = 0.0;
  std::vector<double> robot_accels;

  /// Robot positions aligned with y.
  Trajectory robot_future(int past_steps) const {
    Trajectory t;
    t.dt = y_robot.dt;
    t.positions.assign(y_robot.positions.begin() + past_steps, y_robot.positions.end());
    return t;
  }

  friend bool operator==(const Scene& a, const Scene& b) {
    return a.x == b.x && a.y == b.y && a.y_robot == b.y_robot && a.mode == b.mode &&
           a.robot_speed0 == b.robot_speed0 && a.robot_accels == b.robot_accels;
  }
};

/// Optional overrides used to build specific scenes (figures, tests).
struct SceneOverrides {
  std::optional<PedMode> mode;
  std::optional<double> heading;
  std::optional<double> lateral;
  std::optional<double> jitter;  // longitudinal offset instead of a random draw
};

/// Full scene given the pedestrian and robot draws.
inline Scene build_scene(const SimConfig& c, PedMode mode, double speed, double heading,
                         double lateral, double jitter, const RobotDynamics& robot) {
  Scene s;
  s.mode = mode;
  const Vec2 dir{std::cos(heading), std::sin(heading)};
  // Time at which the nominal slow mode reaches the road centerline.
  const double sin_h = std::max(dir.y, 1e-3);
  const double t_meet = lateral / (c.ped_speed_slow * sin_h);
  const double px = (robot.speed - c.ped_speed_slow * dir.x) * t_meet +
                    robot.speed * c.meet_lag + jitter + robot.position.x;
  const Vec2 p0{px, robot.position.y - lateral};

  s.x.dt = c.dt;
  for (int k = c.past_steps - 1; k >= 0; --k) {
    const double t = -c.dt * k;
    s.x.positions.push_back(p0 + (c.ped_past_speed * t) * dir);
  }
  s.y.dt = c.dt;
  for (int k = 1; k <= c.future_steps; ++k) {
    const double t = c.dt * k;
    s.y.positions.push_back(p0 + (speed * t) * dir);
  }
  s.y_robot.dt = c.dt;
  for (int k = c.past_steps - 1; k >= 1; --k) {
    const double t = -c.dt * k;
    s.y_robot.positions.push_back({robot.position.x + robot.speed * t, robot.position.y});
  }
  s.y_robot.positions.push_back(robot.position);
  const Trajectory fut = rollout_robot(robot, c.future_steps, c.dt);
  s.y_robot.positions.insert(s.y_robot.positions.end(), fut.positions.begin(),
                             fut.positions.end());
  s.robot_speed0 = robot.speed;
  if (robot.kind == RobotDynamics::Kind::kDoubleIntegrator) s.robot_accels = robot.accels;
  return s;
}

inline RobotDynamics sample_robot(const SimConfig& c, RobotFlavor flavor, Rng& rng) {
  RobotDynamics d;
  if (flavor == RobotFlavor::kConstantVelocity) {
    d.kind = RobotDynamics::Kind::kConstantVelocity;
    d.speed = c.robot_speed;
    return d;
  }
  d.kind = RobotDynamics::Kind::kDoubleIntegrator;
  double v = -1.0;
  while (v < 0.0) v = rng.normal(c.robot_speed, c.robot_speed_std);
  d.speed = v;
  d.accels.resize(static_cast<std::size_t>(c.future_steps));
  for (double& a : d.accels) a = rng.normal(0.0, c.robot_accel_std);
  return d;
}

inline Scene sample_scene(const SimConfig& c, RobotFlavor flavor, Rng& rng,
                          const SceneOverrides& ov = {}) {
  const PedMode mode =
      ov.mode ? *ov.mode : (rng.bernoulli(c.mode_prob_fast) ? PedMode::kFast : PedMode::kSlow);
  const double nominal = mode == PedMode::kFast ? c.ped_speed_fast : c.ped_speed_slow;
  const double noise = rng.normal();
  const double speed = std::max(0.0, nominal * c.speed_scale + c.speed_noise_std * noise);
  const double heading = ov.heading ? *ov.heading : rng.uniform(c.heading_min, c.heading_max);
  const double lateral = ov.lateral ? *ov.lateral : rng.uniform(c.lateral_min, c.lateral_max);
  const double jitter =
      ov.jitter ? *ov.jitter : rng.uniform(-c.spawn_jitter, c.spawn_jitter);
  const RobotDynamics robot = sample_robot(c, flavor, rng);
  return build_scene(c, mode, speed, heading, lateral, jitter, robot);
}

/// The reference crossing: pedestrian walking straight across, slow mode
/// crossing the road shortly before the constant-speed robot arrives.
inline Scene road_scene(const SimConfig& c, Rng& rng) {
  SceneOverrides ov;
  ov.heading = std::numbers::pi / 2;
  ov.lateral = 2.5;
  ov.jitter = 0.0;
  return sample_scene(c, RobotFlavor::kConstantVelocity, rng, ov);
}

struct Dataset {
  SimConfig config;
  RobotFlavor flavor = RobotFlavor::kConstantVelocity;
  std::uint64_t seed = 0;
  std::vector<Scene> scenes;

  std::size_t size() const { return scenes.size(); }
};

/// n i.i.d. scenes; scene i uses the child stream rng.split(i), so output is
/// independent of the worker count.
inline Dataset generate_dataset(std::size_t n, const SimConfig& c, RobotFlavor flavor,
                                std::uint64_t seed) {
  if (n == 0) throw UsageError("generate_dataset: n must be at least 1");
  c.validate();
  Dataset ds;
  ds.config = c;
  ds.flavor = flavor;
  ds.seed = seed;
  ds.scenes.resize(n);
  const Rng root(seed);
  parallel_for(n, [&](std::size_t i) {
    Rng rng = root.split(i);
    ds.scenes[i] = sample_scene(c, flavor, rng);
  });
  return ds;
}

namespace detail {

inline constexpr char kDatasetMagic[8] = {'R', 'B', 'S', 'C', 'E', 'N', 'E', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void put_traj(std::string& buf, const Trajectory& t) {
  auto put64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
  };
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
  };
  put32(static_cast<std::uint32_t>(t.positions.size()));
  for (const auto& p : t.positions) {
    put64(std::bit_cast<std::uint64_t>(p.x));
    put64(std::bit_cast<std::uint64_t>(p.y));
  }
}

class RecordReader {
 public:
  explicit RecordReader(const std::string& buf) : buf_(buf) {}
  std::uint64_t uint(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > buf_.size())
      throw FormatError("dataset record truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  Trajectory traj(double dt) {
    Trajectory t;
    t.dt = dt;
    const auto n = uint(4);
    if (n > 1'000'000) throw FormatError("dataset trajectory length implausible");
    t.positions.resize(n);
    for (auto& p : t.positions) {
      p.x = f64();
      p.y = f64();
    }
    return t;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Layout: magic "RBSCENES", u32 version, u64 header length, JSON header
/// {config, flavor, seed, count}, then per scene a u32 byte length followed by
/// mode (u8), speed0 (f64), accels (u32 n + f64s) and the x, y, y_robot
/// trajectories (u32 n + xy f64 pairs). Little-endian throughout.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write dataset " + path.string());
  nlohmann::json header;
  header["config"] = ds.config;
  header["flavor"] = to_string(ds.flavor);
  header["seed"] = ds.seed;
  header["count"] = ds.scenes.size();
  const std::string text = header.dump();
  os.write(detail::kDatasetMagic, 8);
  detail::put_u32(os, detail::kDatasetVersion);
  detail::put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::string rec;
  for (const Scene& s : ds.scenes) {
    rec.clear();
    rec.push_back(static_cast<char>(s.mode));
    const auto sp = std::bit_cast<std::uint64_t>(s.robot_speed0);
    for (int i = 0; i < 8; ++i) rec.push_back(static_cast<char>(sp >> (8 * i)));
    const auto na = static_cast<std::uint32_t>(s.robot_accels.size());
    for (int i = 0; i < 4; ++i) rec.push_back(static_cast<char>(na >> (8 * i)));
    for (double a : s.robot_accels) {
      const auto b = std::bit_cast<std::uint64_t>(a);
      for (int i = 0; i < 8; ++i) rec.push_back(static_cast<char>(b >> (8 * i)));
    }
    detail::put_traj(rec, s.x);
    detail::put_traj(rec, s.y);
    detail::put_traj(rec, s.y_robot);
    detail::put_u32(os, static_cast<std::uint32_t>(rec.size()));
    os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!os) throw IoError("failed writing dataset " + path.string());
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset " + path.string());
  char magic[8] = {};
  is.read(magic, 8);
  if (is.gcount() != 8 || std::memcmp(magic, detail::kDatasetMagic, 8) != 0)
    throw FormatError(path.string() + ": not a riskbias dataset (bad magic)");
  if (detail::get_uint(is, 4, "version") != detail::kDatasetVersion)
    throw FormatError(path.string() + ": unsupported dataset version");
  const auto len = detail::get_uint(is, 8, "header length");
  if (len > (1u << 24)) throw FormatError("dataset header too large");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(is.gcount()) != len)
    throw FormatError("dataset header truncated");
  Dataset ds;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    ds.config = header.at("config").get<SimConfig>();
    ds.flavor = parse_robot_flavor(header.at("flavor").get<std::string>());
    ds.seed = header.at("seed").get<std::uint64_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  }
  ds.scenes.reserve(count);
  std::string rec;
  for (std::size_t i = 0; i < count; ++i) {
    const auto n = detail::get_uint(is, 4, "record length");
    if (n > (1u << 26)) throw FormatError("dataset record too large");
    rec.resize(n);
    is.read(rec.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(is.gcount()) != n) throw FormatError("dataset record truncated");
    detail::RecordReader r(rec);
    Scene s;
    s.mode = static_cast<PedMode>(r.uint(1));
    s.robot_speed0 = r.f64();
    const auto na = r.uint(4);
    if (na > 1'000'000) throw FormatError("dataset accel count implausible");
    s.robot_accels.resize(na);
    for (double& a : s.robot_accels) a = r.f64();
    s.x = r.traj(ds.config.dt);
    s.y = r.traj(ds.config.dt);
    s.y_robot = r.traj(ds.config.dt);
    if (!r.done()) throw FormatError("dataset record has trailing bytes");
    ds.scenes.push_back(std::move(s));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError(path.string() + ": trailing bytes after last record");
  return ds;
}

}  // namespace riskbias
