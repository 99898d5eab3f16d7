/******************************************************************************
 * Copyright 2026 The isac-v2x Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/

#include "isac/scenario.hpp"

#include <algorithm>

#include "isac/rng.hpp"

namespace isac {

namespace {

bool finite3(const Vec3& v) { return v.allFinite(); }

cd carrier_phase(double path_length, double fc) {
  return std::polar(1.0, -2.0 * kPi * fc * path_length / kSpeedOfLight);
}

}  // namespace

void ScenarioConfig::validate() const {
  if (!finite3(gnb_position) || !finite3(vehicle_start) || !finite3(road_direction)) {
    throw ConfigError("positions must be finite");
  }
  if (road_direction.norm() <= 0.0) throw ConfigError("road direction must be nonzero");
  if (slot_count < 1) throw ConfigError("slot_count must be positive");
  if (!(slot_duration > 0.0)) throw ConfigError("slot_duration must be positive");
  if (std::abs(slot_count * slot_duration - duration) > 1e-9 * std::max(1.0, duration)) {
    throw ConfigError("slot_count * slot_duration must equal duration");
  }
  if (!(nominal_speed >= 0.0) || !(speed_jitter_std >= 0.0)) {
    throw ConfigError("speed and jitter must be nonnegative");
  }
  for (const auto& s : scatterers) {
    if (!finite3(s.position) || !(s.rcs >= 0.0)) throw ConfigError("invalid scatterer");
  }
  gnb_array.validate();
  ue_array.validate();
  if (blockage && (blockage->start_slot < 0 || blockage->duration_slots < 0)) {
    throw ConfigError("blockage window must be nonnegative");
  }
}

void ScenarioConfig::set_slot_count(int n) {
  slot_count = n;
  duration = n * slot_duration;
}

double elevation_for_range(double range, double height_difference) {
  if (!(range > 0.0)) throw DegenerateGeometryError("range must be positive");
  return std::asin(std::clamp(-height_difference / range, -1.0, 1.0));
}

AnglePair steering_from_tracked(double theta, double elevation) {
  const double c = std::cos(elevation);
  const double s = c > 0.0 ? std::clamp(std::sin(theta) / c, -1.0, 1.0) : 0.0;
  return {std::asin(s), elevation};
}

double tracked_from_steering(const AnglePair& a) {
  return std::asin(std::clamp(std::sin(a.azimuth) * std::cos(a.elevation), -1.0, 1.0));
}

AnglePair angles_towards(const Vec3& from, const Vec3& to) {
  const Vec3 r = to - from;
  const double d = r.norm();
  if (!(d > 0.0)) throw DegenerateGeometryError("coincident points");
  // Broadside is +y, the array row runs along x, columns along z.
  return {std::atan2(r.x(), r.y()), std::asin(std::clamp(r.z() / d, -1.0, 1.0))};
}

WorldTrace::WorldTrace(ScenarioConfig cfg, std::vector<SlotTruth> truth)
    : cfg_(std::move(cfg)), truth_(std::move(truth)) {
  if (truth_.empty()) throw ConfigError("empty trace");
}

double WorldTrace::height_difference() const {
  return cfg_.gnb_position.z() - cfg_.vehicle_start.z();
}

bool WorldTrace::blocked(int slot) const {
  if (!cfg_.blockage) return false;
  const auto& b = *cfg_.blockage;
  return slot >= b.start_slot && slot < b.start_slot + b.duration_slots;
}

PathSet WorldTrace::radar_paths(int slot) const {
  const SlotTruth& t = at(slot);
  const double fc = cfg_.carrier_frequency;
  PathSet paths;
  const bool is_blocked = blocked(slot);
  if (!is_blocked) {
    PathParams p;
    p.delay = 2.0 * t.range / kSpeedOfLight;
    p.doppler = 2.0 * t.radial_speed * fc / kSpeedOfLight;
    p.gain = cfg_.vehicle_rcs / (4.0 * t.range * t.range) * carrier_phase(2.0 * t.range, fc);
    p.angles = t.angles;
    p.is_los = true;
    paths.push_back(p);
  }
  for (const auto& s : cfg_.scatterers) {
    const double d = (s.position - cfg_.gnb_position).norm();
    PathParams p;
    p.delay = 2.0 * d / kSpeedOfLight;
    p.doppler = 0.0;
    p.gain = s.rcs / (4.0 * d * d) * carrier_phase(2.0 * d, fc);
    p.angles = angles_towards(cfg_.gnb_position, s.position);
    paths.push_back(p);
  }
  if (is_blocked && cfg_.blockage->blocker) {
    const auto& b = *cfg_.blockage;
    const double d = std::max(1.0, t.range - b.blocker_offset);
    const Vec3 rel = t.position - cfg_.gnb_position;
    const Vec3 pos = cfg_.gnb_position + rel * (d / t.range);
    const Vec3 vel = cfg_.road_direction.normalized() * b.blocker_speed;
    PathParams p;
    p.delay = 2.0 * d / kSpeedOfLight;
    p.doppler = 2.0 * (-(pos - cfg_.gnb_position).dot(vel) / d) * fc / kSpeedOfLight;
    p.gain = b.blocker_rcs / (4.0 * d * d) * carrier_phase(2.0 * d, fc);
    p.angles = angles_towards(cfg_.gnb_position, pos);
    paths.push_back(p);
  }
  return paths;
}

PathSet WorldTrace::comm_paths(int slot, std::optional<double> los_scale) const {
  const SlotTruth& t = at(slot);
  const double fc = cfg_.carrier_frequency;
  const double dref = start_range();
  const double los = los_scale ? *los_scale : (blocked(slot) ? 0.0 : 1.0);
  PathSet paths;
  if (los != 0.0) {
    PathParams p;
    p.delay = t.range / kSpeedOfLight;
    p.gain = los * (dref / t.range) * carrier_phase(t.range, fc);
    p.angles = t.angles;
    p.is_los = true;
    paths.push_back(p);
  }
  PathSet nlos = nlos_paths(slot);
  paths.insert(paths.end(), nlos.begin(), nlos.end());
  return paths;
}

PathSet WorldTrace::nlos_paths(int slot) const {
  const SlotTruth& t = at(slot);
  const double fc = cfg_.carrier_frequency;
  const double dref = start_range();
  PathSet paths;
  for (const auto& s : cfg_.scatterers) {
    const double len = (s.position - cfg_.gnb_position).norm() + (t.position - s.position).norm();
    PathParams p;
    p.delay = len / kSpeedOfLight;
    p.gain = cfg_.nlos_comm_gain * std::sqrt(s.rcs / 0.1) * (dref / len) * carrier_phase(len, fc);
    p.angles = angles_towards(cfg_.gnb_position, s.position);
    paths.push_back(p);
  }
  return paths;
}

WorldTrace generate_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x5CE7A210ULL));
  const Vec3 dir = cfg.road_direction.normalized();
  const double rho = cfg.speed_jitter_corr_time > 0.0
                         ? std::exp(-cfg.slot_duration / cfg.speed_jitter_corr_time)
                         : 0.0;
  const double sig = cfg.speed_jitter_std;
  const double innov = sig * std::sqrt(1.0 - rho * rho);
  double jitter = sig > 0.0 ? std::clamp(sig * rng.normal(), -3.0 * sig, 3.0 * sig) : 0.0;

  std::vector<SlotTruth> truth(static_cast<std::size_t>(cfg.slot_count));
  Vec3 pos = cfg.vehicle_start;
  for (int k = 0; k < cfg.slot_count; ++k) {
    SlotTruth& t = truth[static_cast<std::size_t>(k)];
    t.position = pos;
    t.speed = cfg.nominal_speed + jitter;
    const Vec3 rel = pos - cfg.gnb_position;
    t.range = rel.norm();
    if (!(t.range > 0.0)) throw DegenerateGeometryError("vehicle reached the gNB position");
    t.radial_speed = -rel.dot(dir * t.speed) / t.range;
    t.angles = angles_towards(cfg.gnb_position, pos);
    t.state.azimuth = std::asin(std::clamp(rel.dot(-dir) / t.range, -1.0, 1.0));
    t.state.range = t.range;
    t.state.speed = t.speed;
    t.state.refl_coeff = cfg.vehicle_rcs / (4.0 * t.range * t.range);

    pos += dir * (t.speed * cfg.slot_duration);
    if (sig > 0.0) {
      jitter = std::clamp(rho * jitter + innov * rng.normal(), -3.0 * sig, 3.0 * sig);
    }
  }
  return WorldTrace(cfg, std::move(truth));
}

LinkBudget link_budget(const WorldTrace& world, double snr_db, double tx_power,
                       double radar_offset_db) {
  const auto& cfg = world.config();
  const double snr = db_to_linear(snr_db);
  LinkBudget lb;
  const double zeta2 = static_cast<double>(cfg.gnb_array.size()) * cfg.ue_array.size();
  lb.comm_noise_var = tx_power * zeta2 / snr;
  const double beta0 = world.start_beta();
  lb.radar_noise_var = tx_power * cfg.gnb_array.size() * beta0 * beta0 /
                       db_to_linear(snr_db + radar_offset_db);
  return lb;
}

}  // namespace isac
