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

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "isac/array_geometry.hpp"
#include "isac/common.hpp"
#include "isac/ofdm_link.hpp"
#include "isac/tracker.hpp"

namespace isac {

using Vec3 = Eigen::Vector3d;

struct Scatterer {
  Vec3 position = Vec3::Zero();
  double rcs = 0.1;  // linear, relative to the vehicle's unit RCS
};

/// LoS blockage: the LoS path is gated off for [start_slot, start_slot +
/// duration_slots). With `blocker` a faster vehicle standing on the LoS line
/// adds its own radar echo.
struct Blockage {
  int start_slot = 0;
  int duration_slots = 0;
  bool blocker = true;
  double blocker_offset = 8.0;  // m closer to the gNB than the vehicle
  double blocker_speed = 30.0;  // m/s along the road
  double blocker_rcs = 4.0;
};

struct ScenarioConfig {
  Vec3 gnb_position{0.0, 0.0, 8.0};
  Vec3 vehicle_start{25.0, 40.0, 1.0};
  Vec3 road_direction{-1.0, 0.0, 0.0};
  double nominal_speed = 20.0;
  double speed_jitter_std = 0.5;
  double speed_jitter_corr_time = 0.5;  // s, Ornstein-Uhlenbeck time constant
  double duration = 4.0;
  double slot_duration = 1.25e-4;
  int slot_count = 32000;
  double carrier_frequency = 35e9;
  double vehicle_rcs = 1.0;
  double nlos_comm_gain = 0.316;  // NLoS amplitude factor relative to LoS law
  std::vector<Scatterer> scatterers{{Vec3{-10.0, 15.0, 2.0}, 0.1}, {Vec3{60.0, 70.0, 3.0}, 0.1}};
  std::optional<Blockage> blockage;
  ArrayGeometry gnb_array{8, 8};
  ArrayGeometry ue_array{4, 4};

  void validate() const;
  /// Sets slot_count and keeps duration consistent.
  void set_slot_count(int n);
};

struct SlotTruth {
  Vec3 position = Vec3::Zero();
  double speed = 0.0;         // along the road
  double range = 0.0;
  double radial_speed = 0.0;  // positive when approaching
  AnglePair angles;           // steering angles at the gNB
  TrackState state;           // [theta, d, v, beta]
};

double elevation_for_range(double range, double height_difference);
AnglePair steering_from_tracked(double theta, double elevation);
double tracked_from_steering(const AnglePair& a);
AnglePair angles_towards(const Vec3& from, const Vec3& to);

class WorldTrace {
 public:
  WorldTrace(ScenarioConfig cfg, std::vector<SlotTruth> truth);

  const ScenarioConfig& config() const { return cfg_; }
  int slot_count() const { return static_cast<int>(truth_.size()); }
  const SlotTruth& at(int slot) const { return truth_.at(static_cast<std::size_t>(slot)); }
  double start_range() const { return truth_.front().range; }
  double start_beta() const { return truth_.front().state.refl_coeff; }
  double height_difference() const;

  bool blocked(int slot) const;

  /// Monostatic radar paths seen from the gNB at this slot.
  PathSet radar_paths(int slot) const;
  /// gNB-to-vehicle paths. `los_scale` overrides the LoS amplitude factor,
  /// which otherwise is 1, or 0 while blocked.
  PathSet comm_paths(int slot, std::optional<double> los_scale = std::nullopt) const;
  /// Scatterer-only paths from the vehicle to the gNB used by uplink sounding.
  PathSet nlos_paths(int slot) const;

 private:
  ScenarioConfig cfg_;
  std::vector<SlotTruth> truth_;
};

WorldTrace generate_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

/// Noise variances that realise a given aligned receive SNR at the start pose.
struct LinkBudget {
  double comm_noise_var = 1.0;   // sigma_c^2 for the scalar comm channel
  double radar_noise_var = 1.0;  // sigma^2 per antenna and RE of the echo
};

/// Communication SNR is referenced to perfect alignment at the start range;
/// the radar per-antenna per-RE SNR is offset by `radar_offset_db`.
LinkBudget link_budget(const WorldTrace& world, double snr_db, double tx_power = 1.0,
                       double radar_offset_db = -20.0);

}  // namespace isac
