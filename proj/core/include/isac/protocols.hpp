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
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "isac/array_geometry.hpp"
#include "isac/nr_frame.hpp"
#include "isac/ofdm_link.hpp"
#include "isac/radar_proc.hpp"
#include "isac/rng.hpp"
#include "isac/scenario.hpp"
#include "isac/tracker.hpp"

namespace isac {

enum class RecoveryStrategy { kBeamTraining, kSub6Fallback, kNlosBeamform };

const char* strategy_name(RecoveryStrategy s);
RecoveryStrategy parse_strategy(const std::string& name);

/// Knobs shared by all protocol state machines. Defaults follow the
/// reference parameter table wherever it gives a value.
struct ProtocolConfig {
  double snr_db = 20.0;
  double tx_power = 1.0;
  double radar_offset_db = -20.0;
  int numerology = 3;
  int bits_per_symbol = 4;
  int ber_symbols_per_slot = 64;

  // Connected-mode radar subband.
  int radar_subcarriers = 64;
  int radar_decimation = 4;

  // Initial access probing: 10 aggregated slots on a 256-subcarrier subband.
  int ia_subcarriers = 256;
  int ia_accumulation_slots = 10;
  double ia_window_ms = 20.0;       // arrival window and uplink fallback timer
  double p_fa = 0.01;

  int gnb_oversample = 4;  // type-I codebook oversampling, both axes
  int ue_oversample = 4;
  int ssb_subset_beams = 8;

  // Conventional beam failure detection.
  int bfd_timer_slots = 60;  // 7.5 ms at 0.125 ms slots
  int bfi_max = 6;
  double rsrp_margin_db = 3.0;
  double candidate_margin_db = 6.0;
  int rsrp_res = 208;

  // Kinematic beam failure detection.
  double dr_threshold = 2.0;
  double dv_threshold = 1.0;
  int persist_slots = 12;
  int window_slots = 20;

  int rar_processing_slots = 2;
  RecoveryStrategy isac_recovery = RecoveryStrategy::kNlosBeamform;

  double sub6_carrier = 5e9;
  int sub6_numerology = 1;
  int sub6_prb = 273;
  double sub6_los_loss_db = 6.0;

  FrameOptions frame;
  GatedOptions gated;

  void validate() const;
};

// --- initial access ---------------------------------------------------------

struct IaOutcome {
  double latency_ms = 0.0;
  AnglePair chosen_angle;
  double angle_error = 0.0;  // |chosen theta - true theta|, rad
  bool used_fallback = false;
  bool detected_by_radar = false;
  int arrival_slot = 0;
  int rar_slot = 0;
  double chosen_theta = 0.0;
  double true_theta = 0.0;
  // Radar estimates, NaN unless the radar detected the vehicle.
  double range_estimate = std::numeric_limits<double>::quiet_NaN();
  double radial_speed_estimate = std::numeric_limits<double>::quiet_NaN();
};

struct IaOptions {
  std::optional<double> arrival_ms;  // default: uniform in [0, ia_window_ms)
  bool force_miss = false;           // suppress the radar detection
  bool noiseless = false;
};

IaOutcome run_initial_access(Scheme scheme, const WorldTrace& world, const ProtocolConfig& cfg,
                             std::uint64_t seed, const IaOptions& options = {});

/// The 8 x 8 access grid and the beam a codebook sweep would pick without
/// noise, for reference.
std::vector<CodebookBeam> access_codebook(const ArrayGeometry& geom);
double codebook_theta(const CodebookBeam& beam);
AnglePair codebook_angles(const CodebookBeam& beam);

// --- beam failure detection ---------------------------------------------------

/// BFI counter with a restart-on-indication timer.
struct BfiCounter {
  int count = 0;
  std::optional<int> timer_start;
  int timer_limit_slots = 60;
  int max_count = 6;

  /// Advances to `slot`; returns true when the failure condition is met.
  bool on_slot(int slot, bool indication);
};

/// Innovation persistence monitor: failure when at least `persist_slots`
/// hits fall inside the last `window_slots` slots.
struct KinematicMonitor {
  double dr_threshold = 2.0;
  double dv_threshold = 1.0;
  int persist_slots = 12;
  int window_slots = 20;
  int consecutive_hits = 0;
  std::deque<int> hit_slots;

  void validate() const;
  bool is_hit(double dr, double dv) const;
  bool on_slot(int slot, bool hit);
  void reset();
};

struct BfrEvent {
  int failure_slot = -1;
  int detected_slot = -1;
  RecoveryStrategy recovery_strategy = RecoveryStrategy::kBeamTraining;
  std::optional<int> recovered_slot;
  bool radio_link_failure = false;
};

// --- connected mode -----------------------------------------------------------

struct SlotMetrics {
  int slot = 0;
  double true_theta = 0.0;
  double est_theta = std::numeric_limits<double>::quiet_NaN();
  double true_d = 0.0;
  double est_d = std::numeric_limits<double>::quiet_NaN();
  double true_v = 0.0;
  double est_v = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t bit_errors = 0;
  std::uint64_t bits = 0;
  double throughput_mbps = 0.0;
  std::string event;

  double ber() const {
    return bits ? static_cast<double>(bit_errors) / static_cast<double>(bits)
                : std::numeric_limits<double>::quiet_NaN();
  }
};

/// One line of the JSON-lines event trace.
struct ProtocolEvent {
  int slot = 0;
  std::string event;
  std::string fields_json = "{}";
};

enum class LinkMode { kTracking, kOutage, kRecovered };

struct ConnectedState {
  Scheme scheme = Scheme::kConventional;
  ProtocolConfig cfg;
  FramePlan plan;
  double overhead = 0.0;
  std::uint64_t seed = 0;
  LinkBudget budget;
  LinkMode mode = LinkMode::kTracking;
  LinkMode after_outage = LinkMode::kTracking;
  int resume_slot = 0;
  Rng rng{0};

  // Conventional beam loop.
  std::vector<CodebookBeam> gnb_codebook;
  std::vector<CodebookBeam> ue_codebook;
  CodebookBeam serving;      // data precoder, follows PMI feedback
  CodebookBeam control;      // control-channel beam monitored for failure
  CVector ue_combiner;
  std::optional<CodebookBeam> pending_pmi;
  int pending_apply_slot = -1;
  BfiCounter bfi;
  int bfi_delivery_slot = -1;
  bool bfi_pending = false;
  int first_bfi_slot = -1;

  // ISAC tracking loop.
  TrackBelief belief;
  TrackState one_ahead;
  TrackState two_ahead;
  NoiseSpec noise;
  KinematicMonitor kinematic;
  int clean_streak = 0;

  // Recovery.
  std::optional<BfrEvent> active_bfr;
  std::vector<BfrEvent> bfr_events;
  CVector recovered_f;
  CVector recovered_v;
  bool sub6_active = false;
  double sub6_overhead = 0.0;

  std::vector<ProtocolEvent> events;
};

ConnectedState start_connected(Scheme scheme, const WorldTrace& world, const ProtocolConfig& cfg,
                               std::uint64_t seed);

/// Advances one slot: beam choice, data transmission, radar update or PMI
/// feedback, and the failure monitors with recovery.
SlotMetrics connected_step(ConnectedState& state, const WorldTrace& world, int slot);

/// Failure declared by the monitors of `state` so far, if any.
std::optional<BfrEvent> bfr_detect(const ConnectedState& state);

/// Runs the chosen recovery for a failure detected at `slot` and sets the
/// post-recovery link.
BfrEvent bfr_recover(RecoveryStrategy strategy, ConnectedState& state, const WorldTrace& world,
                     int slot);

/// Predict-only EKF step used while a measurement is rejected.
TrackBelief coast(const TrackBelief& belief, const NoiseSpec& noise, double dt);

/// Steering angles (azimuth, elevation) for a tracked state.
AnglePair steering_of(const TrackState& x, double height_difference);

std::string events_to_jsonl(const std::vector<ProtocolEvent>& events);

}  // namespace isac
