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


#include <gtest/gtest.h>

#include <algorithm>

#include "isac/experiment.hpp"
#include "isac/protocols.hpp"
#include "oracles.hpp"

namespace isac {
namespace {

ExperimentConfig short_config(int slots) {
  ExperimentConfig c;
  c.scenario.set_slot_count(slots);
  return c;
}

WorldTrace access_world(std::uint64_t seed) {
  ScenarioConfig sc;
  sc.set_slot_count(access_slot_budget(ProtocolConfig{}));
  return generate_scenario(sc, seed);
}

TEST(BfiCounterTest, SixIndicationsWithinTimer) {
  BfiCounter c;
  int fired = -1;
  for (int s = 0; s <= 40 && fired < 0; ++s) {
    if (c.on_slot(s, s % 5 == 0)) fired = s;
  }
  // Indications at 0, 5, ..., 25: the sixth one closes the count.
  EXPECT_EQ(fired, 25);
  EXPECT_EQ((fired + 5) * 0.125, 3.75);
}

TEST(BfiCounterTest, TimerExpiryResets) {
  BfiCounter c;
  for (int s = 0; s < 1000; ++s) EXPECT_FALSE(c.on_slot(s, s % 61 == 0));
  BfiCounter d;
  for (int s = 0; s < 5; ++s) d.on_slot(s * 5, true);
  EXPECT_FALSE(d.on_slot(200, false));
  EXPECT_EQ(d.count, 0);
}

TEST(KinematicMonitorTest, PersistenceWindow) {
  KinematicMonitor m;
  EXPECT_TRUE(m.is_hit(2.5, -1.5));
  EXPECT_FALSE(m.is_hit(2.5, 0.5));
  EXPECT_FALSE(m.is_hit(1.0, 3.0));
  int fired = -1;
  for (int s = 0; s < 40 && fired < 0; ++s) {
    if (m.on_slot(s, true)) fired = s;
  }
  EXPECT_EQ(fired, 11);
  EXPECT_EQ((fired + 1) * 0.125, 1.5);

  KinematicMonitor alt;
  for (int s = 0; s < 400; ++s) EXPECT_FALSE(alt.on_slot(s, s % 2 == 0));
  KinematicMonitor bad;
  bad.persist_slots = 30;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(InitialAccess, ConventionalPicksNearestBeam) {
  ProtocolConfig pc;
  const auto beams = access_codebook(ArrayGeometry{8, 8});
  ASSERT_EQ(beams.size(), 64u);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const WorldTrace w = access_world(seed);
    IaOptions o;
    o.noiseless = true;
    const IaOutcome out = run_initial_access(Scheme::kConventional, w, pc, seed, o);
    EXPECT_FALSE(out.used_fallback);
    // Geometric oracle: the codeword with the largest gain toward the vehicle.
    const auto a = oracle::upa_steering(w.at(out.arrival_slot).angles.azimuth,
                                        w.at(out.arrival_slot).angles.elevation, 8, 8);
    std::size_t best = 0;
    double g = -1.0;
    for (std::size_t k = 0; k < beams.size(); ++k) {
      const double gk = std::norm((a.transpose() * beams[k].weights)(0));
      if (gk > g) {
        g = gk;
        best = k;
      }
    }
    EXPECT_NEAR(out.chosen_theta, codebook_theta(beams[best]), 1e-12) << "seed " << seed;
    EXPECT_NEAR(out.angle_error, std::abs(codebook_theta(beams[best]) - out.true_theta), 1e-12);
    EXPECT_GT(out.latency_ms, 0.0);
  }
}

TEST(InitialAccess, NoiselessRadarBeatsCodebook) {
  ProtocolConfig pc;
  std::vector<double> radar, sweep;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const WorldTrace w = access_world(seed);
    IaOptions o;
    o.noiseless = true;
    const IaOutcome i = run_initial_access(Scheme::kIsac, w, pc, seed, o);
    const IaOutcome c = run_initial_access(Scheme::kConventional, w, pc, seed, o);
    EXPECT_TRUE(i.detected_by_radar);
    EXPECT_FALSE(i.used_fallback);
    radar.push_back(i.angle_error);
    sweep.push_back(c.angle_error);
  }
  EXPECT_LT(rmse(radar), rmse(sweep));
  EXPECT_LT(*std::max_element(radar.begin(), radar.end()), 0.01);
}

TEST(InitialAccess, ForcedMissFallsBack) {
  ProtocolConfig pc;
  const WorldTrace w = access_world(3);
  for (double arrival : {0.0, 7.3, 19.9}) {
    IaOptions o;
    o.arrival_ms = arrival;
    const IaOutcome conv = run_initial_access(Scheme::kConventional, w, pc, 3, o);
    o.force_miss = true;
    const IaOutcome out = run_initial_access(Scheme::kIsac, w, pc, 3, o);
    EXPECT_TRUE(out.used_fallback);
    EXPECT_FALSE(out.detected_by_radar);
    EXPECT_GE(out.latency_ms, 20.0 + conv.latency_ms - 1e-9);
  }
}

TEST(InitialAccess, Deterministic) {
  ProtocolConfig pc;
  pc.snr_db = 10.0;
  const WorldTrace w = access_world(9);
  const IaOutcome a = run_initial_access(Scheme::kIsac, w, pc, 9);
  const IaOutcome b = run_initial_access(Scheme::kIsac, w, pc, 9);
  EXPECT_EQ(a.latency_ms, b.latency_ms);
  EXPECT_EQ(a.chosen_theta, b.chosen_theta);
}

int default_bfr_slots() {
  const Blockage b = default_blockage(ProtocolConfig{});
  return b.start_slot + b.duration_slots + 160;
}

TEST(BeamFailure, ConventionalLatencyIsCsirsMultiple) {
  const ExperimentConfig cfg = short_config(default_bfr_slots());
  for (std::uint64_t seed : {1, 2}) {
    const RunReport r = run_single(ProtocolKind::kBfr, Scheme::kConventional, 20.0, seed, cfg);
    ASSERT_FALSE(r.error) << *r.error;
    ASSERT_TRUE(r.bfr && r.bfr->detected);
    EXPECT_EQ(r.bfr->false_failures, 0);
    EXPECT_NEAR(r.bfr->latency_ms, 3.75, 1e-9);
    const double periods = r.bfr->latency_ms / 0.625;
    EXPECT_NEAR(periods, std::round(periods), 1e-9);
  }
}

TEST(BeamFailure, KinematicLatencyBounds) {
  const ExperimentConfig cfg = short_config(default_bfr_slots());
  for (std::uint64_t seed : {1, 2}) {
    const RunReport r = run_single(ProtocolKind::kBfr, Scheme::kIsac, 20.0, seed, cfg);
    ASSERT_FALSE(r.error) << *r.error;
    ASSERT_TRUE(r.bfr && r.bfr->detected);
    EXPECT_EQ(r.bfr->false_failures, 0);
    EXPECT_GE(r.bfr->latency_ms, 1.5 - 1e-9);
    EXPECT_LE(r.bfr->latency_ms, 2.5 + 1e-9);
  }
}

TEST(BeamFailure, NlosBeamformingBeatsBeamTraining) {
  ExperimentConfig cfg = short_config(default_bfr_slots());
  // Keep the strong nearby reflector only.
  cfg.scenario.scatterers.resize(1);
  for (std::uint64_t seed : {1, 2, 3}) {
    const RunReport n = run_single(ProtocolKind::kBfr, Scheme::kIsac, 20.0, seed, cfg);
    const RunReport t = run_single(ProtocolKind::kBfr, Scheme::kConventional, 20.0, seed, cfg);
    ASSERT_TRUE(n.bfr && t.bfr);
    ASSERT_TRUE(n.bfr->detected && t.bfr->detected);
    EXPECT_EQ(n.strategy, RecoveryStrategy::kNlosBeamform);
    EXPECT_FALSE(n.bfr->radio_link_failure);
    EXPECT_LT(n.bfr->post_ber, t.bfr->post_ber) << "seed " << seed;
  }
}

TEST(BeamFailure, Sub6FallbackTradesRateForRobustness) {
  ExperimentConfig cfg = short_config(default_bfr_slots());
  cfg.protocol.isac_recovery = RecoveryStrategy::kSub6Fallback;
  const RunReport r = run_single(ProtocolKind::kBfr, Scheme::kIsac, 20.0, 4, cfg);
  ASSERT_FALSE(r.error) << *r.error;
  ASSERT_TRUE(r.bfr && r.bfr->detected && r.bfr->recovered_slot);
  const int start = r.bfr->blockage_start;
  const int det = *r.bfr->detected_slot;
  double pre_tput = 0.0;
  int pre_n = 0;
  std::uint64_t blk_err = 0, blk_bits = 0;
  for (const auto& row : r.rows) {
    if (row.slot >= 20 && row.slot < start) {
      pre_tput += row.throughput_mbps;
      ++pre_n;
    }
    if (row.slot >= start && row.slot <= det) {
      blk_err += row.bit_errors;
      blk_bits += row.bits;
    }
  }
  ASSERT_GT(pre_n, 0);
  ASSERT_GT(blk_bits, 0u);
  EXPECT_LT(r.bfr->post_throughput_mbps, pre_tput / pre_n);
  EXPECT_LT(r.bfr->post_ber, static_cast<double>(blk_err) / static_cast<double>(blk_bits));
}

TEST(BeamFailure, NoFalseFailuresOnClearRoad) {
  // Shortened runs keep this suite fast; the full-length check is in the acceptance binary.
  const ExperimentConfig cfg = short_config(1600);
  for (Scheme s : {Scheme::kConventional, Scheme::kIsac}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const RunReport r = run_single(ProtocolKind::kConnected, s, 20.0, seed, cfg);
      ASSERT_FALSE(r.error) << *r.error;
      const auto failures = std::count_if(r.events.begin(), r.events.end(),
                                          [](const ProtocolEvent& e) { return e.event == "beam_failure"; });
      EXPECT_EQ(failures, 0) << scheme_name(s) << " seed " << seed;
    }
  }
}

TEST(Connected, EventTraceDeterminism) {
  const ExperimentConfig cfg = short_config(default_bfr_slots());
  const RunReport a = run_single(ProtocolKind::kBfr, Scheme::kIsac, 15.0, 5, cfg);
  const RunReport b = run_single(ProtocolKind::kBfr, Scheme::kIsac, 15.0, 5, cfg);
  EXPECT_EQ(events_to_jsonl(a.events), events_to_jsonl(b.events));
  EXPECT_EQ(rows_csv(a.rows), rows_csv(b.rows));
  EXPECT_FALSE(a.events.empty());
}

TEST(Connected, StaticVehicleSettlesOnOneCodeword) {
  ScenarioConfig sc;
  sc.nominal_speed = 0.0;
  sc.speed_jitter_std = 0.0;
  sc.set_slot_count(400);
  const WorldTrace w = generate_scenario(sc, 1);
  ProtocolConfig pc;
  pc.snr_db = 60.0;
  ConnectedState st = start_connected(Scheme::kConventional, w, pc, 1);
  std::vector<double> psi;
  for (int s = 0; s < w.slot_count(); ++s) {
    connected_step(st, w, s);
    if (s >= 200) psi.push_back(st.serving.psi_x * 100 + st.serving.psi_y);
  }
  EXPECT_TRUE(std::all_of(psi.begin(), psi.end(), [&](double p) { return p == psi.front(); }));
}

TEST(Connected, SteeringUsesTrackedElevation) {
  const TrackState x{0.3, 40.0, 20.0, 1e-3};
  const AnglePair a = steering_of(x, 7.0);
  EXPECT_NEAR(a.elevation, elevation_for_range(40.0, 7.0), 1e-15);
  EXPECT_NEAR(tracked_from_steering(a), 0.3, 1e-12);
}

}  // namespace
}  // namespace isac
