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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "isac/experiment.hpp"
#include "isac/scenario.hpp"

namespace isac {
namespace {

using nlohmann::json;

TEST(Scenario, StartGeometry) {
  ScenarioConfig sc;
  sc.set_slot_count(10);
  const WorldTrace w = generate_scenario(sc, 1);
  EXPECT_NEAR(w.start_range(), std::sqrt(25.0 * 25 + 40 * 40 + 7 * 7), 1e-12);
  EXPECT_NEAR(w.start_range(), 47.69, 0.005);
  EXPECT_EQ(w.height_difference(), 7.0);
  EXPECT_NEAR(w.at(0).angles.elevation, elevation_for_range(w.start_range(), 7.0), 1e-12);
}

TEST(Scenario, ZeroJitterIsConstantSpeed) {
  ScenarioConfig sc;
  sc.speed_jitter_std = 0.0;
  sc.set_slot_count(2000);
  const WorldTrace w = generate_scenario(sc, 4);
  for (int k = 0; k < w.slot_count(); ++k) {
    ASSERT_EQ(w.at(k).speed, 20.0);
    for (const auto& p : w.radar_paths(k)) {
      if (!p.is_los) {
        ASSERT_EQ(p.doppler, 0.0);
      }
    }
  }
}

TEST(Scenario, ContinuityOverFullTrace) {
  const WorldTrace w = generate_scenario(ScenarioConfig{}, 2);
  ASSERT_EQ(w.slot_count(), 32000);
  double worst = 0.0;
  for (int k = 1; k < w.slot_count(); ++k) worst = std::max(worst, std::abs(w.at(k).range - w.at(k - 1).range));
  EXPECT_LE(worst, 20.5 * 1.25e-4);
}

TEST(Scenario, RegenerationIsBitIdentical) {
  ScenarioConfig sc;
  sc.set_slot_count(500);
  const WorldTrace a = generate_scenario(sc, 77), b = generate_scenario(sc, 77), c = generate_scenario(sc, 78);
  bool differs = false;
  for (int k = 0; k < 500; ++k) {
    ASSERT_EQ(a.at(k).position, b.at(k).position);
    ASSERT_EQ(a.at(k).speed, b.at(k).speed);
    differs |= a.at(k).speed != c.at(k).speed;
  }
  EXPECT_TRUE(differs);
}

TEST(Scenario, AlignedLinkMeetsNominalSnr) {
  ScenarioConfig sc;
  sc.set_slot_count(10);
  sc.scatterers.clear();
  const WorldTrace w = generate_scenario(sc, 1);
  const PathSet los = w.comm_paths(0);
  ASSERT_EQ(los.size(), 1u);
  const CVector f = conjugate_beamformer(los[0].angles, sc.gnb_array);
  const CVector v = conjugate_beamformer(los[0].angles, sc.ue_array);
  const OfdmConfig oc = OfdmConfig::nr(3, 64, 14, sc.carrier_frequency);
  for (double snr_db : {0.0, 17.0, 30.0}) {
    const LinkBudget lb = link_budget(w, snr_db);
    const double snr = comm_receive_snr(los, f, v, sc.gnb_array, sc.ue_array, oc, lb.comm_noise_var);
    EXPECT_NEAR(snr / db_to_linear(snr_db), 1.0, 1e-9);
  }
}

TEST(Metrics, Examples) {
  EXPECT_NEAR(rmse(std::vector<double>(50, -0.3)), 0.3, 1e-15);
  EXPECT_TRUE(std::isnan(rmse({})));
  const std::vector<double> sample{0.4, 0.1, 0.9, 0.2, 0.3};
  EXPECT_EQ(empirical_cdf(sample, 0.9), 1.0);
  EXPECT_EQ(empirical_cdf(sample, 0.25), 0.4);
  const auto q = empirical_quantiles(sample);
  ASSERT_EQ(q.size(), 100u);
  EXPECT_EQ(q.back(), 0.9);
  EXPECT_EQ(q.front(), 0.1);
  EXPECT_TRUE(std::is_sorted(q.begin(), q.end()));

  std::vector<SlotMetrics> rows(20);
  for (int k = 0; k < 20; ++k) {
    rows[k].slot = k;
    rows[k].bits = 1000;
    rows[k].bit_errors = k < 10 ? 0 : 100;
    rows[k].true_theta = 0.5;
    rows[k].est_theta = 0.5 + 0.01;
  }
  const MetricSummary m = compute_metrics(rows);
  EXPECT_NEAR(m.ber, 0.05, 1e-15);
  EXPECT_NEAR(m.theta_rmse, 0.01, 1e-12);
  EXPECT_TRUE(std::isnan(m.range_rmse));
  EXPECT_THROW(compute_metrics({}), InputShapeError);
}

ExperimentConfig quick(int slots) {
  ExperimentConfig c;
  c.scenario.set_slot_count(slots);
  return c;
}

TEST(Experiment, RerunIsBitIdentical) {
  const ExperimentConfig cfg = quick(300);
  for (Scheme s : {Scheme::kConventional, Scheme::kIsac}) {
    const RunReport a = run_single(ProtocolKind::kConnected, s, 25.0, 7, cfg);
    const RunReport b = run_single(ProtocolKind::kConnected, s, 25.0, 7, cfg);
    ASSERT_FALSE(a.error);
    EXPECT_EQ(rows_csv(a.rows), rows_csv(b.rows));
    EXPECT_EQ(run_summary_json(a), run_summary_json(b));
    EXPECT_EQ(events_to_jsonl(a.events), events_to_jsonl(b.events));
  }
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  ExperimentPlan plan;
  plan.config = quick(200);
  plan.snr_db = {10.0, 20.0};
  plan.seeds = {1, 2};
  const auto one = run_experiment(plan, 1);
  const auto two = run_experiment(plan, 2);
  EXPECT_EQ(summary_json(one), summary_json(two));
  ASSERT_EQ(one.size(), 8u);
  EXPECT_EQ(one.front().scheme, Scheme::kConventional);
  EXPECT_EQ(one.back().scheme, Scheme::kIsac);
}

TEST(Experiment, PlanOverheadColumns) {
  const ExperimentConfig cfg = quick(50);
  const RunReport i = run_single(ProtocolKind::kConnected, Scheme::kIsac, 20.0, 1, cfg);
  const RunReport c = run_single(ProtocolKind::kConnected, Scheme::kConventional, 20.0, 1, cfg);
  ASSERT_TRUE(i.overhead && c.overhead);
  EXPECT_EQ(i.overhead->dmrs_re_per_rb_period, 42);
  EXPECT_EQ(i.overhead->csirs_re_per_rb_period, 0);
  EXPECT_EQ(i.overhead->csirs_fraction, 0.0);
  EXPECT_EQ(c.overhead->dmrs_re_per_rb_period, 42);
  EXPECT_EQ(c.overhead->csirs_re_per_rb_period, 32);
  const json j = json::parse(run_summary_json(i));
  EXPECT_EQ(j.at("overhead").at("csirs_re_per_rb_period"), 0);
}

TEST(Experiment, EventSlotsInsideTrace) {
  ExperimentConfig cfg = quick(500);
  const RunReport r = run_single(ProtocolKind::kBfr, Scheme::kConventional, 20.0, 3, cfg);
  ASSERT_FALSE(r.error);
  ASSERT_FALSE(r.events.empty());
  for (const auto& e : r.events) {
    EXPECT_GE(e.slot, 0);
    EXPECT_LT(e.slot, 500);
  }
}

TEST(Experiment, ErrorsAreRecordedNotThrown) {
  ExperimentConfig cfg = quick(10);
  cfg.protocol.bits_per_symbol = 3;
  const RunReport r = run_single(ProtocolKind::kConnected, Scheme::kIsac, 20.0, 1, cfg);
  ASSERT_TRUE(r.error.has_value());
  EXPECT_NE(r.error->find("bits_per_symbol"), std::string::npos);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.scenario.set_slot_count(1234);
  c.scenario.speed_jitter_std = 0.25;
  c.protocol.radar_subcarriers = 128;
  c.protocol.isac_recovery = RecoveryStrategy::kSub6Fallback;
  const std::string text = experiment_config_json(c);
  const ExperimentConfig back = experiment_config_from_json(text);
  EXPECT_EQ(experiment_config_json(back), text);
  EXPECT_EQ(back.scenario.slot_count, 1234);
  EXPECT_EQ(back.protocol.isac_recovery, RecoveryStrategy::kSub6Fallback);
}

TEST(Config, StrictParsing) {
  EXPECT_THROW(experiment_config_from_json(R"({"scenario": {"bogus": 1}})"), ConfigError);
  EXPECT_THROW(experiment_config_from_json(R"({"colour": "red"})"), ConfigError);
  EXPECT_THROW(experiment_config_from_json(R"({"protocol": {"p_fa": "high"}})"), ConfigError);
  EXPECT_THROW(experiment_config_from_json("{not json"), ConfigError);
  EXPECT_THROW(experiment_config_from_json(R"({"protocol": {"frame": {"ssb_period_ms": 15}}})"), ConfigError);
  const ExperimentConfig d = experiment_config_from_json(R"({"scenario": {"duration": 0.5}})");
  EXPECT_EQ(d.scenario.slot_count, 4000);
  const ExperimentConfig e =
      experiment_config_from_json(R"({"scenario": {"duration": 0.5, "slot_count": 100}})");
  EXPECT_EQ(e.scenario.slot_count, 100);
}

TEST(Config, LoadReportsPath) {
  const std::string missing = "/nonexistent/dir/cfg.json";
  try {
    load_experiment_config(missing);
    FAIL() << "expected a configuration error";
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find(missing), std::string::npos);
  }
  const auto path = std::filesystem::temp_directory_path() / "isac_cfg_test.json";
  {
    std::ofstream(path) << R"({"protocol": {"snr_db": 12.5}})";
  }
  EXPECT_EQ(load_experiment_config(path.string()).protocol.snr_db, 12.5);
  std::filesystem::remove(path);
}

TEST(Output, ManifestAndFormatting) {
  EXPECT_EQ(format_number(std::nan("")), "");
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  const ExperimentConfig c;
  const json m = json::parse(manifest_json(c, "connected --snr 20", 7, {20.0}));
  EXPECT_EQ(m.at("seed"), 7);
  EXPECT_EQ(m.at("command"), "connected --snr 20");
  EXPECT_EQ(m.at("defaults_version"), kDefaultsVersion);
  EXPECT_EQ(m.at("config_hash").get<std::string>().rfind("fnv1a64:", 0), 0u);
  EXPECT_EQ(std::string(kCsvHeader),
            "slot,true_theta,est_theta,true_d,est_d,true_v,est_v,ber,throughput_mbps,event");
  EXPECT_EQ(rows_csv({}).substr(0, std::string(kCsvHeader).size()), kCsvHeader);
}

}  // namespace
}  // namespace isac
