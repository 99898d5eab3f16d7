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
#include <string>
#include <vector>

#include "isac/nr_frame.hpp"
#include "isac/protocols.hpp"
#include "isac/scenario.hpp"

namespace isac {

/// Bumped whenever a default in ScenarioConfig or ProtocolConfig changes.
inline constexpr const char* kDefaultsVersion = "1";

enum class ProtocolKind { kInitialAccess, kConnected, kBfr };

const char* protocol_name(ProtocolKind p);
ProtocolKind parse_protocol(const std::string& name);

// --- metrics ------------------------------------------------------------------

struct MetricSummary {
  std::size_t rows = 0;
  double theta_rmse = 0.0;
  double range_rmse = 0.0;
  double speed_rmse = 0.0;
  std::vector<double> theta_error_quantiles;  // 100 points, the last is the max
  std::uint64_t bit_errors = 0;
  std::uint64_t bits = 0;
  double ber = 0.0;
  double throughput_mbps = 0.0;  // mean over rows
};

double rmse(const std::vector<double>& errors);
/// Values at probabilities (k + 1) / n, k = 0..n-1, by the nearest-rank rule.
std::vector<double> empirical_quantiles(std::vector<double> values, int n = 100);
/// Fraction of values that are <= x.
double empirical_cdf(const std::vector<double>& values, double x);

MetricSummary compute_metrics(const std::vector<SlotMetrics>& rows);

// --- runs ---------------------------------------------------------------------

struct BfrSummary {
  int blockage_start = -1;
  bool detected = false;
  double latency_ms = std::numeric_limits<double>::quiet_NaN();
  int false_failures = 0;
  std::optional<int> detected_slot;
  std::optional<int> recovered_slot;
  bool radio_link_failure = false;
  double post_ber = std::numeric_limits<double>::quiet_NaN();
  double post_throughput_mbps = std::numeric_limits<double>::quiet_NaN();
};

/// Reference-signal bookkeeping of the frame plan a connected run used.
struct PlanOverhead {
  int dmrs_re_per_rb_period = 0;
  int csirs_re_per_rb_period = 0;
  double rs_fraction = 0.0;
  double csirs_fraction = 0.0;
  double oh_fraction = 0.0;
};

struct RunReport {
  ProtocolKind protocol = ProtocolKind::kConnected;
  Scheme scheme = Scheme::kConventional;
  RecoveryStrategy strategy = RecoveryStrategy::kBeamTraining;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::vector<SlotMetrics> rows;
  std::vector<ProtocolEvent> events;
  std::optional<MetricSummary> summary;
  std::optional<IaOutcome> ia;
  std::optional<BfrSummary> bfr;
  std::optional<PlanOverhead> overhead;
  std::optional<std::string> error;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  ProtocolConfig protocol;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
/// Canonical JSON of every field; the manifest hash is taken over this text.
std::string experiment_config_json(const ExperimentConfig& cfg);

struct ExperimentPlan {
  ProtocolKind protocol = ProtocolKind::kConnected;
  std::vector<Scheme> schemes{Scheme::kConventional, Scheme::kIsac};
  std::vector<double> snr_db{20.0};
  std::vector<std::uint64_t> seeds{1};
  ExperimentConfig config;
};

/// Default blockage used by BFR runs when the scenario has none: starts on a
/// CSI-RS occasion 10 ms into the run and lasts 30 ms.
Blockage default_blockage(const ProtocolConfig& cfg);

/// Slot budget needed by one initial-access run.
int access_slot_budget(const ProtocolConfig& cfg);

/// One (protocol, scheme, snr, seed) run. Protocol errors are captured in
/// `error`, never thrown.
RunReport run_single(ProtocolKind protocol, Scheme scheme, double snr_db, std::uint64_t seed,
                     const ExperimentConfig& cfg);

/// Parallel map over the (scheme, snr, seed) grid; the result order is
/// scheme-major, then SNR, then seed, independent of the thread count.
std::vector<RunReport> run_experiment(const ExperimentPlan& plan, int threads = 0);

/// Worker count from ISAC_SIM_THREADS, else the hardware concurrency.
int worker_threads();

// --- serialization --------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "slot,true_theta,est_theta,true_d,est_d,true_v,est_v,ber,throughput_mbps,event";

std::string format_number(double x);
std::string rows_csv(const std::vector<SlotMetrics>& rows);
std::string run_summary_json(const RunReport& run);
std::string summary_json(const std::vector<RunReport>& runs);
std::string ia_table_csv(const std::vector<RunReport>& runs);
std::string bfr_table_csv(const std::vector<RunReport>& runs);

std::uint64_t fnv1a64(const std::string& text);
std::string manifest_json(const ExperimentConfig& cfg, const std::string& command,
                          std::uint64_t seed, const std::vector<double>& snr_db);

}  // namespace isac
