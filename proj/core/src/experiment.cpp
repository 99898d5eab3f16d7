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

#include "isac/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace isac {

using nlohmann::json;

const char* protocol_name(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::kInitialAccess: return "ia";
    case ProtocolKind::kConnected: return "connected";
    case ProtocolKind::kBfr: return "bfr";
  }
  return "unknown";
}

ProtocolKind parse_protocol(const std::string& name) {
  if (name == "ia") return ProtocolKind::kInitialAccess;
  if (name == "connected") return ProtocolKind::kConnected;
  if (name == "bfr") return ProtocolKind::kBfr;
  throw ConfigError("unknown protocol '" + name + "'");
}

// ---------------------------------------------------------------------------
// Metrics

double rmse(const std::vector<double>& errors) {
  if (errors.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double e : errors) acc += e * e;
  return std::sqrt(acc / static_cast<double>(errors.size()));
}

std::vector<double> empirical_quantiles(std::vector<double> values, int n) {
  if (values.empty()) throw InputShapeError("quantiles of an empty sample");
  if (n < 1) throw DomainError("quantile count must be positive");
  std::sort(values.begin(), values.end());
  std::vector<double> q(static_cast<std::size_t>(n));
  const auto size = static_cast<double>(values.size());
  for (int k = 0; k < n; ++k) {
    const double p = static_cast<double>(k + 1) / n;
    auto rank = static_cast<std::size_t>(std::ceil(p * size - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    q[static_cast<std::size_t>(k)] = values[rank - 1];
  }
  return q;
}

double empirical_cdf(const std::vector<double>& values, double x) {
  if (values.empty()) throw InputShapeError("CDF of an empty sample");
  const auto n = std::count_if(values.begin(), values.end(), [x](double v) { return v <= x; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

MetricSummary compute_metrics(const std::vector<SlotMetrics>& rows) {
  if (rows.empty()) throw InputShapeError("no rows to summarize");
  MetricSummary s;
  s.rows = rows.size();
  std::vector<double> eth, ed, ev;
  double tput = 0.0;
  for (const auto& r : rows) {
    if (std::isfinite(r.est_theta)) eth.push_back(std::abs(r.est_theta - r.true_theta));
    if (std::isfinite(r.est_d)) ed.push_back(r.est_d - r.true_d);
    if (std::isfinite(r.est_v)) ev.push_back(r.est_v - r.true_v);
    s.bit_errors += r.bit_errors;
    s.bits += r.bits;
    tput += r.throughput_mbps;
  }
  s.theta_rmse = rmse(eth);
  s.range_rmse = rmse(ed);
  s.speed_rmse = rmse(ev);
  if (!eth.empty()) s.theta_error_quantiles = empirical_quantiles(eth, 100);
  s.ber = s.bits ? static_cast<double>(s.bit_errors) / static_cast<double>(s.bits)
                 : std::numeric_limits<double>::quiet_NaN();
  s.throughput_mbps = tput / static_cast<double>(rows.size());
  return s;
}

// ---------------------------------------------------------------------------
// Configuration files

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(std::string("'") + key + "' must be an array of three numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ArrayGeometry array_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(std::string("'") + key + "' must be [n_x, n_y]");
  }
  ArrayGeometry g{j[0].get<int>(), j[1].get<int>()};
  try {
    g.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("'") + key + "': " + e.what());
  }
  return g;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json scenario_json(const ScenarioConfig& s) {
  json j;
  j["gnb_position"] = vec3_json(s.gnb_position);
  j["vehicle_start"] = vec3_json(s.vehicle_start);
  j["road_direction"] = vec3_json(s.road_direction);
  j["nominal_speed"] = s.nominal_speed;
  j["speed_jitter_std"] = s.speed_jitter_std;
  j["speed_jitter_corr_time"] = s.speed_jitter_corr_time;
  j["duration"] = s.duration;
  j["slot_duration"] = s.slot_duration;
  j["slot_count"] = s.slot_count;
  j["carrier_frequency"] = s.carrier_frequency;
  j["vehicle_rcs"] = s.vehicle_rcs;
  j["nlos_comm_gain"] = s.nlos_comm_gain;
  j["scatterers"] = json::array();
  for (const auto& sc : s.scatterers) {
    j["scatterers"].push_back({{"position", vec3_json(sc.position)}, {"rcs", sc.rcs}});
  }
  if (s.blockage) {
    const auto& b = *s.blockage;
    j["blockage"] = {{"start_slot", b.start_slot},         {"duration_slots", b.duration_slots},
                     {"blocker", b.blocker},               {"blocker_offset", b.blocker_offset},
                     {"blocker_speed", b.blocker_speed},   {"blocker_rcs", b.blocker_rcs}};
  } else {
    j["blockage"] = nullptr;
  }
  j["gnb_array"] = {s.gnb_array.n_x, s.gnb_array.n_y};
  j["ue_array"] = {s.ue_array.n_x, s.ue_array.n_y};
  return j;
}

ScenarioConfig scenario_from(const json& j) {
  reject_unknown(j,
                 {"gnb_position", "vehicle_start", "road_direction", "nominal_speed",
                  "speed_jitter_std", "speed_jitter_corr_time", "duration", "slot_duration",
                  "slot_count", "carrier_frequency", "vehicle_rcs", "nlos_comm_gain", "scatterers",
                  "blockage", "gnb_array", "ue_array"},
                 "scenario");
  ScenarioConfig s;
  if (j.contains("gnb_position")) s.gnb_position = vec3_from(j["gnb_position"], "gnb_position");
  if (j.contains("vehicle_start")) s.vehicle_start = vec3_from(j["vehicle_start"], "vehicle_start");
  if (j.contains("road_direction")) s.road_direction = vec3_from(j["road_direction"], "road_direction");
  read(j, "nominal_speed", s.nominal_speed);
  read(j, "speed_jitter_std", s.speed_jitter_std);
  read(j, "speed_jitter_corr_time", s.speed_jitter_corr_time);
  read(j, "slot_duration", s.slot_duration);
  read(j, "carrier_frequency", s.carrier_frequency);
  read(j, "vehicle_rcs", s.vehicle_rcs);
  read(j, "nlos_comm_gain", s.nlos_comm_gain);
  // slot_count wins over duration; either one alone keeps the pair consistent.
  if (j.contains("slot_count")) {
    s.set_slot_count(j["slot_count"].get<int>());
  } else if (j.contains("duration")) {
    s.set_slot_count(static_cast<int>(std::lround(j["duration"].get<double>() / s.slot_duration)));
  } else {
    s.set_slot_count(static_cast<int>(std::lround(s.duration / s.slot_duration)));
  }
  if (j.contains("scatterers")) {
    s.scatterers.clear();
    for (const auto& e : j["scatterers"]) {
      reject_unknown(e, {"position", "rcs"}, "scatterers[]");
      Scatterer sc;
      sc.position = vec3_from(e.at("position"), "position");
      read(e, "rcs", sc.rcs);
      s.scatterers.push_back(sc);
    }
  }
  if (j.contains("blockage") && !j["blockage"].is_null()) {
    const json& b = j["blockage"];
    reject_unknown(b,
                   {"start_slot", "duration_slots", "blocker", "blocker_offset", "blocker_speed",
                    "blocker_rcs"},
                   "blockage");
    Blockage bl;
    read(b, "start_slot", bl.start_slot);
    read(b, "duration_slots", bl.duration_slots);
    read(b, "blocker", bl.blocker);
    read(b, "blocker_offset", bl.blocker_offset);
    read(b, "blocker_speed", bl.blocker_speed);
    read(b, "blocker_rcs", bl.blocker_rcs);
    s.blockage = bl;
  }
  if (j.contains("gnb_array")) s.gnb_array = array_from(j["gnb_array"], "gnb_array");
  if (j.contains("ue_array")) s.ue_array = array_from(j["ue_array"], "ue_array");
  s.validate();
  return s;
}

json protocol_json(const ProtocolConfig& p) {
  json j;
  j["snr_db"] = p.snr_db;
  j["tx_power"] = p.tx_power;
  j["radar_offset_db"] = p.radar_offset_db;
  j["numerology"] = p.numerology;
  j["bits_per_symbol"] = p.bits_per_symbol;
  j["ber_symbols_per_slot"] = p.ber_symbols_per_slot;
  j["radar_subcarriers"] = p.radar_subcarriers;
  j["radar_decimation"] = p.radar_decimation;
  j["ia_subcarriers"] = p.ia_subcarriers;
  j["ia_accumulation_slots"] = p.ia_accumulation_slots;
  j["ia_window_ms"] = p.ia_window_ms;
  j["p_fa"] = p.p_fa;
  j["gnb_oversample"] = p.gnb_oversample;
  j["ue_oversample"] = p.ue_oversample;
  j["ssb_subset_beams"] = p.ssb_subset_beams;
  j["bfd_timer_slots"] = p.bfd_timer_slots;
  j["bfi_max"] = p.bfi_max;
  j["rsrp_margin_db"] = p.rsrp_margin_db;
  j["candidate_margin_db"] = p.candidate_margin_db;
  j["rsrp_res"] = p.rsrp_res;
  j["dr_threshold"] = p.dr_threshold;
  j["dv_threshold"] = p.dv_threshold;
  j["persist_slots"] = p.persist_slots;
  j["window_slots"] = p.window_slots;
  j["rar_processing_slots"] = p.rar_processing_slots;
  j["isac_recovery"] = strategy_name(p.isac_recovery);
  j["sub6_carrier"] = p.sub6_carrier;
  j["sub6_numerology"] = p.sub6_numerology;
  j["sub6_prb"] = p.sub6_prb;
  j["sub6_los_loss_db"] = p.sub6_los_loss_db;
  const FrameOptions& f = p.frame;
  j["frame"] = {{"slot_pattern", f.slot_pattern},   {"ssb_period_ms", f.ssb_period_ms},
                {"csirs_period_slots", f.csirs_period_slots},
                {"csirs_ports", f.csirs_ports},     {"csirs_offset", f.csirs_offset},
                {"s_dl_symbols", f.s_dl_symbols},   {"s_guard_symbols", f.s_guard_symbols},
                {"s_ul_symbols", f.s_ul_symbols},   {"prb_count", f.prb_count},
                {"ssb_rbs", f.ssb_rbs}};
  const GatedOptions& g = p.gated;
  j["gated"] = {{"gate_bins", g.gate_bins},
                {"bartlett_oversample", g.bartlett_oversample},
                {"az_half_width", g.az_half_width},
                {"delay_stop_fraction", g.delay_stop_fraction},
                {"doppler_stop_fraction", g.doppler_stop_fraction},
                {"az_stop", g.az_stop}};
  return j;
}

ProtocolConfig protocol_from(const json& j) {
  reject_unknown(j,
                 {"snr_db", "tx_power", "radar_offset_db", "numerology", "bits_per_symbol",
                  "ber_symbols_per_slot", "radar_subcarriers", "radar_decimation",
                  "ia_subcarriers", "ia_accumulation_slots", "ia_window_ms", "p_fa",
                  "gnb_oversample", "ue_oversample", "ssb_subset_beams", "bfd_timer_slots",
                  "bfi_max", "rsrp_margin_db", "candidate_margin_db", "rsrp_res", "dr_threshold",
                  "dv_threshold", "persist_slots", "window_slots", "rar_processing_slots",
                  "isac_recovery", "sub6_carrier", "sub6_numerology", "sub6_prb",
                  "sub6_los_loss_db", "frame", "gated"},
                 "protocol");
  ProtocolConfig p;
  read(j, "snr_db", p.snr_db);
  read(j, "tx_power", p.tx_power);
  read(j, "radar_offset_db", p.radar_offset_db);
  read(j, "numerology", p.numerology);
  read(j, "bits_per_symbol", p.bits_per_symbol);
  read(j, "ber_symbols_per_slot", p.ber_symbols_per_slot);
  read(j, "radar_subcarriers", p.radar_subcarriers);
  read(j, "radar_decimation", p.radar_decimation);
  read(j, "ia_subcarriers", p.ia_subcarriers);
  read(j, "ia_accumulation_slots", p.ia_accumulation_slots);
  read(j, "ia_window_ms", p.ia_window_ms);
  read(j, "p_fa", p.p_fa);
  read(j, "gnb_oversample", p.gnb_oversample);
  read(j, "ue_oversample", p.ue_oversample);
  read(j, "ssb_subset_beams", p.ssb_subset_beams);
  read(j, "bfd_timer_slots", p.bfd_timer_slots);
  read(j, "bfi_max", p.bfi_max);
  read(j, "rsrp_margin_db", p.rsrp_margin_db);
  read(j, "candidate_margin_db", p.candidate_margin_db);
  read(j, "rsrp_res", p.rsrp_res);
  read(j, "dr_threshold", p.dr_threshold);
  read(j, "dv_threshold", p.dv_threshold);
  read(j, "persist_slots", p.persist_slots);
  read(j, "window_slots", p.window_slots);
  read(j, "rar_processing_slots", p.rar_processing_slots);
  if (j.contains("isac_recovery")) p.isac_recovery = parse_strategy(j["isac_recovery"].get<std::string>());
  read(j, "sub6_carrier", p.sub6_carrier);
  read(j, "sub6_numerology", p.sub6_numerology);
  read(j, "sub6_prb", p.sub6_prb);
  read(j, "sub6_los_loss_db", p.sub6_los_loss_db);
  if (j.contains("frame")) {
    const json& f = j["frame"];
    reject_unknown(f,
                   {"slot_pattern", "ssb_period_ms", "csirs_period_slots", "csirs_ports",
                    "csirs_offset", "s_dl_symbols", "s_guard_symbols", "s_ul_symbols", "prb_count",
                    "ssb_rbs"},
                   "frame");
    read(f, "slot_pattern", p.frame.slot_pattern);
    read(f, "ssb_period_ms", p.frame.ssb_period_ms);
    read(f, "csirs_period_slots", p.frame.csirs_period_slots);
    read(f, "csirs_ports", p.frame.csirs_ports);
    read(f, "csirs_offset", p.frame.csirs_offset);
    read(f, "s_dl_symbols", p.frame.s_dl_symbols);
    read(f, "s_guard_symbols", p.frame.s_guard_symbols);
    read(f, "s_ul_symbols", p.frame.s_ul_symbols);
    read(f, "prb_count", p.frame.prb_count);
    read(f, "ssb_rbs", p.frame.ssb_rbs);
  }
  if (j.contains("gated")) {
    const json& g = j["gated"];
    reject_unknown(g,
                   {"gate_bins", "bartlett_oversample", "az_half_width", "delay_stop_fraction",
                    "doppler_stop_fraction", "az_stop"},
                   "gated");
    read(g, "gate_bins", p.gated.gate_bins);
    read(g, "bartlett_oversample", p.gated.bartlett_oversample);
    read(g, "az_half_width", p.gated.az_half_width);
    read(g, "delay_stop_fraction", p.gated.delay_stop_fraction);
    read(g, "doppler_stop_fraction", p.gated.doppler_stop_fraction);
    read(g, "az_stop", p.gated.az_stop);
  }
  p.validate();
  // Both frame plans must be buildable with these options.
  (void)build_frame_plan(Scheme::kConventional, p.numerology, p.frame);
  (void)build_frame_plan(Scheme::kIsac, p.numerology, p.frame);
  return p;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  try {
    reject_unknown(j, {"scenario", "protocol"}, "top level");
    ExperimentConfig cfg;
    if (j.contains("scenario")) cfg.scenario = scenario_from(j["scenario"]);
    if (j.contains("protocol")) cfg.protocol = protocol_from(j["protocol"]);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid value: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return experiment_config_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json j;
  j["scenario"] = scenario_json(cfg.scenario);
  j["protocol"] = protocol_json(cfg.protocol);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Runs

Blockage default_blockage(const ProtocolConfig& cfg) {
  Blockage b;
  b.start_slot = 80 + std::max(cfg.frame.csirs_offset, 0);
  b.duration_slots = 240;
  return b;
}

int access_slot_budget(const ProtocolConfig& cfg) {
  const FramePlan plan = build_frame_plan(Scheme::kConventional, cfg.numerology, cfg.frame);
  const int window = static_cast<int>(
      std::ceil(cfg.ia_window_ms / numerology_params(cfg.numerology).slot_duration() * 1e-3));
  return 2 * window + 2 * plan.slots_per_ssb_period() + 4 * cfg.ia_accumulation_slots + 80;
}

namespace {

BfrSummary summarize_bfr(const ConnectedState& st, const std::vector<SlotMetrics>& rows,
                         const Blockage& b, double dt) {
  BfrSummary s;
  s.blockage_start = b.start_slot;
  const int end = b.start_slot + b.duration_slots;
  std::vector<BfrEvent> all = st.bfr_events;
  if (st.active_bfr) all.push_back(*st.active_bfr);
  for (const auto& e : all) {
    if (e.detected_slot < b.start_slot) {
      ++s.false_failures;
    } else if (e.detected_slot < end && !s.detected) {
      s.detected = true;
      s.detected_slot = e.detected_slot;
      s.latency_ms = (e.detected_slot - b.start_slot + 1) * dt * 1e3;
      s.recovered_slot = e.recovered_slot;
      s.radio_link_failure = e.radio_link_failure;
    }
  }
  const int from = s.recovered_slot ? *s.recovered_slot : b.start_slot;
  std::uint64_t errs = 0, bits = 0;
  double tput = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.slot < from || r.slot >= end) continue;
    errs += r.bit_errors;
    bits += r.bits;
    tput += r.throughput_mbps;
    ++n;
  }
  if (bits) s.post_ber = static_cast<double>(errs) / static_cast<double>(bits);
  if (n) s.post_throughput_mbps = tput / n;
  return s;
}

}  // namespace

RunReport run_single(ProtocolKind protocol, Scheme scheme, double snr_db, std::uint64_t seed,
                     const ExperimentConfig& cfg) {
  RunReport r;
  r.protocol = protocol;
  r.scheme = scheme;
  r.snr_db = snr_db;
  r.seed = seed;
  ProtocolConfig pc = cfg.protocol;
  pc.snr_db = snr_db;
  r.strategy = scheme == Scheme::kIsac ? pc.isac_recovery : RecoveryStrategy::kBeamTraining;
  ScenarioConfig sc = cfg.scenario;
  try {
    if (protocol == ProtocolKind::kInitialAccess) {
      sc.set_slot_count(access_slot_budget(pc));
      sc.blockage.reset();
      const WorldTrace world = generate_scenario(sc, seed);
      r.ia = run_initial_access(scheme, world, pc, seed);
      return r;
    }
    if (protocol == ProtocolKind::kBfr && !sc.blockage) sc.blockage = default_blockage(pc);
    const WorldTrace world = generate_scenario(sc, seed);
    ConnectedState st = start_connected(scheme, world, pc, seed);
    const OverheadMetrics om = overhead_metrics(st.plan);
    r.overhead = PlanOverhead{st.plan.dmrs_re_per_rb_period, st.plan.csirs_re_per_rb_period,
                              om.rs_fraction, om.csirs_fraction, om.oh_fraction};
    r.rows.reserve(static_cast<std::size_t>(world.slot_count()));
    for (int k = 0; k < world.slot_count(); ++k) r.rows.push_back(connected_step(st, world, k));
    r.events = st.events;
    r.summary = compute_metrics(r.rows);
    if (protocol == ProtocolKind::kBfr) {
      r.bfr = summarize_bfr(st, r.rows, *sc.blockage, sc.slot_duration);
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

int worker_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ISAC_SIM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = n > 0 ? std::min(n, v) : v;
  }
  return std::max(n, 1);
}

std::vector<RunReport> run_experiment(const ExperimentPlan& plan, int threads) {
  if (plan.schemes.empty() || plan.snr_db.empty() || plan.seeds.empty()) {
    throw ConfigError("experiment grid is empty");
  }
  struct Job {
    Scheme scheme;
    double snr;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Scheme s : plan.schemes) {
    for (double snr : plan.snr_db) {
      for (std::uint64_t seed : plan.seeds) jobs.push_back({s, snr, seed});
    }
  }
  std::vector<RunReport> out(jobs.size());
  const int workers = std::clamp(threads > 0 ? threads : worker_threads(), 1,
                                 static_cast<int>(jobs.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      out[i] = run_single(plan.protocol, jobs[i].scheme, jobs[i].snr, jobs[i].seed, plan.config);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_number(double x) {
  if (!std::isfinite(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::string rows_csv(const std::vector<SlotMetrics>& rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.slot);
    for (double v : {r.true_theta, r.est_theta, r.true_d, r.est_d, r.true_v, r.est_v, r.ber(),
                     r.throughput_mbps}) {
      out += ',';
      out += format_number(v);
    }
    out += ',';
    out += r.event;
    out += '\n';
  }
  return out;
}

namespace {

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json run_json(const RunReport& r) {
  json j;
  j["protocol"] = protocol_name(r.protocol);
  j["scheme"] = scheme_name(r.scheme);
  j["snr_db"] = r.snr_db;
  j["seed"] = r.seed;
  if (r.protocol != ProtocolKind::kInitialAccess) j["recovery"] = strategy_name(r.strategy);
  if (r.error) j["error"] = *r.error;
  if (r.summary) {
    const MetricSummary& s = *r.summary;
    j["rows"] = s.rows;
    j["theta_rmse"] = number_or_null(s.theta_rmse);
    j["range_rmse"] = number_or_null(s.range_rmse);
    j["speed_rmse"] = number_or_null(s.speed_rmse);
    j["ber"] = number_or_null(s.ber);
    j["bits"] = s.bits;
    j["throughput_mbps"] = number_or_null(s.throughput_mbps);
  }
  if (r.ia) {
    const IaOutcome& a = *r.ia;
    j["ia"] = {{"latency_ms", a.latency_ms},
               {"angle_error", a.angle_error},
               {"chosen_theta", a.chosen_theta},
               {"true_theta", a.true_theta},
               {"detected_by_radar", a.detected_by_radar},
               {"used_fallback", a.used_fallback},
               {"arrival_slot", a.arrival_slot},
               {"rar_slot", a.rar_slot}};
  }
  if (r.overhead) {
    const PlanOverhead& o = *r.overhead;
    j["overhead"] = {{"dmrs_re_per_rb_period", o.dmrs_re_per_rb_period},
                     {"csirs_re_per_rb_period", o.csirs_re_per_rb_period},
                     {"rs_fraction", o.rs_fraction},
                     {"csirs_fraction", o.csirs_fraction},
                     {"oh_fraction", o.oh_fraction}};
  }
  if (r.bfr) {
    const BfrSummary& b = *r.bfr;
    j["bfr"] = {{"blockage_start", b.blockage_start},
                {"detected", b.detected},
                {"latency_ms", number_or_null(b.latency_ms)},
                {"false_failures", b.false_failures},
                {"detected_slot", b.detected_slot ? json(*b.detected_slot) : json(nullptr)},
                {"recovered_slot", b.recovered_slot ? json(*b.recovered_slot) : json(nullptr)},
                {"radio_link_failure", b.radio_link_failure},
                {"post_ber", number_or_null(b.post_ber)},
                {"post_throughput_mbps", number_or_null(b.post_throughput_mbps)}};
  }
  return j;
}

}  // namespace

std::string run_summary_json(const RunReport& run) { return run_json(run).dump(2); }

std::string summary_json(const std::vector<RunReport>& runs) {
  json j;
  j["runs"] = json::array();
  struct Agg {
    int n = 0, errors = 0, detected = 0, fallback = 0, bfr_detected = 0, false_failures = 0;
    int n_range = 0, n_speed = 0;
    double theta = 0, range = 0, speed = 0, tput = 0, latency = 0, bfr_latency = 0;
    std::uint64_t bit_errors = 0, bits = 0;
    std::vector<double> ia_err;
  };
  std::map<std::tuple<int, std::string, double>, Agg> groups;
  for (const auto& r : runs) {
    j["runs"].push_back(run_json(r));
    Agg& a = groups[{static_cast<int>(r.protocol), scheme_name(r.scheme), r.snr_db}];
    ++a.n;
    if (r.error) {
      ++a.errors;
      continue;
    }
    if (r.summary) {
      a.theta += r.summary->theta_rmse;
      if (std::isfinite(r.summary->range_rmse)) {
        a.range += r.summary->range_rmse;
        ++a.n_range;
      }
      if (std::isfinite(r.summary->speed_rmse)) {
        a.speed += r.summary->speed_rmse;
        ++a.n_speed;
      }
      a.tput += r.summary->throughput_mbps;
      a.bit_errors += r.summary->bit_errors;
      a.bits += r.summary->bits;
    }
    if (r.ia) {
      a.detected += r.ia->detected_by_radar;
      a.fallback += r.ia->used_fallback;
      a.latency += r.ia->latency_ms;
      a.ia_err.push_back(r.ia->angle_error);
    }
    if (r.bfr) {
      a.false_failures += r.bfr->false_failures;
      if (r.bfr->detected) {
        ++a.bfr_detected;
        a.bfr_latency += r.bfr->latency_ms;
      }
    }
  }
  j["aggregates"] = json::array();
  for (const auto& [key, a] : groups) {
    const auto& [proto, scheme, snr] = key;
    json g;
    g["protocol"] = protocol_name(static_cast<ProtocolKind>(proto));
    g["scheme"] = scheme;
    g["snr_db"] = snr;
    g["runs"] = a.n;
    g["errors"] = a.errors;
    const int ok = a.n - a.errors;
    if (ok > 0) {
      if (static_cast<ProtocolKind>(proto) == ProtocolKind::kInitialAccess) {
        g["radar_detection_probability"] = static_cast<double>(a.detected) / ok;
        g["fallback_rate"] = static_cast<double>(a.fallback) / ok;
        g["mean_latency_ms"] = a.latency / ok;
        g["angle_rmse"] = number_or_null(rmse(a.ia_err));
      } else {
        g["mean_theta_rmse"] = a.theta / ok;
        g["mean_range_rmse"] = a.n_range ? json(a.range / a.n_range) : json(nullptr);
        g["mean_speed_rmse"] = a.n_speed ? json(a.speed / a.n_speed) : json(nullptr);
        g["mean_throughput_mbps"] = a.tput / ok;
        g["pooled_ber"] = a.bits ? json(static_cast<double>(a.bit_errors) / a.bits) : json(nullptr);
      }
      if (static_cast<ProtocolKind>(proto) == ProtocolKind::kBfr) {
        g["detection_rate"] = static_cast<double>(a.bfr_detected) / ok;
        g["mean_detection_latency_ms"] =
            a.bfr_detected ? json(a.bfr_latency / a.bfr_detected) : json(nullptr);
        g["false_failures"] = a.false_failures;
      }
    }
    j["aggregates"].push_back(g);
  }
  return j.dump(2);
}

std::string ia_table_csv(const std::vector<RunReport>& runs) {
  std::string out = "scheme,snr_db,seed,latency_ms,angle_error,detected_by_radar,used_fallback,error\n";
  for (const auto& r : runs) {
    out += scheme_name(r.scheme);
    out += ',' + format_number(r.snr_db) + ',' + std::to_string(r.seed) + ',';
    if (r.ia) {
      out += format_number(r.ia->latency_ms) + ',' + format_number(r.ia->angle_error) + ',' +
             (r.ia->detected_by_radar ? "1" : "0") + ',' + (r.ia->used_fallback ? "1" : "0") + ',';
    } else {
      out += ",,,,";
    }
    out += r.error ? "1" : "0";
    out += '\n';
  }
  return out;
}

std::string bfr_table_csv(const std::vector<RunReport>& runs) {
  std::string out =
      "scheme,recovery,snr_db,seed,blockage_start,detected,detected_slot,latency_ms,"
      "recovered_slot,radio_link_failure,false_failures,post_ber,post_throughput_mbps,error\n";
  for (const auto& r : runs) {
    out += std::string(scheme_name(r.scheme)) + ',' + strategy_name(r.strategy) + ',' +
           format_number(r.snr_db) + ',' + std::to_string(r.seed) + ',';
    if (r.bfr) {
      const BfrSummary& b = *r.bfr;
      out += std::to_string(b.blockage_start) + ',' + (b.detected ? "1" : "0") + ',' +
             (b.detected_slot ? std::to_string(*b.detected_slot) : "") + ',' +
             format_number(b.latency_ms) + ',' +
             (b.recovered_slot ? std::to_string(*b.recovered_slot) : "") + ',' +
             (b.radio_link_failure ? "1" : "0") + ',' + std::to_string(b.false_failures) + ',' +
             format_number(b.post_ber) + ',' + format_number(b.post_throughput_mbps) + ',';
    } else {
      out += ",,,,,,,,,";
    }
    out += r.error ? "1" : "0";
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string manifest_json(const ExperimentConfig& cfg, const std::string& command,
                          std::uint64_t seed, const std::vector<double>& snr_db) {
  const std::string text = experiment_config_json(cfg);
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  json j;
  j["command"] = command;
  j["config_hash"] = std::string("fnv1a64:") + hash;
  j["seed"] = seed;
  j["snr_db"] = snr_db;
  j["defaults_version"] = kDefaultsVersion;
  j["library_version"] = "0.3.0";
  j["config"] = json::parse(text);
  return j.dump(2);
}

}  // namespace isac
