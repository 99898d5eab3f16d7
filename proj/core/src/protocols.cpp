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

#include "isac/protocols.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace isac {

namespace {

constexpr std::uint64_t kStreamIa = 0x1A;
constexpr std::uint64_t kStreamIaEcho = 0x1B;
constexpr std::uint64_t kStreamLink = 0x2C;
constexpr std::uint64_t kStreamEcho = 0x3D;
constexpr std::uint64_t kStreamRecovery = 0x4E;
constexpr int kSssRes = 127;
constexpr int kSsbsPerSlot = 2;
constexpr double kSweepMs = 5.0;

using nlohmann::json;

double slot_dt(const WorldTrace& w) { return w.config().slot_duration; }

OfdmConfig comm_config(const ProtocolConfig& c, const WorldTrace& w) {
  return OfdmConfig::nr(c.numerology, 1, 1, w.config().carrier_frequency, c.tx_power);
}

OfdmConfig radar_config(const ProtocolConfig& c, const WorldTrace& w, int m, int l, int dec) {
  return OfdmConfig::nr(c.numerology, m, l, w.config().carrier_frequency, c.tx_power, dec);
}

void check_slot(const WorldTrace& w, int slot) {
  if (slot < 0 || slot >= w.slot_count()) {
    throw ConfigError("trajectory too short: slot " + std::to_string(slot) + " of " +
                      std::to_string(w.slot_count()));
  }
}

int next_slot_of(const FramePlan& plan, int from, bool (*pred)(char)) {
  for (int s = from;; ++s) {
    if (pred(plan.slot_type(s))) return s;
  }
}

bool is_uplink(char t) { return t == 'U'; }
bool is_downlink(char t) { return t == 'D' || t == 'S'; }

/// H = sqrt(p) zeta sum g_k u_k a_k^T, so that v^T H f is the effective gain.
CMatrix channel_matrix(const PathSet& paths, const ArrayGeometry& gnb, const ArrayGeometry& ue,
                       double power) {
  CMatrix h = CMatrix::Zero(ue.size(), gnb.size());
  const double scale = std::sqrt(power) * array_gain_factor(gnb.size(), ue.size());
  for (const auto& p : paths) {
    h.noalias() += (scale * p.gain) * steering_vector(p.angles, ue) *
                   steering_vector(p.angles, gnb).transpose();
  }
  return h;
}

/// Average received power over n unit-modulus pilots.
double measure_power(cd h, double noise_var, int n, Rng& rng) {
  if (noise_var <= 0.0) return std::norm(h);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::norm(h + rng.complex_normal(noise_var));
  return acc / n;
}

Bits random_bits(Rng& rng, std::size_t n) { return rng.bits(n); }

OfdmGrid random_grid(const OfdmConfig& cfg, int q, Rng& rng) {
  return modulate_grid(random_bits(rng, static_cast<std::size_t>(cfg.m_subcarriers) *
                                            cfg.l_symbols * q),
                       cfg, q);
}

std::vector<double> az_search_grid() { return linspace(-1.45, 1.45, 59); }
std::vector<double> el_search_grid() { return linspace(-1.0, 0.5, 31); }

void emit(ConnectedState& st, int slot, const std::string& name, json fields = json::object()) {
  st.events.push_back({slot, name, fields.dump()});
}

// --- initial access helpers ---------------------------------------------------

struct SweepResult {
  std::vector<int> beam_slot;
  std::vector<double> rsrp;
  int last_slot = 0;
};

/// 64 SSBs, two per downlink-capable slot, from `start` onwards inside a
/// 5 ms burst; the UE listens omnidirectionally.
SweepResult ssb_sweep(const WorldTrace& world, const ProtocolConfig& cfg, const FramePlan& plan,
                      const std::vector<CodebookBeam>& beams, int start, double noise_var,
                      Rng& rng) {
  const auto& sc = world.config();
  const OfdmConfig ccfg = comm_config(cfg, world);
  const CVector omni = omni_beamformer(sc.ue_array);
  SweepResult r;
  std::vector<int> dl;
  const int burst = static_cast<int>(std::lround(kSweepMs * 1e-3 / slot_dt(world)));
  for (int s = start; static_cast<int>(dl.size()) * kSsbsPerSlot < static_cast<int>(beams.size());
       ++s) {
    if (s - start >= std::max(burst, 1) * 4) throw ConfigError("frame pattern cannot carry the SSB burst");
    if (is_downlink(plan.slot_type(s))) dl.push_back(s);
  }
  for (std::size_t b = 0; b < beams.size(); ++b) {
    const int s = dl[b / kSsbsPerSlot];
    check_slot(world, s);
    const cd h = effective_channel(world.comm_paths(s), beams[b].weights, omni, sc.gnb_array,
                                   sc.ue_array, ccfg);
    r.beam_slot.push_back(s);
    r.rsrp.push_back(measure_power(h, noise_var, kSssRes, rng));
  }
  r.last_slot = dl.back();
  return r;
}

IaOutcome conventional_access(const WorldTrace& world, const ProtocolConfig& cfg,
                              double arrival_s, double noise_var, Rng& rng) {
  const double dt = slot_dt(world);
  const FramePlan plan = build_frame_plan(Scheme::kConventional, cfg.numerology, cfg.frame);
  const int per = plan.slots_per_ssb_period();
  const int arrival_slot = static_cast<int>(std::floor(arrival_s / dt + 1e-9));
  const int first_period = (arrival_slot + per - 1) / per;
  const int start = first_period * per;
  const auto beams = access_codebook(world.config().gnb_array);
  const SweepResult sw = ssb_sweep(world, cfg, plan, beams, start, noise_var, rng);
  const auto best = static_cast<std::size_t>(
      std::max_element(sw.rsrp.begin(), sw.rsrp.end()) - sw.rsrp.begin());
  const int rach = next_slot_of(plan, sw.last_slot + 1, is_uplink);
  const int rar = rach + cfg.rar_processing_slots;
  check_slot(world, rar);

  IaOutcome out;
  out.arrival_slot = arrival_slot;
  out.rar_slot = rar;
  out.latency_ms = ((rar + 1) * dt - arrival_s) * 1e3;
  out.chosen_angle = codebook_angles(beams[best]);
  out.chosen_theta = codebook_theta(beams[best]);
  out.true_theta = world.at(sw.beam_slot[best]).state.azimuth;
  out.angle_error = std::abs(out.chosen_theta - out.true_theta);
  return out;
}

int vote_threshold(int antennas, int cells, double p_fa) {
  return binomial_vote_threshold(antennas, p_fa, p_fa / std::max(cells, 1));
}

}  // namespace

// ---------------------------------------------------------------------------

const char* strategy_name(RecoveryStrategy s) {
  switch (s) {
    case RecoveryStrategy::kBeamTraining: return "beam_training";
    case RecoveryStrategy::kSub6Fallback: return "sub6_fallback";
    case RecoveryStrategy::kNlosBeamform: return "nlos_beamform";
  }
  return "unknown";
}

RecoveryStrategy parse_strategy(const std::string& name) {
  if (name == "beam_training") return RecoveryStrategy::kBeamTraining;
  if (name == "sub6_fallback" || name == "sub6") return RecoveryStrategy::kSub6Fallback;
  if (name == "nlos_beamform" || name == "nlos") return RecoveryStrategy::kNlosBeamform;
  throw ConfigError("unknown recovery strategy '" + name + "'");
}

void ProtocolConfig::validate() const {
  (void)numerology_params(numerology);
  if (bits_per_symbol != 2 && bits_per_symbol != 4 && bits_per_symbol != 6) {
    throw ConfigError("bits_per_symbol must be 2, 4 or 6");
  }
  if (ber_symbols_per_slot < 1 || radar_subcarriers < 8 || radar_decimation < 1 ||
      ia_subcarriers < 8 || ia_accumulation_slots < 1) {
    throw ConfigError("grid sizes must be positive");
  }
  if (!(p_fa > 0.0 && p_fa < 0.5)) throw ConfigError("p_fa must lie in (0, 0.5)");
  if (gnb_oversample < 1 || ue_oversample < 1) throw ConfigError("oversampling must be >= 1");
  if (bfd_timer_slots < 1 || bfi_max < 1 || rsrp_res < 1) throw ConfigError("invalid BFD setup");
  if (!(dr_threshold > 0.0) || !(dv_threshold > 0.0) || persist_slots < 1 ||
      persist_slots > window_slots) {
    throw ConfigError("invalid kinematic monitor thresholds");
  }
  if (!(ia_window_ms > 0.0) || rar_processing_slots < 0) throw ConfigError("invalid access timing");
  if (!(sub6_carrier > 0.0) || sub6_prb < 1) throw ConfigError("invalid sub-6 GHz fallback");
  (void)numerology_params(sub6_numerology);
}

std::vector<CodebookBeam> access_codebook(const ArrayGeometry& geom) {
  return dft_codebook(geom, 1, 1);
}

double codebook_theta(const CodebookBeam& beam) {
  return std::asin(std::clamp(beam.psi_x, -1.0, 1.0));
}

AnglePair codebook_angles(const CodebookBeam& beam) {
  const double el = std::asin(std::clamp(beam.psi_y, -1.0, 1.0));
  const double c = std::cos(el);
  return {std::asin(std::clamp(beam.psi_x / c, -1.0, 1.0)), el};
}

IaOutcome run_initial_access(Scheme scheme, const WorldTrace& world, const ProtocolConfig& cfg,
                             std::uint64_t seed, const IaOptions& options) {
  cfg.validate();
  Rng rng(derive_seed(seed, kStreamIa));
  const double dt = slot_dt(world);
  const double arrival_s =
      options.arrival_ms ? *options.arrival_ms * 1e-3 : rng.uniform(0.0, cfg.ia_window_ms * 1e-3);
  if (!(arrival_s >= 0.0)) throw DomainError("arrival time must be nonnegative");
  const LinkBudget lb = link_budget(world, cfg.snr_db, cfg.tx_power, cfg.radar_offset_db);
  const double comm_noise = options.noiseless ? 0.0 : lb.comm_noise_var;

  if (scheme == Scheme::kConventional) {
    return conventional_access(world, cfg, arrival_s, comm_noise, rng);
  }

  const auto& sc = world.config();
  const int acc = cfg.ia_accumulation_slots;
  const int arrival_slot = static_cast<int>(std::floor(arrival_s / dt + 1e-9));
  int w0 = ((arrival_slot + acc - 1) / acc) * acc;
  if (w0 * dt < arrival_s - 1e-12) w0 += acc;
  const int mid = w0 + acc / 2;
  check_slot(world, w0 + acc);

  bool detected = false;
  IaOutcome out;
  if (!options.force_miss) {
    const OfdmConfig icfg = radar_config(cfg, world, cfg.ia_subcarriers, 14 * acc, 1);
    const OfdmGrid grid = random_grid(icfg, 2, rng);
    const double nv = options.noiseless ? 0.0 : lb.radar_noise_var;
    const EchoCube echo =
        synthesize_echo(grid, world.radar_paths(mid), omni_beamformer(sc.gnb_array), sc.gnb_array,
                        sc.gnb_array, icfg, nv, false, derive_seed(seed, kStreamIaEcho));
    const auto maps = delay_doppler_maps(extract_channel(echo, grid));
    const int M = icfg.m_subcarriers;
    const int L = icfg.l_symbols;
    // A noiseless run still needs a positive reference for the threshold.
    const double ref = nv > 0.0 ? post_division_noise_variance(grid, nv) : 1e-30;
    const DetectionVerdict verdict = detect_presence(maps, ref, cfg.p_fa);
    std::vector<int> votes(static_cast<std::size_t>(M) * L, 0);
    for (const auto& c : verdict.triggered_cells) {
      ++votes[static_cast<std::size_t>(c.doppler_bin) * M + c.delay_bin];
    }
    const int need = vote_threshold(sc.gnb_array.size(), M * (L - 1), cfg.p_fa);
    detected = *std::max_element(votes.begin(), votes.end()) >= need;

    if (detected) {
      const CoarseEstimate ce = coarse_peak_estimate(maps, icfg);
      CMatrix snaps(sc.gnb_array.size(), 9);
      int col = 0;
      for (int dl = -1; dl <= 1; ++dl) {
        int l = ((ce.peak.doppler_bin + dl) % L + L) % L;
        if (l == 0) l = ce.peak.doppler_bin;  // keep clear of static clutter
        for (int dm = -1; dm <= 1; ++dm) {
          const int m = ((ce.peak.delay_bin + dm) % M + M) % M;
          for (int i = 0; i < sc.gnb_array.size(); ++i) {
            snaps(i, col) = maps[static_cast<std::size_t>(i)](m, l);
          }
          ++col;
        }
      }
      const AnglePair angles = estimate_doa_2d_snapshots(snaps, 1, az_search_grid(),
                                                         el_search_grid(), sc.gnb_array);
      const FramePlan plan = build_frame_plan(Scheme::kIsac, cfg.numerology, cfg.frame);
      const int ssb = next_slot_of(plan, w0 + acc, is_downlink);
      const int rach = next_slot_of(plan, ssb + 1, is_uplink);
      const int rar = rach + cfg.rar_processing_slots;
      check_slot(world, rar);
      out.arrival_slot = arrival_slot;
      out.rar_slot = rar;
      out.latency_ms = ((rar + 1) * dt - arrival_s) * 1e3;
      out.chosen_angle = angles;
      out.chosen_theta = tracked_from_steering(angles);
      out.true_theta = world.at(mid).state.azimuth;
      out.angle_error = std::abs(out.chosen_theta - out.true_theta);
      out.detected_by_radar = true;
      out.range_estimate = ce.range;
      out.radial_speed_estimate = ce.speed;
      return out;
    }
  }

  // No SSB within the fallback timer: the vehicle falls back to the sweep.
  const double timer = cfg.ia_window_ms * 1e-3;
  out = conventional_access(world, cfg, arrival_s + timer, comm_noise, rng);
  out.arrival_slot = arrival_slot;
  out.latency_ms += cfg.ia_window_ms;
  out.used_fallback = true;
  return out;
}

// ---------------------------------------------------------------------------

bool BfiCounter::on_slot(int slot, bool indication) {
  if (timer_start && slot - *timer_start >= timer_limit_slots) {
    count = 0;
    timer_start.reset();
  }
  if (indication) {
    count = std::min(count + 1, max_count);
    timer_start = slot;
  }
  return count >= max_count;
}

void KinematicMonitor::validate() const {
  if (!(dr_threshold > 0.0) || !(dv_threshold > 0.0)) throw DomainError("thresholds must be positive");
  if (persist_slots < 1 || persist_slots > window_slots) {
    throw DomainError("persist_slots must lie in [1, window_slots]");
  }
}

bool KinematicMonitor::is_hit(double dr, double dv) const {
  return std::abs(dr) > dr_threshold && std::abs(dv) > dv_threshold;
}

bool KinematicMonitor::on_slot(int slot, bool hit) {
  while (!hit_slots.empty() && hit_slots.front() <= slot - window_slots) hit_slots.pop_front();
  if (hit) {
    hit_slots.push_back(slot);
    ++consecutive_hits;
  } else {
    consecutive_hits = 0;
  }
  return static_cast<int>(hit_slots.size()) >= persist_slots;
}

void KinematicMonitor::reset() {
  consecutive_hits = 0;
  hit_slots.clear();
}

TrackBelief coast(const TrackBelief& belief, const NoiseSpec& noise, double dt) {
  const Mat4 g = jacobian(belief.mean, dt);
  TrackBelief out;
  out.mean = evolve_state(belief.mean, dt);
  out.mse = g * belief.mse * g.transpose() + Mat4(noise.process.asDiagonal());
  out.mse = (0.5 * (out.mse + out.mse.transpose())).eval();
  return out;
}

AnglePair steering_of(const TrackState& x, double height_difference) {
  return steering_from_tracked(x.azimuth, elevation_for_range(x.range, height_difference));
}

std::string events_to_jsonl(const std::vector<ProtocolEvent>& events) {
  std::ostringstream os;
  for (const auto& e : events) {
    json j = json::object();
    j["slot"] = e.slot;
    j["event"] = e.event;
    const json f = json::parse(e.fields_json);
    for (auto it = f.begin(); it != f.end(); ++it) j[it.key()] = it.value();
    os << j.dump() << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Connected mode

namespace {

CVector best_ue_combiner(const std::vector<CodebookBeam>& book, const CVector& c) {
  double best = -1.0;
  const CVector* pick = &book.front().weights;
  for (const auto& b : book) {
    const double g = std::norm(b.weights.dot(c.conjugate()));
    if (g > best) {
      best = g;
      pick = &b.weights;
    }
  }
  return *pick;
}

std::size_t best_codeword(const std::vector<CodebookBeam>& book, const Eigen::RowVectorXcd& r) {
  double best = -1.0;
  std::size_t pick = 0;
  for (std::size_t k = 0; k < book.size(); ++k) {
    const double g = std::norm((r * book[k].weights)(0));
    if (g > best) {
      best = g;
      pick = k;
    }
  }
  return pick;
}

void add_noise(CVector& x, double var, Rng& rng) {
  if (var <= 0.0) return;
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += rng.complex_normal(var);
}

double slot_throughput(const ConnectedState& st, double ber) {
  ThroughputInputs in;
  in.bits_per_symbol = st.cfg.bits_per_symbol;
  if (st.sub6_active) {
    in.prb_count = st.cfg.sub6_prb;
    in.avg_symbol_duration = numerology_params(st.cfg.sub6_numerology).avg_symbol_duration;
    in.overhead = st.sub6_overhead;
  } else {
    in.prb_count = st.plan.prb_count;
    in.avg_symbol_duration = numerology_params(st.cfg.numerology).avg_symbol_duration;
    in.overhead = st.overhead;
  }
  in.ber = ber;
  return throughput(in);
}

/// Omnidirectional single-antenna link on the sub-6 GHz carrier. Amplitudes
/// scale with wavelength; the blocked LoS keeps a fixed diffraction loss.
cd sub6_channel(const ConnectedState& st, const WorldTrace& world, int slot) {
  const auto& sc = world.config();
  const double loss = world.blocked(slot) ? std::pow(10.0, -st.cfg.sub6_los_loss_db / 20.0) : 1.0;
  const double ratio = sc.carrier_frequency / st.cfg.sub6_carrier;
  cd h{0.0, 0.0};
  for (const auto& p : world.comm_paths(slot, loss)) {
    h += std::abs(p.gain) * ratio *
         std::polar(1.0, -2.0 * kPi * st.cfg.sub6_carrier * p.delay);
  }
  return std::sqrt(st.cfg.tx_power) * h;
}

double sub6_noise(const ConnectedState& st) {
  return st.budget.comm_noise_var * numerology_params(st.cfg.sub6_numerology).subcarrier_spacing /
         numerology_params(st.cfg.numerology).subcarrier_spacing;
}

void record_link(ConnectedState& st, SlotMetrics& m, cd h, double noise_var) {
  const int q = st.cfg.bits_per_symbol;
  const Bits bits = st.rng.bits(static_cast<std::size_t>(st.cfg.ber_symbols_per_slot * q));
  const BerCount c = measure_ber_scalar(bits, h, q, noise_var, st.rng);
  m.bit_errors = c.errors;
  m.bits = c.bits;
  m.throughput_mbps = slot_throughput(st, c.rate());
}

void start_outage(ConnectedState& st, int resume, LinkMode after) {
  st.mode = LinkMode::kOutage;
  st.resume_slot = resume;
  st.after_outage = after;
}

/// Full re-access after a lost track or a radio link failure.
void reaccess(ConnectedState& st, const WorldTrace& world, int slot) {
  IaOptions opt;
  opt.arrival_ms = (slot + 1) * slot_dt(world) * 1e3;
  ProtocolConfig cfg = st.cfg;
  IaOutcome ia;
  try {
    ia = run_initial_access(st.scheme, world, cfg, derive_seed(st.seed, kStreamRecovery + slot), opt);
  } catch (const ConfigError&) {
    start_outage(st, world.slot_count(), LinkMode::kTracking);
    return;
  }
  const auto& sc = world.config();
  const double h = world.height_difference();
  if (st.scheme == Scheme::kConventional) {
    CodebookBeam b;
    b.psi_x = std::sin(ia.chosen_angle.azimuth) * std::cos(ia.chosen_angle.elevation);
    b.psi_y = std::sin(ia.chosen_angle.elevation);
    b.weights = conjugate_beamformer(ia.chosen_angle, sc.gnb_array);
    st.serving = b;
    st.control = b;
    st.ue_combiner = conjugate_beamformer(ia.chosen_angle, sc.ue_array);
    st.pending_pmi.reset();
  } else {
    const double theta = ia.chosen_theta;
    double range = ia.range_estimate;
    if (!std::isfinite(range) || range <= std::abs(h)) range = world.start_range();
    double speed = st.belief.mean.speed;
    if (std::isfinite(ia.radial_speed_estimate) && std::abs(std::sin(theta)) >= 0.2) {
      speed = ia.radial_speed_estimate / std::sin(theta);
    }
    if (!std::isfinite(speed)) speed = sc.nominal_speed;
    st.belief = init_track(range, speed, {theta, 0.0}, st.noise, sc.vehicle_rcs);
    st.belief.mean.azimuth = theta;
    st.one_ahead = evolve_state(st.belief.mean, slot_dt(world));
    st.two_ahead = st.one_ahead;
  }
  st.kinematic.reset();
  st.bfi = BfiCounter{0, std::nullopt, st.cfg.bfd_timer_slots, st.cfg.bfi_max};
  st.bfi_pending = false;
  start_outage(st, ia.rar_slot + 1, LinkMode::kTracking);
}

SlotMetrics base_metrics(const WorldTrace& world, int slot) {
  const SlotTruth& t = world.at(slot);
  SlotMetrics m;
  m.slot = slot;
  m.true_theta = t.state.azimuth;
  m.true_d = t.range;
  m.true_v = t.speed;
  return m;
}

void finish_outage(ConnectedState& st, int slot) {
  if (st.mode != LinkMode::kOutage || slot < st.resume_slot) return;
  st.mode = st.after_outage;
  if (st.active_bfr) {
    emit(st, slot, "recovered",
         {{"strategy", strategy_name(st.active_bfr->recovery_strategy)},
          {"detected_slot", st.active_bfr->detected_slot}});
    st.bfr_events.push_back(*st.active_bfr);
    st.active_bfr.reset();
  }
}

void conventional_slot(ConnectedState& st, const WorldTrace& world, int slot, SlotMetrics& m) {
  const auto& sc = world.config();
  const double nv = st.budget.comm_noise_var;
  m.est_theta = codebook_theta(st.serving);
  if (st.mode == LinkMode::kOutage) return;

  if (st.pending_pmi && slot >= st.pending_apply_slot) {
    st.serving = *st.pending_pmi;
    st.pending_pmi.reset();
  }
  const CMatrix H = channel_matrix(world.comm_paths(slot), sc.gnb_array, sc.ue_array, st.cfg.tx_power);

  // SSB subset: 8 access beams on the serving elevation ring, once per period.
  const int per = st.plan.slots_per_ssb_period();
  if (slot % per == st.plan.ssb_slots.front()) {
    const auto grid = access_codebook(sc.gnb_array);
    double ring = grid.front().psi_y;
    for (const auto& b : grid) {
      if (std::abs(b.psi_y - st.serving.psi_y) < std::abs(ring - st.serving.psi_y)) ring = b.psi_y;
    }
    const cd hs = (st.ue_combiner.transpose() * H * st.serving.weights)(0);
    double serving_rsrp = measure_power(hs, nv, kSssRes, st.rng);
    int count = 0;
    for (const auto& b : grid) {
      if (b.psi_y != ring || count >= st.cfg.ssb_subset_beams) continue;
      ++count;
      const cd hb = (st.ue_combiner.transpose() * H * b.weights)(0);
      const double r = measure_power(hb, nv, kSssRes, st.rng);
      if (r > serving_rsrp) {
        serving_rsrp = r;
        st.serving = b;
        emit(st, slot, "ssb_refresh", {{"psi_x", b.psi_x}, {"psi_y", b.psi_y}});
      }
    }
    st.control = st.serving;
  }

  const cd h = (st.ue_combiner.transpose() * H * st.serving.weights)(0);
  record_link(st, m, h, nv);
  m.est_theta = codebook_theta(st.serving);

  const int period = st.plan.csirs_period_slots.value_or(0);
  if (period > 0 && st.plan.is_csirs_slot(slot)) {
    // L1-RSRP of the control beam against noise floor + margin.
    const cd hc = (st.ue_combiner.transpose() * H * st.control.weights)(0);
    const double rsrp = measure_power(hc, nv, st.cfg.rsrp_res, st.rng);
    const bool bfi = nv > 0.0 ? rsrp < nv * db_to_linear(st.cfg.rsrp_margin_db) : rsrp <= 0.0;
    st.bfi_pending = bfi;
    st.bfi_delivery_slot = slot + period - 1;
    if (bfi && st.bfi.count == 0) st.first_bfi_slot = slot;

    // UE beam, then PMI from the estimated effective row v^T H.
    CVector c = H * st.serving.weights;
    add_noise(c, nv / st.cfg.rsrp_res, st.rng);
    st.ue_combiner = best_ue_combiner(st.ue_codebook, c);
    CVector r = (st.ue_combiner.transpose() * H).transpose();
    add_noise(r, nv / st.plan.prb_count, st.rng);
    st.pending_pmi = st.gnb_codebook[best_codeword(st.gnb_codebook, r.transpose())];
    st.pending_apply_slot = slot + period;
  }

  const bool deliver = st.bfi_delivery_slot == slot;
  const bool failure = st.bfi.on_slot(slot, deliver && st.bfi_pending);
  if (deliver) st.bfi_pending = false;
  if (failure && !st.active_bfr) {
    emit(st, slot, "beam_failure", {{"monitor", "bfi"}, {"first_bfi_slot", st.first_bfi_slot}});
    bfr_recover(RecoveryStrategy::kBeamTraining, st, world, slot);
  }
}

void isac_slot(ConnectedState& st, const WorldTrace& world, int slot, SlotMetrics& m) {
  const auto& sc = world.config();
  const double dt = slot_dt(world);
  const double hd = world.height_difference();
  const TrackState pred = st.one_ahead;
  const TrackState pred2 = st.two_ahead;
  const AnglePair pred_angles = steering_of(pred, hd);
  const CVector f_radar = conjugate_beamformer(pred_angles, sc.gnb_array);

  // Data on the current beam pair.
  if (st.mode != LinkMode::kOutage) {
    if (st.mode == LinkMode::kRecovered && st.sub6_active) {
      record_link(st, m, sub6_channel(st, world, slot), sub6_noise(st));
    } else {
      CVector f = f_radar;
      CVector v = conjugate_beamformer(steering_of(pred2, hd), sc.ue_array);
      if (st.mode == LinkMode::kRecovered) {
        f = st.recovered_f;
        v = st.recovered_v;
      }
      const cd h = effective_channel(world.comm_paths(slot), f, v, sc.gnb_array, sc.ue_array,
                                     comm_config(st.cfg, world));
      record_link(st, m, h, st.budget.comm_noise_var);
    }
  }

  // Echo of the data beam and the gated measurement.
  const OfdmConfig rcfg =
      radar_config(st.cfg, world, st.cfg.radar_subcarriers, 14, st.cfg.radar_decimation);
  const OfdmGrid grid = random_grid(rcfg, st.cfg.bits_per_symbol, st.rng);
  const double nv = st.budget.radar_noise_var;
  bool hit = true;
  std::optional<TrackState> meas;
  try {
    const EchoCube echo = synthesize_echo(grid, world.radar_paths(slot), f_radar, sc.gnb_array,
                                          sc.gnb_array, rcfg, nv, false,
                                          derive_seed(st.seed, kStreamEcho * 0x100000000ULL + slot));
    const EchoCube ch = extract_channel(echo, grid);
    const double pred_vr = pred.speed * std::sin(pred.azimuth);
    const GatedMeasurement g = measure_target_gated(
        ch, rcfg, sc.gnb_array, pred.range, pred_vr, pred_angles,
        [hd](double r) { return elevation_for_range(std::max(r, std::abs(hd) + 1e-3), hd); },
        st.cfg.gated);
    hit = st.kinematic.is_hit(g.range - pred.range, g.radial_speed - pred_vr);
    TrackState z;
    z.azimuth = tracked_from_steering(g.angles);
    z.range = g.range;
    const double s = std::sin(z.azimuth);
    z.speed = std::abs(s) >= 0.2 ? g.radial_speed / s : pred.speed;
    const double pd = post_division_noise_variance(grid, nv) / rcfg.m_subcarriers;
    const double gain = std::abs(beam_gain(g.angles, f_radar, sc.gnb_array));
    z.refl_coeff = gain > 1e-6
                       ? std::sqrt(std::max(g.power - pd, 0.0) /
                                   (sc.gnb_array.size() * st.cfg.tx_power)) / gain
                       : pred.refl_coeff;
    meas = z;
  } catch (const Error&) {
    hit = true;
  }

  try {
    if (!hit && meas) {
      const EkfStepResult r = ekf_step(st.belief, *meas, st.noise, dt);
      st.belief = r.posterior;
      st.one_ahead = r.one_ahead;
      st.two_ahead = r.two_ahead;
    } else {
      st.belief = coast(st.belief, st.noise, dt);
      st.one_ahead = evolve_state(st.belief.mean, dt);
      st.two_ahead = st.one_ahead;
    }
    if (!st.belief.mean.vec().allFinite()) throw DegenerateGeometryError("non-finite track");
  } catch (const Error&) {
    emit(st, slot, "lost_track");
    reaccess(st, world, slot);
    return;
  }
  m.est_theta = st.belief.mean.azimuth;
  m.est_d = st.belief.mean.range;
  m.est_v = st.belief.mean.speed;

  const bool failure = st.kinematic.on_slot(slot, hit);
  if (st.mode == LinkMode::kTracking && failure && !st.active_bfr) {
    emit(st, slot, "beam_failure",
         {{"monitor", "kinematic"}, {"hits", static_cast<int>(st.kinematic.hit_slots.size())}});
    bfr_recover(st.cfg.isac_recovery, st, world, slot);
    st.clean_streak = 0;
  } else if (st.mode == LinkMode::kRecovered) {
    st.clean_streak = hit ? 0 : st.clean_streak + 1;
    if (st.clean_streak >= st.cfg.persist_slots) {
      st.mode = LinkMode::kTracking;
      st.sub6_active = false;
      st.kinematic.reset();
      emit(st, slot, "los_restored");
    }
  }
}

}  // namespace

ConnectedState start_connected(Scheme scheme, const WorldTrace& world, const ProtocolConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  const auto& sc = world.config();
  ConnectedState st;
  st.scheme = scheme;
  st.cfg = cfg;
  st.seed = seed;
  st.rng = Rng(derive_seed(seed, kStreamLink + 0x100 * static_cast<std::uint64_t>(scheme)));
  st.plan = build_frame_plan(scheme, cfg.numerology, cfg.frame);
  st.overhead = overhead_metrics(st.plan).oh_fraction;
  FrameOptions sub6 = cfg.frame;
  sub6.prb_count = cfg.sub6_prb;
  st.sub6_overhead = overhead_metrics(build_frame_plan(scheme, cfg.sub6_numerology, sub6)).oh_fraction;
  st.budget = link_budget(world, cfg.snr_db, cfg.tx_power, cfg.radar_offset_db);
  st.bfi = BfiCounter{0, std::nullopt, cfg.bfd_timer_slots, cfg.bfi_max};
  st.kinematic.dr_threshold = cfg.dr_threshold;
  st.kinematic.dv_threshold = cfg.dv_threshold;
  st.kinematic.persist_slots = cfg.persist_slots;
  st.kinematic.window_slots = cfg.window_slots;
  st.kinematic.validate();

  if (scheme == Scheme::kConventional) {
    st.gnb_codebook = dft_codebook(sc.gnb_array, cfg.gnb_oversample, cfg.gnb_oversample);
    st.ue_codebook = dft_codebook(sc.ue_array, cfg.ue_oversample, cfg.ue_oversample);
    // Established link: best codeword pair on the true channel at slot 0.
    const CMatrix H = channel_matrix(world.comm_paths(0), sc.gnb_array, sc.ue_array, cfg.tx_power);
    double best = -1.0;
    for (const auto& b : st.gnb_codebook) {
      const double g = (H * b.weights).squaredNorm();
      if (g > best) {
        best = g;
        st.serving = b;
      }
    }
    st.control = st.serving;
    st.ue_combiner = best_ue_combiner(st.ue_codebook, H * st.serving.weights);
  } else {
    st.noise = NoiseSpec::defaults(world.start_beta());
    const SlotTruth& t0 = world.at(0);
    st.belief = init_track(t0.range, t0.speed, t0.angles, st.noise, sc.vehicle_rcs);
    st.belief.mean = t0.state;
    st.one_ahead = t0.state;
    st.two_ahead = t0.state;
  }
  return st;
}

SlotMetrics connected_step(ConnectedState& st, const WorldTrace& world, int slot) {
  check_slot(world, slot);
  const std::size_t first_event = st.events.size();
  SlotMetrics m = base_metrics(world, slot);
  finish_outage(st, slot);
  if (st.scheme == Scheme::kConventional) {
    conventional_slot(st, world, slot, m);
  } else {
    isac_slot(st, world, slot, m);
  }
  for (std::size_t i = first_event; i < st.events.size(); ++i) {
    if (st.events[i].slot != slot) continue;
    if (!m.event.empty()) m.event += ';';
    m.event += st.events[i].event;
  }
  return m;
}

std::optional<BfrEvent> bfr_detect(const ConnectedState& st) {
  if (st.active_bfr) return st.active_bfr;
  if (!st.bfr_events.empty()) return st.bfr_events.back();
  return std::nullopt;
}

BfrEvent bfr_recover(RecoveryStrategy strategy, ConnectedState& st, const WorldTrace& world,
                     int slot) {
  const auto& sc = world.config();
  BfrEvent ev;
  ev.detected_slot = slot;
  ev.failure_slot = slot;
  if (st.scheme == Scheme::kConventional && st.first_bfi_slot >= 0) {
    ev.failure_slot = std::min(st.first_bfi_slot, slot);
  } else if (!st.kinematic.hit_slots.empty()) {
    ev.failure_slot = st.kinematic.hit_slots.front();
  }
  ev.recovery_strategy = strategy;
  Rng rng(derive_seed(st.seed, kStreamRecovery * 0x10000ULL + static_cast<std::uint64_t>(slot)));
  json fields = {{"strategy", strategy_name(strategy)}};

  switch (strategy) {
    case RecoveryStrategy::kBeamTraining: {
      const auto beams = access_codebook(sc.gnb_array);
      SweepResult sw;
      try {
        sw = ssb_sweep(world, st.cfg, st.plan, beams, slot + 1, st.budget.comm_noise_var, rng);
      } catch (const ConfigError&) {
        ev.radio_link_failure = true;
        start_outage(st, world.slot_count(), LinkMode::kTracking);
        break;
      }
      const double thr = st.budget.comm_noise_var * db_to_linear(st.cfg.candidate_margin_db);
      const auto best = static_cast<std::size_t>(
          std::max_element(sw.rsrp.begin(), sw.rsrp.end()) - sw.rsrp.begin());
      if (!(sw.rsrp[best] > thr)) {
        ev.radio_link_failure = true;
        emit(st, slot, "radio_link_failure");
        st.active_bfr = ev;
        reaccess(st, world, sw.last_slot);
        st.active_bfr->recovered_slot = st.resume_slot - 1;
        return *st.active_bfr;
      }
      st.serving = beams[best];
      st.control = st.serving;
      const int s = sw.last_slot;
      const CMatrix H =
          channel_matrix(world.comm_paths(s), sc.gnb_array, sc.ue_array, st.cfg.tx_power);
      CVector c = H * st.serving.weights;
      add_noise(c, st.budget.comm_noise_var / st.cfg.rsrp_res, rng);
      if (st.ue_codebook.empty()) {
        st.ue_codebook = dft_codebook(sc.ue_array, st.cfg.ue_oversample, st.cfg.ue_oversample);
      }
      st.ue_combiner = best_ue_combiner(st.ue_codebook, c);
      st.pending_pmi.reset();
      const int rach = next_slot_of(st.plan, s + 1, is_uplink);
      const int rar = rach + st.cfg.rar_processing_slots;
      ev.recovered_slot = rar;
      st.bfi = BfiCounter{0, std::nullopt, st.cfg.bfd_timer_slots, st.cfg.bfi_max};
      st.bfi_pending = false;
      st.first_bfi_slot = -1;
      start_outage(st, rar + 1, LinkMode::kTracking);
      break;
    }
    case RecoveryStrategy::kSub6Fallback: {
      st.sub6_active = true;
      ev.recovered_slot = slot + 1;
      start_outage(st, slot + 1, LinkMode::kRecovered);
      break;
    }
    case RecoveryStrategy::kNlosBeamform: {
      // One omnidirectional probing slot; static scatterers sit in the
      // zero-Doppler column of every antenna's delay-Doppler map.
      const OfdmConfig pcfg = radar_config(st.cfg, world, st.cfg.ia_subcarriers, 14, 1);
      const int probe = std::min(slot + 1, world.slot_count() - 1);
      const OfdmGrid grid = random_grid(pcfg, 2, rng);
      const EchoCube echo = synthesize_echo(grid, world.radar_paths(probe),
                                            omni_beamformer(sc.gnb_array), sc.gnb_array,
                                            sc.gnb_array, pcfg, st.budget.radar_noise_var, false,
                                            derive_seed(st.seed, kStreamRecovery + probe));
      const auto maps = delay_doppler_maps(extract_channel(echo, grid));
      const int n = sc.gnb_array.size();
      const int m = pcfg.m_subcarriers;
      // Scatterers separate in range, so each strong zero-Doppler delay bin
      // gets its own single-source DOA. The blocker shares the tracked LoS
      // direction and leaks into this column; bins pointing into that main
      // lobe are skipped.
      std::vector<double> power(static_cast<std::size_t>(m), 0.0);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < m; ++k) {
          power[static_cast<std::size_t>(k)] += std::norm(maps[static_cast<std::size_t>(i)](k, 0));
        }
      }
      std::vector<int> bins;
      for (int k = 0; k < m; ++k) {
        const double p = power[static_cast<std::size_t>(k)];
        if (p >= power[static_cast<std::size_t>((k + m - 1) % m)] &&
            p >= power[static_cast<std::size_t>((k + 1) % m)]) {
          bins.push_back(k);
        }
      }
      std::stable_sort(bins.begin(), bins.end(), [&power](int x, int y) {
        return power[static_cast<std::size_t>(x)] > power[static_cast<std::size_t>(y)];
      });
      AnglePair dir = steering_of(st.belief.mean, world.height_difference());
      const CVector f_los = conjugate_beamformer(dir, sc.gnb_array);
      constexpr int kMaxBins = 8;
      for (std::size_t j = 0; j < bins.size() && j < kMaxBins; ++j) {
        CMatrix snaps(n, 3);
        for (int c = 0; c < 3; ++c) {
          const int k = (bins[j] + c - 1 + m) % m;
          for (int i = 0; i < n; ++i) snaps(i, c) = maps[static_cast<std::size_t>(i)](k, 0);
        }
        try {
          const AnglePair cand = estimate_doa_2d_snapshots(snaps, 1, az_search_grid(),
                                                           el_search_grid(), sc.gnb_array);
          if (std::norm(beam_gain(cand, f_los, sc.gnb_array)) > 0.5) continue;
          dir = cand;
          break;
        } catch (const Error&) {
          // Degenerate bin; try the next one.
        }
      }
      fields["azimuth"] = dir.azimuth;
      fields["elevation"] = dir.elevation;
      st.recovered_f = conjugate_beamformer(dir, sc.gnb_array);
      st.recovered_v = conjugate_beamformer(dir, sc.ue_array);
      st.sub6_active = false;
      ev.recovered_slot = slot + 2;
      start_outage(st, slot + 2, LinkMode::kRecovered);
      break;
    }
  }
  emit(st, slot, "recovery_start", fields);
  st.active_bfr = ev;
  return ev;
}

}  // namespace isac
