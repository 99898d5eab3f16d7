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

#include "isac/nr_frame.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace isac {

namespace {

constexpr int kSsbFirstSymbol = 4;
constexpr int kSsbLastSymbol = 11;  // two SSBs of 4 symbols each
constexpr int kPdcchSymbol = 0;
constexpr int kDmrsSymbolA = 2;
constexpr int kDmrsSymbolB = 11;
constexpr int kCsiRsFirstSymbol = 5;
constexpr int kCsiRsSymbols = 4;

}  // namespace

Numerology numerology_params(int mu) {
  if (mu < 0 || mu > 6) throw DomainError("numerology mu must be in [0, 6]");
  Numerology n;
  n.mu = mu;
  n.subcarrier_spacing = 15e3 * (1 << mu);
  n.slots_per_subframe = 1 << mu;
  n.symbols_per_slot = 14;
  n.avg_symbol_duration = 1e-3 / (14.0 * (1 << mu));
  return n;
}

const char* scheme_name(Scheme s) { return s == Scheme::kIsac ? "isac" : "conventional"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "isac") return Scheme::kIsac;
  if (name == "conventional" || name == "comm") return Scheme::kConventional;
  throw ConfigError("unknown scheme '" + name + "'");
}

const char* re_kind_name(ReKind k) {
  switch (k) {
    case ReKind::kData: return "data";
    case ReKind::kSsb: return "ssb";
    case ReKind::kPdcch: return "pdcch";
    case ReKind::kDmrs: return "dmrs";
    case ReKind::kCsiRs: return "csirs";
    case ReKind::kGuard: return "guard";
    case ReKind::kUplink: return "uplink";
    default: return "?";
  }
}

bool valid_ssb_period(double ms) {
  for (int k = 0; k <= 5; ++k) {
    if (std::abs(ms - 5.0 * (1 << k)) < 1e-9) return true;
  }
  return false;
}

bool valid_csirs_period(int slots) {
  static constexpr int kSet[] = {4, 5, 8, 10, 16, 20, 32, 40, 64, 80, 160, 320, 640};
  return std::find(std::begin(kSet), std::end(kSet), slots) != std::end(kSet);
}

int FramePlan::slots_per_ssb_period() const {
  return static_cast<int>(std::lround(ssb_period_ms * (1 << mu)));
}

char FramePlan::slot_type(int slot) const {
  const int n = static_cast<int>(slot_pattern.size());
  return slot_pattern[static_cast<std::size_t>(((slot % n) + n) % n)];
}

int FramePlan::dl_symbols(int slot) const {
  switch (slot_type(slot)) {
    case 'D': return 14;
    case 'S': return s_dl_symbols;
    default: return 0;
  }
}

bool FramePlan::is_csirs_slot(int slot) const {
  if (!csirs_period_slots) return false;
  const int p = *csirs_period_slots;
  if (((slot % p) + p) % p != csirs_offset % p) return false;
  return dl_symbols(slot) >= kCsiRsFirstSymbol + kCsiRsSymbols;
}

bool FramePlan::is_ssb_slot(int slot) const {
  const int per = slots_per_ssb_period();
  const int s = ((slot % per) + per) % per;
  return std::find(ssb_slots.begin(), ssb_slots.end(), s) != ssb_slots.end();
}

FramePlan build_frame_plan(Scheme scheme, int mu, const FrameOptions& opt) {
  (void)numerology_params(mu);
  if (opt.slot_pattern.empty() ||
      opt.slot_pattern.find_first_not_of("DSU") != std::string::npos) {
    throw ConfigError("slot pattern must be a nonempty string over {D, S, U}");
  }
  if (!valid_ssb_period(opt.ssb_period_ms)) throw ConfigError("SSB period must be 5 * 2^k ms, k = 0..5");
  if (opt.s_dl_symbols + opt.s_guard_symbols + opt.s_ul_symbols != 14 || opt.s_dl_symbols < 0 ||
      opt.s_guard_symbols < 0 || opt.s_ul_symbols < 0) {
    throw ConfigError("special-slot split must be nonnegative and sum to 14 symbols");
  }
  if (opt.csirs_ports < 4 || opt.csirs_ports > 32 || opt.csirs_ports % 4 != 0) {
    throw ConfigError("CSI-RS ports must be a multiple of 4 in [4, 32]");
  }
  if (opt.prb_count < 1 || opt.ssb_rbs < 1 || opt.ssb_rbs > opt.prb_count) {
    throw ConfigError("PRB count must cover the SSB bandwidth");
  }

  FramePlan p;
  p.scheme = scheme;
  p.mu = mu;
  p.slot_pattern = opt.slot_pattern;
  p.ssb_period_ms = opt.ssb_period_ms;
  p.s_dl_symbols = opt.s_dl_symbols;
  p.s_guard_symbols = opt.s_guard_symbols;
  p.s_ul_symbols = opt.s_ul_symbols;
  p.prb_count = opt.prb_count;
  p.ssb_rbs = opt.ssb_rbs;
  p.csirs_offset = opt.csirs_offset;
  p.ssbs_per_slot = 2;

  if (scheme == Scheme::kConventional) {
    // 8 SSBs over the first four downlink slots of the burst.
    p.ssb_slots = {0, 1, 5, 6};
    const int period = opt.csirs_period_slots < 0 ? 5 : opt.csirs_period_slots;
    if (period > 0) {
      if (!valid_csirs_period(period)) throw ConfigError("CSI-RS period not in the allowed set");
      p.csirs_period_slots = period;
      p.csirs_ports = opt.csirs_ports;
    }
  } else {
    p.ssb_slots = {0};  // one beamformed SSB plus its repetition
    if (opt.csirs_period_slots > 0) throw ConfigError("the ISAC plan carries no CSI-RS");
  }
  for (int s : p.ssb_slots) {
    if (p.slot_type(s) != 'D' || s >= p.slots_per_ssb_period()) {
      throw ConfigError("SSB slot must be a downlink slot inside the SSB period");
    }
  }
  p.ssb_slots_per_period = static_cast<int>(p.ssb_slots.size());

  // Per-RB reference-signal constants over one CSI-RS window (the pattern
  // length when there is no CSI-RS) for an RB outside the SSB band.
  const int window = p.csirs_period_slots ? *p.csirs_period_slots
                                          : static_cast<int>(p.slot_pattern.size());
  const int probe_first = p.slots_per_ssb_period() > window ? window : 0;
  const ReTally t = tally_rb(p, 0, probe_first, window);
  p.dmrs_re_per_rb_period = static_cast<int>(t[static_cast<int>(ReKind::kDmrs)]);
  p.csirs_re_per_rb_period = static_cast<int>(t[static_cast<int>(ReKind::kCsiRs)]);
  p.csi_reports_per_ssb_period =
      p.csirs_period_slots ? p.slots_per_ssb_period() / *p.csirs_period_slots : 0;
  return p;
}

ReKind re_kind(const FramePlan& plan, int slot, int rb, int sc, int sym) {
  const char type = plan.slot_type(slot);
  if (type == 'U') return ReKind::kUplink;
  if (type == 'S') {
    if (sym >= plan.s_dl_symbols + plan.s_guard_symbols) return ReKind::kUplink;
    if (sym >= plan.s_dl_symbols) return ReKind::kGuard;
  }
  const int ssb_lo = plan.prb_count / 2 - plan.ssb_rbs / 2;
  const bool ssb_rb = rb >= ssb_lo && rb < ssb_lo + plan.ssb_rbs;
  if (ssb_rb && plan.is_ssb_slot(slot) && sym >= kSsbFirstSymbol && sym <= kSsbLastSymbol) {
    return ReKind::kSsb;
  }
  if (sym == kPdcchSymbol) return ReKind::kPdcch;
  const bool dmrs_sym = sym == kDmrsSymbolA || (type == 'D' && sym == kDmrsSymbolB);
  if (dmrs_sym && sc % 2 == 0) return ReKind::kDmrs;
  if (plan.is_csirs_slot(slot) && sym >= kCsiRsFirstSymbol &&
      sym < kCsiRsFirstSymbol + kCsiRsSymbols && sc < plan.csirs_ports / kCsiRsSymbols) {
    return ReKind::kCsiRs;
  }
  return ReKind::kData;
}

ReTally tally_rb(const FramePlan& plan, int rb, int first_slot, int slot_count) {
  ReTally t{};
  for (int s = first_slot; s < first_slot + slot_count; ++s) {
    for (int sym = 0; sym < 14; ++sym) {
      for (int sc = 0; sc < 12; ++sc) ++t[static_cast<int>(re_kind(plan, s, rb, sc, sym))];
    }
  }
  return t;
}

ReTally tally_period(const FramePlan& plan) {
  // RBs split into two classes, inside and outside the SSB band.
  const int ssb_lo = plan.prb_count / 2 - plan.ssb_rbs / 2;
  const int slots = plan.slots_per_ssb_period();
  const ReTally in = tally_rb(plan, ssb_lo, 0, slots);
  const int out_rb = ssb_lo > 0 ? 0 : ssb_lo + plan.ssb_rbs;
  const ReTally out = out_rb < plan.prb_count ? tally_rb(plan, out_rb, 0, slots) : ReTally{};
  ReTally t{};
  for (int k = 0; k < kReKinds; ++k) {
    t[k] = in[k] * plan.ssb_rbs + out[k] * (plan.prb_count - plan.ssb_rbs);
  }
  return t;
}

OverheadMetrics overhead_metrics(const FramePlan& plan, const FramePlan& ref) {
  OverheadMetrics m;
  m.tally = tally_period(plan);
  auto at = [&](ReKind k) { return static_cast<double>(m.tally[static_cast<int>(k)]); };
  const double dl = at(ReKind::kData) + at(ReKind::kSsb) + at(ReKind::kPdcch) +
                    at(ReKind::kDmrs) + at(ReKind::kCsiRs);
  m.oh_fraction = dl > 0.0 ? (dl - at(ReKind::kData)) / dl : 0.0;
  m.rs_fraction = dl > 0.0 ? (at(ReKind::kDmrs) + at(ReKind::kCsiRs)) / dl : 0.0;
  m.csirs_fraction = dl > 0.0 ? at(ReKind::kCsiRs) / dl : 0.0;
  m.ssb_fraction = dl > 0.0 ? at(ReKind::kSsb) / dl : 0.0;

  const double rs_ref = ref.dmrs_re_per_rb_period + ref.csirs_re_per_rb_period;
  const double rs_own = plan.dmrs_re_per_rb_period + plan.csirs_re_per_rb_period;
  m.rs_reduction_vs = rs_ref > 0.0 ? (rs_ref - rs_own) / rs_ref : 0.0;
  const double tr_ref = ref.ssb_slots_per_period;
  m.training_reduction_vs = tr_ref > 0.0 ? (tr_ref - plan.ssb_slots_per_period) / tr_ref : 0.0;
  return m;
}

OverheadMetrics overhead_metrics(const FramePlan& plan) {
  return overhead_metrics(plan, build_frame_plan(Scheme::kConventional, plan.mu));
}

double throughput(const ThroughputInputs& in) {
  if (in.carriers < 0 || in.layers < 0 || in.bits_per_symbol < 0 || in.prb_count < 0 ||
      !(in.avg_symbol_duration > 0.0)) {
    throw DomainError("invalid throughput inputs");
  }
  const double eff = std::max(0.0, 1.0 - in.ber - in.overhead);
  const double per_carrier = static_cast<double>(in.layers) * in.bits_per_symbol *
                             (in.prb_count * 12.0 / in.avg_symbol_duration) * eff;
  return 1e-6 * in.carriers * per_carrier;
}

std::string frame_plan_json(const FramePlan& plan) {
  using nlohmann::json;
  const OverheadMetrics m = overhead_metrics(plan);
  json j;
  j["scheme"] = scheme_name(plan.scheme);
  j["mu"] = plan.mu;
  j["slot_pattern"] = plan.slot_pattern;
  j["ssb_period_ms"] = plan.ssb_period_ms;
  j["ssb_slots"] = plan.ssb_slots;
  j["ssb_slots_per_period"] = plan.ssb_slots_per_period;
  j["ssbs_per_slot"] = plan.ssbs_per_slot;
  j["csirs_period_slots"] = plan.csirs_period_slots ? json(*plan.csirs_period_slots) : json(nullptr);
  j["csirs_ports"] = plan.csirs_ports;
  j["dmrs_re_per_rb_period"] = plan.dmrs_re_per_rb_period;
  j["csirs_re_per_rb_period"] = plan.csirs_re_per_rb_period;
  j["csi_reports_per_ssb_period"] = plan.csi_reports_per_ssb_period;
  j["special_slot"] = {{"dl", plan.s_dl_symbols}, {"guard", plan.s_guard_symbols},
                       {"ul", plan.s_ul_symbols}};
  j["prb_count"] = plan.prb_count;
  json tally = json::object();
  for (int k = 0; k < kReKinds; ++k) tally[re_kind_name(static_cast<ReKind>(k))] = m.tally[k];
  j["re_tally_per_ssb_period"] = tally;
  j["oh_fraction"] = m.oh_fraction;
  j["rs_fraction"] = m.rs_fraction;
  j["csirs_fraction"] = m.csirs_fraction;
  return j.dump(2);
}

}  // namespace isac
