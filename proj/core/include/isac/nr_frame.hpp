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

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "isac/common.hpp"

namespace isac {

struct Numerology {
  int mu = 0;
  double subcarrier_spacing = 15e3;
  int slots_per_subframe = 1;
  int symbols_per_slot = 14;
  double avg_symbol_duration = 1e-3 / 14.0;

  double slot_duration() const { return 1e-3 / slots_per_subframe; }
};

Numerology numerology_params(int mu);

enum class Scheme { kConventional, kIsac };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

/// Resource-element categories inside one RB of one slot.
enum class ReKind { kData = 0, kSsb, kPdcch, kDmrs, kCsiRs, kGuard, kUplink, kCount };
inline constexpr int kReKinds = static_cast<int>(ReKind::kCount);
const char* re_kind_name(ReKind k);

struct FrameOptions {
  std::string slot_pattern = "DDDSU";
  double ssb_period_ms = 20.0;
  // -1 picks the scheme default (5 slots conventional, none for ISAC); 0 means none.
  int csirs_period_slots = -1;
  int csirs_ports = 32;
  int csirs_offset = 2;
  int s_dl_symbols = 10;
  int s_guard_symbols = 2;
  int s_ul_symbols = 2;
  int prb_count = 208;
  int ssb_rbs = 20;
};

struct FramePlan {
  Scheme scheme = Scheme::kConventional;
  int mu = 3;
  std::string slot_pattern = "DDDSU";
  double ssb_period_ms = 20.0;
  std::vector<int> ssb_slots;  // slot indices within the SSB period
  int ssbs_per_slot = 2;
  int ssb_slots_per_period = 0;
  std::optional<int> csirs_period_slots;
  int csirs_offset = 2;
  int csirs_ports = 0;
  int dmrs_re_per_rb_period = 0;    // normal RB, one pattern period
  int csirs_re_per_rb_period = 0;   // normal RB, one pattern period
  int csi_reports_per_ssb_period = 0;
  int s_dl_symbols = 10;
  int s_guard_symbols = 2;
  int s_ul_symbols = 2;
  int prb_count = 208;
  int ssb_rbs = 20;

  int slots_per_ssb_period() const;
  char slot_type(int slot) const;
  bool is_csirs_slot(int slot) const;
  bool is_ssb_slot(int slot) const;
  int dl_symbols(int slot) const;
};

FramePlan build_frame_plan(Scheme scheme, int mu, const FrameOptions& options = {});

/// Category of one RE. `slot` counts from the start of the SSB period.
ReKind re_kind(const FramePlan& plan, int slot, int rb, int subcarrier, int symbol);

using ReTally = std::array<long long, kReKinds>;

/// Counts per category over slots [first, first + count) for one RB.
ReTally tally_rb(const FramePlan& plan, int rb, int first_slot, int slot_count);
/// Counts over the whole SSB period and all RBs.
ReTally tally_period(const FramePlan& plan);

struct OverheadMetrics {
  double oh_fraction = 0.0;
  double rs_fraction = 0.0;       // DMRS + CSI-RS share of downlink REs
  double csirs_fraction = 0.0;
  double ssb_fraction = 0.0;
  double rs_reduction_vs = 0.0;
  double training_reduction_vs = 0.0;
  ReTally tally{};
};

/// Overhead of `plan`, with reductions expressed against `reference`.
OverheadMetrics overhead_metrics(const FramePlan& plan, const FramePlan& reference);
OverheadMetrics overhead_metrics(const FramePlan& plan);

struct ThroughputInputs {
  int carriers = 1;
  int layers = 1;
  int bits_per_symbol = 4;
  int prb_count = 208;
  double avg_symbol_duration = 1e-3 / (14.0 * 8.0);
  double ber = 0.0;
  double overhead = 0.0;
};

double throughput(const ThroughputInputs& in);

bool valid_ssb_period(double ms);
bool valid_csirs_period(int slots);

std::string frame_plan_json(const FramePlan& plan);

}  // namespace isac
