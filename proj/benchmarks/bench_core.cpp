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


#include <benchmark/benchmark.h>

#include "isac/array_geometry.hpp"
#include "isac/experiment.hpp"
#include "isac/nr_frame.hpp"
#include "isac/protocols.hpp"
#include "isac/radar_proc.hpp"
#include "isac/tracker.hpp"

namespace {

using namespace isac;

void BM_SteeringVector(benchmark::State& state) {
  const ArrayGeometry g{static_cast<int>(state.range(0)), static_cast<int>(state.range(0))};
  double az = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(steering_vector({az, -0.15}, g));
    az += 1e-6;
  }
}
BENCHMARK(BM_SteeringVector)->Arg(4)->Arg(8)->Arg(16);

EchoCube target_echo(int m, int l, int antennas) {
  const OfdmConfig c = OfdmConfig::nr(3, m, l, 35e9);
  PathParams p;
  p.delay = 2 * 47.18 / kSpeedOfLight;
  p.doppler = 2 * 20.0 * 35e9 / kSpeedOfLight;
  Rng rng(1);
  return synthesize_echo_alpha(OfdmGrid::Ones(m, l), {p}, CMatrix::Ones(antennas, 1), c, 0.01, false, rng);
}

void BM_MusicRefine(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const OfdmConfig c = OfdmConfig::nr(3, m, 140, 35e9);
  const EchoCube echo = target_echo(m, 140, 8);
  const CoarseEstimate ce = coarse_peak_estimate(delay_doppler_maps(echo), c);
  for (auto _ : state) benchmark::DoNotOptimize(refine_target(echo, ce.peak, c, RefineSetup{}));
}
BENCHMARK(BM_MusicRefine)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_DelayDopplerMaps(benchmark::State& state) {
  const EchoCube echo = target_echo(64, 14, 64);
  for (auto _ : state) benchmark::DoNotOptimize(delay_doppler_maps(echo));
}
BENCHMARK(BM_DelayDopplerMaps)->Unit(benchmark::kMicrosecond);

void BM_EkfStep(benchmark::State& state) {
  const NoiseSpec noise = NoiseSpec::defaults(1e-4);
  TrackBelief b = init_track(47.18, 20.0, {0.488, 0.0}, noise);
  TrackState y = b.mean;
  for (auto _ : state) {
    y.range -= 1e-4;
    b = ekf_step(b, y, noise, 1.25e-4).posterior;
    benchmark::DoNotOptimize(b);
  }
}
BENCHMARK(BM_EkfStep);

void BM_FrameTally(benchmark::State& state) {
  const FramePlan plan = build_frame_plan(static_cast<Scheme>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(tally_period(plan));
}
BENCHMARK(BM_FrameTally)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

// One connected-mode slot, including radar processing for the ISAC scheme.
void BM_ConnectedSlot(benchmark::State& state) {
  ScenarioConfig sc;
  sc.set_slot_count(4000);
  const WorldTrace w = generate_scenario(sc, 1);
  const ProtocolConfig pc;
  const auto scheme = static_cast<Scheme>(state.range(0));
  ConnectedState st = start_connected(scheme, w, pc, 1);
  int slot = 0;
  for (auto _ : state) {
    if (slot == w.slot_count()) {
      state.PauseTiming();
      st = start_connected(scheme, w, pc, 1);
      slot = 0;
      state.ResumeTiming();
    }
    benchmark::DoNotOptimize(connected_step(st, w, slot++));
  }
}
BENCHMARK(BM_ConnectedSlot)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
