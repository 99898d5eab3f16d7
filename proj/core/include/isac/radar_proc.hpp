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

#include <functional>
#include <vector>

#include "isac/array_geometry.hpp"
#include "isac/common.hpp"
#include "isac/ofdm_link.hpp"

namespace isac {

using DelayDopplerMap = CMatrix;

inline constexpr double kGoldenRatio = 0.61803398874989484820;  // (sqrt(5) - 1) / 2

struct CoarsePeak {
  int delay_bin = 0;
  int doppler_bin = 0;
  double magnitude = 0.0;
};

struct CoarseEstimate {
  CoarsePeak peak;
  int signed_doppler_bin = 0;
  double range = 0.0;
  double speed = 0.0;  // radial, positive when approaching
};

struct DetectionCell {
  int antenna = 0;
  int delay_bin = 0;
  int doppler_bin = 0;
};

struct DetectionVerdict {
  bool present = false;
  std::vector<DetectionCell> triggered_cells;
  double threshold = 0.0;
};

struct MusicSetup {
  double search_lo = 0.0;
  double search_hi = 1.0;
  double stop_width = 1e-6;
  int model_order = 1;
};

/// Probe vector law. Delay: exp(-j 2 pi step x n). Doppler: exp(+j 2 pi step x n).
/// Spatial laws are handled by steering_vector instead.
struct SteeringLaw {
  enum class Kind { kDelay, kDoppler };
  Kind kind = Kind::kDelay;
  double step = 1.0;  // comb spacing (delay) or symbol duration (Doppler)

  CVector operator()(double at, int n) const;
  static SteeringLaw delay(double comb_spacing) { return {Kind::kDelay, comb_spacing}; }
  static SteeringLaw doppler(double symbol_duration) { return {Kind::kDoppler, symbol_duration}; }
};

/// Signal/noise subspace split of the sample covariance of `snapshots`
/// (one snapshot per column). When there are fewer snapshots than the
/// vector length the decomposition runs on the Gram matrix, which yields
/// the same signal subspace at lower cost.
class MusicSubspace {
 public:
  MusicSubspace(const CMatrix& snapshots, int model_order);

  /// 1 / ||U_n^H a||^2, evaluated as 1 / (||a||^2 - ||U_s^H a||^2).
  double spectrum(const CVector& a) const;

  /// Eigenvalues of the sample covariance in descending order. In the Gram
  /// path only the nonzero part (snapshot count) is returned.
  const RVector& eigenvalues() const { return eigenvalues_; }
  const CMatrix& signal_subspace() const { return signal_; }
  int dimension() const { return static_cast<int>(signal_.rows()); }

 private:
  CMatrix signal_;
  RVector eigenvalues_;
};

/// Sample covariance (1/S) X X^H of column snapshots.
CMatrix sample_covariance(const CMatrix& snapshots);

/// Largest eigenvalue-gap rule for blind model-order selection.
int estimate_model_order(const RVector& descending_eigenvalues, int max_order);

// --- delay-Doppler processing ---------------------------------------------

/// Unitary IDFT along subcarriers and DFT along symbols.
DelayDopplerMap delay_doppler_map(const CMatrix& channel);
std::vector<DelayDopplerMap> delay_doppler_maps(const EchoCube& channel);

double estimate_noise_variance(const DelayDopplerMap& map);

/// Standard normal tail Q(x) and its inverse by bisection.
double q_function(double x);
double q_inverse(double p);
double detection_threshold(double noise_var, double p_fa);

/// Per-cell test Re(Y) > sqrt(s2/2) Q^-1(P_FA) with the zero-Doppler column
/// excluded as static clutter.
DetectionVerdict detect_presence(const DelayDopplerMap& map, double noise_var, double p_fa);
DetectionVerdict detect_presence(const std::vector<DelayDopplerMap>& maps, double noise_var,
                                 double p_fa);

/// Smallest k with P[Binomial(n, p) >= k] <= alpha.
int binomial_vote_threshold(int n, double p, double alpha);

int signed_doppler_bin(int bin, int l);

CoarseEstimate coarse_peak_estimate(const DelayDopplerMap& map, const OfdmConfig& cfg);
/// Non-coherent (power-summed) peak over several antenna maps.
CoarseEstimate coarse_peak_estimate(const std::vector<DelayDopplerMap>& maps,
                                    const OfdmConfig& cfg);

double range_from_delay(double tau);
double speed_from_doppler(double mu, double carrier_frequency);

// --- MUSIC refinement -------------------------------------------------------

double music_spectrum(const CMatrix& snapshots, const SteeringLaw& probe, const MusicSetup& setup,
                      double at);

struct GoldenTrace {
  int iterations = 0;
  std::vector<double> widths;
  std::vector<double> evaluations;
};

double golden_section_refine(const std::function<double(double)>& objective,
                             const MusicSetup& setup, GoldenTrace* trace = nullptr);

/// Stop widths are expressed as fractions of one coarse bin.
struct RefineSetup {
  int model_order = 1;
  double delay_stop_fraction = 1e-3;
  double doppler_stop_fraction = 1e-3;
};

struct TargetEstimate {
  double tau = 0.0;
  double mu = 0.0;
  double range = 0.0;
  double speed = 0.0;
};

/// Snapshot stacks used by the delay and Doppler covariances.
CMatrix delay_snapshots(const EchoCube& channel);
CMatrix doppler_snapshots(const EchoCube& channel);

TargetEstimate refine_target(const EchoCube& channel, const CoarsePeak& coarse,
                             const OfdmConfig& cfg, const RefineSetup& setup);

// --- direction of arrival ---------------------------------------------------

/// Spatial snapshots: one N_r vector per (subcarrier, symbol).
CMatrix spatial_snapshots(const EchoCube& channel);

struct DoaPeak {
  AnglePair angles;
  double spectrum = 0.0;
};

/// Grid scan of the 2D MUSIC spectrum, then one golden pass per axis.
AnglePair estimate_doa_2d(const EchoCube& channel, int model_order,
                          const std::vector<double>& az_grid, const std::vector<double>& el_grid,
                          const ArrayGeometry& rx_geom);
AnglePair estimate_doa_2d_snapshots(const CMatrix& snapshots, int model_order,
                                    const std::vector<double>& az_grid,
                                    const std::vector<double>& el_grid,
                                    const ArrayGeometry& rx_geom);

/// Up to `count` refined local maxima of the 2D spectrum, strongest first.
std::vector<DoaPeak> estimate_doa_peaks(const CMatrix& snapshots, int model_order,
                                        const std::vector<double>& az_grid,
                                        const std::vector<double>& el_grid,
                                        const ArrayGeometry& rx_geom, int count);

std::vector<double> linspace(double lo, double hi, int n);

// --- tracking-mode measurement ---------------------------------------------

struct GatedOptions {
  int gate_bins = 3;          // delay gate half width around the prediction
  int bartlett_oversample = 8;
  double az_half_width = 0.1;  // rad
  double delay_stop_fraction = 1e-3;
  double doppler_stop_fraction = 1e-3;
  double az_stop = 1e-5;
};

struct GatedMeasurement {
  double tau = 0.0;
  double mu = 0.0;
  double range = 0.0;
  double radial_speed = 0.0;
  AnglePair angles;  // steering azimuth and the supplied elevation
  double power = 0.0;
};

/// Single-target measurement around a predicted state: delay from the
/// receive-beamformed delay covariance within the range gate, then Doppler
/// and azimuth from delay-gated per-antenna snapshots.
GatedMeasurement measure_target_gated(const EchoCube& channel, const OfdmConfig& cfg,
                                      const ArrayGeometry& rx_geom, double predicted_range,
                                      double predicted_radial_speed,
                                      const AnglePair& predicted_angles,
                                      const std::function<double(double)>& elevation_of_range,
                                      const GatedOptions& opts = {});

}  // namespace isac
