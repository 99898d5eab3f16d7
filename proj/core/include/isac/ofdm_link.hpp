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
#include <vector>

#include "isac/array_geometry.hpp"
#include "isac/common.hpp"
#include "isac/rng.hpp"

namespace isac {

/// Grid-domain OFDM parameters. `decimation` selects every k-th subcarrier
/// of the physical grid, so the comb spacing seen by the delay law is
/// decimation * subcarrier_spacing while the symbol duration is unchanged.
struct OfdmConfig {
  int m_subcarriers = 64;
  int l_symbols = 14;
  double subcarrier_spacing = 120e3;
  double cp_duration = 0.0;
  double carrier_frequency = 35e9;
  double tx_power = 1.0;
  int decimation = 1;

  double symbol_duration() const { return cp_duration + 1.0 / subcarrier_spacing; }
  double comb_spacing() const { return subcarrier_spacing * decimation; }
  void validate() const;

  /// NR-compliant config whose symbol duration equals the average symbol
  /// duration of numerology mu, 1 ms / (14 * 2^mu).
  static OfdmConfig nr(int mu, int m, int l, double fc, double power = 1.0, int decimation = 1);
};

/// M x L subcarrier-by-symbol grid.
using OfdmGrid = CMatrix;

struct PathParams {
  double delay = 0.0;    // s
  double doppler = 0.0;  // Hz
  cd gain{1.0, 0.0};
  AnglePair angles;
  bool is_los = false;
};
using PathSet = std::vector<PathParams>;

/// One M x L matrix per receive antenna.
using EchoCube = std::vector<CMatrix>;

using Bits = std::vector<std::uint8_t>;

/// Gray-mapped square QAM (2, 4 or 6 bits per symbol), unit average power.
cd qam_map(const std::uint8_t* bits, int bits_per_symbol);
void qam_demap(cd symbol, int bits_per_symbol, std::uint8_t* out);

OfdmGrid modulate_grid(const Bits& bit_stream, const OfdmConfig& cfg, int bits_per_symbol);
Bits demodulate_grid(const OfdmGrid& grid, int bits_per_symbol);

/// Delay law over the comb: eta[m] = exp(-j 2 pi m df tau).
CVector delay_steering(double tau, int m, double comb_spacing);
/// Doppler law over symbols: omega[l] = exp(-j 2 pi l Ts mu).
CVector doppler_steering(double mu, int l, double symbol_duration);

/// Low-level synthesis from explicit per-antenna amplitudes (N_r x K).
EchoCube synthesize_echo_alpha(const OfdmGrid& grid, const PathSet& paths, const CMatrix& alpha,
                               const OfdmConfig& cfg, double noise_var, bool include_ici,
                               Rng& rng);

/// Full echo model: alpha_{k,i} = zeta sqrt(p) beta_k [b(theta_k)]_i a^T(theta_k) f.
EchoCube synthesize_echo(const OfdmGrid& grid, const PathSet& paths, const CVector& f,
                         const ArrayGeometry& tx_geom, const ArrayGeometry& rx_geom,
                         const OfdmConfig& cfg, double noise_var, bool include_ici,
                         std::uint64_t rng_seed);

/// Element-wise division by the transmitted grid.
EchoCube extract_channel(const EchoCube& echo, const OfdmGrid& grid);

/// sigma^2 / (ML) * sum 1/|s|^2.
double post_division_noise_variance(const OfdmGrid& grid, double noise_var);

/// Scalar effective channel sqrt(p) zeta~ sum alpha~ (v^T u)(a^T f).
cd effective_channel(const PathSet& paths, const CVector& f, const CVector& combiner,
                     const ArrayGeometry& tx_geom, const ArrayGeometry& ue_geom,
                     const OfdmConfig& cfg);

double comm_receive_snr(const PathSet& paths, const CVector& f, const CVector& combiner,
                        const ArrayGeometry& tx_geom, const ArrayGeometry& ue_geom,
                        const OfdmConfig& cfg, double noise_var);

struct BerCount {
  std::uint64_t errors = 0;
  std::uint64_t bits = 0;
  double rate() const { return bits ? static_cast<double>(errors) / bits : 0.0; }
};

/// BER over a scalar channel h with perfect equalization.
BerCount measure_ber_scalar(const Bits& tx_bits, cd h, int bits_per_symbol, double noise_var,
                            Rng& rng);

double measure_ber(const Bits& tx_bits, const PathSet& paths, const CVector& f,
                   const CVector& combiner, const ArrayGeometry& tx_geom,
                   const ArrayGeometry& ue_geom, const OfdmConfig& cfg, int bits_per_symbol,
                   double noise_var, std::uint64_t rng_seed);

/// SS-RSRP in dBm from SSS resource elements expressed in sqrt(W).
double ss_rsrp(const std::vector<cd>& sss_res);

}  // namespace isac
