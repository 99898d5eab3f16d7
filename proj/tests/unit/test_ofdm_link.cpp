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

#include "isac/ofdm_link.hpp"
#include "oracles.hpp"

namespace isac {
namespace {

OfdmConfig small_cfg(int m = 32, int l = 14) {
  return OfdmConfig::nr(3, m, l, 35e9);
}

TEST(Qam, QpskCornerAndUnitPower) {
  const std::uint8_t zeros[2] = {0, 0};
  EXPECT_NEAR(std::abs(qam_map(zeros, 2) - cd(1.0, 1.0) / std::sqrt(2.0)), 0.0, 1e-15);
  double p = 0.0;
  for (int s = 0; s < 16; ++s) {
    const std::uint8_t b[4] = {std::uint8_t(s >> 3 & 1), std::uint8_t(s >> 2 & 1),
                               std::uint8_t(s >> 1 & 1), std::uint8_t(s & 1)};
    p += std::norm(qam_map(b, 4));
  }
  EXPECT_NEAR(p / 16.0, 1.0, 1e-12);
}

TEST(Qam, RoundTripAllOrders) {
  for (int q : {2, 4, 6}) {
    const OfdmConfig c = small_cfg(16, 14);
    Rng rng(3);
    const Bits bits = rng.bits(static_cast<std::size_t>(16 * 14 * q));
    EXPECT_EQ(demodulate_grid(modulate_grid(bits, c, q), q), bits);
  }
}

TEST(Qam, LengthMismatchRejected) {
  const OfdmConfig c = small_cfg(16, 14);
  EXPECT_THROW(modulate_grid(Bits(10, 0), c, 2), InputShapeError);
  EXPECT_THROW(modulate_grid(Bits(16 * 14 * 3, 0), c, 3), Error);
}

PathSet one_path(double tau, double mu, cd gain = 1.0) {
  PathParams p;
  p.delay = tau;
  p.doppler = mu;
  p.gain = gain;
  return {p};
}

TEST(Echo, IdentityPath) {
  const OfdmConfig c = small_cfg();
  Rng rng(1);
  const OfdmGrid s = modulate_grid(rng.bits(32 * 14 * 2), c, 2);
  CMatrix alpha(1, 1);
  alpha(0, 0) = 1.0;
  Rng nr(2);
  const EchoCube r = synthesize_echo_alpha(s, one_path(0, 0), alpha, c, 0.0, false, nr);
  EXPECT_LT((r[0] - s).norm(), 1e-12);
}

TEST(Echo, DelayAndDopplerRamps) {
  const OfdmConfig c = small_cfg();
  const int m0 = 3, l0 = 2;
  const double tau = m0 / (c.m_subcarriers * c.comb_spacing());
  const double mu = l0 / (c.l_symbols * c.symbol_duration());
  OfdmGrid ones = OfdmGrid::Ones(c.m_subcarriers, c.l_symbols);
  CMatrix alpha(1, 1);
  alpha(0, 0) = 1.0;
  Rng nr(2);
  const EchoCube r = synthesize_echo_alpha(ones, one_path(tau, mu), alpha, c, 0.0, false, nr);
  for (int m = 0; m < c.m_subcarriers; ++m) {
    for (int l = 0; l < c.l_symbols; ++l) {
      const cd want = std::polar(1.0, -2.0 * kPi * m * m0 / c.m_subcarriers) *
                      std::polar(1.0, 2.0 * kPi * l * l0 / c.l_symbols);
      EXPECT_NEAR(std::abs(r[0](m, l) - want), 0.0, 1e-9);
    }
  }
}

TEST(Echo, ExtractionRecoversChannelForRandomPaths) {
  const OfdmConfig c = small_cfg();
  const ArrayGeometry g{4, 4};
  Rng rng(9);
  const OfdmGrid s = modulate_grid(rng.bits(32 * 14 * 4), c, 4);
  for (int trial = 0; trial < 5; ++trial) {
    PathSet paths;
    const int k = 1 + trial % 4;
    for (int i = 0; i < k; ++i) {
      PathParams p;
      p.delay = rng.uniform(0, 1e-6);
      p.doppler = rng.uniform(-5e3, 5e3);
      p.gain = rng.complex_normal(1.0);
      p.angles = {rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)};
      paths.push_back(p);
    }
    const CVector f = conjugate_beamformer({0.1, 0.0}, g);
    const EchoCube r = synthesize_echo(s, paths, f, g, g, c, 0.0, false, 77);
    const EchoCube h = extract_channel(r, s);
    const double zeta = array_gain_factor(g.size(), g.size());
    for (int i = 0; i < g.size(); ++i) {
      CMatrix want = CMatrix::Zero(c.m_subcarriers, c.l_symbols);
      for (const auto& p : paths) {
        const auto a = oracle::upa_steering(p.angles.azimuth, p.angles.elevation, 4, 4);
        const cd alpha = zeta * p.gain * a(i) * (a.transpose() * f)(0);
        for (int m = 0; m < c.m_subcarriers; ++m) {
          for (int l = 0; l < c.l_symbols; ++l) {
            want(m, l) += alpha * std::polar(1.0, -2 * kPi * m * c.comb_spacing() * p.delay) *
                          std::polar(1.0, 2 * kPi * l * c.symbol_duration() * p.doppler);
          }
        }
      }
      EXPECT_LT((h[static_cast<std::size_t>(i)] - want).norm(), 1e-10 * (1.0 + want.norm()));
    }
  }
}

TEST(Echo, NoiseReproducibleFromSeed) {
  const OfdmConfig c = small_cfg();
  const ArrayGeometry g{2, 2};
  const OfdmGrid s = OfdmGrid::Ones(c.m_subcarriers, c.l_symbols);
  const CVector f = conjugate_beamformer({0.0, 0.0}, g);
  const auto a = synthesize_echo(s, one_path(1e-7, 100), f, g, g, c, 0.5, false, 4);
  const auto b = synthesize_echo(s, one_path(1e-7, 100), f, g, g, c, 0.5, false, 4);
  const auto d = synthesize_echo(s, one_path(1e-7, 100), f, g, g, c, 0.5, false, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ((a[i] - b[i]).norm(), 0.0);
  EXPECT_GT((a[0] - d[0]).norm(), 0.0);
}

TEST(Echo, IciCloseToIdentityAtSmallDoppler) {
  const OfdmConfig c = small_cfg();
  const double mu = 1e-3 / c.symbol_duration();
  Rng rng(1);
  const OfdmGrid s = modulate_grid(rng.bits(32 * 14 * 2), c, 2);
  CMatrix alpha(1, 1);
  alpha(0, 0) = 1.0;
  Rng n1(1), n2(1);
  const auto off = synthesize_echo_alpha(s, one_path(2e-7, mu), alpha, c, 0.0, false, n1);
  const auto on = synthesize_echo_alpha(s, one_path(2e-7, mu), alpha, c, 0.0, true, n2);
  EXPECT_LT((on[0] - off[0]).norm() / off[0].norm(), 1e-2);
}

TEST(Extraction, PostDivisionNoise) {
  const OfdmConfig c = small_cfg(64, 14);
  Rng rng(2);
  const OfdmGrid qpsk = modulate_grid(rng.bits(64 * 14 * 2), c, 2);
  EXPECT_NEAR(post_division_noise_variance(qpsk, 1.0), 1.0, 1e-12);
  const OfdmConfig big = small_cfg(512, 140);
  const OfdmGrid q16 = modulate_grid(rng.bits(512 * 140 * 4), big, 4);
  EXPECT_NEAR(post_division_noise_variance(q16, 1.0), oracle::qam16_inverse_power_mean(), 0.02);
  EXPECT_NEAR(oracle::qam16_inverse_power_mean(), 1.8889, 1e-4);
}

TEST(Extraction, ZeroSymbolRejected) {
  const OfdmConfig c = small_cfg();
  OfdmGrid s = OfdmGrid::Ones(c.m_subcarriers, c.l_symbols);
  s(3, 4) = 0.0;
  EchoCube r{s};
  EXPECT_THROW(extract_channel(r, s), Error);
}

TEST(CommSnr, AlignedLosGivesArrayGain) {
  const OfdmConfig c = small_cfg();
  const ArrayGeometry gnb{8, 8}, ue{4, 4};
  PathParams p;
  p.angles = {0.2, -0.1};
  p.gain = 1.0;
  const CVector f = conjugate_beamformer(p.angles, gnb);
  const CVector v = conjugate_beamformer(p.angles, ue);
  EXPECT_NEAR(comm_receive_snr({p}, f, v, gnb, ue, c, 1.0), 1024.0, 1e-8);
  EXPECT_EQ(comm_receive_snr({}, f, v, gnb, ue, c, 1.0), 0.0);
  OfdmConfig c2 = c;
  c2.tx_power = 2.0;
  EXPECT_NEAR(comm_receive_snr({p}, f, v, gnb, ue, c2, 1.0), 2048.0, 1e-8);
  EXPECT_THROW(comm_receive_snr({p}, f, v, gnb, ue, c, 0.0), Error);
}

TEST(Ber, NoiselessAlignedIsZero) {
  const OfdmConfig c = small_cfg();
  const ArrayGeometry gnb{8, 8}, ue{4, 4};
  PathParams p;
  p.angles = {0.2, -0.1};
  Rng rng(1);
  const Bits bits = rng.bits(32 * 14 * 4);
  const CVector f = conjugate_beamformer(p.angles, gnb);
  const CVector v = conjugate_beamformer(p.angles, ue);
  EXPECT_EQ(measure_ber(bits, {p}, f, v, gnb, ue, c, 4, 0.0, 1), 0.0);
}

TEST(Ber, QpskMatchesTailOracle) {
  Rng rng(21);
  const Bits bits = rng.bits(1'000'000);
  for (double snr_db : {0.0, 4.0, 7.0}) {
    const double gamma = std::pow(10.0, snr_db / 10.0);
    Rng noise(8);
    const BerCount b = measure_ber_scalar(bits, cd(1.0, 0.0), 2, 1.0 / gamma, noise);
    const double want = oracle::qpsk_ber(gamma);
    const double se = std::sqrt(want * (1 - want) / static_cast<double>(b.bits));
    EXPECT_NEAR(b.rate(), want, 3 * se + 1e-12) << snr_db;
  }
}

TEST(Ber, MisalignmentEqualsSnrLoss) {
  Rng rng(4);
  const Bits bits = rng.bits(400'000);
  const double g = 0.6;
  Rng n1(10), n2(10);
  const BerCount a = measure_ber_scalar(bits, cd(g, 0.0), 2, 0.2, n1);
  const BerCount b = measure_ber_scalar(bits, cd(1.0, 0.0), 2, 0.2 / (g * g), n2);
  EXPECT_EQ(a.errors, b.errors);
}

TEST(Ber, MonotoneInSnr) {
  Rng rng(4);
  const Bits bits = rng.bits(200'000);
  double prev = 1.0;
  for (double snr_db = -2; snr_db <= 12; snr_db += 2) {
    Rng noise(3);
    const double r = measure_ber_scalar(bits, 1.0, 4, std::pow(10.0, -snr_db / 10.0), noise).rate();
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(Rsrp, UnitAndScaling) {
  EXPECT_NEAR(ss_rsrp(std::vector<cd>(127, cd(1.0, 0.0))), 30.0, 1e-12);
  EXPECT_NEAR(ss_rsrp(std::vector<cd>(127, cd(std::sqrt(10.0), 0.0))), 40.0, 1e-12);
  const double floor_w = std::pow(10.0, (oracle::thermal_dbm(-174.0, 300e6) - 30.0) / 10.0);
  EXPECT_NEAR(ss_rsrp(std::vector<cd>(127, cd(std::sqrt(floor_w), 0.0))), -89.23, 0.01);
  EXPECT_THROW(ss_rsrp({}), Error);
}

}  // namespace
}  // namespace isac
