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


// Reference computations written from first principles. Nothing here calls
// into the library under test, so a test that compares the two has a real
// second opinion.

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

namespace oracle {

using cd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kC = 3.0e8;

/// Upper-tail standard normal quantile, from Boost.Math.
inline double upper_normal_quantile(double p) {
  boost::math::normal_distribution<double> n;
  return boost::math::quantile(boost::math::complement(n, p));
}

inline double q_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Gray-coded QPSK bit error rate over AWGN at symbol SNR gamma.
inline double qpsk_ber(double gamma) { return q_tail(std::sqrt(gamma)); }

/// Explicit UPA steering entry by entry, index p * n_y + q.
inline Vec upa_steering(double az, double el, int nx, int ny) {
  Vec a(nx * ny);
  const double ux = kPi * std::sin(az) * std::cos(el);
  const double uy = kPi * std::sin(el);
  const double norm = 1.0 / std::sqrt(static_cast<double>(nx * ny));
  for (int p = 0; p < nx; ++p) {
    for (int q = 0; q < ny; ++q) a(p * ny + q) = norm * std::polar(1.0, ux * p + uy * q);
  }
  return a;
}

/// Brute-force delay-Doppler map: unitary IDFT over rows, DFT over columns.
inline Mat naive_dd_map(const Mat& r) {
  const auto M = r.rows();
  const auto L = r.cols();
  Mat y = Mat::Zero(M, L);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index l = 0; l < L; ++l) {
      cd acc = 0.0;
      for (Eigen::Index a = 0; a < M; ++a) {
        for (Eigen::Index b = 0; b < L; ++b) {
          const double ph = 2.0 * kPi * (static_cast<double>(a * m) / M - static_cast<double>(b * l) / L);
          acc += r(a, b) * std::polar(1.0, ph);
        }
      }
      y(m, l) = acc / std::sqrt(static_cast<double>(M * L));
    }
  }
  return y;
}

/// Mean of 1/|s|^2 over the unit-power square 16-QAM constellation.
inline double qam16_inverse_power_mean() {
  const double e = std::sqrt(10.0);
  double acc = 0.0;
  for (int i : {-3, -1, 1, 3}) {
    for (int q : {-3, -1, 1, 3}) acc += 1.0 / ((i * i + q * q) / (e * e));
  }
  return acc / 16.0;
}

/// The kinematic evolution written out term by term.
struct Kin {
  double theta, d, v, beta;
};
inline Kin evolve(const Kin& x, double dt) {
  const double iota = 1.0 - x.v * dt * std::sin(x.theta) / x.d;
  return {x.theta - x.v * dt * std::cos(x.theta) / x.d, x.d - x.v * dt * std::sin(x.theta), x.v,
          x.beta * iota * iota};
}

/// Downlink throughput in Mbps with clamping of the efficiency term.
inline double throughput_mbps(int layers, int q, int prb, double ts, double ber, double oh) {
  return 1e-6 * layers * q * prb * 12.0 / ts * std::max(0.0, 1.0 - ber - oh);
}

/// Thermal noise power in dBm for a density in dBm/Hz and a bandwidth in Hz.
inline double thermal_dbm(double density_dbm_hz, double bandwidth_hz) {
  return density_dbm_hz + 10.0 * std::log10(bandwidth_hz);
}

}  // namespace oracle
