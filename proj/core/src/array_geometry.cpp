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

#include "isac/array_geometry.hpp"

#include <string>

namespace isac {

void ArrayGeometry::validate() const {
  if (n_x < 1 || n_y < 1) {
    throw InputShapeError("array geometry needs n_x >= 1 and n_y >= 1, got " +
                          std::to_string(n_x) + "x" + std::to_string(n_y));
  }
}

double wrap_azimuth(double a) {
  double w = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

CVector phase_ramp(double phase, int n) {
  CVector v(n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < n; ++k) v[k] = std::polar(norm, phase * k);
  return v;
}

CVector steering_from_spatial(double psi_x, double psi_y, const ArrayGeometry& geom) {
  geom.validate();
  const CVector vx = phase_ramp(kPi * psi_x, geom.n_x);
  const CVector vy = phase_ramp(kPi * psi_y, geom.n_y);
  CVector out(geom.size());
  for (int p = 0; p < geom.n_x; ++p) {
    out.segment(p * geom.n_y, geom.n_y) = vx[p] * vy;
  }
  return out;
}

CVector steering_vector(const AnglePair& angles, const ArrayGeometry& geom) {
  const double az = wrap_azimuth(angles.azimuth);
  const double el = angles.elevation;
  return steering_from_spatial(std::sin(az) * std::cos(el), std::sin(el), geom);
}

double array_gain_factor(int n_tx, int n_rx) {
  if (n_tx < 1 || n_rx < 1) throw DomainError("antenna counts must be positive");
  return std::sqrt(static_cast<double>(n_tx) * static_cast<double>(n_rx));
}

CVector conjugate_beamformer(const AnglePair& predicted, const ArrayGeometry& geom) {
  return steering_vector(predicted, geom).conjugate();
}

CVector omni_beamformer(const ArrayGeometry& geom) {
  geom.validate();
  CVector f = CVector::Zero(geom.size());
  f[0] = 1.0;
  return f;
}

cd beam_gain(const AnglePair& angles, const CVector& f, const ArrayGeometry& geom) {
  const CVector a = steering_vector(angles, geom);
  if (a.size() != f.size()) throw InputShapeError("beamformer length mismatch");
  return (a.transpose() * f)(0);
}

std::vector<CodebookBeam> dft_codebook(const ArrayGeometry& geom, int over_x, int over_y) {
  geom.validate();
  if (over_x < 1 || over_y < 1) throw DomainError("oversampling must be >= 1");
  const int gx = geom.n_x * over_x;
  const int gy = geom.n_y * over_y;
  std::vector<CodebookBeam> book;
  book.reserve(static_cast<std::size_t>(gx) * gy);
  for (int i = 0; i < gx; ++i) {
    const double px = -1.0 + (2.0 * i + 1.0) / gx;
    for (int k = 0; k < gy; ++k) {
      const double py = -1.0 + (2.0 * k + 1.0) / gy;
      book.push_back({px, py, steering_from_spatial(px, py, geom).conjugate()});
    }
  }
  return book;
}

}  // namespace isac
