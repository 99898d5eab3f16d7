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

#include <vector>

#include "isac/common.hpp"

namespace isac {

/// Half-wavelength uniform planar array. Rows run along the x axis (n_x
/// elements, azimuth phase law) and columns along the vertical axis (n_y
/// elements, elevation phase law).
struct ArrayGeometry {
  int n_x = 1;
  int n_y = 1;

  int size() const { return n_x * n_y; }
  void validate() const;
};

struct AnglePair {
  double azimuth = 0.0;
  double elevation = 0.0;
};

/// Maps any angle into (-pi, pi].
double wrap_azimuth(double a);

/// Unit-norm phase ramp of length n with per-element increment `phase`.
CVector phase_ramp(double phase, int n);

/// Steering vector built from direction cosines. psi_x = sin(az)cos(el) and
/// psi_y = sin(el); entry p*n_y + q equals ramp_x[p]*ramp_y[q].
CVector steering_from_spatial(double psi_x, double psi_y, const ArrayGeometry& geom);

CVector steering_vector(const AnglePair& angles, const ArrayGeometry& geom);

double array_gain_factor(int n_tx, int n_rx);

/// Matched beamformer: conj(a(predicted)), so a(predicted)^T f = 1.
CVector conjugate_beamformer(const AnglePair& predicted, const ArrayGeometry& geom);

/// Quasi-omnidirectional beamformer: a single active element.
CVector omni_beamformer(const ArrayGeometry& geom);

/// Effective gain a(angles)^T f.
cd beam_gain(const AnglePair& angles, const CVector& f, const ArrayGeometry& geom);

/// One DFT beam, stored by its direction cosines together with the weights.
struct CodebookBeam {
  double psi_x = 0.0;
  double psi_y = 0.0;
  CVector weights;
};

/// Oversampled 2D DFT grid: (n_x*over_x) x (n_y*over_y) beams with direction
/// cosines -1 + (2k+1)/(n*over). Beams are conjugated steering vectors.
std::vector<CodebookBeam> dft_codebook(const ArrayGeometry& geom, int over_x, int over_y);

}  // namespace isac
