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

#include <optional>

#include "isac/array_geometry.hpp"
#include "isac/common.hpp"

namespace isac {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// Kinematic state [theta, d, v, beta]. theta is the angle from array
/// broadside along the array row axis, d the range, v the speed along the
/// road (positive in the direction of travel), beta the real reflection
/// magnitude.
struct TrackState {
  double azimuth = 0.0;
  double range = 1.0;
  double speed = 0.0;
  double refl_coeff = 0.0;

  Vec4 vec() const { return {azimuth, range, speed, refl_coeff}; }
  static TrackState from(const Vec4& x) { return {x[0], x[1], x[2], x[3]}; }
};

struct NoiseSpec {
  Vec4 process = Vec4::Zero();
  Vec4 measurement = Vec4::Zero();

  void validate() const;
  /// Table defaults; beta variances are relative to beta0^2.
  static NoiseSpec defaults(double beta0);
};

struct TrackBelief {
  TrackState mean;
  Mat4 mse = Mat4::Identity();
};

struct EkfStepResult {
  TrackBelief posterior;
  TrackState prediction;  // x_{n|n-1}
  TrackState one_ahead;   // g(x_n)
  TrackState two_ahead;   // g(x_{n|n-1}) = x_{n+1|n-1}
};

TrackState evolve_state(const TrackState& prev, double dt,
                        const std::optional<Vec4>& noise = std::nullopt);

Mat4 jacobian(const TrackState& state, double dt);

EkfStepResult ekf_step(const TrackBelief& belief, const TrackState& measurement,
                       const NoiseSpec& noise, double dt);

/// Bridges a detection to a track: beta = rcs / (2d)^2, mse = 10 x Q_m.
TrackBelief init_track(double range, double speed, const AnglePair& angles,
                       const NoiseSpec& noise, double rcs = 1.0);

}  // namespace isac
