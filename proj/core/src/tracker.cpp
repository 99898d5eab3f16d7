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

#include "isac/tracker.hpp"

#include <Eigen/Cholesky>

namespace isac {

namespace {

void check_range(double d) {
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw DegenerateGeometryError("track range must be positive and finite");
  }
}

}  // namespace

void NoiseSpec::validate() const {
  if ((process.array() < 0.0).any() || (measurement.array() < 0.0).any()) {
    throw DomainError("noise variances must be nonnegative");
  }
}

NoiseSpec NoiseSpec::defaults(double beta0) {
  NoiseSpec n;
  const double b2 = beta0 * beta0;
  n.process << 1e-6, 1e-6, 1e-6, 1e-6 * b2;
  n.measurement << 0.1 * 0.1, 0.2 * 0.2, 0.15 * 0.15, 1e-2 * b2;
  return n;
}

TrackState evolve_state(const TrackState& prev, double dt, const std::optional<Vec4>& noise) {
  check_range(prev.range);
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const double s = std::sin(prev.azimuth);
  const double c = std::cos(prev.azimuth);
  const double step = prev.speed * dt;
  const double iota = 1.0 - step * s / prev.range;
  TrackState next;
  next.azimuth = prev.azimuth - step * c / prev.range;
  next.range = prev.range - step * s;
  next.speed = prev.speed;
  next.refl_coeff = prev.refl_coeff * iota * iota;
  if (noise) {
    next.azimuth += (*noise)[0];
    next.range += (*noise)[1];
    next.speed += (*noise)[2];
    next.refl_coeff += (*noise)[3];
  }
  check_range(next.range);
  return next;
}

Mat4 jacobian(const TrackState& x, double dt) {
  check_range(x.range);
  const double s = std::sin(x.azimuth);
  const double c = std::cos(x.azimuth);
  const double d = x.range;
  const double v = x.speed;
  const double iota = 1.0 - v * dt * s / d;
  Mat4 g = Mat4::Zero();
  g(0, 0) = 1.0 + v * dt * s / d;
  g(0, 1) = v * dt * c / (d * d);
  g(0, 2) = -dt * c / d;
  g(1, 0) = -v * dt * c;
  g(1, 1) = 1.0;
  g(1, 2) = -dt * s;
  g(2, 2) = 1.0;
  g(3, 0) = -2.0 * x.refl_coeff * iota * v * dt * c / d;
  g(3, 1) = 2.0 * x.refl_coeff * iota * v * dt * s / (d * d);
  g(3, 2) = -2.0 * x.refl_coeff * iota * dt * s / d;
  g(3, 3) = iota * iota;
  return g;
}

EkfStepResult ekf_step(const TrackBelief& belief, const TrackState& measurement,
                       const NoiseSpec& noise, double dt) {
  noise.validate();
  EkfStepResult r;
  r.prediction = evolve_state(belief.mean, dt);
  const Mat4 g = jacobian(belief.mean, dt);
  const Mat4 m_pred = g * belief.mse * g.transpose() + Mat4(noise.process.asDiagonal());
  const Mat4 innov = Mat4(noise.measurement.asDiagonal()) + m_pred;

  Eigen::LLT<Mat4> llt(innov);
  const double scale = innov.diagonal().cwiseAbs().maxCoeff();
  if (llt.info() != Eigen::Success || !(scale > 0.0) ||
      llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 1e-12 * std::sqrt(scale)) {
    throw NumericalConditioningError("innovation covariance is singular");
  }
  const Mat4 gain = llt.solve(m_pred.transpose()).transpose();

  Vec4 resid = measurement.vec() - r.prediction.vec();
  resid[0] = wrap_azimuth(resid[0]);
  const Vec4 x = r.prediction.vec() + gain * resid;
  Mat4 m = (Mat4::Identity() - gain) * m_pred;
  m = (0.5 * (m + m.transpose())).eval();

  r.posterior.mean = TrackState::from(x);
  r.posterior.mse = m;
  r.one_ahead = evolve_state(r.posterior.mean, dt);
  r.two_ahead = evolve_state(r.prediction, dt);
  return r;
}

TrackBelief init_track(double range, double speed, const AnglePair& angles,
                       const NoiseSpec& noise, double rcs) {
  if (!(range > 0.0) || !std::isfinite(range)) throw DegenerateGeometryError("nonpositive range");
  if (!std::isfinite(speed) || !std::isfinite(angles.azimuth)) {
    throw DomainError("detection must be finite");
  }
  noise.validate();
  TrackBelief b;
  b.mean.azimuth = angles.azimuth;
  b.mean.range = range;
  b.mean.speed = speed;
  b.mean.refl_coeff = rcs / (4.0 * range * range);
  b.mse = Mat4(10.0 * noise.measurement.asDiagonal());
  return b;
}

}  // namespace isac
