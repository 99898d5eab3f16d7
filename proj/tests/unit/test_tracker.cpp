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

#include <Eigen/Eigenvalues>

#include "isac/rng.hpp"
#include "isac/tracker.hpp"
#include "oracles.hpp"

namespace isac {
namespace {

constexpr double kDt = 1.25e-4;

TrackState st(double th, double d, double v, double b) { return {th, d, v, b}; }

TEST(Evolution, AgreesWithDirectFormula) {
  const TrackState a = evolve_state(st(0.0, 50.0, 20.0, 1.0), kDt);
  EXPECT_NEAR(a.azimuth, -5.0e-5, 1e-15);
  EXPECT_DOUBLE_EQ(a.range, 50.0);
  EXPECT_EQ(a.speed, 20.0);

  const TrackState b = evolve_state(st(kPi / 2, 50.0, 20.0, 0.7), kDt);
  EXPECT_NEAR(b.refl_coeff, 0.7 * (1 - 5e-5) * (1 - 5e-5), 1e-15);

  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const oracle::Kin k{rng.uniform(-1.4, 1.4), rng.uniform(5, 200), rng.uniform(-30, 30),
                        rng.uniform(1e-6, 1.0)};
    const oracle::Kin e = oracle::evolve(k, kDt);
    const TrackState s = evolve_state(st(k.theta, k.d, k.v, k.beta), kDt);
    EXPECT_NEAR(s.azimuth, e.theta, 1e-14);
    EXPECT_NEAR(s.range, e.d, 1e-12);
    EXPECT_NEAR(s.refl_coeff, e.beta, 1e-14);
  }
}

TEST(Evolution, NoiseIsAdditiveAndRangeUnderflowThrows) {
  const Vec4 w(1e-3, 0.1, -0.2, 1e-4);
  const TrackState clean = evolve_state(st(0.3, 40, 10, 0.5), kDt);
  const TrackState noisy = evolve_state(st(0.3, 40, 10, 0.5), kDt, w);
  EXPECT_LT((noisy.vec() - clean.vec() - w).norm(), 1e-14);
  EXPECT_THROW(evolve_state(st(1.0, 1e-3, 100, 1), kDt), DegenerateGeometryError);
  EXPECT_THROW(evolve_state(st(0.0, -1.0, 0, 1), kDt), DegenerateGeometryError);
  EXPECT_THROW(evolve_state(st(0.0, 10.0, 0, 1), 0.0), Error);
}

TEST(Jacobian, PrintedEntries) {
  const Mat4 j = jacobian(st(0.0, 50.0, 20.0, 1.0), kDt);
  EXPECT_NEAR(j(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(j(0, 1), 1.0e-6, 1e-18);
  EXPECT_NEAR(j(0, 2), -2.5e-6, 1e-18);
  const Mat4 still = jacobian(st(0.4, 50.0, 0.0, 1.0), kDt);
  // The speed column keeps its lever arm, every other motion term vanishes.
  for (int c : {0, 1, 3}) {
    EXPECT_EQ(still(0, c), c == 0 ? 1.0 : 0.0);
    EXPECT_EQ(still(1, c), c == 1 ? 1.0 : 0.0);
  }
  EXPECT_NE(still(0, 2), 0.0);
}

TEST(Jacobian, CentralDifferences) {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Vec4 x(rng.uniform(-1.4, 1.4), rng.uniform(5, 200), rng.uniform(-30, 30),
                 rng.uniform(1e-3, 1.0));
    const Mat4 j = jacobian(TrackState::from(x), kDt);
    for (int c = 0; c < 4; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[c]));
      Vec4 xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      const Vec4 fd =
          (evolve_state(TrackState::from(xp), kDt).vec() - evolve_state(TrackState::from(xm), kDt).vec()) /
          (2 * h);
      for (int r = 0; r < 4; ++r) {
        EXPECT_NEAR(j(r, c), fd[r], 1e-6 * std::max(1.0, std::abs(fd[r]))) << r << "," << c;
      }
    }
  }
}

NoiseSpec uniform_noise(double proc, double meas) {
  NoiseSpec n;
  n.process.setConstant(proc);
  n.measurement.setConstant(meas);
  return n;
}

TEST(Ekf, GainLimits) {
  TrackBelief b;
  b.mean = st(0.4, 45, 18, 1e-3);
  b.mse = Mat4::Identity() * 0.01;
  const TrackState y = st(0.41, 45.3, 18.2, 1.1e-3);
  const EkfStepResult trust = ekf_step(b, y, uniform_noise(1e-6, 1e-12), kDt);
  EXPECT_LT((trust.posterior.mean.vec() - y.vec()).cwiseAbs().maxCoeff(), 1e-6);
  const EkfStepResult ignore = ekf_step(b, y, uniform_noise(1e-6, 1e12), kDt);
  EXPECT_LT((ignore.posterior.mean.vec() - ignore.prediction.vec()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(ekf_step(TrackBelief{b.mean, Mat4::Zero()}, y, uniform_noise(0, 0), kDt),
               NumericalConditioningError);
}

TEST(Ekf, PredictionConventions) {
  TrackBelief b;
  b.mean = st(0.5, 40, 20, 1e-3);
  b.mse = Mat4::Identity() * 1e-3;
  const EkfStepResult r = ekf_step(b, st(0.5, 40, 20, 1e-3), NoiseSpec::defaults(1e-3), kDt);
  const Vec4 pred = evolve_state(b.mean, kDt).vec();
  EXPECT_EQ(r.prediction.vec(), pred);
  EXPECT_EQ(r.one_ahead.vec(), evolve_state(r.posterior.mean, kDt).vec());
  EXPECT_EQ(r.two_ahead.vec(), evolve_state(TrackState::from(pred), kDt).vec());
}

TEST(Ekf, ClosedLoopNoiselessTrajectory) {
  TrackState truth = st(0.488, 47.18, 20.0, 0.1 / (4 * 47.18 * 47.18));
  const NoiseSpec noise = NoiseSpec::defaults(truth.refl_coeff);
  TrackBelief b = init_track(truth.range, truth.speed, {truth.azimuth, 0.0}, noise, 0.1);
  for (int n = 1; n <= 2000; ++n) {
    truth = evolve_state(truth, kDt);
    b = ekf_step(b, truth, noise, kDt).posterior;
    if (n > 10) {
      ASSERT_LT(std::abs(b.mean.azimuth - truth.azimuth), 1e-4) << "slot " << n;
    }
  }
}

TEST(Ekf, CovarianceStaysPsdAndTraceShrinks) {
  Rng rng(13);
  TrackState truth = st(0.488, 47.18, 20.0, 1e-3);
  const NoiseSpec noise = NoiseSpec::defaults(1e-3);
  TrackBelief b = init_track(47.18, 20.0, {0.488, 0.0}, noise, 4 * 47.18 * 47.18 * 1e-3);
  double min_eig = 1.0;
  for (int n = 0; n < 32000; ++n) {
    truth = evolve_state(truth, kDt);
    if (truth.range < 5.0) break;
    TrackState y = truth;
    y.azimuth += 0.1 * rng.normal();
    y.range += 0.2 * rng.normal();
    y.speed += 0.15 * rng.normal();
    y.refl_coeff += 1e-4 * rng.normal();
    const TrackBelief prior = b;
    const EkfStepResult r = ekf_step(prior, y, noise, kDt);
    const Mat4 g = jacobian(prior.mean, kDt);
    const Mat4 m_pred = g * prior.mse * g.transpose() + Mat4(noise.process.asDiagonal());
    ASSERT_LE(r.posterior.mse.trace(), m_pred.trace() + 1e-15);
    ASSERT_EQ(r.posterior.mse, r.posterior.mse.transpose());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat4>(r.posterior.mse).eigenvalues().minCoeff());
    b = r.posterior;
  }
  EXPECT_GE(min_eig, -1e-9);
}

TEST(Ekf, Deterministic) {
  TrackBelief b = init_track(47.18, 20.0, {0.488, 0.0}, NoiseSpec::defaults(1e-3));
  TrackBelief c = b;
  for (int n = 0; n < 100; ++n) {
    const TrackState y = st(0.488 - 1e-5 * n, 47.18 - 0.002 * n, 20, 1e-3);
    b = ekf_step(b, y, NoiseSpec::defaults(1e-3), kDt).posterior;
    c = ekf_step(c, y, NoiseSpec::defaults(1e-3), kDt).posterior;
  }
  EXPECT_EQ(b.mean.vec(), c.mean.vec());
  EXPECT_EQ(b.mse, c.mse);
}

TEST(InitTrack, PassThroughAndValidation) {
  const NoiseSpec noise = NoiseSpec::defaults(1e-3);
  const TrackBelief b = init_track(47.18, 20.0, {0.488, -0.1}, noise);
  EXPECT_EQ(b.mean.range, 47.18);
  EXPECT_EQ(b.mean.speed, 20.0);
  EXPECT_EQ(b.mean.azimuth, 0.488);
  EXPECT_NEAR(b.mean.refl_coeff, 1.0 / (4 * 47.18 * 47.18), 1e-15);
  EXPECT_EQ(b.mse, Mat4(10.0 * noise.measurement.asDiagonal()));
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat4>(b.mse).eigenvalues().minCoeff(), 0.0);
  const TrackBelief again = init_track(47.18, 20.0, {0.488, -0.1}, noise);
  EXPECT_EQ(again.mean.vec(), b.mean.vec());
  EXPECT_THROW(init_track(0.0, 1.0, {}, noise), DegenerateGeometryError);
  NoiseSpec bad = noise;
  bad.process[1] = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace isac
