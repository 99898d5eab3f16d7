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

#include "isac/radar_proc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

namespace isac {

CVector SteeringLaw::operator()(double at, int n) const {
  CVector v(n);
  const double sgn = kind == Kind::kDelay ? -1.0 : 1.0;
  const double w = sgn * 2.0 * kPi * step * at;
  for (int i = 0; i < n; ++i) v[i] = std::polar(1.0, w * i);
  return v;
}

// ---------------------------------------------------------------------------
// MUSIC subspace

MusicSubspace::MusicSubspace(const CMatrix& snapshots, int model_order) {
  const Eigen::Index n = snapshots.rows();
  const Eigen::Index s = snapshots.cols();
  if (model_order < 1 || model_order >= n) {
    throw DegenerateCovarianceError("model order " + std::to_string(model_order) +
                                    " must lie in [1, " + std::to_string(n - 1) + "]");
  }
  if (s < model_order + 1) {
    throw DegenerateCovarianceError("need at least " + std::to_string(model_order + 1) +
                                    " snapshots, got " + std::to_string(s));
  }
  const double inv_s = 1.0 / static_cast<double>(s);
  const int k = model_order;

  if (s >= n) {
    CMatrix cov = CMatrix::Zero(n, n);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(snapshots, inv_s);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(cov.selfadjointView<Eigen::Lower>());
    if (es.info() != Eigen::Success) throw DegenerateCovarianceError("eigendecomposition failed");
    eigenvalues_ = es.eigenvalues().reverse();
    signal_ = es.eigenvectors().rightCols(k).rowwise().reverse();
  } else {
    // Thin path: nonzero spectrum of X X^H equals that of X^H X.
    CMatrix gram = inv_s * (snapshots.adjoint() * snapshots);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(gram);
    if (es.info() != Eigen::Success) throw DegenerateCovarianceError("eigendecomposition failed");
    eigenvalues_ = es.eigenvalues().reverse();
    signal_.resize(n, k);
    for (int j = 0; j < k; ++j) {
      const double lam = eigenvalues_[j];
      if (lam <= 0.0) break;
      signal_.col(j) = snapshots * es.eigenvectors().col(s - 1 - j) / std::sqrt(s * lam);
    }
  }

  const double total = eigenvalues_.cwiseMax(0.0).sum();
  if (!(total > 0.0) || eigenvalues_[k - 1] <= 1e-12 * total) {
    throw DegenerateCovarianceError("covariance has fewer than " + std::to_string(k) +
                                    " significant eigenvalues");
  }
}

double MusicSubspace::spectrum(const CVector& a) const {
  const double na = a.squaredNorm();
  const double proj = (signal_.adjoint() * a).squaredNorm();
  const double den = std::max(na - proj, na * 1e-15);
  return 1.0 / den;
}

CMatrix sample_covariance(const CMatrix& snapshots) {
  const Eigen::Index s = snapshots.cols();
  if (s == 0) throw InputShapeError("no snapshots");
  CMatrix cov = CMatrix::Zero(snapshots.rows(), snapshots.rows());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(snapshots, 1.0 / static_cast<double>(s));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.adjoint();
  return cov;
}

int estimate_model_order(const RVector& eig, int max_order) {
  const int n = static_cast<int>(eig.size());
  const int top = std::min(max_order, n - 1);
  if (top < 1) return 1;
  int best = 1;
  double best_ratio = -1.0;
  for (int k = 1; k <= top; ++k) {
    const double lo = eig[k];
    if (lo <= 0.0) return k;
    const double ratio = eig[k - 1] / lo;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Delay-Doppler map and detection

DelayDopplerMap delay_doppler_map(const CMatrix& channel) {
  const Eigen::Index M = channel.rows();
  const Eigen::Index L = channel.cols();
  DelayDopplerMap out(M, L);
  if (M == 0 || L == 0) return out;
  Eigen::FFT<double> fft;
  std::vector<cd> in, tmp;
  const double sm = std::sqrt(static_cast<double>(M));
  const double sl = 1.0 / std::sqrt(static_cast<double>(L));
  in.resize(static_cast<std::size_t>(M));
  for (Eigen::Index l = 0; l < L; ++l) {
    for (Eigen::Index m = 0; m < M; ++m) in[static_cast<std::size_t>(m)] = channel(m, l);
    fft.inv(tmp, in);  // includes 1/M
    for (Eigen::Index m = 0; m < M; ++m) out(m, l) = tmp[static_cast<std::size_t>(m)] * sm;
  }
  in.resize(static_cast<std::size_t>(L));
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index l = 0; l < L; ++l) in[static_cast<std::size_t>(l)] = out(m, l);
    fft.fwd(tmp, in);
    for (Eigen::Index l = 0; l < L; ++l) out(m, l) = tmp[static_cast<std::size_t>(l)] * sl;
  }
  return out;
}

std::vector<DelayDopplerMap> delay_doppler_maps(const EchoCube& channel) {
  std::vector<DelayDopplerMap> maps;
  maps.reserve(channel.size());
  for (const auto& r : channel) maps.push_back(delay_doppler_map(r));
  return maps;
}

double estimate_noise_variance(const DelayDopplerMap& map) {
  if (map.size() < 100) throw InputShapeError("noise estimation needs at least 100 cells");
  std::vector<double> p(static_cast<std::size_t>(map.size()));
  for (Eigen::Index k = 0; k < map.size(); ++k) p[static_cast<std::size_t>(k)] = std::norm(map.data()[k]);
  auto mid = p.begin() + static_cast<std::ptrdiff_t>(p.size() / 2);
  std::nth_element(p.begin(), mid, p.end());
  return *mid / std::log(2.0);
}

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double q_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("Q^-1 needs p in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (q_function(mid) > p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double detection_threshold(double noise_var, double p_fa) {
  if (!(noise_var > 0.0)) throw DomainError("noise variance must be positive");
  return std::sqrt(noise_var / 2.0) * q_inverse(p_fa);
}

namespace {

void scan_cells(const DelayDopplerMap& map, int antenna, double thr,
                std::vector<DetectionCell>& out) {
  for (Eigen::Index l = 1; l < map.cols(); ++l) {
    for (Eigen::Index m = 0; m < map.rows(); ++m) {
      if (map(m, l).real() > thr) {
        out.push_back({antenna, static_cast<int>(m), static_cast<int>(l)});
      }
    }
  }
}

}  // namespace

DetectionVerdict detect_presence(const DelayDopplerMap& map, double noise_var, double p_fa) {
  DetectionVerdict v;
  v.threshold = detection_threshold(noise_var, p_fa);
  scan_cells(map, 0, v.threshold, v.triggered_cells);
  v.present = !v.triggered_cells.empty();
  return v;
}

DetectionVerdict detect_presence(const std::vector<DelayDopplerMap>& maps, double noise_var,
                                 double p_fa) {
  DetectionVerdict v;
  v.threshold = detection_threshold(noise_var, p_fa);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    scan_cells(maps[i], static_cast<int>(i), v.threshold, v.triggered_cells);
  }
  v.present = !v.triggered_cells.empty();
  return v;
}

int binomial_vote_threshold(int n, double p, double alpha) {
  if (n < 1 || !(p > 0.0 && p < 1.0)) throw DomainError("invalid binomial parameters");
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    pmf[static_cast<std::size_t>(k)] = std::exp(lc + k * std::log(p) + (n - k) * std::log1p(-p));
  }
  double tail = 0.0;
  int best = n + 1;
  for (int k = n; k >= 0; --k) {
    tail += pmf[static_cast<std::size_t>(k)];
    if (tail <= alpha) best = k; else break;
  }
  return best;
}

int signed_doppler_bin(int bin, int l) { return bin > l / 2 ? bin - l : bin; }

double range_from_delay(double tau) { return tau * kSpeedOfLight / 2.0; }

double speed_from_doppler(double mu, double fc) { return mu * kSpeedOfLight / (2.0 * fc); }

namespace {

CoarseEstimate coarse_from_power(const RMatrix& power, const OfdmConfig& cfg) {
  const int M = static_cast<int>(power.rows());
  const int L = static_cast<int>(power.cols());
  CoarseEstimate est;
  double best = 0.0;
  for (int l = 1; l < L; ++l) {
    for (int m = 0; m < M; ++m) {
      if (power(m, l) > best) {
        best = power(m, l);
        est.peak.delay_bin = m;
        est.peak.doppler_bin = l;
      }
    }
  }
  if (!(best > 0.0)) throw AbsentTargetError("no nonzero-Doppler peak in the delay-Doppler map");
  est.peak.magnitude = std::sqrt(best);
  est.signed_doppler_bin = signed_doppler_bin(est.peak.doppler_bin, L);
  est.range = est.peak.delay_bin * kSpeedOfLight / (2.0 * M * cfg.comb_spacing());
  est.speed = est.signed_doppler_bin * kSpeedOfLight /
              (2.0 * cfg.carrier_frequency * L * cfg.symbol_duration());
  return est;
}

}  // namespace

CoarseEstimate coarse_peak_estimate(const DelayDopplerMap& map, const OfdmConfig& cfg) {
  return coarse_from_power(map.cwiseAbs2(), cfg);
}

CoarseEstimate coarse_peak_estimate(const std::vector<DelayDopplerMap>& maps,
                                    const OfdmConfig& cfg) {
  if (maps.empty()) throw InputShapeError("no maps");
  RMatrix power = RMatrix::Zero(maps[0].rows(), maps[0].cols());
  for (const auto& m : maps) power += m.cwiseAbs2();
  CoarseEstimate est = coarse_from_power(power, cfg);
  est.peak.magnitude /= std::sqrt(static_cast<double>(maps.size()));
  return est;
}

// ---------------------------------------------------------------------------
// Golden-section search and MUSIC refinement

double music_spectrum(const CMatrix& snapshots, const SteeringLaw& probe, const MusicSetup& setup,
                      double at) {
  const MusicSubspace sub(snapshots, setup.model_order);
  return sub.spectrum(probe(at, static_cast<int>(snapshots.rows())));
}

double golden_section_refine(const std::function<double(double)>& objective,
                             const MusicSetup& setup, GoldenTrace* trace) {
  if (!(setup.search_lo < setup.search_hi)) throw DomainError("empty search interval");
  if (!(setup.stop_width > 0.0)) throw DomainError("stop width must be positive");
  const double chi = kGoldenRatio;
  double a = setup.search_lo;
  double b = setup.search_hi;
  auto eval = [&](double x) {
    const double y = objective(x);
    if (!std::isfinite(y)) throw NumericalConditioningError("objective returned a non-finite value");
    if (trace) trace->evaluations.push_back(x);
    return y;
  };
  double x1 = a + (1.0 - chi) * (b - a);
  double x2 = a + chi * (b - a);
  double f1 = eval(x1);
  double f2 = eval(x2);
  if (trace) trace->widths.push_back(b - a);
  int it = 0;
  while (b - a >= setup.stop_width) {
    if (f1 > f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = a + (1.0 - chi) * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + chi * (b - a);
      f2 = eval(x2);
    }
    ++it;
    if (trace) trace->widths.push_back(b - a);
  }
  if (trace) trace->iterations = it;
  return 0.5 * (a + b);
}

CMatrix delay_snapshots(const EchoCube& channel) {
  if (channel.empty()) throw InputShapeError("empty echo cube");
  const Eigen::Index M = channel[0].rows();
  const Eigen::Index L = channel[0].cols();
  CMatrix x(M, static_cast<Eigen::Index>(channel.size()) * L);
  for (std::size_t i = 0; i < channel.size(); ++i) {
    x.middleCols(static_cast<Eigen::Index>(i) * L, L) = channel[i];
  }
  return x;
}

CMatrix doppler_snapshots(const EchoCube& channel) {
  if (channel.empty()) throw InputShapeError("empty echo cube");
  const Eigen::Index M = channel[0].rows();
  const Eigen::Index L = channel[0].cols();
  CMatrix x(L, static_cast<Eigen::Index>(channel.size()) * M);
  for (std::size_t i = 0; i < channel.size(); ++i) {
    x.middleCols(static_cast<Eigen::Index>(i) * M, M) = channel[i].transpose();
  }
  return x;
}

TargetEstimate refine_target(const EchoCube& channel, const CoarsePeak& coarse,
                             const OfdmConfig& cfg, const RefineSetup& setup) {
  const int M = cfg.m_subcarriers;
  const int L = cfg.l_symbols;
  const double ts = cfg.symbol_duration();
  const double tau_bin = 1.0 / (M * cfg.comb_spacing());
  const double mu_bin = 1.0 / (L * ts);

  TargetEstimate est;
  {
    const MusicSubspace sub(delay_snapshots(channel), setup.model_order);
    const SteeringLaw law = SteeringLaw::delay(cfg.comb_spacing());
    MusicSetup ms;
    ms.search_lo = std::max(0.0, (coarse.delay_bin - 1) * tau_bin);
    ms.search_hi = (coarse.delay_bin + 1) * tau_bin;
    ms.stop_width = setup.delay_stop_fraction * tau_bin;
    ms.model_order = setup.model_order;
    est.tau = golden_section_refine([&](double t) { return sub.spectrum(law(t, M)); }, ms);
  }
  {
    const MusicSubspace sub(doppler_snapshots(channel), setup.model_order);
    const SteeringLaw law = SteeringLaw::doppler(ts);
    const int s = signed_doppler_bin(coarse.doppler_bin, L);
    MusicSetup ms;
    ms.search_lo = (s - 1) * mu_bin;
    ms.search_hi = (s + 1) * mu_bin;
    ms.stop_width = setup.doppler_stop_fraction * mu_bin;
    ms.model_order = setup.model_order;
    est.mu = golden_section_refine([&](double u) { return sub.spectrum(law(u, L)); }, ms);
  }
  est.range = range_from_delay(est.tau);
  est.speed = speed_from_doppler(est.mu, cfg.carrier_frequency);
  return est;
}

// ---------------------------------------------------------------------------
// Direction of arrival

CMatrix spatial_snapshots(const EchoCube& channel) {
  if (channel.empty()) throw InputShapeError("empty echo cube");
  const Eigen::Index n = static_cast<Eigen::Index>(channel.size());
  const Eigen::Index cells = channel[0].size();
  CMatrix x(n, cells);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = Eigen::Map<const Eigen::RowVectorXcd>(channel[static_cast<std::size_t>(i)].data(), cells);
  }
  return x;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(std::max(n, 1)));
  if (n <= 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

namespace {

double grid_step(const std::vector<double>& g) {
  return g.size() > 1 ? std::abs(g[1] - g[0]) : 0.0;
}

DoaPeak refine_doa(const MusicSubspace& sub, const ArrayGeometry& geom, AnglePair start,
                   double daz, double del, const std::vector<double>& az_grid,
                   const std::vector<double>& el_grid) {
  auto spec = [&](double az, double el) { return sub.spectrum(steering_vector({az, el}, geom)); };
  AnglePair best = start;
  if (daz > 0.0) {
    MusicSetup ms;
    ms.search_lo = std::max(az_grid.front(), start.azimuth - daz);
    ms.search_hi = std::min(az_grid.back(), start.azimuth + daz);
    ms.stop_width = daz * 1e-3;
    if (ms.search_lo < ms.search_hi) {
      best.azimuth = golden_section_refine([&](double az) { return spec(az, best.elevation); }, ms);
    }
  }
  if (del > 0.0) {
    MusicSetup ms;
    ms.search_lo = std::max(el_grid.front(), start.elevation - del);
    ms.search_hi = std::min(el_grid.back(), start.elevation + del);
    ms.stop_width = del * 1e-3;
    if (ms.search_lo < ms.search_hi) {
      best.elevation = golden_section_refine([&](double el) { return spec(best.azimuth, el); }, ms);
    }
  }
  // Keep the grid point if the axis passes did not improve on it.
  const double s_best = spec(best.azimuth, best.elevation);
  const double s_start = spec(start.azimuth, start.elevation);
  if (s_start > s_best) return {start, s_start};
  return {best, s_best};
}

RMatrix scan_grid(const MusicSubspace& sub, const ArrayGeometry& geom,
                  const std::vector<double>& az_grid, const std::vector<double>& el_grid) {
  RMatrix s(static_cast<Eigen::Index>(az_grid.size()), static_cast<Eigen::Index>(el_grid.size()));
  for (std::size_t a = 0; a < az_grid.size(); ++a) {
    for (std::size_t e = 0; e < el_grid.size(); ++e) {
      s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(e)) =
          sub.spectrum(steering_vector({az_grid[a], el_grid[e]}, geom));
    }
  }
  return s;
}

}  // namespace

AnglePair estimate_doa_2d_snapshots(const CMatrix& snapshots, int model_order,
                                    const std::vector<double>& az_grid,
                                    const std::vector<double>& el_grid,
                                    const ArrayGeometry& rx_geom) {
  const auto peaks = estimate_doa_peaks(snapshots, model_order, az_grid, el_grid, rx_geom, 1);
  return peaks.front().angles;
}

AnglePair estimate_doa_2d(const EchoCube& channel, int model_order,
                          const std::vector<double>& az_grid, const std::vector<double>& el_grid,
                          const ArrayGeometry& rx_geom) {
  if (static_cast<int>(channel.size()) != rx_geom.size()) {
    throw InputShapeError("echo cube antenna count does not match the receive array");
  }
  if (rx_geom.size() <= model_order) throw DegenerateCovarianceError("N_r must exceed model order");
  return estimate_doa_2d_snapshots(spatial_snapshots(channel), model_order, az_grid, el_grid,
                                   rx_geom);
}

std::vector<DoaPeak> estimate_doa_peaks(const CMatrix& snapshots, int model_order,
                                        const std::vector<double>& az_grid,
                                        const std::vector<double>& el_grid,
                                        const ArrayGeometry& rx_geom, int count) {
  if (az_grid.empty() || el_grid.empty()) throw InputShapeError("empty angle grid");
  if (snapshots.rows() != rx_geom.size()) throw InputShapeError("snapshot length mismatch");
  const MusicSubspace sub(snapshots, model_order);
  const RMatrix s = scan_grid(sub, rx_geom, az_grid, el_grid);
  const Eigen::Index na = s.rows();
  const Eigen::Index ne = s.cols();

  struct Cand {
    Eigen::Index a, e;
    double v;
  };
  std::vector<Cand> cands;
  for (Eigen::Index a = 0; a < na; ++a) {
    for (Eigen::Index e = 0; e < ne; ++e) {
      const double v = s(a, e);
      bool is_max = true;
      for (Eigen::Index da = -1; da <= 1 && is_max; ++da) {
        for (Eigen::Index de = -1; de <= 1; ++de) {
          if (da == 0 && de == 0) continue;
          const Eigen::Index aa = a + da, ee = e + de;
          if (aa < 0 || ee < 0 || aa >= na || ee >= ne) continue;
          if (s(aa, ee) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) cands.push_back({a, e, v});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.v > y.v; });
  if (cands.empty()) {
    Eigen::Index a = 0, e = 0;
    s.maxCoeff(&a, &e);
    cands.push_back({a, e, s(a, e)});
  }
  const double daz = grid_step(az_grid);
  const double del = grid_step(el_grid);
  std::vector<DoaPeak> out;
  for (const auto& c : cands) {
    if (static_cast<int>(out.size()) >= count) break;
    out.push_back(refine_doa(sub, rx_geom,
                             {az_grid[static_cast<std::size_t>(c.a)], el_grid[static_cast<std::size_t>(c.e)]},
                             daz, del, az_grid, el_grid));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tracking-mode gated measurement

GatedMeasurement measure_target_gated(const EchoCube& channel, const OfdmConfig& cfg,
                                      const ArrayGeometry& rx_geom, double predicted_range,
                                      double predicted_radial_speed,
                                      const AnglePair& predicted_angles,
                                      const std::function<double(double)>& elevation_of_range,
                                      const GatedOptions& opts) {
  if (static_cast<int>(channel.size()) != rx_geom.size()) {
    throw InputShapeError("echo cube antenna count does not match the receive array");
  }
  const int M = cfg.m_subcarriers;
  const int L = cfg.l_symbols;
  const double ts = cfg.symbol_duration();
  const double tau_bin = 1.0 / (M * cfg.comb_spacing());
  const double mu_bin = 1.0 / (L * ts);
  const SteeringLaw dlaw = SteeringLaw::delay(cfg.comb_spacing());
  const SteeringLaw vlaw = SteeringLaw::doppler(ts);

  // Receive beam towards the predicted direction.
  const CVector b = steering_vector(predicted_angles, rx_geom);
  CMatrix yb = CMatrix::Zero(M, L);
  for (int i = 0; i < rx_geom.size(); ++i) yb += std::conj(b[i]) * channel[static_cast<std::size_t>(i)];

  // Bartlett scan inside the range gate.
  const double tau_pred = 2.0 * predicted_range / kSpeedOfLight;
  const int steps = 2 * opts.gate_bins * opts.bartlett_oversample;
  double tau_c = tau_pred, best = -1.0;
  for (int k = 0; k <= steps; ++k) {
    const double t = tau_pred + (static_cast<double>(k) / opts.bartlett_oversample - opts.gate_bins) * tau_bin;
    if (t < 0.0) continue;
    const double p = (dlaw(t, M).adjoint() * yb).squaredNorm();
    if (p > best) {
      best = p;
      tau_c = t;
    }
  }

  GatedMeasurement out;
  {
    const MusicSubspace sub(yb, 1);
    MusicSetup ms;
    ms.search_lo = std::max(0.0, tau_c - tau_bin);
    ms.search_hi = tau_c + tau_bin;
    ms.stop_width = opts.delay_stop_fraction * tau_bin;
    out.tau = golden_section_refine([&](double t) { return sub.spectrum(dlaw(t, M)); }, ms);
  }
  out.range = range_from_delay(out.tau);

  // Delay-gated per-antenna slow-time snapshots, N_r x L.
  const CVector ad = dlaw(out.tau, M);
  CMatrix z(rx_geom.size(), L);
  for (int i = 0; i < rx_geom.size(); ++i) {
    z.row(i) = (ad.adjoint() * channel[static_cast<std::size_t>(i)]) / static_cast<double>(M);
  }
  out.power = z.squaredNorm() / static_cast<double>(z.size());

  {
    const CMatrix zt = z.transpose();  // L x N_r, one snapshot per antenna
    const double mu_pred = 2.0 * predicted_radial_speed * cfg.carrier_frequency / kSpeedOfLight;
    double mu_c = mu_pred, pbest = -1.0;
    const int vsteps = 3 * opts.bartlett_oversample;
    for (int k = 0; k <= vsteps; ++k) {
      const double u = mu_pred + (static_cast<double>(k) / opts.bartlett_oversample - 1.5) * mu_bin;
      const double p = (vlaw(u, L).adjoint() * zt).squaredNorm();
      if (p > pbest) {
        pbest = p;
        mu_c = u;
      }
    }
    const MusicSubspace sub(zt, 1);
    MusicSetup ms;
    ms.search_lo = mu_c - mu_bin;
    ms.search_hi = mu_c + mu_bin;
    ms.stop_width = opts.doppler_stop_fraction * mu_bin;
    out.mu = golden_section_refine([&](double u) { return sub.spectrum(vlaw(u, L)); }, ms);
  }
  out.radial_speed = speed_from_doppler(out.mu, cfg.carrier_frequency);

  {
    const double el = elevation_of_range(out.range);
    const MusicSubspace sub(z, 1);
    MusicSetup ms;
    ms.search_lo = predicted_angles.azimuth - opts.az_half_width;
    ms.search_hi = predicted_angles.azimuth + opts.az_half_width;
    ms.stop_width = opts.az_stop;
    out.angles.elevation = el;
    out.angles.azimuth = golden_section_refine(
        [&](double az) { return sub.spectrum(steering_vector({az, el}, rx_geom)); }, ms);
  }
  return out;
}

}  // namespace isac
