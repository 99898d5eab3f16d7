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

#include "isac/rng.hpp"

namespace isac {

cd Rng::complex_normal(double variance) {
  const double s = std::sqrt(0.5 * variance);
  const double re = norm_(engine_);
  const double im = norm_(engine_);
  return {s * re, s * im};
}

void Rng::fill_complex_normal(CMatrix& out, double variance) {
  if (variance <= 0.0) return;
  const double s = std::sqrt(0.5 * variance);
  // Column-major walk keeps the draw order tied to storage order.
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double re = norm_(engine_);
      const double im = norm_(engine_);
      out(r, c) += cd(s * re, s * im);
    }
  }
}

std::vector<std::uint8_t> Rng::bits(std::size_t n) {
  std::vector<std::uint8_t> out(n);
  std::uint64_t word = 0;
  int left = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (left == 0) {
      word = engine_();
      left = 64;
    }
    out[i] = static_cast<std::uint8_t>(word & 1u);
    word >>= 1;
    --left;
  }
  return out;
}

}  // namespace isac
