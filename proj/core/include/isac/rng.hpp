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
#include <random>
#include <vector>

#include "isac/common.hpp"

namespace isac {

/// Seeded random source. Every stochastic operation in the library takes
/// either a seed or a reference to one of these, never global state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() { return uni_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uni_(engine_); }
  double normal() { return norm_(engine_); }

  /// Circular complex Gaussian with E|z|^2 = variance.
  cd complex_normal(double variance);

  /// Fills a matrix with i.i.d. circular Gaussian entries.
  void fill_complex_normal(CMatrix& out, double variance);

  std::vector<std::uint8_t> bits(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uni_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace isac
