//
// Copyright 2026 The dpnc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpnc/random.h"

#include <cmath>

#include "dpnc/privacy.h"

namespace dpnc {
namespace {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t DeriveSeed(uint64_t master_seed, uint64_t stream_index) {
  return SplitMix64(SplitMix64(master_seed) ^ SplitMix64(~stream_index));
}

double Rng::UniformOpen() {
  // 53 random mantissa bits, shifted by half an ulp so 0 is never produced.
  const uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

Vector Rng::GaussianVector(int dim, double stddev) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = stddev * Gaussian();
  return v;
}

double Rng::Laplace(double scale) {
  if (scale == 0.0) return 0.0;
  // UniformOpen never returns 0 or 1, so the quantile is always finite.
  return *LaplaceInverseCdf(UniformOpen(), scale);
}

}  // namespace dpnc
