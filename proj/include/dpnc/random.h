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

#ifndef DPNC_RANDOM_H_
#define DPNC_RANDOM_H_

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace dpnc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Derives an independent stream seed from a master seed and a stream index
// (trial number, chain id, ...). Two rounds of SplitMix64 finalization.
uint64_t DeriveSeed(uint64_t master_seed, uint64_t stream_index);

// Seeded random source. Every noise draw in the library goes through one of
// these, so a run is a pure function of its seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1).
  double UniformOpen();
  double Gaussian() { return normal_(engine_); }
  // Spherical Gaussian with the given per-coordinate standard deviation.
  Vector GaussianVector(int dim, double stddev);
  // Draw from Lap(scale) through the inverse CDF. A zero scale returns 0.
  double Laplace(double scale);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dpnc

#endif  // DPNC_RANDOM_H_
