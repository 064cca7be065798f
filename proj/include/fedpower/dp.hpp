// Copyright 2026 The FedPower Authors
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

#ifndef FEDPOWER_DP_HPP_
#define FEDPOWER_DP_HPP_

#include <cmath>
#include <limits>
#include <string>

#include "fedpower/errors.hpp"
#include "fedpower/linalg.hpp"
#include "fedpower/rng.hpp"

namespace fedpower {

// What "adjacent datasets" means for the guarantee: differing in one sample,
// or in one client's entire local dataset.
enum class Adjacency { kSample, kClient };

inline const char* to_string(Adjacency a) {
  return a == Adjacency::kSample ? "sample" : "client";
}

// The (epsilon, delta, sigma, clip) tuple governing all noise in a run.
// sigma is the noise multiplier: injected noise has std sigma * sensitivity.
// clip may be +infinity to disable clipping (non-private runs).
struct PrivacySpec {
  double epsilon = std::numeric_limits<double>::infinity();
  double delta = 1e-5;
  double sigma = 0.0;
  double clip = std::numeric_limits<double>::infinity();
  Adjacency adjacency = Adjacency::kSample;

  bool clipping_enabled() const { return std::isfinite(clip); }

  void validate() const {
    if (!(epsilon > 0.0)) throw DomainError("PrivacySpec: epsilon must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) {
      throw DomainError("PrivacySpec: delta must be in (0,1)");
    }
    if (!(sigma >= 0.0)) throw DomainError("PrivacySpec: sigma must be >= 0");
    if (!(clip > 0.0)) throw DomainError("PrivacySpec: clip must be > 0");
    if (sigma > 0.0 && !clipping_enabled()) {
      throw DomainError("PrivacySpec: noise requires a finite clip threshold");
    }
  }
};

// Scales m to Frobenius norm at most c, preserving direction:
// m * min(1, c / ||m||_F). The zero matrix maps to itself. The inside-ball
// test carries a few ulps of relative slack so that re-clipping an
// already-clipped matrix is an exact no-op.
inline DenseMatrix clip_frobenius(const DenseMatrix& m, double c) {
  if (!(c > 0.0)) throw DomainError("clip_frobenius: threshold must be > 0");
  const double norm = frobenius_norm(m);
  if (norm <= c * (1.0 + 16.0 * std::numeric_limits<double>::epsilon())) {
    return m;
  }
  return (c / norm) * m;
}

// The Gaussian mechanism on matrices: m + N(0, (sigma * sensitivity)^2) per
// entry. sigma == 0 returns the input bit-exactly without consuming draws.
inline DenseMatrix gaussian_mechanism(const DenseMatrix& m, double sensitivity,
                                      double sigma, RngStream& rng) {
  if (!(sensitivity > 0.0)) {
    throw DomainError("gaussian_mechanism: sensitivity must be > 0");
  }
  if (!(sigma >= 0.0)) throw DomainError("gaussian_mechanism: sigma < 0");
  if (sigma == 0.0) return m;
  return m + gaussian_matrix(m.rows(), m.cols(), sigma * sensitivity, rng);
}

// Minimal noise multiplier for a single Gaussian-mechanism release to be
// (epsilon0, delta0)-DP: sqrt(2 ln(1.25/delta0)) / epsilon0.
inline double calibrate_sigma_single(double epsilon0, double delta0) {
  if (!(epsilon0 > 0.0)) {
    throw DomainError("calibrate_sigma_single: epsilon must be > 0");
  }
  if (!(delta0 > 0.0 && delta0 < 1.0)) {
    throw DomainError("calibrate_sigma_single: delta must be in (0,1)");
  }
  return std::sqrt(2.0 * std::log(1.25 / delta0)) / epsilon0;
}

}  // namespace fedpower

#endif  // FEDPOWER_DP_HPP_
