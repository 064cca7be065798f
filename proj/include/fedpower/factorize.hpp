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

#ifndef FEDPOWER_FACTORIZE_HPP_
#define FEDPOWER_FACTORIZE_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "fedpower/dp.hpp"
#include "fedpower/errors.hpp"
#include "fedpower/linalg.hpp"
#include "fedpower/rng.hpp"

namespace fedpower {

// Low-rank adapter pair: the update is represented as b * a with
// a in R^{r x n}, b in R^{m x r}. Factorizers based on subspace iteration
// return `a` with orthonormal rows; the output-perturbation ablation
// deliberately leaves its noise in place, so row orthonormality is a
// property of specific factorizers rather than of the type itself.
struct LoRAPair {
  DenseMatrix a;  // r x n
  DenseMatrix b;  // m x r
  std::size_t rank = 0;

  void validate() const {
    if (a.rows() != rank || b.cols() != rank) {
      throw ShapeError("LoRAPair: factor shapes disagree with rank " +
                       std::to_string(rank));
    }
  }
};

inline DenseMatrix merge_update(const LoRAPair& pair) {
  return matmul(pair.b, pair.a);
}

struct FactorizeResult {
  LoRAPair pair;
  // A deficient pivot was replaced with a random direction at some point
  // (always the case for inputs of rank below r, e.g. the zero matrix).
  bool rank_deficient = false;
};

namespace detail {

inline constexpr double kProjectionSlack = 1e-9;

inline void check_factorize_shapes(const DenseMatrix& w, std::size_t r,
                                   int iterations) {
  if (r == 0 || r > std::min(w.rows(), w.cols())) {
    throw ShapeError("factorize: rank " + std::to_string(r) +
                     " out of range for " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()));
  }
  if (iterations < 1) throw DomainError("factorize: iterations must be >= 1");
}

struct SubspaceIterate {
  DenseMatrix a_raw;  // P^T W from the last iteration, rows ~ sigma_i v_i^T
  DenseMatrix q;      // orthonormal-row basis of a_raw
  bool rank_deficient = false;
};

// Shared core of all factorizers: k rounds of alternating projection with
// orthonormalization. When `projection_bound` is given, the Frobenius norm of
// every projection of W onto the freshly orthonormalized basis is asserted
// against it (the sensitivity invariant the noise calibration relies on).
inline SubspaceIterate subspace_iterate(const DenseMatrix& w, std::size_t r,
                                        int iterations, RngStream& rng,
                                        const double* projection_bound) {
  SubspaceIterate out;
  DenseMatrix q = gaussian_matrix(r, w.cols(), 1.0, rng);
  for (int it = 0; it < iterations; ++it) {
    DenseMatrix p = matmul(w, transpose(q));
    OrthoResult po = orthonormalize_columns(p, rng);
    out.rank_deficient = out.rank_deficient || po.rank_deficient;
    out.a_raw = matmul(transpose(po.basis), w);
    if (projection_bound != nullptr &&
        frobenius_norm(out.a_raw) > *projection_bound + kProjectionSlack) {
      throw ContractError("subspace_iterate: ||P^T W|| exceeds bound");
    }
    OrthoResult qo = orthonormalize_rows(out.a_raw, rng);
    out.rank_deficient = out.rank_deficient || qo.rank_deficient;
    q = std::move(qo.basis);
    if (projection_bound != nullptr &&
        frobenius_norm(matmul(w, transpose(q))) >
            *projection_bound + kProjectionSlack) {
      throw ContractError("subspace_iterate: ||W Q^T|| exceeds bound");
    }
  }
  out.q = std::move(q);
  return out;
}

}  // namespace detail

// Non-private simultaneous subspace iteration. Returns a with orthonormal
// rows spanning (approximately) the dominant rank-r row space of w, and
// b = w a^T, so b * a approaches the optimal rank-r approximation of w.
inline FactorizeResult power_iteration(const DenseMatrix& w, std::size_t r,
                                       int iterations, RngStream& rng) {
  detail::check_factorize_shapes(w, r, iterations);
  detail::SubspaceIterate core =
      detail::subspace_iterate(w, r, iterations, rng, nullptr);
  DenseMatrix b = matmul(w, transpose(core.q));
  return {LoRAPair{std::move(core.q), std::move(b), r}, core.rank_deficient};
}

struct PowerDpOptions {
  // Assert the projection-norm bound after every orthonormalization.
  bool verify_projection_bounds = false;
};

// Private refactorization with in-processing noise. Runs the clean subspace
// iteration, then perturbs the two unnormalized projections with Gaussian
// noise of std sigma * c_w, and orthonormalizes the rows of the perturbed
// a-factor last, so the noise is absorbed into the subspace orientation.
// Since b is formed from the clean basis while the released a is perturbed,
// b is deliberately not w * a^T, faithful to the mechanism's release order.
//
// Requires ||w||_F <= c_w (pre-clipped input); the noise calibration is
// meaningless otherwise.
inline FactorizeResult power_dp(const DenseMatrix& w, std::size_t r,
                                int iterations, double sigma, double c_w,
                                RngStream& rng, PowerDpOptions options = {}) {
  detail::check_factorize_shapes(w, r, iterations);
  if (!(c_w > 0.0)) throw DomainError("power_dp: c_w must be > 0");
  if (!(sigma >= 0.0)) throw DomainError("power_dp: sigma must be >= 0");
  if (frobenius_norm(w) > c_w + detail::kProjectionSlack) {
    throw ContractError("power_dp: ||w||_F exceeds declared bound c_w");
  }
  const double* bound =
      options.verify_projection_bounds ? &c_w : nullptr;
  detail::SubspaceIterate core =
      detail::subspace_iterate(w, r, iterations, rng, bound);
  DenseMatrix b_noisy =
      gaussian_mechanism(matmul(w, transpose(core.q)), c_w, sigma, rng);
  DenseMatrix a_noisy = gaussian_mechanism(core.a_raw, c_w, sigma, rng);
  OrthoResult a_ortho = orthonormalize_rows(a_noisy, rng);
  return {LoRAPair{std::move(a_ortho.basis), std::move(b_noisy), r},
          core.rank_deficient || a_ortho.rank_deficient};
}

// Ablation: perturb the input, then factorize. Privacy holds for the output
// by post-processing of the noisy input.
inline FactorizeResult factorize_input_perturb(const DenseMatrix& w,
                                               std::size_t r, int iterations,
                                               double sigma, double c_w,
                                               RngStream& rng) {
  detail::check_factorize_shapes(w, r, iterations);
  if (!(c_w > 0.0)) throw DomainError("input_perturb: c_w must be > 0");
  if (frobenius_norm(w) > c_w + detail::kProjectionSlack) {
    throw ContractError("input_perturb: ||w||_F exceeds declared bound c_w");
  }
  DenseMatrix noisy = gaussian_mechanism(w, c_w, sigma, rng);
  return power_iteration(noisy, r, iterations, rng);
}

// Worst-case output sensitivities for the output-perturbation ablation:
// the orthonormal-row factor can flip basis entirely (||a||_F = sqrt(r)),
// and the projection factor is bounded by c_w in each of two adjacent worlds.
inline double output_sensitivity_a(std::size_t r) {
  return 2.0 * std::sqrt(static_cast<double>(r));
}
inline double output_sensitivity_b(double c_w) { return 2.0 * c_w; }

// Ablation: factorize, then perturb both outputs. No re-orthonormalization
// afterward - the released factors are exactly the noised ones, which is
// what this scheme's privacy statement covers.
inline FactorizeResult factorize_output_perturb(const DenseMatrix& w,
                                                std::size_t r, int iterations,
                                                double sigma, double c_w,
                                                RngStream& rng) {
  detail::check_factorize_shapes(w, r, iterations);
  if (!(c_w > 0.0)) throw DomainError("output_perturb: c_w must be > 0");
  if (frobenius_norm(w) > c_w + detail::kProjectionSlack) {
    throw ContractError("output_perturb: ||w||_F exceeds declared bound c_w");
  }
  FactorizeResult res = power_iteration(w, r, iterations, rng);
  res.pair.a =
      gaussian_mechanism(res.pair.a, output_sensitivity_a(r), sigma, rng);
  res.pair.b =
      gaussian_mechanism(res.pair.b, output_sensitivity_b(c_w), sigma, rng);
  return res;
}

}  // namespace fedpower

#endif  // FEDPOWER_FACTORIZE_HPP_
