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

#ifndef FEDPOWER_ACCOUNTANT_HPP_
#define FEDPOWER_ACCOUNTANT_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedpower/errors.hpp"

namespace fedpower {

// Renyi-DP accountant for the Poisson-subsampled Gaussian mechanism.
//
// Each round contributes, at every Renyi order alpha, the divergence of one
// subsampled Gaussian release with noise multiplier sigma and sampling rate
// q. Divergences add across rounds; the accumulated table converts to an
// (epsilon, delta) statement at the end.

inline std::vector<double> default_rdp_orders() {
  return {1.25, 1.5,  1.75, 2.0,  2.25, 2.5,  2.75, 3.0,  3.25,
          3.5,  4.0,  4.5,  5.0,  5.5,  6.0,  7.0,  8.0,  9.0,
          10.0, 11.0, 12.0, 14.0, 16.0, 20.0, 24.0, 28.0, 32.0,
          40.0, 48.0, 56.0, 64.0, 96.0, 128.0, 256.0, 512.0};
}

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(e^a - e^b) for a >= b.
inline double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (a <= b) return kNegInf;
  return b + std::log(std::expm1(a - b));
}

inline double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(M_PI) +
         std::log1p(-0.5 / x2 + 0.75 / (x2 * x2));
}

// log A_alpha for integer alpha >= 2 via the exact binomial expansion
//   A = sum_j C(alpha,j) (1-q)^(alpha-j) q^j exp(j(j-1) / (2 sigma^2)).
inline double log_a_integer(double q, double sigma, int alpha) {
  double log_a = kNegInf;
  const double lg_alpha = std::lgamma(alpha + 1.0);
  for (int j = 0; j <= alpha; ++j) {
    const double log_binom =
        lg_alpha - std::lgamma(j + 1.0) - std::lgamma(alpha - j + 1.0);
    const double term = log_binom + j * std::log(q) +
                        (alpha - j) * std::log1p(-q) +
                        (static_cast<double>(j) * j - j) /
                            (2.0 * sigma * sigma);
    log_a = log_add(log_a, term);
  }
  return log_a;
}

// log A_alpha for fractional alpha via the split-integral series with erfc
// weights. Terms are generated with an incrementally updated binomial
// coefficient; the series is truncated once terms are negligible relative
// to the accumulated sums.
inline double log_a_fractional(double q, double sigma, double alpha) {
  double log_a0 = kNegInf, log_a1 = kNegInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double sq2s = std::sqrt(2.0) * sigma;
  const double log_q = std::log(q), log_1mq = std::log1p(-q);
  const double log_half = std::log(0.5);
  double log_coef = 0.0;  // log |C(alpha, i)|
  int sign = 1;
  for (std::int64_t i = 0; i <= 1000000; ++i) {
    const double di = static_cast<double>(i);
    const double j = alpha - di;
    const double log_t0 = log_coef + di * log_q + j * log_1mq;
    const double log_t1 = log_coef + j * log_q + di * log_1mq;
    const double log_e0 = log_half + log_erfc((di - z0) / sq2s);
    const double log_e1 = log_half + log_erfc((z0 - j) / sq2s);
    const double log_s0 =
        log_t0 + (di * di - di) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (sign > 0) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    const double factor = alpha - di;
    if (factor == 0.0) break;
    log_coef += std::log(std::abs(factor)) - std::log(di + 1.0);
    if (factor < 0.0) sign = -sign;
    if (i > 3 &&
        std::max(log_s0, log_s1) < std::max(log_a0, log_a1) - 40.0) {
      break;
    }
  }
  return log_add(log_a0, log_a1);
}

inline bool is_integer(double x) {
  return std::abs(x - std::round(x)) < 1e-12;
}

}  // namespace detail

// Per-round Renyi divergence at order alpha of the subsampled Gaussian.
// q == 1 is the plain Gaussian: alpha / (2 sigma^2). q == 0 touches no data.
// sigma == 0 returns the distinguished infinite-loss value, never zero.
inline double subsampled_gaussian_rdp(double sigma, double q, double alpha) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw DomainError("step_rdp: q must be in [0, 1]");
  }
  if (!(sigma >= 0.0)) throw DomainError("step_rdp: sigma must be >= 0");
  if (!(alpha > 1.0)) throw DomainError("step_rdp: order must be > 1");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  const double log_a =
      detail::is_integer(alpha)
          ? detail::log_a_integer(q, sigma,
                                  static_cast<int>(std::llround(alpha)))
          : detail::log_a_fractional(q, sigma, alpha);
  return log_a / (alpha - 1.0);
}

inline std::vector<double> step_rdp(double sigma, double q,
                                    const std::vector<double>& orders) {
  std::vector<double> out(orders.size());
  for (std::size_t i = 0; i < orders.size(); ++i) {
    out[i] = subsampled_gaussian_rdp(sigma, q, orders[i]);
  }
  return out;
}

// Accumulated per-order divergence over the rounds composed so far.
struct AccountantState {
  std::vector<double> orders;
  std::vector<double> rdp;
  std::uint64_t steps = 0;

  static AccountantState fresh(std::vector<double> orders_in =
                                   default_rdp_orders()) {
    AccountantState s;
    s.orders = std::move(orders_in);
    s.rdp.assign(s.orders.size(), 0.0);
    return s;
  }
};

// Adds t_steps repetitions of a per-step divergence table. t_steps == 0 is
// the empty composition.
inline AccountantState compose(AccountantState state,
                               const std::vector<double>& per_step,
                               std::uint64_t t_steps) {
  if (per_step.size() != state.orders.size()) {
    throw DomainError("compose: order grid mismatch");
  }
  if (t_steps == 0) return state;
  for (std::size_t i = 0; i < state.rdp.size(); ++i) {
    state.rdp[i] += static_cast<double>(t_steps) * per_step[i];
  }
  state.steps += t_steps;
  return state;
}

struct EpsilonAtOrder {
  double epsilon = std::numeric_limits<double>::infinity();
  double order = 0.0;
};

// Standard RDP -> (epsilon, delta) conversion:
// epsilon = min over orders of rdp(alpha) + log(1/delta) / (alpha - 1).
inline EpsilonAtOrder rdp_to_dp(const AccountantState& state, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError("rdp_to_dp: delta must be in (0,1)");
  }
  EpsilonAtOrder best;
  const double log_inv_delta = std::log(1.0 / delta);
  for (std::size_t i = 0; i < state.orders.size(); ++i) {
    if (std::isinf(state.rdp[i])) continue;
    const double eps = state.rdp[i] + log_inv_delta / (state.orders[i] - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.order = state.orders[i];
    }
  }
  return best;
}

// Certified epsilon after t_steps rounds at (sigma, q).
inline double certified_epsilon(double sigma, double q, std::uint64_t t_steps,
                                double delta) {
  if (sigma == 0.0 || t_steps == 0) {
    return t_steps == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  AccountantState s = AccountantState::fresh();
  s = compose(std::move(s), step_rdp(sigma, q, s.orders), t_steps);
  return rdp_to_dp(s, delta).epsilon;
}

namespace detail {
inline constexpr double kSigmaSearchLo = 0.3;
inline constexpr double kSigmaSearchHi = 1e6;
inline constexpr double kSigmaSearchRelTol = 1e-4;
}  // namespace detail

// Smallest noise multiplier (to 1e-4 relative, on the bracket [0.3, 1e6])
// whose accountant-certified epsilon after t_steps rounds at rate q stays at
// or below the target. The search relies on epsilon decreasing in sigma.
inline double required_sigma(double epsilon, double delta, double q,
                             std::uint64_t t_steps) {
  if (!(epsilon > 0.0)) throw DomainError("required_sigma: epsilon <= 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError("required_sigma: delta must be in (0,1)");
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw DomainError("required_sigma: q must be in (0,1]");
  }
  if (t_steps == 0) throw DomainError("required_sigma: t_steps must be >= 1");
  double lo = detail::kSigmaSearchLo, hi = detail::kSigmaSearchHi;
  if (certified_epsilon(lo, q, t_steps, delta) <= epsilon) return lo;
  if (certified_epsilon(hi, q, t_steps, delta) > epsilon) {
    throw DomainError("required_sigma: target epsilon " +
                      std::to_string(epsilon) +
                      " unattainable within sigma bracket");
  }
  while (hi - lo > detail::kSigmaSearchRelTol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (certified_epsilon(mid, q, t_steps, delta) <= epsilon) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace fedpower

#endif  // FEDPOWER_ACCOUNTANT_HPP_
