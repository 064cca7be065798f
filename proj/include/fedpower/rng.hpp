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

#ifndef FEDPOWER_RNG_HPP_
#define FEDPOWER_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

namespace fedpower {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// A deterministic random stream addressed by (master_seed, path). The same
// (seed, path) always reproduces the same draw sequence; distinct paths give
// statistically independent streams. Paths are built from integer labels such
// as round index, client index, and draw purpose.
//
// A stream must not be shared across threads; derive one child per task.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed,
                     std::vector<std::int64_t> path = {})
      : master_seed_(master_seed), path_(std::move(path)) {
    reseed();
  }

  // Derives an independent stream with `labels` appended to this path.
  // Does not consume state from this stream.
  RngStream child(std::initializer_list<std::int64_t> labels) const {
    std::vector<std::int64_t> path = path_;
    path.insert(path.end(), labels.begin(), labels.end());
    return RngStream(master_seed_, std::move(path));
  }

  std::uint64_t master_seed() const { return master_seed_; }
  const std::vector<std::int64_t>& path() const { return path_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. Spelled out rather than delegated to
  // std::normal_distribution so the draw sequence is fully specified by
  // this header, independent of the standard library implementation.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // in (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double stddev) { return stddev * gaussian(); }

  // Unbiased uniform integer in [0, bound) by rejection. bound >= 1.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

  // k distinct indices from [0, population), partial Fisher-Yates order.
  std::vector<std::size_t> sample_without_replacement(std::size_t population,
                                                      std::size_t k) {
    std::vector<std::size_t> idx(population);
    for (std::size_t i = 0; i < population; ++i) idx[i] = i;
    if (k > population) k = population;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(
                                    next_below(population - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  void reseed() {
    std::uint64_t state = detail::splitmix64(master_seed_ ^
                                             0xA5A5A5A55A5A5A5AULL);
    for (std::int64_t label : path_) {
      state = detail::splitmix64(
          state ^ detail::splitmix64(static_cast<std::uint64_t>(label)));
    }
    engine_.seed(state);
  }

  std::uint64_t master_seed_;
  std::vector<std::int64_t> path_;
  std::mt19937_64 engine_;
};

}  // namespace fedpower

#endif  // FEDPOWER_RNG_HPP_
