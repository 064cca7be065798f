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

#ifndef FEDPOWER_CONFIG_HPP_
#define FEDPOWER_CONFIG_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fedpower/dp.hpp"
#include "fedpower/errors.hpp"

namespace fedpower {

enum class Protocol { kFedLoRA, kFFALoRA, kFedPower };
enum class Optimizer { kSgd, kAdam };

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kFedLoRA: return "fedlora";
    case Protocol::kFFALoRA: return "ffalora";
    case Protocol::kFedPower: return "fedpower";
  }
  return "?";
}

inline const char* to_string(Optimizer o) {
  return o == Optimizer::kSgd ? "sgd" : "adam";
}

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "fedlora") return Protocol::kFedLoRA;
  if (s == "ffalora") return Protocol::kFFALoRA;
  if (s == "fedpower") return Protocol::kFedPower;
  throw ConfigError("unknown protocol '" + s +
                    "' (expected fedlora|ffalora|fedpower)");
}

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adam") return Optimizer::kAdam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

struct TaskSection {
  std::size_t n = 32;              // feature dimension
  std::size_t m = 16;              // output dimension (logit count)
  std::size_t classes = 10;        // label count, <= m
  std::size_t samples_per_client = 512;
  std::size_t clients = 6;
  std::size_t test_samples = 1000;
  std::uint64_t seed = 1;
};

struct ProtocolSection {
  Protocol name = Protocol::kFedPower;
  std::size_t rank = 8;        // LoRA rank r
  int power_iterations = 4;    // k
  int refactor_frequency = 1;  // PowerDP every f-th round; 1 = every round
  int value_bits = 32;         // assumed width per transmitted value
};

struct TrainingSection {
  int rounds = 200;      // T
  int local_steps = 2;   // L
  double eta = 0.05;
  double q_c = 0.5;      // client sampling rate
  double q_s = 0.05;     // batch sampling rate
  Optimizer optimizer = Optimizer::kSgd;
  bool parallel_clients = true;
};

// Either `epsilon` (sigma derived through the accountant for the run's T and
// sampling rates) or `sigma` directly; supplying both is a config error.
struct PrivacySection {
  std::optional<double> epsilon;
  std::optional<double> sigma;
  double delta = 1e-5;
  // 0 or negative disables clipping (stored as such; use clip_threshold()).
  double clip = 2.0;
  Adjacency adjacency = Adjacency::kSample;
  // When set, noise is calibrated to clip / |sampled clients| instead of
  // clip (the tighter post-averaging sensitivity reading).
  bool tight_sensitivity = false;

  double clip_threshold() const {
    return clip > 0.0 ? clip : std::numeric_limits<double>::infinity();
  }
};

struct FLRunConfig {
  TaskSection task;
  ProtocolSection protocol;
  TrainingSection training;
  PrivacySection privacy;
  std::vector<std::uint64_t> seeds;  // defaults to {task.seed}
  // Enables runtime sensitivity/projection assertions inside protocol rounds.
  bool debug_checks = false;

  std::vector<std::uint64_t> seed_list() const {
    return seeds.empty() ? std::vector<std::uint64_t>{task.seed} : seeds;
  }

  // Effective subsampling rate for the accountant under the configured
  // adjacency: q_c * q_s protects one sample, q_c protects one client.
  double accounting_rate() const {
    return privacy.adjacency == Adjacency::kSample
               ? training.q_c * training.q_s
               : training.q_c;
  }

  void validate() const {
    if (task.n == 0 || task.m == 0 || task.classes == 0 ||
        task.clients == 0 || task.samples_per_client == 0 ||
        task.test_samples == 0) {
      throw ConfigError("task: dimensions and sizes must be positive");
    }
    if (task.classes > task.m) {
      throw ConfigError("task: classes must be <= output dimension m");
    }
    if (protocol.rank == 0 ||
        protocol.rank > std::min(task.m, task.n)) {
      throw ConfigError("protocol: rank out of range for the task shape");
    }
    if (protocol.power_iterations < 1) {
      throw ConfigError("protocol: power_iterations must be >= 1");
    }
    if (protocol.refactor_frequency < 1) {
      throw ConfigError("protocol: refactor_frequency must be >= 1");
    }
    if (protocol.value_bits <= 0) {
      throw ConfigError("protocol: value_bits must be positive");
    }
    if (training.rounds < 0) throw ConfigError("training: rounds must be >= 0");
    if (training.local_steps < 0) {
      throw ConfigError("training: local_steps must be >= 0");
    }
    if (!(training.q_c > 0.0 && training.q_c <= 1.0)) {
      throw ConfigError("training: q_c must be in (0,1]");
    }
    if (!(training.q_s > 0.0 && training.q_s <= 1.0)) {
      throw ConfigError("training: q_s must be in (0,1]");
    }
    if (!(training.eta >= 0.0)) throw ConfigError("training: eta must be >= 0");
    if (privacy.epsilon && privacy.sigma) {
      throw ConfigError(
          "privacy: supply either epsilon or sigma, not both");
    }
    if (privacy.epsilon && !(*privacy.epsilon > 0.0)) {
      throw ConfigError("privacy: epsilon must be > 0");
    }
    if (privacy.sigma && !(*privacy.sigma >= 0.0)) {
      throw ConfigError("privacy: sigma must be >= 0");
    }
    if (!(privacy.delta > 0.0 && privacy.delta < 1.0)) {
      throw ConfigError("privacy: delta must be in (0,1)");
    }
    const bool wants_noise =
        privacy.epsilon.has_value() || (privacy.sigma && *privacy.sigma > 0.0);
    if (wants_noise && !(privacy.clip > 0.0)) {
      throw ConfigError("privacy: noise requires a positive clip threshold");
    }
  }
};

}  // namespace fedpower

#endif  // FEDPOWER_CONFIG_HPP_
