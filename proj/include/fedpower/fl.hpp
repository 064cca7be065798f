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

#ifndef FEDPOWER_FL_HPP_
#define FEDPOWER_FL_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedpower/accountant.hpp"
#include "fedpower/config.hpp"
#include "fedpower/dp.hpp"
#include "fedpower/errors.hpp"
#include "fedpower/factorize.hpp"
#include "fedpower/linalg.hpp"
#include "fedpower/rng.hpp"
#include "fedpower/task.hpp"

namespace fedpower {

// ---------------------------------------------------------------------------
// Client side
// ---------------------------------------------------------------------------

struct ClientState {
  int id = 0;
  const Dataset* data = nullptr;
  double eta = 0.05;
  int local_steps = 1;
  double q_s = 1.0;
  Optimizer optimizer = Optimizer::kSgd;
};

struct LocalTrainResult {
  LoRAPair pair;
  int skipped_steps = 0;
};

namespace detail {

struct AdamState {
  DenseMatrix m, v;
  explicit AdamState(const DenseMatrix& like)
      : m(like.rows(), like.cols()), v(like.rows(), like.cols()) {}

  void apply(DenseMatrix& param, const DenseMatrix& grad, double eta,
             int step) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    const double c1 = 1.0 - std::pow(kBeta1, step);
    const double c2 = 1.0 - std::pow(kBeta2, step);
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad.data()[i];
      m.data()[i] = kBeta1 * m.data()[i] + (1.0 - kBeta1) * g;
      v.data()[i] = kBeta2 * v.data()[i] + (1.0 - kBeta2) * g * g;
      param.data()[i] -=
          eta * (m.data()[i] / c1) / (std::sqrt(v.data()[i] / c2) + kEps);
    }
  }
};

}  // namespace detail

// L steps of mini-batch training of the adapter pair against the frozen base
// weight. The loss is mean cross-entropy of softmax((w0 + b a) x); gradients
// follow the chain rule:
//   grad_b = G (a X)^T,  grad_a = b^T G X^T,  G = (softmax - onehot) / batch.
// In freeze_a mode the a-factor is left untouched. Batches that sample empty
// (q_s * |D| rounds to zero) skip the step and are counted.
inline LocalTrainResult local_train(const ClientState& client,
                                    const DenseMatrix& w0,
                                    const LoRAPair& start, bool freeze_a,
                                    RngStream& rng) {
  LocalTrainResult out{start, 0};
  DenseMatrix& a = out.pair.a;
  DenseMatrix& b = out.pair.b;
  const std::size_t data_size = client.data->size();
  const std::size_t batch_size = static_cast<std::size_t>(
      std::lround(client.q_s * static_cast<double>(data_size)));

  std::optional<detail::AdamState> adam_a, adam_b;
  if (client.optimizer == Optimizer::kAdam) {
    adam_a.emplace(a);
    adam_b.emplace(b);
  }

  for (int step = 1; step <= client.local_steps; ++step) {
    if (batch_size == 0) {
      ++out.skipped_steps;
      continue;
    }
    const std::vector<std::size_t> idx =
        rng.sample_without_replacement(data_size, batch_size);
    DenseMatrix x = gather_columns(*client.data, idx);
    DenseMatrix ax = matmul(a, x);
    DenseMatrix g = matmul(w0, x) + matmul(b, ax);
    softmax_columns(g);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      g(client.data->labels[idx[j]], j) -= 1.0;
    }
    const double inv_batch = 1.0 / static_cast<double>(batch_size);
    for (double& v : g.data()) v *= inv_batch;

    DenseMatrix grad_b = matmul(g, transpose(ax));
    if (client.optimizer == Optimizer::kAdam) {
      if (!freeze_a) {
        DenseMatrix grad_a = matmul(matmul(transpose(b), g), transpose(x));
        adam_a->apply(a, grad_a, client.eta, step);
      }
      adam_b->apply(b, grad_b, client.eta, step);
    } else {
      if (!freeze_a) {
        DenseMatrix grad_a = matmul(matmul(transpose(b), g), transpose(x));
        a = a - client.eta * grad_a;
      }
      b = b - client.eta * grad_b;
    }
  }
  return out;
}

// Analytic adapter gradients on a fixed batch, exposed for oracle checks.
struct LoRAGradients {
  DenseMatrix grad_a, grad_b;
  double loss = 0.0;
};

inline LoRAGradients lora_gradients(const DenseMatrix& w0, const LoRAPair& pair,
                                    const Dataset& data,
                                    const std::vector<std::size_t>& batch) {
  DenseMatrix x = gather_columns(data, batch);
  DenseMatrix ax = matmul(pair.a, x);
  DenseMatrix probs = matmul(w0, x) + matmul(pair.b, ax);
  softmax_columns(probs);
  std::vector<int> labels(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j)
    labels[j] = data.labels[batch[j]];
  LoRAGradients out;
  out.loss = mean_cross_entropy(probs, labels);
  for (std::size_t j = 0; j < batch.size(); ++j) probs(labels[j], j) -= 1.0;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (double& v : probs.data()) v *= inv_batch;
  out.grad_b = matmul(probs, transpose(ax));
  out.grad_a = matmul(matmul(transpose(pair.b), probs), transpose(x));
  return out;
}

// ---------------------------------------------------------------------------
// Server side
// ---------------------------------------------------------------------------

struct ClientUpdate {
  int client_id = 0;
  LoRAPair pair;
};

// Noise scale actually used by an aggregation: sensitivity is clip, or
// clip / |sampled| when the tighter post-averaging reading is enabled.
inline double aggregate_sensitivity(const PrivacySpec& spec, bool tight,
                                    std::size_t sampled_count) {
  return tight ? spec.clip / static_cast<double>(sampled_count) : spec.clip;
}

namespace detail {

inline DenseMatrix mean_of(std::vector<DenseMatrix> parts) {
  DenseMatrix sum = std::move(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) sum = sum + parts[i];
  return (1.0 / static_cast<double>(parts.size())) * sum;
}

inline void check_noise_input_norm(const DenseMatrix& m, double bound) {
  if (frobenius_norm(m) > bound + 1e-9) {
    throw ContractError(
        "aggregate: matrix entering the Gaussian mechanism exceeds its "
        "declared sensitivity bound");
  }
}

}  // namespace detail

// Component-wise averaging with per-factor clipping and per-factor noise.
// Each client's trained a_i and b_i is independently clipped to C; the means
// receive Gaussian noise of std sigma * sensitivity.
inline LoRAPair fedlora_aggregate(const std::vector<ClientUpdate>& updates,
                                  const PrivacySpec& spec, bool tight,
                                  RngStream& rng, bool debug_checks = false) {
  if (updates.empty()) throw DomainError("fedlora_aggregate: no clients");
  std::vector<DenseMatrix> as, bs;
  as.reserve(updates.size());
  bs.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    if (spec.clipping_enabled()) {
      as.push_back(clip_frobenius(u.pair.a, spec.clip));
      bs.push_back(clip_frobenius(u.pair.b, spec.clip));
    } else {
      as.push_back(u.pair.a);
      bs.push_back(u.pair.b);
    }
  }
  LoRAPair out;
  out.rank = updates.front().pair.rank;
  out.a = detail::mean_of(std::move(as));
  out.b = detail::mean_of(std::move(bs));
  if (spec.sigma > 0.0) {
    const double sens = aggregate_sensitivity(spec, tight, updates.size());
    if (debug_checks) {
      detail::check_noise_input_norm(out.a, spec.clip);
      detail::check_noise_input_norm(out.b, spec.clip);
    }
    out.a = gaussian_mechanism(out.a, sens, spec.sigma, rng);
    out.b = gaussian_mechanism(out.b, sens, spec.sigma, rng);
  }
  return out;
}

// Freeze-A variant: only the b-factors are clipped, averaged and noised.
inline DenseMatrix ffalora_aggregate(const std::vector<ClientUpdate>& updates,
                                     const PrivacySpec& spec, bool tight,
                                     RngStream& rng,
                                     bool debug_checks = false) {
  if (updates.empty()) throw DomainError("ffalora_aggregate: no clients");
  std::vector<DenseMatrix> bs;
  bs.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    bs.push_back(spec.clipping_enabled() ? clip_frobenius(u.pair.b, spec.clip)
                                         : u.pair.b);
  }
  DenseMatrix mean_b = detail::mean_of(std::move(bs));
  if (spec.sigma > 0.0) {
    const double sens = aggregate_sensitivity(spec, tight, updates.size());
    if (debug_checks) detail::check_noise_input_norm(mean_b, spec.clip);
    mean_b = gaussian_mechanism(mean_b, sens, spec.sigma, rng);
  }
  return mean_b;
}

struct FedPowerAggregate {
  LoRAPair pair;
  // Average of the clipped merged updates, before refactorization. Equals
  // (1/|C|) sum_i clip(b_i a_i) exactly; never the product of averages.
  DenseMatrix pre_factorization;
  bool rank_deficient = false;
};

// Full-rank aggregation with private refactorization: merge each client's
// update b_i a_i, clip it to C, average exactly, and project the aggregate
// back to rank r. With noise disabled and clipping off this reduces to plain
// power iteration on the exact aggregate.
inline FedPowerAggregate fedpower_aggregate(
    const std::vector<ClientUpdate>& updates, const PrivacySpec& spec,
    bool tight, std::size_t rank, int power_iterations, RngStream& rng,
    bool debug_checks = false) {
  if (updates.empty()) throw DomainError("fedpower_aggregate: no clients");
  std::vector<DenseMatrix> merged;
  merged.reserve(updates.size());
  for (const ClientUpdate& u : updates) {
    DenseMatrix delta = merge_update(u.pair);
    merged.push_back(spec.clipping_enabled()
                         ? clip_frobenius(delta, spec.clip)
                         : std::move(delta));
  }
  FedPowerAggregate out;
  out.pre_factorization = detail::mean_of(std::move(merged));

  FactorizeResult fr;
  if (spec.clipping_enabled()) {
    if (debug_checks) {
      detail::check_noise_input_norm(out.pre_factorization, spec.clip);
    }
    // Under the tighter sensitivity reading the noise std drops to
    // sigma * clip / cohort while the projection bound stays at clip; same
    // mechanism, rescaled multiplier.
    const double sens = aggregate_sensitivity(spec, tight, updates.size());
    const double effective_sigma = spec.sigma * (sens / spec.clip);
    PowerDpOptions options;
    options.verify_projection_bounds = debug_checks;
    fr = power_dp(out.pre_factorization, rank, power_iterations,
                  effective_sigma, spec.clip, rng, options);
  } else {
    fr = power_iteration(out.pre_factorization, rank, power_iterations, rng);
  }
  out.pair = std::move(fr.pair);
  out.rank_deficient = fr.rank_deficient;
  return out;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct RoundLog {
  int round = 0;
  std::vector<int> sampled_clients;
  double test_accuracy = 0.0;
  std::uint64_t cumulative_bits = 0;
  double aggregation_seconds = 0.0;
  double sigma = 0.0;
  bool rank_deficient = false;
};

struct RunResult {
  std::vector<RoundLog> rounds;
  LoRAPair final_pair;
  DenseMatrix released;  // w0 + b a
  double base_accuracy = 0.0;
  double final_accuracy = 0.0;
  double sigma_used = 0.0;
  double certified_epsilon = std::numeric_limits<double>::infinity();
  double certified_order = 0.0;
  std::uint64_t total_bits = 0;
  double mean_aggregation_seconds = 0.0;
  double median_aggregation_seconds = 0.0;
  std::int64_t skipped_steps = 0;
};

// Upload payload per client per round, in bits.
inline std::uint64_t upload_bits_per_client(Protocol protocol, std::size_t m,
                                            std::size_t n, std::size_t r,
                                            int value_bits) {
  const std::uint64_t w = static_cast<std::uint64_t>(value_bits);
  const std::uint64_t b_values = static_cast<std::uint64_t>(m) * r;
  const std::uint64_t a_values = static_cast<std::uint64_t>(r) * n;
  return protocol == Protocol::kFFALoRA ? b_values * w
                                        : (b_values + a_values) * w;
}

namespace detail {

// Path labels for the experiment's random streams.
inline constexpr std::int64_t kInitLabel = 201;
inline constexpr std::int64_t kRoundLabel = 202;
inline constexpr std::int64_t kSamplingSub = 1;
inline constexpr std::int64_t kClientSub = 2;
inline constexpr std::int64_t kServerSub = 3;

}  // namespace detail

// Resolves the run's noise multiplier: derived through the accountant when a
// target epsilon is configured, taken verbatim when sigma is given.
inline PrivacySpec resolve_privacy(const FLRunConfig& config) {
  PrivacySpec spec;
  spec.delta = config.privacy.delta;
  spec.clip = config.privacy.clip_threshold();
  spec.adjacency = config.privacy.adjacency;
  if (config.privacy.epsilon) {
    spec.epsilon = *config.privacy.epsilon;
    spec.sigma = config.training.rounds == 0
                     ? 0.0
                     : required_sigma(*config.privacy.epsilon,
                                      config.privacy.delta,
                                      config.accounting_rate(),
                                      static_cast<std::uint64_t>(
                                          config.training.rounds));
  } else {
    spec.sigma = config.privacy.sigma.value_or(0.0);
  }
  spec.validate();
  return spec;
}

inline RunResult run_experiment(const FLRunConfig& config,
                                const SyntheticTask& task) {
  config.validate();
  const TaskSection& given = task.config();
  if (given.n != config.task.n || given.m != config.task.m ||
      given.clients != config.task.clients ||
      given.samples_per_client != config.task.samples_per_client ||
      given.seed != config.task.seed) {
    throw ConfigError("run_experiment: task does not match config.task");
  }
  const PrivacySpec spec = resolve_privacy(config);
  const TaskSection& tc = config.task;
  const std::size_t rank = config.protocol.rank;
  const Protocol protocol = config.protocol.name;
  const std::uint64_t master = tc.seed;

  RunResult result;
  result.sigma_used = spec.sigma;
  result.base_accuracy =
      dataset_accuracy(LinearModel{task.base_weight()}, task.test_set());

  // Adapter initialization: a0 random Gaussian, b0 zero, so the adapted model
  // starts exactly at the base model.
  RngStream init_rng(master, {detail::kInitLabel});
  LoRAPair global;
  global.rank = rank;
  global.a = gaussian_matrix(rank, tc.n, 1.0 / std::sqrt(double(tc.n)),
                             init_rng);
  global.b = DenseMatrix(tc.m, rank);
  const DenseMatrix frozen_a = global.a;  // used by the freeze-A protocol

  const std::size_t sampled_per_round = static_cast<std::size_t>(
      std::ceil(config.training.q_c * static_cast<double>(tc.clients)));
  const std::uint64_t payload = upload_bits_per_client(
      protocol, tc.m, tc.n, rank, config.protocol.value_bits);

  std::uint64_t cumulative_bits = 0;
  std::vector<double> agg_times;
  agg_times.reserve(config.training.rounds);

  for (int t = 1; t <= config.training.rounds; ++t) {
    RngStream sampling_rng(master,
                           {detail::kRoundLabel, t, detail::kSamplingSub});
    std::vector<std::size_t> sampled =
        sampling_rng.sample_without_replacement(tc.clients, sampled_per_round);
    std::sort(sampled.begin(), sampled.end());

    // Local training, one independent stream per (round, client).
    std::vector<ClientUpdate> updates(sampled.size());
    std::int64_t skipped = 0;
    auto train_one = [&](std::size_t slot) {
      const std::size_t cid = sampled[slot];
      ClientState client;
      client.id = static_cast<int>(cid);
      client.data = &task.client_data()[cid];
      client.eta = config.training.eta;
      client.local_steps = config.training.local_steps;
      client.q_s = config.training.q_s;
      client.optimizer = config.training.optimizer;
      RngStream client_rng(master, {detail::kRoundLabel, t,
                                    detail::kClientSub,
                                    static_cast<std::int64_t>(cid)});
      LocalTrainResult r =
          local_train(client, task.base_weight(), global,
                      protocol == Protocol::kFFALoRA, client_rng);
      updates[slot] = ClientUpdate{client.id, std::move(r.pair)};
      return r.skipped_steps;
    };
    if (config.training.parallel_clients && sampled.size() > 1) {
      std::vector<std::future<int>> futures;
      futures.reserve(sampled.size());
      for (std::size_t s = 0; s < sampled.size(); ++s) {
        futures.push_back(
            std::async(std::launch::async, train_one, s));
      }
      for (auto& f : futures) skipped += f.get();
    } else {
      for (std::size_t s = 0; s < sampled.size(); ++s) skipped += train_one(s);
    }
    result.skipped_steps += skipped;

    // Server aggregation (the timed section).
    RngStream server_rng(master,
                         {detail::kRoundLabel, t, detail::kServerSub});
    bool deficient = false;
    const auto t0 = std::chrono::steady_clock::now();
    if (protocol == Protocol::kFedPower &&
        t % config.protocol.refactor_frequency == 0) {
      FedPowerAggregate agg = fedpower_aggregate(
          updates, spec, config.privacy.tight_sensitivity, rank,
          config.protocol.power_iterations, server_rng, config.debug_checks);
      global = std::move(agg.pair);
      deficient = agg.rank_deficient;
    } else if (protocol == Protocol::kFFALoRA) {
      global.b = ffalora_aggregate(updates, spec,
                                   config.privacy.tight_sensitivity,
                                   server_rng, config.debug_checks);
      global.a = frozen_a;
    } else {
      // FedLoRA, and FedPower rounds between refactorizations.
      global = fedlora_aggregate(updates, spec,
                                 config.privacy.tight_sensitivity, server_rng,
                                 config.debug_checks);
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double agg_seconds =
        std::chrono::duration<double>(t1 - t0).count();
    agg_times.push_back(agg_seconds);

    cumulative_bits += payload * sampled.size();

    RoundLog log;
    log.round = t;
    log.sampled_clients.reserve(sampled.size());
    for (std::size_t cid : sampled)
      log.sampled_clients.push_back(static_cast<int>(cid));
    DenseMatrix merged = task.base_weight() + merge_update(global);
    log.test_accuracy = dataset_accuracy(LinearModel{merged}, task.test_set());
    log.cumulative_bits = cumulative_bits;
    log.aggregation_seconds = agg_seconds;
    log.sigma = spec.sigma;
    log.rank_deficient = deficient;
    result.rounds.push_back(std::move(log));
  }

  result.final_pair = global;
  result.released = task.base_weight() + merge_update(global);
  result.final_accuracy =
      dataset_accuracy(LinearModel{result.released}, task.test_set());
  result.total_bits = cumulative_bits;
  if (!agg_times.empty()) {
    double sum = 0.0;
    for (double v : agg_times) sum += v;
    result.mean_aggregation_seconds = sum / double(agg_times.size());
    std::vector<double> sorted = agg_times;
    std::sort(sorted.begin(), sorted.end());
    result.median_aggregation_seconds = sorted[sorted.size() / 2];
  }
  if (spec.sigma > 0.0 && config.training.rounds > 0) {
    AccountantState acct = AccountantState::fresh();
    acct = compose(std::move(acct),
                   step_rdp(spec.sigma, config.accounting_rate(), acct.orders),
                   static_cast<std::uint64_t>(config.training.rounds));
    EpsilonAtOrder eps = rdp_to_dp(acct, spec.delta);
    result.certified_epsilon = eps.epsilon;
    result.certified_order = eps.order;
  } else if (config.training.rounds == 0) {
    result.certified_epsilon = 0.0;
  }
  return result;
}

inline RunResult run_experiment(const FLRunConfig& config) {
  config.validate();
  return run_experiment(config, SyntheticTask::generate(config.task));
}

}  // namespace fedpower

#endif  // FEDPOWER_FL_HPP_
