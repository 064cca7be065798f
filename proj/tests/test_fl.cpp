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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "fedpower/fl.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fedpower;
using Catch::Approx;

namespace {

TaskSection small_task() {
  TaskSection t;
  t.n = 12;
  t.m = 8;
  t.classes = 5;
  t.samples_per_client = 40;
  t.clients = 4;
  t.test_samples = 200;
  t.seed = 3;
  return t;
}

FLRunConfig small_config(Protocol protocol) {
  FLRunConfig c;
  c.task = small_task();
  c.protocol.name = protocol;
  c.protocol.rank = 4;
  c.protocol.power_iterations = 3;
  c.training.rounds = 5;
  c.training.local_steps = 2;
  c.training.eta = 0.1;
  c.training.q_c = 0.5;
  c.training.q_s = 0.5;
  c.privacy.sigma = 0.0;
  c.privacy.clip = 0.0;  // disabled
  return c;
}

LoRAPair random_pair(std::size_t m, std::size_t n, std::size_t r,
                     RngStream& rng, double scale = 1.0) {
  LoRAPair p;
  p.rank = r;
  p.a = gaussian_matrix(r, n, scale, rng);
  p.b = gaussian_matrix(m, r, scale, rng);
  return p;
}

PrivacySpec noiseless_spec() {
  PrivacySpec spec;
  spec.sigma = 0.0;
  spec.clip = std::numeric_limits<double>::infinity();
  return spec;
}

}  // namespace

TEST_CASE("local_train with zero step size returns the input pair",
          "[fl]") {
  SyntheticTask task = SyntheticTask::generate(small_task());
  RngStream rng(5, {1});
  LoRAPair start = random_pair(8, 12, 4, rng);
  ClientState client{0, &task.client_data()[0], 0.0, 3, 0.5, Optimizer::kSgd};
  RngStream train_rng(5, {2});
  LocalTrainResult r =
      local_train(client, task.base_weight(), start, false, train_rng);
  REQUIRE(r.pair.a.data() == start.a.data());
  REQUIRE(r.pair.b.data() == start.b.data());
}

TEST_CASE("zero-initialized b leaves the base model untouched", "[fl]") {
  SyntheticTask task = SyntheticTask::generate(small_task());
  RngStream rng(6, {3});
  LoRAPair pair;
  pair.rank = 4;
  pair.a = gaussian_matrix(4, 12, 0.3, rng);
  pair.b = DenseMatrix(8, 4);
  const Dataset& data = task.client_data()[0];
  std::vector<std::size_t> batch{0, 1, 2, 3, 4};
  LoRAGradients g = lora_gradients(task.base_weight(), pair, data, batch);

  Dataset sub = subset_of(data, batch);
  const double base_loss =
      dataset_loss(LinearModel{task.base_weight()}, sub);
  REQUIRE(g.loss == Approx(base_loss).margin(1e-12));
}

TEST_CASE("analytic adapter gradients match central finite differences",
          "[fl]") {
  SyntheticTask task = SyntheticTask::generate(small_task());
  RngStream rng(7, {4});
  const Dataset& data = task.client_data()[1];
  for (int trial = 0; trial < 3; ++trial) {
    LoRAPair pair = random_pair(8, 12, 4, rng, 0.4);
    std::vector<std::size_t> batch;
    for (int i = 0; i < 5; ++i) batch.push_back(rng.next_below(data.size()));
    LoRAGradients g = lora_gradients(task.base_weight(), pair, data, batch);

    const double h = 1e-5;
    auto fd = [&](DenseMatrix LoRAPair::* member) {
      DenseMatrix grad((pair.*member).rows(), (pair.*member).cols());
      for (std::size_t i = 0; i < grad.size(); ++i) {
        LoRAPair plus = pair, minus = pair;
        (plus.*member).data()[i] += h;
        (minus.*member).data()[i] -= h;
        const double lp =
            lora_gradients(task.base_weight(), plus, data, batch).loss;
        const double lm =
            lora_gradients(task.base_weight(), minus, data, batch).loss;
        grad.data()[i] = (lp - lm) / (2.0 * h);
      }
      return grad;
    };
    DenseMatrix fd_a = fd(&LoRAPair::a);
    DenseMatrix fd_b = fd(&LoRAPair::b);
    REQUIRE(frobenius_norm(fd_a - g.grad_a) /
                std::max(frobenius_norm(g.grad_a), 1e-12) <
            1e-6);
    REQUIRE(frobenius_norm(fd_b - g.grad_b) /
                std::max(frobenius_norm(g.grad_b), 1e-12) <
            1e-6);
  }
}

TEST_CASE("fedlora aggregation identities", "[fl]") {
  RngStream rng(8, {5});

  SECTION("single client with no noise and no clipping passes through") {
    LoRAPair pair = random_pair(6, 5, 2, rng);
    std::vector<ClientUpdate> updates{{0, pair}};
    RngStream agg_rng(8, {6});
    LoRAPair merged =
        fedlora_aggregate(updates, noiseless_spec(), false, agg_rng);
    REQUIRE(merged.a.data() == pair.a.data());
    REQUIRE(merged.b.data() == pair.b.data());
  }

  SECTION("scalar witness: product of averages is zero, average of products "
          "is one") {
    LoRAPair p1{DenseMatrix(1, 1, {1.0}), DenseMatrix(1, 1, {1.0}), 1};
    LoRAPair p2{DenseMatrix(1, 1, {-1.0}), DenseMatrix(1, 1, {-1.0}), 1};
    std::vector<ClientUpdate> updates{{0, p1}, {1, p2}};
    RngStream agg_rng(8, {7});
    LoRAPair merged =
        fedlora_aggregate(updates, noiseless_spec(), false, agg_rng);
    REQUIRE(merge_update(merged)(0, 0) == 0.0);

    RngStream agg_rng2(8, {8});
    FedPowerAggregate ideal = fedpower_aggregate(updates, noiseless_spec(),
                                                 false, 1, 3, agg_rng2);
    REQUIRE(ideal.pre_factorization(0, 0) == 1.0);
  }

  SECTION("identical clients collapse to the common update") {
    LoRAPair pair = random_pair(6, 5, 2, rng);
    std::vector<ClientUpdate> updates{{0, pair}, {1, pair}, {2, pair}};
    RngStream agg_rng(8, {9});
    LoRAPair merged =
        fedlora_aggregate(updates, noiseless_spec(), false, agg_rng);
    REQUIRE(testutil::max_abs_diff(merge_update(merged),
                                   merge_update(pair)) < 1e-12);
  }
}

TEST_CASE("fedlora vs ideal aggregation mismatch on anti-correlated pairs",
          "[fl]") {
  RngStream rng(9, {10});
  int strong_mismatch = 0;
  for (int trial = 0; trial < 50; ++trial) {
    LoRAPair p1 = random_pair(6, 5, 2, rng);
    LoRAPair p2;
    p2.rank = 2;
    p2.a = -1.0 * p1.a + gaussian_matrix(2, 5, 0.05, rng);
    p2.b = -1.0 * p1.b + gaussian_matrix(6, 2, 0.05, rng);
    std::vector<ClientUpdate> updates{{0, p1}, {1, p2}};
    RngStream r1(trial, {11});
    LoRAPair merged =
        fedlora_aggregate(updates, noiseless_spec(), false, r1);
    DenseMatrix product_of_averages = merge_update(merged);
    DenseMatrix average_of_products =
        0.5 * (merge_update(p1) + merge_update(p2));
    const double rel =
        frobenius_norm(product_of_averages - average_of_products) /
        frobenius_norm(average_of_products);
    if (rel > 0.5) ++strong_mismatch;
  }
  REQUIRE(strong_mismatch == 50);
}

TEST_CASE("ffalora aggregation trains only the b factor", "[fl]") {
  RngStream rng(10, {12});
  LoRAPair p1 = random_pair(6, 5, 2, rng);
  LoRAPair p2 = random_pair(6, 5, 2, rng);

  SECTION("single client, no noise: b passes through") {
    std::vector<ClientUpdate> updates{{0, p1}};
    RngStream agg_rng(10, {13});
    DenseMatrix b =
        ffalora_aggregate(updates, noiseless_spec(), false, agg_rng);
    REQUIRE(b.data() == p1.b.data());
  }

  SECTION("payload is half of the two-factor protocols when m equals n") {
    REQUIRE(upload_bits_per_client(Protocol::kFFALoRA, 16, 16, 4, 32) * 2 ==
            upload_bits_per_client(Protocol::kFedLoRA, 16, 16, 4, 32));
    REQUIRE(upload_bits_per_client(Protocol::kFedPower, 16, 16, 4, 32) ==
            (16 * 4 + 4 * 16) * 32ULL);
  }

  SECTION("frozen a is bit-identical across a whole run") {
    FLRunConfig config = small_config(Protocol::kFFALoRA);
    RunResult result = run_experiment(config);
    RngStream init_rng(config.task.seed, {201});
    DenseMatrix expected_a = gaussian_matrix(
        config.protocol.rank, config.task.n,
        1.0 / std::sqrt(double(config.task.n)), init_rng);
    REQUIRE(result.final_pair.a.data() == expected_a.data());
  }
}

TEST_CASE("fedpower aggregation is exact before refactorization", "[fl]") {
  RngStream rng(11, {14});

  SECTION("single client, rank within budget, reconstructs the update") {
    LoRAPair pair = random_pair(10, 8, 3, rng, 0.4);
    std::vector<ClientUpdate> updates{{0, pair}};
    RngStream agg_rng(11, {15});
    FedPowerAggregate agg = fedpower_aggregate(updates, noiseless_spec(),
                                               false, 3, 20, agg_rng);
    DenseMatrix target = merge_update(pair);
    REQUIRE(frobenius_norm(merge_update(agg.pair) - target) <=
            1e-6 * frobenius_norm(target));
  }

  SECTION("identical clients: aggregate equals the common update exactly") {
    LoRAPair pair = random_pair(6, 5, 2, rng);
    std::vector<ClientUpdate> updates{{0, pair}, {1, pair}, {2, pair}};
    RngStream agg_rng(11, {16});
    FedPowerAggregate agg = fedpower_aggregate(updates, noiseless_spec(),
                                               false, 2, 3, agg_rng);
    REQUIRE(testutil::max_abs_diff(agg.pre_factorization,
                                   merge_update(pair)) < 1e-12);
  }

  SECTION("aggregate equals the mean of clipped products on fuzzed sets") {
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t clients = 2 + rng.next_below(4);
      PrivacySpec spec;
      spec.sigma = 0.0;
      spec.clip = 1.0;
      std::vector<ClientUpdate> updates;
      for (std::size_t c = 0; c < clients; ++c) {
        updates.push_back(
            {static_cast<int>(c), random_pair(7, 6, 2, rng)});
      }
      RngStream agg_rng(trial, {17});
      FedPowerAggregate agg =
          fedpower_aggregate(updates, spec, false, 2, 2, agg_rng);
      // independent recomputation with the naive matmul oracle
      DenseMatrix expected(7, 6);
      for (const ClientUpdate& u : updates) {
        DenseMatrix delta = oracles::naive_matmul(u.pair.b, u.pair.a);
        const double norm = frobenius_norm(delta);
        if (norm > spec.clip) delta = (spec.clip / norm) * delta;
        expected = expected + delta;
      }
      expected = (1.0 / double(clients)) * expected;
      REQUIRE(testutil::max_abs_diff(agg.pre_factorization, expected) <
              1e-12);
    }
  }
}

TEST_CASE("round-1 degeneracy: zero updates produce structured noise",
          "[fl]") {
  RngStream rng(12, {18});
  // L = 0 means clients return the initial pair with b = 0.
  LoRAPair init;
  init.rank = 3;
  init.a = gaussian_matrix(3, 8, 0.3, rng);
  init.b = DenseMatrix(6, 3);
  std::vector<ClientUpdate> updates{{0, init}, {1, init}};
  PrivacySpec spec;
  spec.sigma = 0.8;
  spec.clip = 2.0;
  RngStream agg_rng(12, {19});
  FedPowerAggregate agg =
      fedpower_aggregate(updates, spec, false, 3, 3, agg_rng);
  REQUIRE(frobenius_norm(agg.pre_factorization) == 0.0);
  REQUIRE(agg.rank_deficient);
  DenseMatrix gram = matmul(agg.pair.a, transpose(agg.pair.a));
  REQUIRE(testutil::max_abs_diff(gram, DenseMatrix::identity(3)) < 1e-8);
  REQUIRE(frobenius_norm(agg.pair.b) > 0.0);

  // The same shows up in a run with local_steps = 0.
  FLRunConfig config = small_config(Protocol::kFedPower);
  config.training.rounds = 1;
  config.training.local_steps = 0;
  config.privacy.sigma = 0.8;
  config.privacy.clip = 2.0;
  RunResult result = run_experiment(config);
  REQUIRE(result.rounds.at(0).rank_deficient);

  // With local steps, the first merged update is trained, not zero: the
  // b-gradient is nonzero as soon as a is, even though b starts at zero.
  SyntheticTask task = SyntheticTask::generate(config.task);
  LoRAPair fresh;
  fresh.rank = 4;
  fresh.a = gaussian_matrix(4, config.task.n, 0.3, rng);
  fresh.b = DenseMatrix(config.task.m, 4);
  ClientState client{0, &task.client_data()[0], 0.1, 1, 0.5, Optimizer::kSgd};
  RngStream train_rng(3, {20});
  LocalTrainResult trained =
      local_train(client, task.base_weight(), fresh, false, train_rng);
  REQUIRE(frobenius_norm(trained.pair.b) > 0.0);
  REQUIRE(frobenius_norm(merge_update(trained.pair)) > 0.0);
}

TEST_CASE("debug checks accept a noisy private run", "[fl]") {
  FLRunConfig config = small_config(Protocol::kFedPower);
  config.privacy.sigma = 0.7;
  config.privacy.clip = 2.0;
  config.debug_checks = true;
  REQUIRE_NOTHROW(run_experiment(config));
}

TEST_CASE("run_experiment with zero rounds releases the base model", "[fl]") {
  FLRunConfig config = small_config(Protocol::kFedPower);
  config.training.rounds = 0;
  RunResult result = run_experiment(config);
  REQUIRE(result.rounds.empty());
  REQUIRE(result.final_accuracy == result.base_accuracy);
  SyntheticTask task = SyntheticTask::generate(config.task);
  REQUIRE(testutil::max_abs_diff(result.released, task.base_weight()) == 0.0);
}

TEST_CASE("runs are bit-deterministic across repetition and scheduling",
          "[fl]") {
  for (Protocol protocol :
       {Protocol::kFedLoRA, Protocol::kFFALoRA, Protocol::kFedPower}) {
    FLRunConfig config = small_config(protocol);
    config.privacy.sigma = 0.4;
    config.privacy.clip = 2.0;
    RunResult first = run_experiment(config);
    RunResult repeat = run_experiment(config);
    FLRunConfig sequential = config;
    sequential.training.parallel_clients = false;
    RunResult serial = run_experiment(sequential);

    auto same = [](const RunResult& x, const RunResult& y) {
      REQUIRE(x.rounds.size() == y.rounds.size());
      for (std::size_t i = 0; i < x.rounds.size(); ++i) {
        REQUIRE(x.rounds[i].sampled_clients == y.rounds[i].sampled_clients);
        REQUIRE(x.rounds[i].test_accuracy == y.rounds[i].test_accuracy);
        REQUIRE(x.rounds[i].cumulative_bits == y.rounds[i].cumulative_bits);
        REQUIRE(x.rounds[i].rank_deficient == y.rounds[i].rank_deficient);
      }
      REQUIRE(x.released.data() == y.released.data());
    };
    same(first, repeat);
    same(first, serial);
  }
}

TEST_CASE("communication accounting is exact", "[fl]") {
  FLRunConfig config = small_config(Protocol::kFedLoRA);
  config.training.rounds = 4;
  RunResult result = run_experiment(config);
  const std::uint64_t per_client =
      (config.task.m * config.protocol.rank +
       config.protocol.rank * config.task.n) *
      32ULL;
  const std::uint64_t sampled = 2;  // ceil(0.5 * 4)
  REQUIRE(result.total_bits == 4 * sampled * per_client);
  for (std::size_t i = 0; i < result.rounds.size(); ++i) {
    REQUIRE(result.rounds[i].cumulative_bits ==
            (i + 1) * sampled * per_client);
  }

  config.protocol.name = Protocol::kFFALoRA;
  RunResult ffa = run_experiment(config);
  REQUIRE(ffa.total_bits ==
          4 * sampled * config.task.m * config.protocol.rank * 32ULL);
}

TEST_CASE("tight sensitivity divides the noise scale by the cohort size",
          "[fl]") {
  // zero updates isolate the injected noise in the aggregate
  LoRAPair zero{DenseMatrix(8, 120), DenseMatrix(40, 8), 8};
  std::vector<ClientUpdate> updates{{0, zero}, {1, zero}};
  PrivacySpec spec;
  spec.sigma = 1.0;
  spec.clip = 2.0;

  auto noise_std = [&](bool tight) {
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      RngStream rng(seed, {40, tight ? 1 : 0});
      LoRAPair out = fedlora_aggregate(updates, spec, tight, rng);
      for (double v : out.a.data()) {
        sum_sq += v * v;
        ++count;
      }
      for (double v : out.b.data()) {
        sum_sq += v * v;
        ++count;
      }
    }
    return std::sqrt(sum_sq / double(count));
  };
  const double loose = noise_std(false);
  const double tight = noise_std(true);
  REQUIRE(loose == Approx(2.0).epsilon(0.03));   // sigma * clip
  REQUIRE(tight == Approx(1.0).epsilon(0.03));   // sigma * clip / 2
}

TEST_CASE("adam option optimizes the local loss", "[fl]") {
  SyntheticTask task = SyntheticTask::generate(small_task());
  RngStream rng(14, {21});
  LoRAPair start;
  start.rank = 4;
  start.a = gaussian_matrix(4, 12, 0.3, rng);
  start.b = DenseMatrix(8, 4);
  const Dataset& data = task.client_data()[2];
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  ClientState client{2, &data, 0.02, 25, 1.0, Optimizer::kAdam};
  RngStream train_rng(14, {22});
  LocalTrainResult trained =
      local_train(client, task.base_weight(), start, false, train_rng);
  const double before =
      lora_gradients(task.base_weight(), start, data, all).loss;
  const double after =
      lora_gradients(task.base_weight(), trained.pair, data, all).loss;
  REQUIRE(after < before);

  // zero step size is still the identity under adam
  ClientState frozen = client;
  frozen.eta = 0.0;
  RngStream train_rng2(14, {23});
  LocalTrainResult unchanged =
      local_train(frozen, task.base_weight(), start, false, train_rng2);
  REQUIRE(unchanged.pair.a.data() == start.a.data());
  REQUIRE(unchanged.pair.b.data() == start.b.data());
}

TEST_CASE("empty sampled batches skip the step and are counted", "[fl]") {
  FLRunConfig config = small_config(Protocol::kFedLoRA);
  config.training.rounds = 2;
  config.training.q_s = 0.001;  // rounds to an empty batch at 40 samples
  RunResult result = run_experiment(config);
  const std::int64_t sampled = 2, steps = config.training.local_steps;
  REQUIRE(result.skipped_steps == 2 * sampled * steps);
  REQUIRE(result.final_accuracy == result.base_accuracy);
}
