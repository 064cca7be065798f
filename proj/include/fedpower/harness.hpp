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

#ifndef FEDPOWER_HARNESS_HPP_
#define FEDPOWER_HARNESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fedpower/attacks.hpp"
#include "fedpower/config.hpp"
#include "fedpower/errors.hpp"
#include "fedpower/fl.hpp"
#include "fedpower/fpmx.hpp"

namespace fedpower {

using nlohmann::json;

// Shortest round-trippable decimal form, so emitted CSV/JSON is identical
// across repeated runs of the same experiment.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double parsed = std::strtod(buf, nullptr);
  if (parsed == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[32];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      if (std::strtod(shorter, nullptr) == v) return shorter;
    }
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------

inline json config_to_json(const FLRunConfig& c) {
  json j;
  j["task"] = {{"n", c.task.n},
               {"m", c.task.m},
               {"classes", c.task.classes},
               {"samples_per_client", c.task.samples_per_client},
               {"clients", c.task.clients},
               {"test_samples", c.task.test_samples},
               {"seed", c.task.seed}};
  j["protocol"] = {{"name", to_string(c.protocol.name)},
                   {"r", c.protocol.rank},
                   {"k", c.protocol.power_iterations},
                   {"refactor_frequency", c.protocol.refactor_frequency},
                   {"value_bits", c.protocol.value_bits}};
  j["training"] = {{"T", c.training.rounds},
                   {"L", c.training.local_steps},
                   {"eta", c.training.eta},
                   {"q_c", c.training.q_c},
                   {"q_s", c.training.q_s},
                   {"optimizer", to_string(c.training.optimizer)},
                   {"parallel_clients", c.training.parallel_clients}};
  json privacy;
  if (c.privacy.epsilon) privacy["epsilon"] = *c.privacy.epsilon;
  if (c.privacy.sigma) privacy["sigma"] = *c.privacy.sigma;
  privacy["delta"] = c.privacy.delta;
  privacy["clip"] = c.privacy.clip;
  privacy["adjacency"] = to_string(c.privacy.adjacency);
  privacy["tight_sensitivity"] = c.privacy.tight_sensitivity;
  j["privacy"] = privacy;
  if (!c.seeds.empty()) j["seeds"] = c.seeds;
  if (c.debug_checks) j["debug_checks"] = true;
  return j;
}

namespace detail {

inline void reject_unknown_keys(const json& j, const char* section,
                                std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) {
      throw ConfigError(std::string("config: unknown key '") + it.key() +
                        "' in section " + section);
    }
  }
}

}  // namespace detail

inline FLRunConfig config_from_json(const json& j) {
  try {
    detail::reject_unknown_keys(
        j, "<root>",
        {"task", "protocol", "training", "privacy", "seeds", "debug_checks"});
    FLRunConfig c;
    if (j.contains("task")) {
      const json& t = j["task"];
      detail::reject_unknown_keys(t, "task",
                                  {"n", "m", "classes", "samples_per_client",
                                   "clients", "test_samples", "seed"});
      c.task.n = t.value("n", c.task.n);
      c.task.m = t.value("m", c.task.m);
      c.task.classes = t.value("classes", c.task.classes);
      c.task.samples_per_client =
          t.value("samples_per_client", c.task.samples_per_client);
      c.task.clients = t.value("clients", c.task.clients);
      c.task.test_samples = t.value("test_samples", c.task.test_samples);
      c.task.seed = t.value("seed", c.task.seed);
    }
    if (j.contains("protocol")) {
      const json& p = j["protocol"];
      detail::reject_unknown_keys(
          p, "protocol", {"name", "r", "k", "refactor_frequency",
                          "value_bits"});
      if (p.contains("name")) {
        c.protocol.name = protocol_from_string(p["name"].get<std::string>());
      }
      c.protocol.rank = p.value("r", c.protocol.rank);
      c.protocol.power_iterations = p.value("k", c.protocol.power_iterations);
      c.protocol.refactor_frequency =
          p.value("refactor_frequency", c.protocol.refactor_frequency);
      c.protocol.value_bits = p.value("value_bits", c.protocol.value_bits);
    }
    if (j.contains("training")) {
      const json& t = j["training"];
      detail::reject_unknown_keys(
          t, "training",
          {"T", "L", "eta", "q_c", "q_s", "optimizer", "parallel_clients"});
      c.training.rounds = t.value("T", c.training.rounds);
      c.training.local_steps = t.value("L", c.training.local_steps);
      c.training.eta = t.value("eta", c.training.eta);
      c.training.q_c = t.value("q_c", c.training.q_c);
      c.training.q_s = t.value("q_s", c.training.q_s);
      if (t.contains("optimizer")) {
        c.training.optimizer =
            optimizer_from_string(t["optimizer"].get<std::string>());
      }
      c.training.parallel_clients =
          t.value("parallel_clients", c.training.parallel_clients);
    }
    if (j.contains("privacy")) {
      const json& p = j["privacy"];
      detail::reject_unknown_keys(p, "privacy",
                                  {"epsilon", "sigma", "delta", "clip",
                                   "adjacency", "tight_sensitivity"});
      if (p.contains("epsilon")) c.privacy.epsilon = p["epsilon"].get<double>();
      if (p.contains("sigma")) c.privacy.sigma = p["sigma"].get<double>();
      c.privacy.delta = p.value("delta", c.privacy.delta);
      c.privacy.clip = p.value("clip", c.privacy.clip);
      if (p.contains("adjacency")) {
        const std::string a = p["adjacency"].get<std::string>();
        if (a == "sample") {
          c.privacy.adjacency = Adjacency::kSample;
        } else if (a == "client") {
          c.privacy.adjacency = Adjacency::kClient;
        } else {
          throw ConfigError("privacy.adjacency must be sample|client");
        }
      }
      c.privacy.tight_sensitivity =
          p.value("tight_sensitivity", c.privacy.tight_sensitivity);
    }
    if (j.contains("seeds")) {
      c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    }
    c.debug_checks = j.value("debug_checks", false);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline FLRunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Presets (cross-silo defaults: 6 clients, r=8, C=2, delta=1e-5, T=200,
// q_c=0.5, batch 128 via q_s=0.05 over 2560 samples per client)
// ---------------------------------------------------------------------------

inline FLRunConfig preset(const std::string& name) {
  FLRunConfig c;
  c.task = TaskSection{32, 16, 10, 2560, 6, 1000, 1};
  c.protocol.name = Protocol::kFedPower;
  c.protocol.rank = 8;
  c.protocol.power_iterations = 4;
  c.protocol.refactor_frequency = 1;
  c.training.rounds = 200;
  c.training.local_steps = 2;
  c.training.q_c = 0.5;
  c.training.q_s = 0.05;
  c.training.optimizer = Optimizer::kSgd;
  if (name == "nonprivate") {
    c.training.eta = 0.05;
    c.privacy.sigma = 0.0;
    c.privacy.clip = 0.0;  // disabled
    return c;
  }
  double epsilon = 0.0;
  if (name == "eps9") {
    epsilon = 9.0;
  } else if (name == "eps6") {
    epsilon = 6.0;
  } else if (name == "eps3") {
    epsilon = 3.0;
  } else {
    throw ConfigError("unknown preset '" + name +
                      "' (expected nonprivate|eps9|eps6|eps3)");
  }
  // Private settings run a larger step size, re-tuned for this task rather
  // than copied from the non-private setting.
  c.training.eta = 0.2;
  c.privacy.epsilon = epsilon;
  c.privacy.delta = 1e-5;
  c.privacy.clip = 2.0;
  c.privacy.adjacency = Adjacency::kSample;
  return c;
}

// ---------------------------------------------------------------------------
// Run outputs
// ---------------------------------------------------------------------------

// Everything in rounds.csv is a deterministic function of (config, seed);
// wall-clock timings go to timings.csv so repeated runs stay byte-identical.
inline std::string rounds_csv(const RunResult& result) {
  std::ostringstream out;
  out << "round,sampled_clients,test_accuracy,cumulative_bits,sigma,"
         "rank_deficient\n";
  for (const RoundLog& log : result.rounds) {
    out << log.round << ",";
    for (std::size_t i = 0; i < log.sampled_clients.size(); ++i) {
      if (i) out << ';';
      out << log.sampled_clients[i];
    }
    out << "," << format_double(log.test_accuracy) << ","
        << log.cumulative_bits << "," << format_double(log.sigma) << ","
        << (log.rank_deficient ? 1 : 0) << "\n";
  }
  return out.str();
}

inline std::string timings_csv(const RunResult& result) {
  std::ostringstream out;
  out << "round,aggregation_seconds\n";
  for (const RoundLog& log : result.rounds) {
    out << log.round << "," << format_double(log.aggregation_seconds) << "\n";
  }
  return out.str();
}

inline json summary_json(const FLRunConfig& config, const RunResult& result) {
  json s;
  s["protocol"] = to_string(config.protocol.name);
  s["seed"] = config.task.seed;
  s["rounds"] = config.training.rounds;
  s["eta"] = config.training.eta;
  s["optimizer"] = to_string(config.training.optimizer);
  s["refactor_frequency"] = config.protocol.refactor_frequency;
  s["value_bits"] = config.protocol.value_bits;
  if (config.privacy.epsilon) {
    s["epsilon_requested"] = *config.privacy.epsilon;
  } else {
    s["epsilon_requested"] = nullptr;
  }
  s["sigma"] = result.sigma_used;
  s["delta"] = config.privacy.delta;
  if (std::isfinite(result.certified_epsilon)) {
    s["epsilon_certified"] = result.certified_epsilon;
    s["certified_order"] = result.certified_order;
  } else {
    s["epsilon_certified"] = nullptr;
  }
  if (config.privacy.clip > 0.0) {
    s["clip"] = config.privacy.clip;
  } else {
    s["clip"] = nullptr;
  }
  s["adjacency"] = to_string(config.privacy.adjacency);
  s["tight_sensitivity"] = config.privacy.tight_sensitivity;
  s["base_accuracy"] = result.base_accuracy;
  s["final_accuracy"] = result.final_accuracy;
  s["total_bits"] = result.total_bits;
  s["mean_aggregation_seconds"] = result.mean_aggregation_seconds;
  s["median_aggregation_seconds"] = result.median_aggregation_seconds;
  s["skipped_steps"] = result.skipped_steps;
  // The amplification bound assumes Poisson sampling; the simulator samples
  // fixed-size client and batch subsets, which this note discloses.
  s["sampling_note"] =
      "fixed-size subsampling; accountant assumes Poisson sampling";
  return s;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

// Runs one experiment and materializes rounds.csv, timings.csv, summary.json,
// config.json and the FPMX dumps of the final adapter pair and merged model.
inline RunResult execute_run(const FLRunConfig& config,
                             const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  RunResult result = run_experiment(config);
  write_text_file(dir / "config.json", config_to_json(config).dump(2) + "\n");
  write_text_file(dir / "rounds.csv", rounds_csv(result));
  write_text_file(dir / "timings.csv", timings_csv(result));
  write_text_file(dir / "summary.json",
                  summary_json(config, result).dump(2) + "\n");
  write_fpmx((dir / "a.fpmx").string(), result.final_pair.a);
  write_fpmx((dir / "b.fpmx").string(), result.final_pair.b);
  write_fpmx((dir / "released.fpmx").string(), result.released);
  return result;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double v : xs) out.mean += v;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double v : xs) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

// First round whose test accuracy reaches `target`, in cumulative bits.
inline std::optional<std::uint64_t> bits_to_target_accuracy(
    const std::vector<RoundLog>& rounds, double target) {
  for (const RoundLog& log : rounds) {
    if (log.test_accuracy >= target) return log.cumulative_bits;
  }
  return std::nullopt;
}

enum class SweepAxis { kEpsilon, kRefactorFrequency, kProtocol };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "epsilon") return SweepAxis::kEpsilon;
  if (s == "refactor_frequency") return SweepAxis::kRefactorFrequency;
  if (s == "protocol") return SweepAxis::kProtocol;
  throw ConfigError("unknown sweep axis '" + s +
                    "' (expected epsilon|refactor_frequency|protocol)");
}

struct SweepCell {
  std::string value;
  std::size_t completed_seeds = 0;
  MeanStd accuracy;
  double mean_aggregation_seconds = 0.0;
  double overhead_vs_fedlora = 0.0;
  std::optional<double> mean_bits_to_target;
  std::vector<std::string> failures;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::kEpsilon;
  double target_accuracy = 0.8;
  double fedlora_baseline_agg_seconds = 0.0;
  std::vector<SweepCell> cells;
};

inline FLRunConfig apply_sweep_value(FLRunConfig config, SweepAxis axis,
                                     const std::string& value) {
  switch (axis) {
    case SweepAxis::kEpsilon:
      config.privacy.sigma.reset();
      if (value == "nonprivate") {
        config.privacy.epsilon.reset();
        config.privacy.sigma = 0.0;
        config.privacy.clip = 0.0;
      } else {
        config.privacy.epsilon = std::stod(value);
      }
      break;
    case SweepAxis::kRefactorFrequency:
      config.protocol.refactor_frequency = std::stoi(value);
      break;
    case SweepAxis::kProtocol:
      config.protocol.name = protocol_from_string(value);
      break;
  }
  return config;
}

// Runs every (axis value, seed) combination plus a FedLoRA baseline for the
// overhead column. Per-run failures are captured in the cell and the sweep
// continues.
inline SweepReport sweep(const FLRunConfig& base, SweepAxis axis,
                         const std::vector<std::string>& values,
                         const std::vector<std::uint64_t>& seeds,
                         double target_accuracy = 0.8) {
  SweepReport report;
  report.axis = axis;
  report.target_accuracy = target_accuracy;

  // FedLoRA baseline for Table-3-style relative overhead.
  {
    std::vector<double> times;
    for (std::uint64_t seed : seeds) {
      FLRunConfig c = base;
      c.protocol.name = Protocol::kFedLoRA;
      c.task.seed = seed;
      c.seeds.clear();
      try {
        times.push_back(run_experiment(c).mean_aggregation_seconds);
      } catch (const std::exception&) {
        // baseline failures leave the overhead column undefined
      }
    }
    report.fedlora_baseline_agg_seconds = mean_std(times).mean;
  }

  for (const std::string& value : values) {
    SweepCell cell;
    cell.value = value;
    std::vector<double> accs, times, bits;
    bool all_reached_target = true;
    for (std::uint64_t seed : seeds) {
      try {
        FLRunConfig c = apply_sweep_value(base, axis, value);
        c.task.seed = seed;
        c.seeds.clear();
        RunResult r = run_experiment(c);
        accs.push_back(r.final_accuracy);
        times.push_back(r.mean_aggregation_seconds);
        if (auto b = bits_to_target_accuracy(r.rounds, target_accuracy)) {
          bits.push_back(static_cast<double>(*b));
        } else {
          all_reached_target = false;
        }
        ++cell.completed_seeds;
      } catch (const std::exception& e) {
        cell.failures.push_back("seed " + std::to_string(seed) + ": " +
                                e.what());
      }
    }
    cell.accuracy = mean_std(accs);
    cell.mean_aggregation_seconds = mean_std(times).mean;
    if (report.fedlora_baseline_agg_seconds > 0.0) {
      cell.overhead_vs_fedlora =
          (cell.mean_aggregation_seconds -
           report.fedlora_baseline_agg_seconds) /
          report.fedlora_baseline_agg_seconds;
    }
    if (!bits.empty() && all_reached_target) {
      cell.mean_bits_to_target = mean_std(bits).mean;
    }
    report.cells.push_back(std::move(cell));
  }
  return report;
}

inline std::string sweep_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "value,seeds,mean_accuracy,std_accuracy,mean_aggregation_seconds,"
         "overhead_vs_fedlora,mean_bits_to_target,failures\n";
  for (const SweepCell& cell : report.cells) {
    out << cell.value << "," << cell.completed_seeds << ","
        << format_double(cell.accuracy.mean) << ","
        << format_double(cell.accuracy.stddev) << ","
        << format_double(cell.mean_aggregation_seconds) << ","
        << format_double(cell.overhead_vs_fedlora) << ",";
    if (cell.mean_bits_to_target) {
      out << format_double(*cell.mean_bits_to_target);
    }
    out << "," << cell.failures.size() << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Consolidated reporting over run directories
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string protocol;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  int round = 0;
  double accuracy = 0.0;
  std::uint64_t cumulative_bits = 0;
  double sigma = 0.0;
};

// Merges rounds.csv + summary.json of each run directory into long-format
// rows keyed by (protocol, epsilon, seed, round). Unreadable directories
// produce a warning and are skipped.
inline std::vector<ReportRow> collect_report_rows(
    const std::vector<std::string>& run_dirs,
    std::vector<std::string>* warnings) {
  std::vector<ReportRow> rows;
  for (const std::string& dir : run_dirs) {
    try {
      std::ifstream sf(std::filesystem::path(dir) / "summary.json");
      if (!sf) throw IoError("missing summary.json in " + dir);
      json summary;
      sf >> summary;
      ReportRow base;
      base.protocol = summary.value("protocol", std::string("?"));
      if (summary.contains("epsilon_requested") &&
          !summary["epsilon_requested"].is_null()) {
        base.epsilon = summary["epsilon_requested"].get<double>();
      }
      base.seed = summary.value("seed", std::uint64_t{0});

      std::ifstream rf(std::filesystem::path(dir) / "rounds.csv");
      if (!rf) throw IoError("missing rounds.csv in " + dir);
      std::string line;
      std::getline(rf, line);  // header
      while (std::getline(rf, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() < 5) throw IoError("corrupt rounds.csv row in " + dir);
        ReportRow row = base;
        row.round = std::stoi(cols[0]);
        row.accuracy = std::stod(cols[2]);
        row.cumulative_bits = std::stoull(cols[3]);
        row.sigma = std::stod(cols[4]);
        rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back(dir + ": " + e.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a,
                                         const ReportRow& b) {
    auto key = [](const ReportRow& r) {
      return std::make_tuple(r.protocol, std::isnan(r.epsilon)
                                             ? -1.0
                                             : r.epsilon,
                             r.seed, r.round);
    };
    return key(a) < key(b);
  });
  return rows;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "protocol,epsilon,seed,round,test_accuracy,cumulative_bits,sigma\n";
  for (const ReportRow& r : rows) {
    out << r.protocol << ",";
    if (!std::isnan(r.epsilon)) out << format_double(r.epsilon);
    out << "," << r.seed << "," << r.round << "," << format_double(r.accuracy)
        << "," << r.cumulative_bits << "," << format_double(r.sigma) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Attack orchestration against a finished run
// ---------------------------------------------------------------------------

struct AttackSuiteOptions {
  std::size_t shadow_count = 8;
  std::size_t eval_per_class = 500;   // members and non-members each
  std::size_t shadow_train_size = 0;  // 0 = samples_per_client, capped
  int shadow_steps = 0;               // 0 = q_c * T * L, capped
  std::uint64_t seed = 9000;
  std::optional<double> calibration_tau;  // default: balanced-optimal
  bool do_shadow = true;
  bool do_loss = true;
  bool do_calibration = true;
};

struct AttackSuiteResult {
  std::optional<AttackResult> shadow;
  std::optional<AttackResult> loss;
  std::optional<AttackResult> calibration;
};

// The attacker's trainer: LoRA fine-tuning from the public base weight with
// the target's own hyperparameters, non-private (the attacker adds no noise).
inline Trainer make_shadow_trainer(const DenseMatrix& w0, std::size_t rank,
                                   double eta, double q_s, Optimizer optimizer,
                                   int steps) {
  return [=](const Dataset& data, RngStream& rng) {
    LoRAPair pair;
    pair.rank = rank;
    pair.a = gaussian_matrix(rank, w0.cols(),
                             1.0 / std::sqrt(double(w0.cols())), rng);
    pair.b = DenseMatrix(w0.rows(), rank);
    ClientState client;
    client.id = 0;
    client.data = &data;
    client.eta = eta;
    client.local_steps = steps;
    client.q_s = q_s;
    client.optimizer = optimizer;
    LocalTrainResult r = local_train(client, w0, pair, false, rng);
    return LinearModel{w0 + merge_update(r.pair)};
  };
}

// Builds the evaluation sets (balanced members / non-members), the auxiliary
// pool and the shadow ensemble, then runs all three attacks against the
// released model.
inline AttackSuiteResult run_attack_suite(const FLRunConfig& config,
                                          const SyntheticTask& task,
                                          const LinearModel& released,
                                          const AttackSuiteOptions& options) {
  RngStream rng(options.seed, {7001});

  // Balanced eval set: members drawn from the union of client datasets.
  const std::vector<Dataset>& clients = task.client_data();
  std::size_t total_train = 0;
  for (const Dataset& d : clients) total_train += d.size();
  const std::size_t eval_count =
      std::min(options.eval_per_class, total_train);
  std::vector<std::size_t> member_idx =
      rng.sample_without_replacement(total_train, eval_count);
  Dataset members;
  members.features = DenseMatrix(eval_count, config.task.n);
  members.labels.resize(eval_count);
  for (std::size_t i = 0; i < eval_count; ++i) {
    std::size_t flat = member_idx[i];
    const std::size_t client = flat / config.task.samples_per_client;
    const std::size_t row = flat % config.task.samples_per_client;
    for (std::size_t j = 0; j < config.task.n; ++j) {
      members.features(i, j) = clients[client].features(row, j);
    }
    members.labels[i] = clients[client].labels[row];
  }
  Dataset non_members = task.sample_pool(eval_count, pool::kNonMember);
  AttackEvalData eval{&members, &non_members};

  std::size_t shadow_train = options.shadow_train_size;
  if (shadow_train == 0) {
    shadow_train = std::min<std::size_t>(config.task.samples_per_client, 512);
  }
  int steps = options.shadow_steps;
  if (steps == 0) {
    steps = static_cast<int>(std::lround(
        config.training.q_c * config.training.rounds *
        config.training.local_steps));
    steps = std::clamp(steps, 1, 400);
  }
  const Dataset aux = task.sample_pool(
      (options.shadow_count + 1) * shadow_train, pool::kAux);
  Trainer trainer = make_shadow_trainer(
      task.base_weight(), config.protocol.rank, config.training.eta,
      config.training.q_s, config.training.optimizer, steps);

  AttackSuiteResult out;
  if (options.do_shadow) {
    RngStream shadow_rng = rng.child({1});
    out.shadow = shadow_model_attack(released, eval, aux,
                                     options.shadow_count, trainer,
                                     config.task.m, shadow_rng);
  }
  if (options.do_loss) {
    RngStream loss_rng = rng.child({2});
    LinearModel loss_shadow = trainer(aux, loss_rng);
    out.loss = loss_threshold_attack(released, eval, loss_shadow, aux);
  }
  if (options.do_calibration) {
    RngStream cal_rng = rng.child({3});
    ShadowEnsemble ensemble =
        train_shadow_models(aux, options.shadow_count, trainer, cal_rng);
    out.calibration = calibration_attack(released, eval, ensemble.shadows,
                                         options.calibration_tau);
  }
  return out;
}

inline json attack_summary_json(const AttackSuiteResult& r) {
  auto one = [](const AttackResult& a) {
    json j;
    j["accuracy"] = a.accuracy;
    j["auc"] = a.auc;
    j["threshold"] = a.threshold;
    j["balanced_accuracy"] = a.balanced_accuracy;
    j["sigma_floored"] = a.sigma_floored;
    json roc = json::array();
    for (const RocPoint& p : a.roc) {
      roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
    }
    j["roc"] = roc;
    return j;
  };
  json j;
  if (r.shadow) j["shadow"] = one(*r.shadow);
  if (r.loss) j["loss"] = one(*r.loss);
  if (r.calibration) j["calibration"] = one(*r.calibration);
  return j;
}

inline std::string attack_scores_csv(const AttackSuiteResult& r) {
  std::ostringstream out;
  out << "attack,record,score,is_member\n";
  auto dump = [&](const char* name, const std::optional<AttackResult>& a) {
    if (!a) return;
    for (std::size_t i = 0; i < a->scores.size(); ++i) {
      out << name << "," << i << "," << format_double(a->scores[i]) << ","
          << (a->is_member[i] ? 1 : 0) << "\n";
    }
  };
  dump("shadow", r.shadow);
  dump("loss", r.loss);
  dump("calibration", r.calibration);
  return out.str();
}

}  // namespace fedpower

#endif  // FEDPOWER_HARNESS_HPP_
