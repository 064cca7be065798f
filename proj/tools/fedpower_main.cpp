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

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedpower/fedpower.hpp"

namespace {

using namespace fedpower;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

// Output directories default under this root when --out is relative or
// omitted where allowed.
std::string output_root() {
  const char* env = std::getenv("FEDPOWER_OUT_ROOT");
  return env != nullptr ? std::string(env) : std::string(".");
}

std::string resolve_out_dir(const std::string& out) {
  std::filesystem::path p(out);
  if (p.is_absolute()) return out;
  return (std::filesystem::path(output_root()) / p).string();
}

int cmd_run(const std::string& config_path, const std::string& out,
            std::optional<std::uint64_t> seed_override) {
  FLRunConfig config = load_config_file(config_path);
  if (seed_override) config.task.seed = *seed_override;
  const std::string dir = resolve_out_dir(out);
  RunResult result = execute_run(config, dir);
  std::cout << "run complete: " << dir << "\n"
            << "  final_accuracy=" << format_double(result.final_accuracy)
            << " base_accuracy=" << format_double(result.base_accuracy)
            << "\n  sigma=" << format_double(result.sigma_used)
            << " certified_epsilon="
            << format_double(result.certified_epsilon)
            << " total_bits=" << result.total_bits << "\n";
  return kExitOk;
}

int cmd_preset(const std::string& name, const std::string& out_file) {
  FLRunConfig config = preset(name);
  const std::string text = config_to_json(config).dump(2) + "\n";
  if (out_file.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_file, text);
    std::cout << "wrote preset '" << name << "' to " << out_file << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& preset_name,
              const std::string& axis_name,
              const std::vector<std::string>& values,
              std::vector<std::uint64_t> seeds, const std::string& out,
              double target_accuracy) {
  FLRunConfig base =
      config_path.empty() ? preset(preset_name) : load_config_file(config_path);
  if (seeds.empty()) seeds = base.seed_list();
  SweepAxis axis = sweep_axis_from_string(axis_name);
  SweepReport report = sweep(base, axis, values, seeds, target_accuracy);
  const std::string csv = sweep_csv(report);
  if (out.empty()) {
    std::cout << csv;
  } else {
    const std::string dir = resolve_out_dir(out);
    std::filesystem::create_directories(dir);
    write_text_file(std::filesystem::path(dir) / "sweep.csv", csv);
    std::cout << "wrote " << dir << "/sweep.csv\n";
  }
  for (const SweepCell& cell : report.cells) {
    for (const std::string& failure : cell.failures) {
      std::cerr << "sweep failure [" << cell.value << "] " << failure << "\n";
    }
  }
  return kExitOk;
}

int cmd_attack(const std::string& model_dir, const std::string& which,
               std::size_t shadows, std::uint64_t seed,
               std::size_t eval_size) {
  const std::filesystem::path dir(model_dir);
  FLRunConfig config = load_config_file((dir / "config.json").string());
  LinearModel released{read_fpmx((dir / "released.fpmx").string())};
  SyntheticTask task = SyntheticTask::generate(config.task);

  AttackSuiteOptions options;
  options.shadow_count = shadows;
  options.seed = seed;
  options.eval_per_class = eval_size;
  options.do_shadow = which == "all" || which == "shadow";
  options.do_loss = which == "all" || which == "loss";
  options.do_calibration = which == "all" || which == "calibration";
  if (!options.do_shadow && !options.do_loss && !options.do_calibration) {
    throw ConfigError("unknown attack '" + which +
                      "' (expected shadow|loss|calibration|all)");
  }
  AttackSuiteResult result = run_attack_suite(config, task, released, options);
  write_text_file(dir / "attack.csv", attack_scores_csv(result));
  write_text_file(dir / "attack_summary.json",
                  attack_summary_json(result).dump(2) + "\n");
  auto print = [](const char* name, const std::optional<AttackResult>& a) {
    if (!a) return;
    std::cout << "  " << name << ": accuracy="
              << format_double(a->accuracy)
              << " auc=" << format_double(a->auc) << "\n";
  };
  std::cout << "attack results (" << model_dir << "):\n";
  print("shadow", result.shadow);
  print("loss", result.loss);
  print("calibration", result.calibration);
  return kExitOk;
}

int cmd_factorize(const std::string& in, const std::string& out_a,
                  const std::string& out_b, const std::string& method,
                  std::size_t rank, int iters, double sigma, double clip,
                  std::uint64_t seed) {
  DenseMatrix w = read_fpmx(in);
  RngStream rng(seed, {42});
  FactorizeResult result;
  if (method == "power") {
    result = power_iteration(w, rank, iters, rng);
  } else if (method == "powerdp") {
    result = power_dp(w, rank, iters, sigma, clip, rng);
  } else if (method == "input") {
    result = factorize_input_perturb(w, rank, iters, sigma, clip, rng);
  } else if (method == "output") {
    result = factorize_output_perturb(w, rank, iters, sigma, clip, rng);
  } else {
    throw ConfigError("unknown method '" + method +
                      "' (expected power|powerdp|input|output)");
  }
  write_fpmx(out_a, result.pair.a);
  write_fpmx(out_b, result.pair.b);
  const DenseMatrix recon = merge_update(result.pair);
  std::cout << "factorized " << w.rows() << "x" << w.cols() << " at rank "
            << rank << " (" << method << ")\n"
            << "  reconstruction_error="
            << format_double(frobenius_norm(w - recon))
            << " rank_deficient=" << (result.rank_deficient ? 1 : 0) << "\n";
  return kExitOk;
}

int cmd_accountant(double epsilon, double delta, double qc, double qs,
                   std::uint64_t rounds, const std::string& adjacency) {
  double q = 0.0;
  if (adjacency == "sample") {
    q = qc * qs;
  } else if (adjacency == "client") {
    q = qc;
  } else {
    throw ConfigError("adjacency must be sample|client");
  }
  const double sigma = required_sigma(epsilon, delta, q, rounds);
  AccountantState state = AccountantState::fresh();
  const std::vector<double> per_step = step_rdp(sigma, q, state.orders);
  state = compose(std::move(state), per_step, rounds);
  const EpsilonAtOrder eps = rdp_to_dp(state, delta);
  std::cout << "required_sigma=" << format_double(sigma)
            << " certified_epsilon=" << format_double(eps.epsilon)
            << " at_order=" << format_double(eps.order) << " q="
            << format_double(q) << "\n";
  std::cout << "order,rdp_per_step,rdp_total,epsilon_at_order\n";
  for (std::size_t i = 0; i < state.orders.size(); ++i) {
    const double eps_at = state.rdp[i] +
                          std::log(1.0 / delta) / (state.orders[i] - 1.0);
    std::cout << format_double(state.orders[i]) << ","
              << format_double(per_step[i]) << ","
              << format_double(state.rdp[i]) << "," << format_double(eps_at)
              << "\n";
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& dirs,
               const std::string& out_file) {
  std::vector<std::string> warnings;
  std::vector<ReportRow> rows = collect_report_rows(dirs, &warnings);
  const std::string csv = report_csv(rows);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  if (out_file.empty()) {
    std::cout << csv;
  } else {
    write_text_file(out_file, csv);
    std::cout << "wrote " << rows.size() << " rows to " << out_file << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fedpower: differentially private federated learning with low-rank "
      "adapters, at desk scale"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run one experiment from a config");
  std::string run_config, run_out = "run";
  std::optional<std::uint64_t> run_seed;
  run->add_option("--config", run_config, "config JSON file")->required();
  run->add_option("--out", run_out, "output directory");
  run->add_option("--seed", run_seed, "override task.seed");

  // preset
  auto* preset_cmd =
      app.add_subcommand("preset", "emit a named preset config");
  std::string preset_name, preset_out;
  preset_cmd
      ->add_option("name", preset_name, "nonprivate|eps9|eps6|eps3")
      ->required();
  preset_cmd->add_option("--out", preset_out, "write to a file instead");

  // sweep
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "run a grid over one axis, multiple seeds");
  std::string sweep_config, sweep_preset = "nonprivate";
  std::string sweep_axis = "protocol", sweep_out;
  std::vector<std::string> sweep_values;
  std::vector<std::uint64_t> sweep_seeds;
  double sweep_target = 0.8;
  sweep_cmd->add_option("--config", sweep_config, "base config JSON file");
  sweep_cmd->add_option("--preset", sweep_preset,
                        "base preset when no --config");
  sweep_cmd->add_option("--axis", sweep_axis,
                        "epsilon|refactor_frequency|protocol");
  sweep_cmd->add_option("--values", sweep_values, "axis values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "seed list")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  sweep_cmd->add_option("--target-acc", sweep_target,
                        "accuracy for bits-to-target extraction");

  // attack
  auto* attack_cmd =
      app.add_subcommand("attack", "membership inference against a run");
  std::string attack_model, attack_which = "all";
  std::size_t attack_shadows = 8, attack_eval = 500;
  std::uint64_t attack_seed = 9000;
  attack_cmd->add_option("--model", attack_model, "run output directory")
      ->required();
  attack_cmd->add_option("--attack", attack_which,
                         "shadow|loss|calibration|all");
  attack_cmd->add_option("--shadows", attack_shadows, "shadow model count");
  attack_cmd->add_option("--seed", attack_seed, "attack RNG seed");
  attack_cmd->add_option("--eval-size", attack_eval,
                         "members (and non-members) to score");

  // factorize
  auto* fact_cmd =
      app.add_subcommand("factorize", "rank-r refactorization of an FPMX file");
  std::string fact_in, fact_out_a = "a.fpmx", fact_out_b = "b.fpmx";
  std::string fact_method = "power";
  std::size_t fact_rank = 8;
  int fact_iters = 4;
  double fact_sigma = 0.0, fact_clip = 2.0;
  std::uint64_t fact_seed = 1;
  fact_cmd->add_option("--in", fact_in, "input FPMX matrix")->required();
  fact_cmd->add_option("--out-a", fact_out_a, "output FPMX for the a factor");
  fact_cmd->add_option("--out-b", fact_out_b, "output FPMX for the b factor");
  fact_cmd->add_option("--method", fact_method, "power|powerdp|input|output");
  fact_cmd->add_option("--rank", fact_rank, "target rank r");
  fact_cmd->add_option("--iters", fact_iters, "power iterations k");
  fact_cmd->add_option("--sigma", fact_sigma, "noise multiplier");
  fact_cmd->add_option("--clip", fact_clip, "norm bound C_W");
  fact_cmd->add_option("--seed", fact_seed, "RNG seed");

  // accountant
  auto* acct_cmd = app.add_subcommand(
      "accountant", "required sigma and per-order RDP table");
  double acct_eps = 3.0, acct_delta = 1e-5, acct_qc = 0.5, acct_qs = 0.05;
  std::uint64_t acct_rounds = 200;
  std::string acct_adjacency = "sample";
  acct_cmd->add_option("--epsilon", acct_eps, "target epsilon")->required();
  acct_cmd->add_option("--delta", acct_delta, "delta");
  acct_cmd->add_option("--qc", acct_qc, "client sampling rate");
  acct_cmd->add_option("--qs", acct_qs, "batch sampling rate");
  acct_cmd->add_option("-T,--rounds", acct_rounds, "global rounds");
  acct_cmd->add_option("--adjacency", acct_adjacency, "sample|client");

  // report
  auto* report_cmd = app.add_subcommand(
      "report", "merge run directories into one long-format CSV");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report_cmd->add_option("dirs", report_dirs, "run directories")->required();
  report_cmd->add_option("--out", report_out, "output CSV file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(run_config, run_out, run_seed);
    if (preset_cmd->parsed()) return cmd_preset(preset_name, preset_out);
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_config, sweep_preset, sweep_axis, sweep_values,
                       sweep_seeds, sweep_out, sweep_target);
    }
    if (attack_cmd->parsed()) {
      return cmd_attack(attack_model, attack_which, attack_shadows,
                        attack_seed, attack_eval);
    }
    if (fact_cmd->parsed()) {
      return cmd_factorize(fact_in, fact_out_a, fact_out_b, fact_method,
                           fact_rank, fact_iters, fact_sigma, fact_clip,
                           fact_seed);
    }
    if (acct_cmd->parsed()) {
      return cmd_accountant(acct_eps, acct_delta, acct_qc, acct_qs,
                            acct_rounds, acct_adjacency);
    }
    if (report_cmd->parsed()) return cmd_report(report_dirs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitConfigError;
}
