// Command-line front end for the experiment harness.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 gate failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdp/errors.hpp"
#include "mdp/harness.hpp"
#include "mdp/sim/io.hpp"
#include "mdp/theoremlab.hpp"
#include "mdp/wire.hpp"

using namespace mdp;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitGate = 4;

// Flags shared by every subcommand that needs an experiment config. Values
// given on the command line override the file.
struct ConfigFlags {
  std::string path;
  std::vector<std::uint64_t> seeds;
  std::optional<int> shots;
  std::optional<double> allowance;
  std::optional<double> lmi_weight;
  std::optional<double> masking_rate;
  std::vector<std::string> attacks;
  std::optional<std::string> output_dir;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", path, "JSON experiment config");
    app->add_option("--seeds", seeds, "override seeds");
    app->add_option("--K", shots, "override shots per class");
    app->add_option("--allowance", allowance, "override FRR allowance");
    app->add_option("--lmi-weight", lmi_weight, "override masking-invariance weight");
    app->add_option("--masking-rate", masking_rate, "override masking rate");
    app->add_option("--attacks", attacks, "override attack kinds");
    app->add_option("--output-dir", output_dir, "override output directory");
  }

  [[nodiscard]] harness::ExperimentConfig resolve() const {
    harness::ExperimentConfig cfg = path.empty() ? harness::ExperimentConfig{} : harness::load_config(path);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (shots) cfg.K = *shots;
    if (allowance) cfg.allowance = *allowance;
    if (lmi_weight) cfg.lmi_weight = *lmi_weight;
    if (masking_rate) cfg.detector.masking_rate = *masking_rate;
    if (!attacks.empty()) {
      cfg.attack.kinds.clear();
      for (const auto& a : attacks) cfg.attack.kinds.push_back(sim::parse_attack_kind(a));
    }
    if (output_dir) cfg.output_dir = *output_dir;
    cfg.validate();
    return cfg;
  }
};

std::uint64_t pick_seed(const harness::ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed) {
  return seed ? *seed : cfg.seeds.front();
}

std::filesystem::path split_path(const std::string& dir, const char* split) {
  return std::filesystem::path(dir) / (std::string(split) + ".jsonl");
}

// The external process named by MDP_ORACLE_CMD when set, else the checkpoint.
oracle::OracleHandle open_oracle(const harness::ExperimentConfig& cfg, const std::string& checkpoint) {
  const oracle::wire::TokenCodec codec(cfg.task.layout.token_names());
  if (auto external = oracle::wire::oracle_from_environment(codec)) return external;
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required unless MDP_ORACLE_CMD is set");
  return std::make_shared<sim::SimulatorOracle>(sim::load_checkpoint(checkpoint).model);
}

void print_report_summary(const harness::MetricsReport& report) {
  std::printf("%-9s %-10s %5s %7s %7s %7s %7s %6s\n", "attack", "defense", "seeds", "CA", "ASR", "FRR", "FAR",
              "AUC");
  for (const auto& agg : report.aggregates()) {
    if (agg.seeds_ok == 0) {
      std::printf("%-9s %-10s %5s  all seeds failed\n", agg.attack.c_str(), agg.defense.c_str(), "0");
      continue;
    }
    const auto& m = agg.mean;
    std::printf("%-9s %-10s %5zu %7.2f %7.2f %7.2f %7.2f %6.3f\n", agg.attack.c_str(), agg.defense.c_str(),
                agg.seeds_ok, m.ca, m.asr, m.frr, m.far, m.auc);
  }
}

bool any_failed(const harness::MetricsReport& report) {
  for (const auto& row : report.rows) {
    if (!row.ok) return true;
  }
  return false;
}

int run_verify_theorem(const std::string& out_dir, std::size_t scenarios, std::uint64_t seed, double gamma) {
  const auto identity = theorem::verify_bound_identity();
  const bool identity_ok = identity.max_abs_error <= 1e-9;
  std::printf("%s bound identity: %zu scenarios, max |bound - brute| = %.3e (tolerance 1e-9)\n",
              identity_ok ? "PASS" : "FAIL", identity.scenarios, identity.max_abs_error);
  const auto corollary = theorem::verify_corollary(scenarios, seed);
  const bool corollary_ok = corollary.counterexamples == 0;
  std::printf("%s corollary: %zu scenarios, %zu grid points, %zu feasible kappa_plus found\n",
              corollary_ok ? "PASS" : "FAIL", corollary.scenarios, corollary.grid_points, corollary.counterexamples);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto path = std::filesystem::path(out_dir) / "theorem_identity.csv";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "scenario,n,kappa_plus,kappa_minus,p_star,gamma,bound,brute_sigma,abs_error,feasible\n";
    char line[256];
    for (std::size_t i = 0; i < identity.rows.size(); ++i) {
      theorem::Scenario s = identity.rows[i];
      s.gamma = gamma;
      const bool feasible = theorem::evasion_feasible(s).feasible;
      std::snprintf(line, sizeof line, "%zu,%d,%.2f,%.2f,%.2f,%.6f,%.12e,%.12e,%.3e,%d\n", i, s.n, s.kappa_plus,
                    s.kappa_minus, s.p_star, gamma, identity.bounds[i], identity.brute[i],
                    std::abs(identity.bounds[i] - identity.brute[i]), feasible ? 1 : 0);
      out << line;
    }
    std::printf("wrote %s\n", path.string().c_str());
  }
  return identity_ok && corollary_ok ? 0 : kExitGate;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masking-differential backdoor detection on a synthetic prompt-based classifier"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::string checkpoint;
  std::string out;

  auto* gen = app.add_subcommand("gen-data", "write the train/dev/test/attack splits for one seed");
  flags.attach(gen);
  gen->add_option("--seed", seed, "seed (default: first configured seed)");
  gen->add_option("-o,--out", out, "output directory")->required();

  std::string attack_name = "badnets";
  auto* attack = app.add_subcommand("attack", "pretrain a clean model and implant a backdoor");
  flags.attach(attack);
  attack->add_option("--seed", seed, "seed (default: first configured seed)");
  attack->add_option("--attack", attack_name, "badnets | addsent | ep | sos");
  attack->add_option("--data", data_dir, "directory written by gen-data")->required();
  attack->add_option("-o,--out", out, "checkpoint to write")->required();

  auto* tune = app.add_subcommand("tune", "prompt-tune a checkpoint on the few-shot split");
  flags.attach(tune);
  tune->add_option("--seed", seed, "seed (default: first configured seed)");
  tune->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  tune->add_option("--data", data_dir, "directory written by gen-data")->required();
  tune->add_option("-o,--out", out, "checkpoint to write")->required();

  auto* calibrate = app.add_subcommand("calibrate", "build anchors and the detection threshold");
  flags.attach(calibrate);
  calibrate->add_option("--seed", seed, "seed (default: first configured seed)");
  calibrate->add_option("--checkpoint", checkpoint, "model checkpoint (ignored when MDP_ORACLE_CMD is set)");
  calibrate->add_option("--data", data_dir, "directory written by gen-data")->required();
  calibrate->add_option("-o,--out", out, "calibration file to write")->required();

  std::string calibration_path;
  std::string input;
  auto* detect_cmd = app.add_subcommand("detect", "score samples and write a score dump");
  flags.attach(detect_cmd);
  detect_cmd->add_option("--checkpoint", checkpoint, "model checkpoint (ignored when MDP_ORACLE_CMD is set)");
  detect_cmd->add_option("--calibration", calibration_path, "file written by calibrate")->required();
  detect_cmd->add_option("--input", input, "samples, one JSON record per line")->required();
  detect_cmd->add_option("-o,--out", out, "score dump to write")->required();

  bool gate = false;
  auto* evaluate = app.add_subcommand("evaluate", "run the full multi-seed pipeline and write a report");
  flags.attach(evaluate);
  evaluate->add_option("-o,--out", out, "report directory (default: output_dir or current directory)");
  evaluate->add_flag("--gate", gate, "exit 4 when the acceptance floors are not met");

  std::string axis_name = "allowance";
  std::vector<double> axis_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "one pipeline per axis value on shared seeds");
  flags.attach(sweep_cmd);
  sweep_cmd->add_option("--axis", axis_name, "allowance | lmi_weight | shots | masking_rate");
  sweep_cmd->add_option("--values", axis_values, "axis values (default: the axis defaults)");
  sweep_cmd->add_option("-o,--out", out, "report directory (default: output_dir or current directory)");

  std::size_t scenarios = 10000;
  std::uint64_t theorem_seed = 1;
  double theorem_gamma = 0.1;
  auto* verify = app.add_subcommand("verify-theorem", "check the variation bound and its corollary numerically");
  verify->add_option("--scenarios", scenarios, "random corollary scenarios");
  verify->add_option("--seed", theorem_seed, "seed for the corollary scenarios");
  verify->add_option("--gamma", theorem_gamma, "threshold used for the feasible column of the CSV");
  verify->add_option("-o,--out", out, "directory for theorem_identity.csv");

  auto* serve = app.add_subcommand("serve-oracle", "answer oracle queries for a checkpoint on stdin/stdout");
  serve->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const auto cfg = flags.resolve();
      const auto data = harness::generate_data(cfg, pick_seed(cfg, seed));
      std::filesystem::create_directories(out);
      sim::save_dataset(split_path(out, "train"), data.train);
      sim::save_dataset(split_path(out, "dev"), data.dev);
      sim::save_dataset(split_path(out, "test"), data.test);
      sim::save_dataset(split_path(out, "attack"), data.attack);
      std::printf("train %zu  dev %zu  test %zu  attack %zu -> %s\n", data.train.size(), data.dev.size(),
                  data.test.size(), data.attack.size(), out.c_str());
      return 0;
    }
    if (*attack) {
      const auto cfg = flags.resolve();
      const std::uint64_t s = pick_seed(cfg, seed);
      const auto spec = harness::attack_spec(cfg, sim::parse_attack_kind(attack_name));
      const auto attack_split = sim::load_dataset(split_path(data_dir, "attack"));
      const auto test = sim::load_dataset(split_path(data_dir, "test"));
      const auto base = harness::pretrain(cfg, attack_split, s);
      auto model = harness::implant(cfg, base, attack_split, spec, s);
      const auto tests = harness::build_test_sets(cfg, test, spec, s);
      const auto m = sim::evaluate_attack(model, tests.clean, tests.poisoned, spec.target);
      sim::save_checkpoint(out, {std::move(model), cfg.task.layout, s, spec});
      std::printf("%s: CA %.2f%%  ASR %.2f%% -> %s\n", attack_name.c_str(), m.clean_accuracy,
                  m.attack_success_rate, out.c_str());
      return 0;
    }
    if (*tune) {
      const auto cfg = flags.resolve();
      auto ck = sim::load_checkpoint(checkpoint);
      const auto train = sim::load_dataset(split_path(data_dir, "train"));
      ck.model = harness::tune(cfg, std::move(ck.model), train, pick_seed(cfg, seed));
      sim::save_checkpoint(out, ck);
      std::printf("tuned on %zu samples (lmi_weight %.3g) -> %s\n", train.size(), cfg.lmi_weight, out.c_str());
      return 0;
    }
    if (*calibrate) {
      const auto cfg = flags.resolve();
      const auto oracle = open_oracle(cfg, checkpoint);
      const auto train = sim::load_dataset(split_path(data_dir, "train"));
      harness::CalibrationFile file;
      file.allowance = cfg.allowance;
      file.masking = harness::masking_config(cfg, pick_seed(cfg, seed));
      file.anchors = detect::build_anchors(*oracle, train);
      file.calibration = detect::calibrate(*oracle, file.anchors, train, file.masking, cfg.allowance);
      harness::save_calibration(out, file);
      std::printf("gamma %.6f from %zu anchors, %zu of %zu training scores above -> %s\n", file.calibration.gamma,
                  file.anchors.size(), file.calibration.flagged(), train.size(), out.c_str());
      return 0;
    }
    if (*detect_cmd) {
      const auto cfg = flags.resolve();
      const auto oracle = open_oracle(cfg, checkpoint);
      const auto file = harness::load_calibration(calibration_path);
      const auto samples = sim::load_dataset(input);
      const auto scores = detect::score_samples(*oracle, file.anchors, samples, file.masking);
      std::vector<detect::DumpRecord> records;
      std::size_t flagged = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        detect::DumpRecord r{scores[i], std::nullopt};
        r.score.verdict = detect::verdict_for(r.score.score, file.calibration.gamma);
        flagged += r.score.verdict == detect::Verdict::Poisoned;
        if (samples[i].is_poisoned) r.is_poisoned = true;
        records.push_back(std::move(r));
      }
      std::ofstream dump(out);
      if (!dump) throw IoError("cannot write '" + out + "'");
      detect::write_score_dump(dump, records);
      std::printf("%zu of %zu samples flagged poisoned (gamma %.6f) -> %s\n", flagged, samples.size(),
                  file.calibration.gamma, out.c_str());
      return 0;
    }
    if (*evaluate) {
      const auto cfg = flags.resolve();
      const auto report = harness::run_pipeline(cfg);
      const std::string dir = !out.empty() ? out : (cfg.output_dir.empty() ? "." : cfg.output_dir);
      harness::emit_report(report, dir);
      print_report_summary(report);
      std::printf("report written to %s\n", dir.c_str());
      if (gate) {
        const auto violations = harness::gate_violations(report);
        for (const auto& v : violations) std::printf("GATE %s\n", v.c_str());
        if (!violations.empty()) return kExitGate;
      }
      return any_failed(report) ? kExitStage : 0;
    }
    if (*sweep_cmd) {
      const auto cfg = flags.resolve();
      const auto axis = harness::parse_sweep_axis(axis_name);
      const auto points = harness::sweep(cfg, axis, axis_values);
      const std::string dir = !out.empty() ? out : (cfg.output_dir.empty() ? "." : cfg.output_dir);
      harness::emit_sweep(axis, points, dir);
      bool failed = false;
      for (const auto& p : points) {
        std::printf("== %s = %g\n", axis_name.c_str(), p.value);
        print_report_summary(p.report);
        failed = failed || any_failed(p.report);
      }
      std::printf("sweep written to %s\n", dir.c_str());
      return failed ? kExitStage : 0;
    }
    if (*verify) return run_verify_theorem(out, scenarios, theorem_seed, theorem_gamma);
    if (*serve) {
      const auto ck = sim::load_checkpoint(checkpoint);
      const oracle::wire::TokenCodec codec(ck.layout.token_names());
      const sim::SimulatorOracle oracle(ck.model);
      oracle::wire::serve_oracle(oracle, codec, std::cin, std::cout);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStage;
  }
  return 0;
}
