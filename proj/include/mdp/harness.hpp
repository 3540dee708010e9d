#pragma once

// Experiment orchestration: per-seed pipelines, sweeps and report files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdp/baselines.hpp"
#include "mdp/detector.hpp"
#include "mdp/sim/attacks.hpp"
#include "mdp/sim/synthetic_task.hpp"
#include "mdp/sim/toy_model.hpp"
#include "mdp/sim/training.hpp"

namespace mdp::harness {

struct ModelConfig {
  int dim = 16;
  int label_tokens_per_class = 1;
  double init_scale = 0.1;
};

struct AttackConfig {
  std::vector<sim::AttackKind> kinds = {sim::AttackKind::BadNets, sim::AttackKind::AddSent, sim::AttackKind::EP,
                                        sim::AttackKind::SOS};
  oracle::ClassId target = 0;
  double poisoning_rate = 0.10;
  double lambda = 1.0;
  int epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  std::size_t attack_pool = 2000;  // attacker's downstream training split
};

struct PromptConfig {
  int epochs = 20;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  int mask_trials = 8;
  bool prompt_trainable = true;
};

struct DetectorConfig {
  double masking_rate = 0.2;
  int trials = 50;
};

struct BaselinesConfig {
  std::vector<baselines::BaselineKind> kinds = {baselines::BaselineKind::PredVar, baselines::BaselineKind::StripLite,
                                                baselines::BaselineKind::OnionLite};
  int trials = 50;
  double replacement_rate = 0.25;
  int copies = 5;
  double smoothing = 1.0;
};

struct ExperimentConfig {
  sim::SyntheticTask task;
  ModelConfig model;
  AttackConfig attack;
  PromptConfig prompt;
  DetectorConfig detector;
  BaselinesConfig baselines;
  int K = 16;
  double allowance = 0.05;
  double lmi_weight = 1.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t test_clean = 500;
  std::size_t test_poisoned = 500;
  std::string output_dir;  // empty: no score dumps

  void validate() const;  // ConfigError
};

// JSON text whose keys mirror the field names above. Missing keys keep their
// defaults; unknown keys are a ConfigError.
[[nodiscard]] ExperimentConfig parse_config(std::string_view text);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);
[[nodiscard]] std::string dump_config(const ExperimentConfig& cfg);

inline constexpr std::string_view kMdpDefense = "MDP";

// ---- pipeline stages ------------------------------------------------------
// run_pipeline chains these; the CLI exposes them one at a time.

[[nodiscard]] sim::DatasetSplits generate_data(const ExperimentConfig& cfg, std::uint64_t seed);

// The attack kind's default triggers with the configured target, rate and lambda.
[[nodiscard]] sim::AttackSpec attack_spec(const ExperimentConfig& cfg, sim::AttackKind kind);

// Random init followed by clean training on the attacker's split.
[[nodiscard]] sim::ToyModel pretrain(const ExperimentConfig& cfg, std::span<const oracle::Sample> attack_split,
                                     std::uint64_t seed);

// Poisons the attacker's split and fine-tunes base on it.
[[nodiscard]] sim::ToyModel implant(const ExperimentConfig& cfg, const sim::ToyModel& base,
                                    std::span<const oracle::Sample> attack_split, const sim::AttackSpec& spec,
                                    std::uint64_t seed);

// Prompt-only tuning on the few-shot split with the masking-invariance term.
[[nodiscard]] sim::ToyModel tune(const ExperimentConfig& cfg, sim::ToyModel model,
                                 std::span<const oracle::Sample> fewshot, std::uint64_t seed);

struct TestSets {
  std::vector<oracle::Sample> clean;
  std::vector<oracle::Sample> poisoned;
};

// The first test_clean samples stay clean; the poisoned set is built from the
// remainder and capped at test_poisoned.
[[nodiscard]] TestSets build_test_sets(const ExperimentConfig& cfg, std::span<const oracle::Sample> test,
                                       const sim::AttackSpec& spec, std::uint64_t seed);

[[nodiscard]] detect::MaskingConfig masking_config(const ExperimentConfig& cfg, std::uint64_t seed);

// What `calibrate` hands to `detect`: anchors, masking settings and threshold.
struct CalibrationFile {
  double allowance = 0.05;
  detect::MaskingConfig masking;
  detect::AnchorSet anchors;
  detect::Calibration calibration;
};

void save_calibration(const std::string& path, const CalibrationFile& file);
[[nodiscard]] CalibrationFile load_calibration(const std::string& path);  // IoError

struct MetricsRow {
  std::string attack;
  std::string defense;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double ca = 0.0;   // percent
  double asr = 0.0;  // percent
  double frr = 0.0;  // percent, held-out clean test
  double far = 0.0;  // percent, poisoned test
  double auc = 0.0;
  double train_frr = 0.0;  // percent, in-sample on the calibration set
  double gamma = 0.0;
  double median_clean = 0.0;
  double median_poisoned = 0.0;
};

struct AggregateRow {
  std::string attack;
  std::string defense;
  std::size_t seeds_ok = 0;
  MetricsRow mean;  // numeric fields hold seed means
  MetricsRow std;   // numeric fields hold population std across seeds
};

struct MetricsReport {
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsRow> rows;

  [[nodiscard]] std::vector<AggregateRow> aggregates() const;
  // Aggregate for (attack, defense), empty when absent.
  [[nodiscard]] std::optional<AggregateRow> find(std::string_view attack, std::string_view defense) const;
};

// Everything one (seed, attack) job produced, before metrics are reduced.
struct JobScores {
  std::string attack;
  std::uint64_t seed = 0;
  sim::AttackMetrics attack_metrics;
  std::string defense;
  std::vector<double> train_scores;
  std::vector<double> clean_scores;
  std::vector<double> poisoned_scores;
};

// Per seed: generate data, pretrain, poison, attack-train, prompt-tune, build
// anchors, calibrate on clean training samples and score the test sets. A
// failing (seed, attack) job yields rows marked failed instead of throwing.
[[nodiscard]] MetricsReport run_pipeline(const ExperimentConfig& cfg);

// As run_pipeline but also returns the raw scores behind every row.
[[nodiscard]] MetricsReport run_pipeline(const ExperimentConfig& cfg, std::vector<JobScores>* scores);

// Reduces raw scores to a metrics row at the given allowance.
[[nodiscard]] MetricsRow metrics_from_scores(const JobScores& job, double allowance);

// Seed-averaged floors a healthy run must clear, per attack: CA >= 85,
// ASR >= 90, MDP FAR <= 15, MDP AUC >= 0.90 and MDP FAR strictly below the
// prediction-variance baseline when that baseline ran. Returns one message per
// violation; failed jobs count as violations.
[[nodiscard]] std::vector<std::string> gate_violations(const MetricsReport& report);

enum class SweepAxis { Allowance, LmiWeight, Shots, MaskingRate };

[[nodiscard]] std::string to_string(SweepAxis axis);
[[nodiscard]] SweepAxis parse_sweep_axis(const std::string& name);  // ConfigError
[[nodiscard]] std::vector<double> default_axis_values(SweepAxis axis);

struct SweepPoint {
  double value = 0.0;
  MetricsReport report;
};

// One full pipeline per value, all sharing cfg.seeds. Empty values means the
// axis defaults.
[[nodiscard]] std::vector<SweepPoint> sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                            std::vector<double> values = {});

enum class ReportFormat { Csv, Json };

// Stable column order; one aggregate row per (attack, defense) after the
// detail rows. Byte-identical for identical reports.
[[nodiscard]] std::string format_report(const MetricsReport& report, ReportFormat format);
[[nodiscard]] std::string format_sweep(SweepAxis axis, const std::vector<SweepPoint>& points, ReportFormat format);

// Writes report.csv and report.json under dir (created if needed). IoError
// when the directory cannot be written.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir);
void emit_sweep(SweepAxis axis, const std::vector<SweepPoint>& points, const std::filesystem::path& dir);

}  // namespace mdp::harness
