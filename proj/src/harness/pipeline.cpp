#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "mdp/errors.hpp"
#include "mdp/harness.hpp"
#include "mdp/parallel.hpp"

namespace mdp::harness {

namespace {

struct SeedContext {
  sim::DatasetSplits data;
  sim::ToyModel base;
};

struct Job {
  std::size_t seed_index = 0;
  sim::AttackKind attack = sim::AttackKind::BadNets;
};

struct JobResult {
  std::vector<MetricsRow> rows;
  std::vector<JobScores> scores;
};

std::vector<std::string> defense_names(const ExperimentConfig& cfg) {
  std::vector<std::string> names{std::string(kMdpDefense)};
  for (auto k : cfg.baselines.kinds) names.push_back(baselines::to_string(k));
  return names;
}

SeedContext prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedContext ctx;
  ctx.data = generate_data(cfg, seed);
  ctx.base = pretrain(cfg, ctx.data.attack, seed);
  return ctx;
}

sim::TrainOptions attack_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  sim::TrainOptions opt;
  opt.epochs = cfg.attack.epochs;
  opt.learning_rate = cfg.attack.learning_rate;
  opt.batch_size = cfg.attack.batch_size;
  opt.seed = seed;
  return opt;
}

void write_dump(const std::filesystem::path& path, std::span<const double> clean, std::span<const double> poisoned,
                std::span<const oracle::Sample> clean_samples, std::span<const oracle::Sample> poisoned_samples,
                double gamma, const std::vector<detect::SensitivityScore>* mdp_clean,
                const std::vector<detect::SensitivityScore>* mdp_poisoned) {
  std::vector<detect::DumpRecord> records;
  records.reserve(clean.size() + poisoned.size());
  auto add = [&](std::span<const double> scores, std::span<const oracle::Sample> samples,
                 const std::vector<detect::SensitivityScore>* full, bool is_poisoned) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      detect::DumpRecord r;
      if (full) {
        r.score = (*full)[i];
      } else {
        r.score.sample_id = samples[i].id;
        r.score.score = scores[i];
      }
      r.score.verdict = detect::verdict_for(scores[i], gamma);
      r.is_poisoned = is_poisoned;
      records.push_back(std::move(r));
    }
  };
  add(clean, clean_samples, mdp_clean, false);
  add(poisoned, poisoned_samples, mdp_poisoned, true);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write score dump '" + path.string() + "'");
  detect::write_score_dump(out, records);
}

std::vector<double> raw(const std::vector<detect::SensitivityScore>& scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(s.score);
  return out;
}

JobResult run_job(const ExperimentConfig& cfg, const SeedContext& ctx, std::uint64_t seed, sim::AttackKind kind) {
  const auto spec = attack_spec(cfg, kind);
  auto model = implant(cfg, ctx.base, ctx.data.attack, spec, seed);
  const TestSets tests = build_test_sets(cfg, ctx.data.test, spec, seed);
  const auto& test_clean = tests.clean;
  const auto& test_poisoned = tests.poisoned;

  // CA and ASR describe the attack as delivered, before the defender tunes.
  JobScores base_job;
  base_job.attack = sim::to_string(kind);
  base_job.seed = seed;
  base_job.attack_metrics = sim::evaluate_attack(model, test_clean, test_poisoned, spec.target);

  model = tune(cfg, std::move(model), ctx.data.train, seed);

  JobResult result;
  const sim::SimulatorOracle oracle(std::move(model));
  const auto anchors = detect::build_anchors(oracle, ctx.data.train);
  const auto mc = masking_config(cfg, seed);

  std::filesystem::path dump_dir;
  if (!cfg.output_dir.empty()) {
    dump_dir = std::filesystem::path(cfg.output_dir) / "dumps";
    std::filesystem::create_directories(dump_dir);
  }
  auto dump_path = [&](const std::string& defense) {
    return dump_dir / (base_job.attack + "_" + defense + "_seed" + std::to_string(seed) + ".jsonl");
  };

  {
    JobScores job = base_job;
    job.defense = std::string(kMdpDefense);
    job.train_scores = raw(detect::score_samples(oracle, anchors, ctx.data.train, mc));
    const auto clean_scores = detect::score_samples(oracle, anchors, test_clean, mc);
    const auto poisoned_scores = detect::score_samples(oracle, anchors, test_poisoned, mc);
    job.clean_scores = raw(clean_scores);
    job.poisoned_scores = raw(poisoned_scores);
    result.rows.push_back(metrics_from_scores(job, cfg.allowance));
    if (!dump_dir.empty()) {
      write_dump(dump_path(job.defense), job.clean_scores, job.poisoned_scores, test_clean, test_poisoned,
                 result.rows.back().gamma, &clean_scores, &poisoned_scores);
    }
    result.scores.push_back(std::move(job));
  }

  const baselines::TfIdfTable tfidf(ctx.data.train);
  const baselines::UnigramModel unigram(ctx.data.train, cfg.task.layout.size(), cfg.baselines.smoothing);
  const baselines::BaselineContext bctx{&oracle, &tfidf, &unigram};
  for (auto kind_b : cfg.baselines.kinds) {
    baselines::BaselineConfig bc;
    bc.kind = kind_b;
    bc.trials = cfg.baselines.trials;
    bc.masking_rate = cfg.detector.masking_rate;
    bc.replacement_rate = cfg.baselines.replacement_rate;
    bc.copies = cfg.baselines.copies;
    bc.smoothing = cfg.baselines.smoothing;
    bc.seed = seed;
    JobScores job = base_job;
    job.defense = baselines::to_string(kind_b);
    job.train_scores = baselines::score_all(bctx, ctx.data.train, bc);
    job.clean_scores = baselines::score_all(bctx, test_clean, bc);
    job.poisoned_scores = baselines::score_all(bctx, test_poisoned, bc);
    result.rows.push_back(metrics_from_scores(job, cfg.allowance));
    if (!dump_dir.empty()) {
      write_dump(dump_path(job.defense), job.clean_scores, job.poisoned_scores, test_clean, test_poisoned,
                 result.rows.back().gamma, nullptr, nullptr);
    }
    result.scores.push_back(std::move(job));
  }
  return result;
}

std::vector<MetricsRow> failure_rows(const ExperimentConfig& cfg, std::uint64_t seed, sim::AttackKind kind,
                                     const std::string& error) {
  std::vector<MetricsRow> rows;
  for (const auto& defense : defense_names(cfg)) {
    MetricsRow row;
    row.attack = sim::to_string(kind);
    row.defense = defense;
    row.seed = seed;
    row.ok = false;
    row.error = error;
    rows.push_back(std::move(row));
  }
  return rows;
}

double percent(std::size_t count, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

sim::DatasetSplits generate_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::size_t n_test = cfg.test_clean + 2 * cfg.test_poisoned;
  return sim::generate_dataset(cfg.task, cfg.K, n_test, seed, cfg.attack.attack_pool);
}

sim::AttackSpec attack_spec(const ExperimentConfig& cfg, sim::AttackKind kind) {
  auto spec = sim::default_attack(kind, cfg.task.layout);
  spec.target = cfg.attack.target;
  spec.poisoning_rate = cfg.attack.poisoning_rate;
  spec.poison_weight = cfg.attack.lambda;
  spec.validate(cfg.task.layout);
  return spec;
}

sim::ToyModel pretrain(const ExperimentConfig& cfg, std::span<const oracle::Sample> attack_split,
                       std::uint64_t seed) {
  auto labels =
      oracle::VocabularyDescriptor::contiguous(cfg.task.layout.num_classes, cfg.model.label_tokens_per_class);
  auto model = sim::ToyModel::random(cfg.task.layout.size(), cfg.model.dim, std::move(labels), seed,
                                     cfg.model.init_scale);
  return sim::train_clean(std::move(model), attack_split, attack_options(cfg, seed)).model;
}

sim::ToyModel implant(const ExperimentConfig& cfg, const sim::ToyModel& base,
                      std::span<const oracle::Sample> attack_split, const sim::AttackSpec& spec,
                      std::uint64_t seed) {
  const auto mixed = sim::poison(attack_split, spec, seed);
  std::vector<oracle::Sample> clean_part;
  std::vector<oracle::Sample> poisoned_part;
  for (const auto& s : mixed) (s.is_poisoned ? poisoned_part : clean_part).push_back(s);
  return sim::train_backdoored(base, clean_part, poisoned_part, spec, attack_options(cfg, seed)).model;
}

sim::ToyModel tune(const ExperimentConfig& cfg, sim::ToyModel model, std::span<const oracle::Sample> fewshot,
                   std::uint64_t seed) {
  sim::PromptTuneOptions opt;
  opt.epochs = cfg.prompt.epochs;
  opt.learning_rate = cfg.prompt.learning_rate;
  opt.batch_size = cfg.prompt.batch_size;
  opt.masking_rate = cfg.detector.masking_rate;
  opt.mask_trials = cfg.prompt.mask_trials;
  opt.prompt_trainable = cfg.prompt.prompt_trainable;
  opt.seed = seed;
  return sim::prompt_tune(std::move(model), fewshot, cfg.lmi_weight, opt);
}

TestSets build_test_sets(const ExperimentConfig& cfg, std::span<const oracle::Sample> test,
                         const sim::AttackSpec& spec, std::uint64_t seed) {
  TestSets sets;
  const std::size_t n_clean = std::min(cfg.test_clean, test.size());
  sets.clean.assign(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(n_clean));
  sets.poisoned = sim::make_poisoned_test(test.subspan(n_clean), spec, seed);
  if (sets.poisoned.size() > cfg.test_poisoned) sets.poisoned.resize(cfg.test_poisoned);
  if (sets.clean.empty() || sets.poisoned.empty()) throw InsufficientDataError("test split too small");
  return sets;
}

detect::MaskingConfig masking_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  detect::MaskingConfig mc;
  mc.rate = cfg.detector.masking_rate;
  mc.trials = cfg.detector.trials;
  mc.seed = seed;
  return mc;
}

MetricsRow metrics_from_scores(const JobScores& job, double allowance) {
  MetricsRow row;
  row.attack = job.attack;
  row.defense = job.defense;
  row.seed = job.seed;
  row.ca = job.attack_metrics.clean_accuracy;
  row.asr = job.attack_metrics.attack_success_rate;
  row.gamma = stats::upper_quantile(job.train_scores, allowance);
  const auto above = [&](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double s) { return s > row.gamma; }));
  };
  row.train_frr = percent(above(job.train_scores), job.train_scores.size());
  row.frr = percent(above(job.clean_scores), job.clean_scores.size());
  row.far = percent(job.poisoned_scores.size() - above(job.poisoned_scores), job.poisoned_scores.size());
  row.auc = stats::roc_auc(job.clean_scores, job.poisoned_scores);
  row.median_clean = stats::median(job.clean_scores);
  row.median_poisoned = stats::median(job.poisoned_scores);
  return row;
}

MetricsReport run_pipeline(const ExperimentConfig& cfg) { return run_pipeline(cfg, nullptr); }

MetricsReport run_pipeline(const ExperimentConfig& cfg, std::vector<JobScores>* scores) {
  cfg.validate();
  const std::size_t n_seeds = cfg.seeds.size();

  // Data and the clean model are shared by every attack of a seed.
  std::vector<std::optional<SeedContext>> contexts(n_seeds);
  std::vector<std::string> seed_errors(n_seeds);
  parallel_for(n_seeds, [&](std::size_t i) {
    try {
      contexts[i] = prepare_seed(cfg, cfg.seeds[i]);
    } catch (const std::exception& e) {
      seed_errors[i] = e.what();
    }
  });

  std::vector<Job> jobs;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    for (auto kind : cfg.attack.kinds) jobs.push_back({s, kind});
  }
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::uint64_t seed = cfg.seeds[job.seed_index];
    if (!contexts[job.seed_index]) {
      results[j].rows = failure_rows(cfg, seed, job.attack, seed_errors[job.seed_index]);
      return;
    }
    try {
      results[j] = run_job(cfg, *contexts[job.seed_index], seed, job.attack);
    } catch (const std::exception& e) {
      results[j] = JobResult{failure_rows(cfg, seed, job.attack, e.what()), {}};
    }
  });

  MetricsReport report;
  report.seeds = cfg.seeds;
  for (auto& r : results) {
    for (auto& row : r.rows) report.rows.push_back(std::move(row));
    if (scores) {
      for (auto& s : r.scores) scores->push_back(std::move(s));
    }
  }
  return report;
}

std::vector<AggregateRow> MetricsReport::aggregates() const {
  std::vector<AggregateRow> out;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsRow*>> groups;
  for (const auto& row : rows) {
    auto& members = groups[{row.attack, row.defense}];
    if (members.empty()) {
      AggregateRow agg;
      agg.attack = row.attack;
      agg.defense = row.defense;
      out.push_back(std::move(agg));
    }
    if (row.ok) members.push_back(&row);
  }
  // Member lists are keyed by name; the output keeps first-appearance order.
  for (auto& agg : out) {
    const auto& members = groups[{agg.attack, agg.defense}];
    agg.seeds_ok = members.size();
    agg.mean.attack = agg.std.attack = agg.attack;
    agg.mean.defense = agg.std.defense = agg.defense;
    agg.mean.ok = agg.std.ok = !members.empty();
    if (members.empty()) continue;
    const auto reduce = [&](double MetricsRow::*field) {
      std::vector<double> values;
      for (const auto* m : members) values.push_back(m->*field);
      agg.mean.*field = stats::mean(values);
      agg.std.*field = stats::std_dev(values);
    };
    for (auto field : {&MetricsRow::ca, &MetricsRow::asr, &MetricsRow::frr, &MetricsRow::far, &MetricsRow::auc,
                       &MetricsRow::train_frr, &MetricsRow::gamma, &MetricsRow::median_clean,
                       &MetricsRow::median_poisoned}) {
      reduce(field);
    }
  }
  return out;
}

std::optional<AggregateRow> MetricsReport::find(std::string_view attack, std::string_view defense) const {
  for (auto& agg : aggregates()) {
    if (agg.attack == attack && agg.defense == defense) return agg;
  }
  return std::nullopt;
}

// ---- sweeps ---------------------------------------------------------------

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Allowance: return "allowance";
    case SweepAxis::LmiWeight: return "lmi_weight";
    case SweepAxis::Shots: return "shots";
    case SweepAxis::MaskingRate: return "masking_rate";
  }
  throw ParameterError("unknown sweep axis");
}

SweepAxis parse_sweep_axis(const std::string& name) {
  for (auto axis : {SweepAxis::Allowance, SweepAxis::LmiWeight, SweepAxis::Shots, SweepAxis::MaskingRate}) {
    if (to_string(axis) == name) return axis;
  }
  throw ConfigError("unknown sweep axis '" + name + "'");
}

std::vector<double> default_axis_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Allowance: return {0.005, 0.01, 0.03, 0.05};
    case SweepAxis::LmiWeight: return {0.25, 0.5, 1.0, 2.0, 4.0};
    case SweepAxis::Shots: return {4, 8, 16, 32, 64};
    case SweepAxis::MaskingRate: return {0.1, 0.2, 0.4};
  }
  throw ParameterError("unknown sweep axis");
}

std::vector<SweepPoint> sweep(const ExperimentConfig& cfg, SweepAxis axis, std::vector<double> values) {
  if (values.empty()) values = default_axis_values(axis);
  std::vector<ExperimentConfig> configs;
  for (double v : values) {
    ExperimentConfig c = cfg;
    switch (axis) {
      case SweepAxis::Allowance: c.allowance = v; break;
      case SweepAxis::LmiWeight: c.lmi_weight = v; break;
      case SweepAxis::MaskingRate: c.detector.masking_rate = v; break;
      case SweepAxis::Shots:
        if (v != std::floor(v)) throw ConfigError("shots must be whole numbers");
        c.K = static_cast<int>(v);
        break;
    }
    if (!c.output_dir.empty()) {
      c.output_dir = (std::filesystem::path(c.output_dir) / (to_string(axis) + "_" + std::to_string(v))).string();
    }
    c.validate();
    configs.push_back(std::move(c));
  }

  std::vector<SweepPoint> points(values.size());
  if (axis == SweepAxis::Allowance) {
    // The threshold is the only thing the allowance touches, so one pipeline
    // run serves every value.
    std::vector<JobScores> scores;
    const MetricsReport base = run_pipeline(configs.front(), &scores);
    for (std::size_t i = 0; i < values.size(); ++i) {
      points[i].value = values[i];
      points[i].report.seeds = base.seeds;
      std::size_t next = 0;
      for (const auto& row : base.rows) {
        if (!row.ok) {
          points[i].report.rows.push_back(row);
          continue;
        }
        points[i].report.rows.push_back(metrics_from_scores(scores[next++], values[i]));
      }
    }
    return points;
  }
  parallel_for(values.size(), [&](std::size_t i) {
    points[i].value = values[i];
    points[i].report = run_pipeline(configs[i]);
  });
  return points;
}

}  // namespace mdp::harness
