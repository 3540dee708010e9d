// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mdp/errors.hpp"
#include "mdp/harness.hpp"
#include "mdp/numstats.hpp"
#include "mdp/sim/training.hpp"
#include "mdp/theoremlab.hpp"
#include "support.hpp"

using namespace mdp;
using harness::ExperimentConfig;
using harness::kMdpDefense;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

void theorem_identity() {
  const auto start = Clock::now();
  const auto r = theorem::verify_bound_identity();
  const double t = seconds_since(start);
  report(r.max_abs_error <= 1e-9 && t < 10.0, "theorem-identity",
         fmt("%zu scenarios, max |brute - bound| %.3g (<= 1e-9), %.2f s (< 10 s)", r.scenarios, r.max_abs_error, t));
}

void corollary() {
  const auto start = Clock::now();
  const auto r = theorem::verify_corollary(10000, 1);
  const double t = seconds_since(start);
  report(r.scenarios == 10000 && r.counterexamples == 0 && t < 60.0, "corollary-soundness",
         fmt("%zu scenarios, %zu grid points, %zu feasible k+ found (0 required), %.2f s (< 60 s)", r.scenarios,
             r.grid_points, r.counterexamples, t));
}

void statistics_oracles() {
  Rng rng(2024);
  std::size_t kendall_bad = 0, kendall_checked = 0;
  std::uniform_int_distribution<int> len(2, 50);
  std::uniform_int_distribution<int> level(0, 8);
  while (kendall_checked < 1000) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = level(rng);
    for (auto& v : y) v = level(rng);
    double tau = 0.0;
    try {
      tau = stats::kendall_tau(x, y);
    } catch (const UndefinedCorrelationError&) {
      continue;  // all-tied draw, no correlation to compare
    }
    kendall_bad += tau != testing::brute_kendall(x, y);
    ++kendall_checked;
  }
  std::size_t auc_bad = 0;
  std::uniform_int_distribution<int> auc_len(1, 60);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> c(static_cast<std::size_t>(auc_len(rng))), p(static_cast<std::size_t>(auc_len(rng)));
    for (auto& v : c) v = level(rng);
    for (auto& v : p) v = level(rng);
    auc_bad += stats::roc_auc(c, p) != testing::brute_auc(c, p);
  }
  std::size_t kl_negative = 0;
  std::uniform_int_distribution<int> dim(2, 8);
  for (int i = 0; i < 10000; ++i) {
    const auto n = static_cast<std::size_t>(dim(rng));
    kl_negative += stats::kl_divergence(testing::random_distribution(rng, n), testing::random_distribution(rng, n)) < 0.0;
  }
  report(kendall_bad == 0 && auc_bad == 0 && kl_negative == 0, "statistics-oracles",
         fmt("kendall mismatches %zu/1000, auc mismatches %zu/1000, negative kl %zu/10000", kendall_bad, auc_bad,
             kl_negative));
}

void gradients() {
  const sim::SyntheticTask task;
  const auto d = sim::generate_dataset(task, 2, 10, 31, 40);
  const auto spec = sim::default_attack(sim::AttackKind::AddSent, task.layout);
  std::vector<oracle::Sample> clean, poisoned;
  for (const auto& s : sim::poison(d.attack, spec, 3)) (s.is_poisoned ? poisoned : clean).push_back(s);
  clean.resize(4);
  poisoned.resize(4);
  const double lambda = 0.7;
  double worst_task = 0.0, worst_poison = 0.0, worst_lmi = 0.0;
  for (std::uint64_t point = 1; point <= 20; ++point) {
    const auto model = testing::small_model(point, 4, 2);
    worst_task = std::max(worst_task, testing::check_gradient(
                                          model,
                                          [&](const sim::ToyModel& m, sim::Parameters* g) {
                                            return sim::cross_entropy_loss(m, clean, g);
                                          },
                                          testing::touched_coordinates(model, clean))
                                          .relative_error);
    worst_poison = std::max(worst_poison, testing::check_gradient(
                                              model,
                                              [&](const sim::ToyModel& m, sim::Parameters* g) {
                                                return lambda * sim::cross_entropy_loss(m, poisoned, g, lambda);
                                              },
                                              testing::touched_coordinates(model, poisoned))
                                              .relative_error);
    const auto plan = sim::plan_masks(clean, 0.2, 3, point);
    worst_lmi = std::max(worst_lmi, testing::check_gradient(
                                        model,
                                        [&](const sim::ToyModel& m, sim::Parameters* g) {
                                          return sim::masking_invariance_loss(m, clean, plan, g);
                                        },
                                        testing::touched_coordinates(model, clean))
                                        .relative_error);
  }
  report(worst_task <= 1e-4 && worst_poison <= 1e-4 && worst_lmi <= 1e-4, "gradient-checks",
         fmt("worst relative error over 20 points: task %.2e, poison %.2e, masking-invariance %.2e (<= 1e-4)",
             worst_task, worst_poison, worst_lmi));
}

void viability(const harness::MetricsReport& r, double runtime) {
  bool ok = runtime < 300.0;
  std::string detail;
  for (const auto& agg : r.aggregates()) {
    if (agg.defense != kMdpDefense) continue;
    const bool pass = agg.seeds_ok == r.seeds.size() && agg.mean.ca >= 85.0 && agg.mean.asr >= 90.0;
    ok = ok && pass;
    detail += fmt("%s CA %.1f ASR %.1f%s; ", agg.attack.c_str(), agg.mean.ca, agg.mean.asr, pass ? "" : " (below)");
  }
  report(ok, "attack-viability", detail + fmt("floors CA >= 85, ASR >= 90; runtime %.1f s (< 300 s)", runtime));
}

void defense(const harness::MetricsReport& r) {
  bool ok = true;
  std::string detail;
  for (const auto& agg : r.aggregates()) {
    if (agg.defense != kMdpDefense) continue;
    const auto pv = r.find(agg.attack, baselines::to_string(baselines::BaselineKind::PredVar));
    const double pv_far = pv ? pv->mean.far : NAN;
    const bool pass = agg.mean.far <= 15.0 && agg.mean.auc >= 0.90 && pv && agg.mean.far < pv_far;
    ok = ok && pass;
    detail += fmt("%s FAR %.2f AUC %.3f PredVar FAR %.2f%s; ", agg.attack.c_str(), agg.mean.far, agg.mean.auc, pv_far,
                  pass ? "" : " (miss)");
  }
  report(ok, "defense-effectiveness", detail + "need FAR <= 15, AUC >= 0.90, FAR < PredVar FAR");
}

void calibration(const ExperimentConfig& cfg) {
  const std::vector<double> allowances = {0.005, 0.01, 0.03, 0.05};
  const auto points = harness::sweep(cfg, harness::SweepAxis::Allowance, allowances);
  bool ok = true;
  std::string detail;
  for (const auto& p : points) {
    detail += fmt("a=%.3f:", p.value);
    for (const auto& agg : p.report.aggregates()) {
      if (agg.defense != kMdpDefense) continue;
      const bool pass = agg.mean.frr <= 100.0 * p.value + 3.0;
      ok = ok && pass;
      detail += fmt(" %s %.2f%s", agg.attack.c_str(), agg.mean.frr, pass ? "" : "!");
    }
    detail += "; ";
  }
  report(ok, "calibration-generalization", detail + "test FRR <= allowance + 3pp");
}

std::map<std::pair<std::string, std::uint64_t>, double> mdp_far(const harness::MetricsReport& r) {
  std::map<std::pair<std::string, std::uint64_t>, double> out;
  for (const auto& row : r.rows) {
    if (row.defense == kMdpDefense && row.ok) out[{row.attack, row.seed}] = row.far;
  }
  return out;
}

void shots(const ExperimentConfig& base) {
  auto cfg = base;
  cfg.attack.kinds = {sim::AttackKind::BadNets, sim::AttackKind::SOS};
  const auto points = harness::sweep(cfg, harness::SweepAxis::Shots, {4, 64});
  const auto k4 = mdp_far(points[0].report);
  const auto k64 = mdp_far(points[1].report);
  bool ok = k4.size() == cfg.seeds.size() * 2 && k64.size() == k4.size();
  std::string detail;
  for (const auto& [key, far4] : k4) {
    const auto it = k64.find(key);
    const bool pass = it != k64.end() && it->second <= far4;
    ok = ok && pass;
    detail += fmt("%s/%llu %.2f->%.2f%s; ", key.first.c_str(), static_cast<unsigned long long>(key.second), far4,
                  it == k64.end() ? NAN : it->second, pass ? "" : "!");
  }
  report(ok, "shots-monotonicity", detail + "FAR(K=4) -> FAR(K=64), need non-increase per seed");
}

std::map<std::pair<std::string, std::uint64_t>, double> median_clean(const ExperimentConfig& cfg) {
  std::vector<harness::JobScores> jobs;
  (void)harness::run_pipeline(cfg, &jobs);
  std::map<std::pair<std::string, std::uint64_t>, double> out;
  for (const auto& j : jobs) {
    if (j.defense == kMdpDefense) out[{j.attack, j.seed}] = stats::median(j.clean_scores);
  }
  return out;
}

void lmi_effect(const ExperimentConfig& base) {
  auto with = base;
  with.lmi_weight = 1.0;
  auto without = base;
  without.lmi_weight = 0.0;
  const auto m1 = median_clean(with);
  const auto m0 = median_clean(without);
  bool ok = !m1.empty() && m1.size() == m0.size();
  std::size_t wins = 0;
  std::string detail;
  for (const auto& [key, v1] : m1) {
    const auto it = m0.find(key);
    const bool pass = it != m0.end() && v1 < it->second;
    ok = ok && pass;
    wins += pass;
    if (!pass) {
      detail += fmt("%s/%llu w0 %.4f w1 %.4f; ", key.first.c_str(), static_cast<unsigned long long>(key.second),
                    it == m0.end() ? NAN : it->second, v1);
    }
  }
  report(ok, "lmi-effect",
         fmt("median clean score lower at weight 1 than weight 0 in %zu/%zu seed-attack pairs; ", wins, m1.size()) +
             detail);
}

void determinism(const ExperimentConfig& cfg, const harness::MetricsReport& first) {
  const auto second = harness::run_pipeline(cfg);
  const bool csv = harness::format_report(first, harness::ReportFormat::Csv) ==
                   harness::format_report(second, harness::ReportFormat::Csv);
  const bool json = harness::format_report(first, harness::ReportFormat::Json) ==
                    harness::format_report(second, harness::ReportFormat::Json);
  report(csv && json, "determinism", fmt("CSV %s, JSON %s across two full runs", csv ? "identical" : "differs",
                                         json ? "identical" : "differs"));
}

}  // namespace

int main() {
  theorem_identity();
  corollary();
  statistics_oracles();
  gradients();

  const ExperimentConfig cfg;  // defaults: 5 seeds, all four attacks, K = 16, 5% allowance
  const auto start = Clock::now();
  const auto main_run = harness::run_pipeline(cfg);
  const double runtime = seconds_since(start);
  viability(main_run, runtime);
  defense(main_run);
  calibration(cfg);
  shots(cfg);
  lmi_effect(cfg);
  determinism(cfg, main_run);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
