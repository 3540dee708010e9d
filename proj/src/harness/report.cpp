#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "mdp/errors.hpp"
#include "mdp/harness.hpp"

namespace mdp::harness {

using nlohmann::ordered_json;

namespace {

constexpr const char* kMetricColumns[] = {"ca",         "asr",   "frr",          "far",
                                          "auc",        "train_frr", "gamma", "median_clean",
                                          "median_poisoned"};

std::vector<double> metric_values(const MetricsRow& row) {
  return {row.ca,        row.asr,   row.frr,          row.far,           row.auc,
          row.train_frr, row.gamma, row.median_clean, row.median_poisoned};
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Quotes a CSV field when it holds a separator, quote or newline.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string csv_header(const std::string& prefix) {
  std::string h = prefix + "kind,attack,defense,seed,ok,seeds_ok";
  for (const char* c : kMetricColumns) h += std::string(",") + c;
  for (const char* c : kMetricColumns) h += std::string(",") + c + "_std";
  return h + ",error\n";
}

void csv_rows(std::string& out, const MetricsReport& report, const std::string& prefix) {
  for (const auto& row : report.rows) {
    out += prefix + "detail," + csv_field(row.attack) + "," + csv_field(row.defense) + "," +
           std::to_string(row.seed) + "," + (row.ok ? "1" : "0") + ",";
    for (double v : metric_values(row)) out += "," + (row.ok ? fixed(v) : "");
    for (std::size_t i = 0; i < std::size(kMetricColumns); ++i) out += ",";
    out += "," + csv_field(row.error) + "\n";
  }
  for (const auto& agg : report.aggregates()) {
    out += prefix + "aggregate," + csv_field(agg.attack) + "," + csv_field(agg.defense) + ",," +
           (agg.seeds_ok > 0 ? "1" : "0") + "," + std::to_string(agg.seeds_ok);
    for (double v : metric_values(agg.mean)) out += "," + (agg.seeds_ok ? fixed(v) : "");
    for (double v : metric_values(agg.std)) out += "," + (agg.seeds_ok ? fixed(v) : "");
    out += ",\n";
  }
}

ordered_json metrics_json(const MetricsRow& row) {
  ordered_json j;
  const auto values = metric_values(row);
  for (std::size_t i = 0; i < values.size(); ++i) j[kMetricColumns[i]] = values[i];
  return j;
}

ordered_json report_json(const MetricsReport& report) {
  ordered_json j;
  j["seeds"] = report.seeds;
  j["rows"] = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json r;
    r["attack"] = row.attack;
    r["defense"] = row.defense;
    r["seed"] = row.seed;
    r["ok"] = row.ok;
    if (row.ok) {
      r["metrics"] = metrics_json(row);
    } else {
      r["error"] = row.error;
    }
    j["rows"].push_back(std::move(r));
  }
  j["aggregates"] = ordered_json::array();
  for (const auto& agg : report.aggregates()) {
    ordered_json a;
    a["attack"] = agg.attack;
    a["defense"] = agg.defense;
    a["seeds_ok"] = agg.seeds_ok;
    if (agg.seeds_ok > 0) {
      a["mean"] = metrics_json(agg.mean);
      a["std"] = metrics_json(agg.std);
    }
    j["aggregates"].push_back(std::move(a));
  }
  return j;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::string describe(const AggregateRow& agg, const char* what, double value, const char* bound) {
  return agg.attack + "/" + agg.defense + ": " + what + " " + fixed(value) + " violates " + bound;
}

}  // namespace

std::vector<std::string> gate_violations(const MetricsReport& report) {
  std::vector<std::string> out;
  for (const auto& row : report.rows) {
    if (!row.ok) out.push_back(row.attack + "/" + row.defense + " seed " + std::to_string(row.seed) + " failed: " + row.error);
  }
  const std::string predvar = baselines::to_string(baselines::BaselineKind::PredVar);
  for (const auto& agg : report.aggregates()) {
    if (agg.defense != kMdpDefense || agg.seeds_ok == 0) continue;
    const auto& m = agg.mean;
    if (m.ca < 85.0) out.push_back(describe(agg, "CA", m.ca, ">= 85"));
    if (m.asr < 90.0) out.push_back(describe(agg, "ASR", m.asr, ">= 90"));
    if (m.far > 15.0) out.push_back(describe(agg, "FAR", m.far, "<= 15"));
    if (m.auc < 0.90) out.push_back(describe(agg, "AUC", m.auc, ">= 0.90"));
    if (const auto pv = report.find(agg.attack, predvar); pv && pv->seeds_ok > 0 && !(m.far < pv->mean.far)) {
      out.push_back(describe(agg, "FAR", m.far, ("< " + predvar + " FAR " + fixed(pv->mean.far)).c_str()));
    }
  }
  return out;
}

std::string format_report(const MetricsReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) return report_json(report).dump(2) + "\n";
  std::string out = csv_header("");
  csv_rows(out, report, "");
  return out;
}

std::string format_sweep(SweepAxis axis, const std::vector<SweepPoint>& points, ReportFormat format) {
  if (format == ReportFormat::Json) {
    ordered_json j;
    j["axis"] = to_string(axis);
    j["points"] = ordered_json::array();
    for (const auto& p : points) {
      ordered_json pj;
      pj["value"] = p.value;
      pj["report"] = report_json(p.report);
      j["points"].push_back(std::move(pj));
    }
    return j.dump(2) + "\n";
  }
  std::string out = csv_header(to_string(axis) + ",");
  for (const auto& p : points) csv_rows(out, p.report, fixed(p.value) + ",");
  return out;
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_file(dir / "report.csv", format_report(report, ReportFormat::Csv));
  write_file(dir / "report.json", format_report(report, ReportFormat::Json));
}

void emit_sweep(SweepAxis axis, const std::vector<SweepPoint>& points, const std::filesystem::path& dir) {
  ensure_dir(dir);
  const std::string stem = "sweep_" + to_string(axis);
  write_file(dir / (stem + ".csv"), format_sweep(axis, points, ReportFormat::Csv));
  write_file(dir / (stem + ".json"), format_sweep(axis, points, ReportFormat::Json));
}

}  // namespace mdp::harness
