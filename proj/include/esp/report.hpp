#pragma once

// Curve tables and summaries over a set of archived runs.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esp/archive.hpp"
#include "esp/metrics.hpp"

namespace esp {

inline constexpr int kReportSchemaVersion = 1;

struct ReportOptions {
  double grid_step = 10.0;
  std::size_t regret_window = 100;
};

inline std::string curve_table_csv(const std::vector<CurveRow>& rows) {
  std::string out = "episodes,mean,std,n_runs\n";
  for (const auto& r : rows)
    out += format_double(r.episodes) + ',' + format_double(r.mean) + ',' + format_double(r.std) + ',' +
           std::to_string(r.n_runs) + '\n';
  return out;
}

/// Report files by name: per method a true-performance, a moving-average
/// regret and a cumulative-regret table, plus summary.json.
inline std::map<std::string, std::string> build_report(const std::vector<ArchivedRun>& runs,
                                                       const ReportOptions& opt = {}) {
  if (runs.empty()) throw ConfigError("no archives found");
  const DomainId domain = runs.front().result.domain;
  std::map<Method, std::vector<const ArchivedRun*>> by_method;
  for (const auto& r : runs) {
    if (r.result.domain != domain)
      throw ConfigError("archives mix domains (" + std::string(to_string(domain)) + " and " +
                        std::string(to_string(r.result.domain)) + ")");
    by_method[r.result.method].push_back(&r);
  }

  std::map<std::string, std::string> files;
  nlohmann::json summary;
  summary["schema_version"] = kReportSchemaVersion;
  summary["domain"] = to_string(domain);
  summary["regret_window"] = opt.regret_window;
  summary["methods"] = nlohmann::json::object();
  const std::pair<CurveKind, const char*> kinds[] = {{CurveKind::true_performance, "true_performance"},
                                                     {CurveKind::moving_average_regret, "regret_moving_average"},
                                                     {CurveKind::cumulative_regret, "regret_cumulative"}};
  for (const auto& [method, group] : by_method) {
    const std::string m(to_string(method));
    for (const auto& [kind, name] : kinds) {
      std::vector<Curve> curves;
      for (const auto* r : group) curves.push_back(run_curve(r->result, r->config.esp.domain, kind, opt.regret_window));
      files[m + "_" + name + ".csv"] = curve_table_csv(aggregate_curves(curves, opt.grid_step));
    }
    double sum = 0.0, ss = 0.0;
    nlohmann::json per_run = nlohmann::json::array();
    for (const auto* r : group) {
      const auto& res = r->result;
      sum += res.final_performance();
      per_run.push_back({{"seed", res.seed},
                         {"final_performance", res.final_performance()},
                         {"episodes_consumed", res.episodes_consumed()},
                         {"target_reached_at", res.target_reached_at ? nlohmann::json(*res.target_reached_at)
                                                                     : nlohmann::json(nullptr)}});
    }
    const double n = static_cast<double>(group.size());
    const double mean = sum / n;
    for (const auto* r : group) ss += (r->result.final_performance() - mean) * (r->result.final_performance() - mean);
    summary["methods"][m] = {{"runs", group.size()},
                             {"final_performance_mean", mean},
                             {"final_performance_std", group.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0},
                             {"per_run", per_run}};
  }
  files["summary.json"] = summary.dump(2) + "\n";
  return files;
}

inline std::vector<ArchivedRun> load_archives(const std::filesystem::path& dir) {
  std::vector<ArchivedRun> runs;
  for (const auto& p : find_archives(dir)) runs.push_back(load_archive(p));
  return runs;
}

inline void write_report(const std::filesystem::path& out_dir, const std::map<std::string, std::string>& files) {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, data] : files) write_file(out_dir / name, data);
}

}  // namespace esp
