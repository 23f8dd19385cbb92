// esp: run, report, evaluate and replay surrogate-assisted evolution
// experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include "CLI11.hpp"
#endif
#include <nlohmann/json.hpp>

#include "esp/archive.hpp"
#include "esp/config.hpp"
#include "esp/engine.hpp"
#include "esp/report.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct RunArgs {
  std::string config;
  std::optional<std::string> method;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t parallel = 1;
  std::vector<std::string> overrides;
  bool progress = false;
};

std::size_t worker_cap(std::size_t requested) {
  if (requested == 0) requested = 1;
  if (std::getenv("ESP_THREADS")) requested = std::min(requested, esp::default_thread_count());
  return requested;
}

int cmd_run(const RunArgs& a) {
  esp::ExperimentConfig x = esp::load_config(a.config, a.overrides);
  if (a.method) x.esp.method = esp::method_from_string(*a.method);
  if (a.runs) {
    if (*a.runs == 0) throw esp::ConfigError("--runs must be at least 1");
    x.run_count = *a.runs;
  }
  if (a.seed) x.esp.seed = *a.seed;
  if (a.out) x.output_dir = *a.out;

  const std::size_t workers = worker_cap(a.parallel);
  const std::size_t outer = std::min(workers, x.run_count);
  const std::size_t inner = outer > 1 ? 1 : workers;
  std::vector<esp::RunResult> results(x.run_count);
  std::mutex io;
  esp::parallel_for(x.run_count, outer, [&](std::size_t i) {
    esp::EspConfig cfg = x.esp;
    cfg.seed = x.esp.seed + i;
    esp::RunOptions opts;
    opts.threads = inner;
    if (a.progress) {
      opts.progress = [&, i, seed = cfg.seed](const esp::ProgressEvent& e) {
        nlohmann::json line = {{"run", i},
                               {"seed", seed},
                               {"event", e.kind},
                               {"generation", e.generation},
                               {"episodes", e.episodes_consumed},
                               {"best_fitness", e.best_fitness},
                               {"returned_performance", e.returned_performance},
                               {"pool_size", e.pool_size}};
        std::lock_guard lock(io);
        std::cerr << line.dump() << '\n';
      };
    }
    results[i] = esp::run(cfg, opts);
    const auto path = esp::write_archive(x.output_dir, x, results[i]);
    std::lock_guard lock(io);
    std::cout << path.string() << '\n';
  });

  std::vector<esp::ArchivedRun> archived;
  for (auto& r : results) archived.push_back({x, std::move(r), {}});
  for (auto& r : archived) r.config.esp.seed = r.result.seed;
  esp::write_report(x.output_dir, esp::build_report(archived));
  return kExitOk;
}

int cmd_report(const std::string& dir, const std::optional<std::string>& out) {
  if (!fs::is_directory(dir)) throw esp::ConfigError(dir + ": not a directory");
  const auto runs = esp::load_archives(dir);
  if (runs.empty()) throw esp::ConfigError("no archives found in " + dir);
  const auto files = esp::build_report(runs);
  const fs::path target = out ? fs::path(*out) : fs::path(dir);
  esp::write_report(target, files);
  for (const auto& [name, data] : files) std::cout << (target / name).string() << '\n';
  return kExitOk;
}

esp::ArchivedRun load_for_use(const std::string& archive, const std::vector<std::string>& overrides) {
  if (!esp::is_archive(archive)) throw esp::ConfigError(archive + ": not a run archive");
  esp::ArchivedRun run = esp::load_archive(archive);
  if (!overrides.empty()) {
    const auto text = esp::read_file(fs::path(archive) / "config.json");
    run.config = esp::resolve_config(text, (fs::path(archive) / "config.json").string(), overrides);
  }
  return run;
}

int cmd_eval(const std::string& archive, std::optional<std::size_t> episodes, std::optional<std::uint64_t> seed,
             const std::vector<std::string>& overrides) {
  const auto run = load_for_use(archive, overrides);
  const std::size_t n = episodes.value_or(run.config.esp.schedule.eval_episodes);
  if (n == 0) throw esp::ConfigError("--episodes must be at least 1");
  const std::uint64_t s = seed.value_or(run.result.seed);
  const double mean = esp::true_performance(run.result.best_policy, run.config.esp.domain, n, s);
  nlohmann::json j = {{"archive", archive},
                      {"domain", esp::to_string(run.result.domain)},
                      {"method", esp::to_string(run.result.method)},
                      {"episodes", n},
                      {"seed", s},
                      {"mean_reward", mean}};
  std::cout << j.dump() << '\n';
  return kExitOk;
}

std::string trace_csv(const esp::EpisodeTrace& t) {
  std::string out = "step";
  const std::size_t obs = t.steps.front().observation.size();
  const std::size_t act = t.steps.front().action.size();
  for (std::size_t i = 0; i < obs; ++i) out += ",obs_" + std::to_string(i);
  for (std::size_t i = 0; i < act; ++i) out += ",action_" + std::to_string(i);
  out += ",reward\n";
  for (std::size_t k = 0; k < t.steps.size(); ++k) {
    const auto& s = t.steps[k];
    out += std::to_string(k);
    for (double v : s.observation) out += ',' + esp::format_double(v);
    for (double v : s.action) out += ',' + esp::format_double(v);
    out += ',' + esp::format_double(s.reward) + '\n';
  }
  return out;
}

int cmd_replay(const std::string& archive, std::uint64_t episode_seed, const std::optional<std::string>& out,
               const std::vector<std::string>& overrides) {
  const auto run = load_for_use(archive, overrides);
  esp::Rng rng(episode_seed);
  const auto trace = esp::rollout(run.config.esp.domain, run.result.best_policy, rng);
  const std::string csv = trace_csv(trace);
  if (out)
    esp::write_file(*out, csv);
  else
    std::cout << csv;
  std::cerr << "terminal=" << esp::to_string(trace.terminal_kind) << " total_reward="
            << esp::format_double(trace.total_reward) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-assisted evolution of neural-network policies"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Execute seeded runs and archive them");
  run->add_option("--config", run_args.config, "Experiment config (JSON)")->required();
  run->add_option("--method", run_args.method, "esp or de")->check(CLI::IsMember({"esp", "de"}));
  run->add_option("--runs", run_args.runs, "Number of runs (seeds base, base+1, ...)");
  run->add_option("--seed", run_args.seed, "Base seed");
  run->add_option("--out", run_args.out, "Output directory");
  run->add_option("--parallel", run_args.parallel, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--domain-override", run_args.overrides, "key=value (physics key or dotted config path)");
  run->add_flag("--progress", run_args.progress, "Emit JSON progress lines on stderr");

  std::string report_dir;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "Aggregate archived runs into curve tables");
  report->add_option("archive_dir", report_dir, "Directory holding run archives")->required();
  report->add_option("--out", report_out, "Where to write the tables (default: archive_dir)");

  std::string eval_archive;
  std::optional<std::size_t> eval_episodes;
  std::optional<std::uint64_t> eval_seed;
  std::vector<std::string> eval_overrides;
  auto* eval = app.add_subcommand("eval", "Evaluate an archived policy");
  eval->add_option("archive", eval_archive, "Run archive directory")->required();
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes (default: from the config)");
  eval->add_option("--seed", eval_seed, "Evaluation seed (default: the run seed)");
  eval->add_option("--domain-override", eval_overrides, "key=value");

  std::string replay_archive;
  std::uint64_t replay_seed = 0;
  std::optional<std::string> replay_out;
  std::vector<std::string> replay_overrides;
  auto* replay = app.add_subcommand("replay", "Write the step trace of one episode of an archived policy");
  replay->add_option("archive", replay_archive, "Run archive directory")->required();
  replay->add_option("--episode-seed", replay_seed, "Episode seed");
  replay->add_option("--out", replay_out, "CSV file (default: stdout)");
  replay->add_option("--domain-override", replay_overrides, "key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*report) return cmd_report(report_dir, report_out);
    if (*eval) return cmd_eval(eval_archive, eval_episodes, eval_seed, eval_overrides);
    if (*replay) return cmd_replay(replay_archive, replay_seed, replay_out, replay_overrides);
  } catch (const esp::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
