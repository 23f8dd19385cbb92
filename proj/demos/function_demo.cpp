// Evolves a prescriptor for the one-dimensional function domain with a
// shortened budget and prints how the returned policy improves.

#include <cstdio>
#include <cstdlib>

#include "esp/presets.hpp"

int main(int argc, char** argv) {
  esp::EspConfig cfg = esp::function_preset();
  cfg.seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  cfg.schedule.max_episodes = 100;
  cfg.schedule.eval_episodes = 200;

  esp::RunOptions opts;
  opts.progress = [](const esp::ProgressEvent& e) {
    if (e.kind == "collect")
      std::printf("generation %4zu  episodes %4zu  returned policy %.4f\n", e.generation, e.episodes_consumed,
                  e.returned_performance);
  };
  const esp::RunResult r = esp::run(cfg, opts);

  std::printf("\ncontext  optimal  prescribed\n");
  for (double c = -10.0; c <= 10.0; c += 2.5) {
    const double out = esp::forward(r.best_policy, std::vector<double>{c})[0];
    const auto a = esp::decode_action(cfg.domain, std::vector<double>{out});
    std::printf("%7.2f  %7.3f  %10.3f\n", c, esp::optimal_function_action(c), a[0]);
  }
  std::printf("\nfinal true performance %.4f after %zu episodes\n", r.final_performance(), r.episodes_consumed());
}
