// Runs surrogate-assisted evolution and Direct Evolution side by side on
// cart-pole and reports how many real episodes each needed.

#include <cstdio>
#include <cstdlib>

#include "esp/metrics.hpp"
#include "esp/presets.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  for (const auto method : {esp::Method::esp, esp::Method::de}) {
    esp::EspConfig cfg = esp::cartpole_preset();
    cfg.method = method;
    cfg.seed = seed;
    const esp::RunResult r = esp::run(cfg);
    std::printf("%-3s  episodes %4zu  stop target %s  returned policy %.1f over %zu episodes\n",
                std::string(esp::to_string(method)).c_str(), r.episodes_consumed(),
                r.target_reached_at ? "met" : "missed", r.final_performance(), cfg.schedule.eval_episodes);
  }
}
