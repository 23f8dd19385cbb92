#pragma once

// Default experiment settings for each domain.

#include "esp/engine.hpp"

namespace esp {

inline EspConfig function_preset() {
  EspConfig c;
  c.domain.id = DomainId::function;
  c.prescriptor_hidden = {32};
  c.predictor.kind = PredictorKind::mlp;
  c.predictor.mlp.hidden = {64, 64};
  c.predictor.mlp.output_activation = Activation::linear;
  c.predictor.mlp.train.epochs = 2000;
  c.predictor.mlp.train.batch_size = 256;
  c.predictor.scaling = ScalingMode::standardize;
  c.schedule.generations_per_predictor = 20;
  c.schedule.elites_evaluated = 1;
  c.schedule.episodes_per_elite = 1;
  c.schedule.initial_random_agents = 10;
  c.schedule.initial_random_episodes = 1;
  c.schedule.episodes_per_candidate = 1;
  c.schedule.max_episodes = 1000;
  c.schedule.eval_episodes = 1000;
  c.schedule.returned_policy = ReturnedPolicy::top_fitness;
  c.schedule.protect_best = false;
  c.q = {0.9, false, 0.0};
  return c;
}

inline EspConfig cartpole_preset() {
  EspConfig c;
  c.domain.id = DomainId::cartpole;
  c.evolution.population_size = 50;
  c.prescriptor_hidden = {32};
  c.predictor.kind = PredictorKind::mlp;
  c.predictor.mlp.hidden = {64, 64};
  c.predictor.mlp.output_activation = Activation::tanh;
  c.predictor.mlp.train.epochs = 1000;
  c.predictor.mlp.train.batch_size = 256;
  c.q = {0.9, true, 2000.0};
  c.predictor.scaling = ScalingMode::bound;  // bound derived from q at fit time
  c.schedule.generations_per_predictor = 5;
  c.schedule.elites_evaluated = 5;
  c.schedule.episodes_per_elite = 5;
  c.schedule.initial_random_agents = 5;
  c.schedule.initial_random_episodes = 5;
  c.schedule.episodes_per_candidate = 5;
  c.schedule.max_generations = 160;
  c.schedule.target_reward = 200.0;
  c.schedule.eval_episodes = 100;
  c.schedule.returned_policy = ReturnedPolicy::best_real;
  c.schedule.protect_best = true;
  return c;
}

inline EspConfig flappy_preset() {
  EspConfig c;
  c.domain.id = DomainId::flappy;
  c.prescriptor_hidden = {128};
  c.predictor.kind = PredictorKind::random_forest;
  c.predictor.forest.n_estimators = 100;
  c.predictor.scaling = ScalingMode::none;
  c.schedule.generations_per_predictor = 1;
  c.schedule.elites_evaluated = 10;
  c.schedule.episodes_per_elite = 10;
  c.schedule.initial_random_agents = 10;
  c.schedule.initial_random_episodes = 10;
  c.schedule.episodes_per_candidate = 10;
  c.schedule.max_episodes = 80000;
  c.schedule.eval_episodes = 10;
  c.schedule.max_pool_size = 10000;
  c.schedule.max_fitness_contexts = 2000;
  c.schedule.returned_policy = ReturnedPolicy::best_real;
  c.schedule.protect_best = true;
  c.q = {0.9, false, 0.0};
  return c;
}

inline EspConfig preset(DomainId d) {
  switch (d) {
    case DomainId::function: return function_preset();
    case DomainId::cartpole: return cartpole_preset();
    case DomainId::flappy: return flappy_preset();
  }
  return function_preset();
}

}  // namespace esp
