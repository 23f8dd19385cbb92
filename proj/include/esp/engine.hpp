#pragma once

// The surrogate-assisted outer loop, its Direct Evolution baseline, and the
// pieces they share: Q labelling, the training pool and surrogate fitness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esp/environments.hpp"
#include "esp/error.hpp"
#include "esp/evolution.hpp"
#include "esp/metrics.hpp"
#include "esp/neuralnet.hpp"
#include "esp/parallel.hpp"
#include "esp/predictors.hpp"
#include "esp/random.hpp"

namespace esp {

struct QConfig {
  double gamma = 0.9;
  bool shaping = false;
  double terminal_bonus = 0.0;  // last reward becomes +bonus on success, -bonus on failure

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(terminal_bonus >= 0.0)) throw ConfigError("terminal_bonus must be non-negative");
  }
};

/// Largest |Q| any episode of at most `max_steps` unit-reward steps can
/// produce under `q` (the terminal bonus included).
inline double q_target_bound(const QConfig& q, std::size_t max_steps) {
  q.validate();
  double best = 0.0;
  // Q at m steps before the end: sum_{j<m} gamma^j + gamma^m * last.
  double partial = 0.0, discount = 1.0;
  const double last = q.shaping ? q.terminal_bonus : 1.0;
  for (std::size_t m = 0; m < max_steps; ++m) {
    best = std::max({best, std::abs(partial + discount * last), std::abs(partial - discount * last)});
    partial += discount;
    discount *= q.gamma;
  }
  return best;
}

/// Training samples for every step of a trace; targets are the discounted
/// return from that step on (raw units).
inline std::vector<Sample> q_labels(const EpisodeTrace& trace, const QConfig& q) {
  q.validate();
  if (trace.steps.empty()) throw ShapeError("empty episode trace");
  const std::size_t n = trace.steps.size();
  std::vector<double> rewards(n);
  for (std::size_t t = 0; t < n; ++t) rewards[t] = trace.steps[t].reward;
  if (q.shaping) {
    if (trace.terminal_kind == TerminalKind::failure)
      rewards.back() = -q.terminal_bonus;
    else if (trace.terminal_kind == TerminalKind::success || trace.terminal_kind == TerminalKind::timeout)
      rewards.back() = q.terminal_bonus;
  }
  std::vector<Sample> out(n);
  double ret = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    ret = t + 1 == n ? rewards[t] : rewards[t] + q.gamma * ret;
    out[t] = {trace.steps[t].observation, trace.steps[t].action, ret};
  }
  return out;
}

/// Append-only record of real-domain data, optionally capped to the most
/// recent `max_size` samples.
class TrainingPool {
 public:
  explicit TrainingPool(std::size_t max_size = 0) : max_size_(max_size) {}

  void add_episode(std::vector<Sample> samples) {
    ++episodes_consumed_;
    for (auto& s : samples) samples_.push_back(std::move(s));
    if (max_size_ > 0)
      while (samples_.size() > max_size_) samples_.pop_front();
  }

  std::size_t size() const { return samples_.size(); }
  std::size_t episodes_consumed() const { return episodes_consumed_; }
  const std::deque<Sample>& samples() const { return samples_; }
  std::vector<Sample> snapshot() const { return {samples_.begin(), samples_.end()}; }

 private:
  std::deque<Sample> samples_;
  std::size_t episodes_consumed_ = 0;
  std::size_t max_size_ = 0;
};

/// Actions a Prescriptor takes on each context row, in Predictor encoding.
inline Matrix prescribe(const NetworkGenome& genome, const Matrix& contexts, const DomainParams& d) {
  const Matrix out = forward_batch(genome, contexts);
  Matrix actions(contexts.rows(), static_cast<Eigen::Index>(d.action_width()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Eigen::RowVectorXd row = out.row(i);
    const auto a = decode_action(d, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    for (std::size_t j = 0; j < a.size(); ++j) actions(i, static_cast<Eigen::Index>(j)) = a[j];
  }
  return actions;
}

/// Mean Predictor estimate over the contexts when the genome chooses the
/// actions.
inline double surrogate_fitness(const NetworkGenome& genome, const PredictorModel& predictor, const Matrix& contexts,
                                const DomainParams& d) {
  if (contexts.rows() == 0) throw ShapeError("no contexts to evaluate on");
  if (static_cast<std::size_t>(contexts.cols()) + d.action_width() != predictor.input_dim())
    throw ShapeError("context width does not match the predictor");
  const Matrix actions = prescribe(genome, contexts, d);
  Matrix inputs(contexts.rows(), contexts.cols() + actions.cols());
  inputs << contexts, actions;
  return predictor.predict_batch(inputs).mean();
}

/// Predictor estimates for every (context, discrete action) pair, so that the
/// surrogate fitness of a discrete-action genome only needs its forward pass.
class SurrogateTable {
 public:
  SurrogateTable(const PredictorModel& predictor, const Matrix& contexts, const DomainParams& d)
      : contexts_(contexts), values_(contexts.rows(), static_cast<Eigen::Index>(d.action_width())) {
    if (!d.discrete()) throw StateError("surrogate tables need a discrete action space");
    Matrix inputs(contexts.rows(), contexts.cols() + values_.cols());
    inputs.leftCols(contexts.cols()) = contexts;
    for (Eigen::Index a = 0; a < values_.cols(); ++a) {
      inputs.rightCols(values_.cols()).setZero();
      inputs.col(contexts.cols() + a).setOnes();
      values_.col(a) = predictor.predict_batch(inputs);
    }
  }

  double fitness(const NetworkGenome& genome) const {
    const Matrix out = forward_batch(genome, contexts_);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < out.cols(); ++j)
        if (out(i, j) > out(i, best)) best = j;
      sum += values_(i, best);
    }
    return sum / static_cast<double>(out.rows());
  }

 private:
  Matrix contexts_;
  Matrix values_;
};

enum class ReturnedPolicy {
  top_fitness,  // highest-fitness member of the latest scored population
  best_real,    // best real-domain fitness seen so far
};

inline std::string_view to_string(ReturnedPolicy r) {
  return r == ReturnedPolicy::top_fitness ? "top_fitness" : "best_real";
}

inline ReturnedPolicy returned_policy_from_string(std::string_view s) {
  if (s == "top_fitness") return ReturnedPolicy::top_fitness;
  if (s == "best_real") return ReturnedPolicy::best_real;
  throw ConfigError("unknown returned_policy '" + std::string(s) + "'");
}

struct ScheduleConfig {
  std::size_t generations_per_predictor = 20;  // real data is collected every this many generations
  std::size_t elites_evaluated = 1;
  std::size_t episodes_per_elite = 1;
  std::size_t initial_random_agents = 10;
  std::size_t initial_random_episodes = 1;  // per random agent
  std::size_t episodes_per_candidate = 1;   // Direct Evolution fitness
  std::size_t max_generations = 0;          // 0: unlimited
  std::size_t max_episodes = 0;             // 0: unlimited
  std::optional<double> target_reward;      // stop when a real fitness reaches it
  std::size_t eval_episodes = 1000;         // true-performance episodes
  std::size_t max_pool_size = 0;            // 0: keep every sample
  std::size_t max_fitness_contexts = 0;     // 0: every pool context
  ReturnedPolicy returned_policy = ReturnedPolicy::top_fitness;
  bool protect_best = true;

  void validate() const {
    if (generations_per_predictor == 0 || elites_evaluated == 0 || episodes_per_elite == 0 ||
        episodes_per_candidate == 0 || eval_episodes == 0)
      throw ConfigError("schedule counts must be positive");
    if (initial_random_agents * initial_random_episodes == 0)
      throw ConfigError("at least one initial random episode is required");
    if (max_generations == 0 && max_episodes == 0 && !target_reward)
      throw ConfigError("no stopping rule: set max_generations, max_episodes or target_reward");
  }
};

struct EspConfig {
  DomainParams domain{};
  Method method = Method::esp;
  EvolutionConfig evolution{};
  std::vector<std::size_t> prescriptor_hidden{32};
  PredictorConfig predictor{};
  ScheduleConfig schedule{};
  QConfig q{};
  std::uint64_t seed = 0;

  Architecture prescriptor_architecture() const {
    Architecture a;
    a.layer_sizes.push_back(domain.observation_width());
    a.layer_sizes.insert(a.layer_sizes.end(), prescriptor_hidden.begin(), prescriptor_hidden.end());
    a.layer_sizes.push_back(domain.discrete() ? domain.action_width() : 1);
    a.output_activation = domain.discrete() ? Activation::argmax : Activation::tanh;
    return a;
  }

  void validate() const {
    evolution.validate();
    schedule.validate();
    q.validate();
    if (predictor.kind == PredictorKind::random_forest) predictor.forest.validate();
  }
};

struct ProgressEvent {
  std::string_view kind;  // "generation", "collect", "finish"
  std::size_t generation = 0;
  std::size_t episodes_consumed = 0;
  double best_fitness = 0.0;       // top of the current population
  double returned_performance = 0.0;
  std::size_t pool_size = 0;
};

struct RunOptions {
  std::size_t threads = 1;
  std::function<void(const ProgressEvent&)> progress;
};

namespace detail {

enum StreamTag : std::uint64_t {
  kInitialEpisode = 1,
  kPopulation,
  kEvolution,
  kEliteEpisode,
  kCandidateEpisode,
  kPredictorFit,
  kContextSubset,
};

// Shared bookkeeping of both methods: episode accounting, the best
// real-domain policy and the returned policy's true performance.
class RunRecorder {
 public:
  RunRecorder(const EspConfig& cfg, RunResult& result) : cfg_(cfg), result_(result) {}

  std::size_t episodes() const { return episodes_; }
  const std::optional<NetworkGenome>& best_real() const { return best_real_; }
  double best_real_fitness() const { return best_real_fitness_; }

  bool budget_allows(std::size_t batch) const {
    return cfg_.schedule.max_episodes == 0 || episodes_ + batch <= cfg_.schedule.max_episodes;
  }

  void offer_real(const NetworkGenome& g, double fitness) {
    if (!best_real_ || fitness > best_real_fitness_) {
      best_real_ = g;
      best_real_fitness_ = fitness;
    }
  }

  void set_returned(const NetworkGenome& g) {
    if (!returned_ || !(*returned_ == g)) {
      returned_ = g;
      returned_performance_ =
          true_performance(g, cfg_.domain, cfg_.schedule.eval_episodes, cfg_.seed);
    }
  }

  void set_returned_random() {
    returned_performance_ = random_agent_performance(cfg_.domain, cfg_.schedule.eval_episodes, cfg_.seed);
    reported_performance_ = returned_performance_;
  }

  double returned_performance() const { return returned_performance_; }
  const std::optional<NetworkGenome>& returned() const { return returned_; }

  // Appends one series point per trace. Earlier points of the batch keep the
  // previously reported performance; the last one carries the current value.
  void record(std::span<const EpisodeTrace> traces, std::size_t generation) {
    const double optimum = cfg_.domain.optimal_episode_reward();
    for (std::size_t i = 0; i < traces.size(); ++i) {
      ++episodes_;
      const double perf = i + 1 == traces.size() ? returned_performance_ : reported_performance_;
      result_.series.push_back(
          {episodes_, perf, optimum - traces[i].total_reward, generation, traces[i].total_reward});
    }
    reported_performance_ = returned_performance_;
  }

 private:
  const EspConfig& cfg_;
  RunResult& result_;
  std::size_t episodes_ = 0;
  std::optional<NetworkGenome> best_real_;
  double best_real_fitness_ = 0.0;
  std::optional<NetworkGenome> returned_;
  double returned_performance_ = 0.0;
  double reported_performance_ = 0.0;
};

inline Matrix context_matrix(const TrainingPool& pool, std::size_t limit, Rng& rng) {
  const auto& samples = pool.samples();
  std::vector<std::size_t> rows(samples.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (limit > 0 && rows.size() > limit) {
    for (std::size_t k = 0; k < limit; ++k) std::swap(rows[k], rows[k + rng.below(rows.size() - k)]);
    rows.resize(limit);
    std::sort(rows.begin(), rows.end());
  }
  const std::size_t width = samples.front().context.size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[rows[i]].context[j];
  return m;
}

// A fitted Predictor together with the contexts it scores candidates on.
struct Surrogate {
  PredictorModel model;
  Matrix contexts;
  std::optional<SurrogateTable> table;
  std::size_t version = 0;
};

inline Surrogate fit_surrogate(const EspConfig& cfg, const TrainingPool& pool, std::size_t index,
                               std::size_t threads) {
  PredictorConfig pc = cfg.predictor;
  if (pc.scaling == ScalingMode::bound && !(pc.target_bound > 0.0))
    pc.target_bound = q_target_bound(cfg.q, cfg.domain.max_steps());
  pc.mlp.train.seed = derive_seed(cfg.seed, {kPredictorFit, index});
  pc.forest.seed = derive_seed(cfg.seed, {kPredictorFit, index});
  const auto samples = pool.snapshot();
  Surrogate s{fit_predictor(samples, pc, threads), {}, std::nullopt, index};
  Rng rng(derive_seed(cfg.seed, {kContextSubset, index}));
  s.contexts = context_matrix(pool, cfg.schedule.max_fitness_contexts, rng);
  if (cfg.domain.discrete()) s.table.emplace(s.model, s.contexts, cfg.domain);
  return s;
}

inline double surrogate_score(const Surrogate& s, const NetworkGenome& g, const DomainParams& d) {
  return s.table ? s.table->fitness(g) : surrogate_fitness(g, s.model, s.contexts, d);
}

}  // namespace detail

/// The surrogate-assisted outer loop: seed the pool with random episodes, fit
/// a Predictor, evolve against it and, every generations_per_predictor
/// generations, run the top candidates in the real domain, add their Q-labelled
/// data and refit.
inline RunResult run_esp(const EspConfig& cfg, const RunOptions& opts = {}) {
  using namespace detail;
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto& sched = cfg.schedule;
  const DomainParams& d = cfg.domain;

  RunResult result;
  result.method = Method::esp;
  result.domain = d.id;
  result.seed = cfg.seed;
  RunRecorder rec(cfg, result);
  TrainingPool pool(sched.max_pool_size);

  // Initial random data.
  rec.set_returned_random();
  {
    const std::size_t n = sched.initial_random_agents * sched.initial_random_episodes;
    std::vector<EpisodeTrace> traces(n);
    parallel_for(n, opts.threads, [&](std::size_t i) {
      Rng rng(derive_seed(cfg.seed, {kInitialEpisode, i}));
      traces[i] = rollout_random(d, rng);
    });
    rec.record(traces, 0);
    for (const auto& t : traces) pool.add_episode(q_labels(t, cfg.q));
  }

  std::size_t fits = 0;
  Surrogate surrogate = fit_surrogate(cfg, pool, fits++, opts.threads);

  ScoredPopulation pop;
  pop.members = initial_population(cfg.prescriptor_architecture(), cfg.evolution.population_size,
                                   derive_seed(cfg.seed, {kPopulation}));
  auto score_all = [&](ScoredPopulation& p, const std::vector<std::optional<double>>& known) {
    p.fitnesses.assign(p.members.size(), 0.0);
    parallel_for(p.members.size(), opts.threads, [&](std::size_t i) {
      p.fitnesses[i] = i < known.size() && known[i] ? *known[i] : surrogate_score(surrogate, p.members[i], d);
    });
  };
  score_all(pop, {});

  EvolutionConfig evo = cfg.evolution;
  Rng evo_rng(derive_seed(cfg.seed, {kEvolution}));
  bool stop = false;
  while (true) {
    if ((pop.generation + 1) % sched.generations_per_predictor == 0) {
      const auto ranking = rank_by_fitness(pop.fitnesses);
      const std::size_t elites = std::min(sched.elites_evaluated, pop.members.size());
      const std::size_t per = sched.episodes_per_elite;
      if (!rec.budget_allows(elites * per)) break;
      std::vector<EpisodeTrace> traces(elites * per);
      parallel_for(traces.size(), opts.threads, [&](std::size_t k) {
        Rng rng(derive_seed(cfg.seed, {kEliteEpisode, pop.generation, k / per, k % per}));
        traces[k] = rollout(d, pop.members[ranking[k / per]], rng);
      });
      for (std::size_t e = 0; e < elites; ++e) {
        double sum = 0.0;
        for (std::size_t k = 0; k < per; ++k) sum += traces[e * per + k].total_reward;
        const double fitness = sum / static_cast<double>(per);
        rec.offer_real(pop.members[ranking[e]], fitness);
        if (sched.target_reward && fitness >= *sched.target_reward) stop = true;
      }
      if (sched.returned_policy == ReturnedPolicy::top_fitness)
        rec.set_returned(pop.members[ranking[0]]);
      else
        rec.set_returned(*rec.best_real());
      rec.record(traces, pop.generation);
      for (const auto& t : traces) pool.add_episode(q_labels(t, cfg.q));
      if (stop && !result.target_reached_at) result.target_reached_at = rec.episodes();

      surrogate = fit_surrogate(cfg, pool, fits++, opts.threads);
      score_all(pop, {});
      if (opts.progress)
        opts.progress({"collect", pop.generation, rec.episodes(), pop.fitnesses[rank_by_fitness(pop.fitnesses)[0]],
                       rec.returned_performance(), pool.size()});
      if (stop) break;
    }
    if (sched.max_generations > 0 && pop.generation + 1 >= sched.max_generations) break;

    const auto ranking = rank_by_fitness(pop.fitnesses);
    const NetworkGenome* protect = sched.protect_best && rec.best_real() ? &*rec.best_real() : nullptr;
    ScoredPopulation next = next_generation(pop, evo, evo_rng, protect);
    // Verbatim elites keep their score under an unchanged Predictor.
    std::vector<std::optional<double>> known(next.members.size());
    for (std::size_t i = 0; i < evo.elite_count() && i < next.members.size(); ++i)
      if (next.members[i] == pop.members[ranking[i]]) known[i] = pop.fitnesses[ranking[i]];
    pop = std::move(next);
    score_all(pop, known);
    if (opts.progress)
      opts.progress({"generation", pop.generation, rec.episodes(),
                     pop.fitnesses[rank_by_fitness(pop.fitnesses)[0]], rec.returned_performance(), pool.size()});
  }

  result.generations = pop.generation + 1;
  if (rec.returned())
    result.best_policy = *rec.returned();
  else
    result.best_policy = pop.members[rank_by_fitness(pop.fitnesses)[0]];
  result.predictor = std::move(surrogate.model);
  result.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (opts.progress)
    opts.progress({"finish", pop.generation, rec.episodes(), 0.0, rec.returned_performance(), pool.size()});
  return result;
}

/// The same genetic algorithm scored directly by mean real-domain reward over
/// episodes_per_candidate episodes per candidate.
inline RunResult run_direct_evolution(const EspConfig& cfg, const RunOptions& opts = {}) {
  using namespace detail;
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto& sched = cfg.schedule;
  const DomainParams& d = cfg.domain;

  RunResult result;
  result.method = Method::de;
  result.domain = d.id;
  result.seed = cfg.seed;
  RunRecorder rec(cfg, result);
  rec.set_returned_random();

  ScoredPopulation pop;
  pop.members = initial_population(cfg.prescriptor_architecture(), cfg.evolution.population_size,
                                   derive_seed(cfg.seed, {kPopulation}));
  Rng evo_rng(derive_seed(cfg.seed, {kEvolution}));
  const std::size_t per = sched.episodes_per_candidate;
  while (true) {
    const std::size_t n = pop.members.size();
    if (!rec.budget_allows(n * per)) break;
    std::vector<EpisodeTrace> traces(n * per);
    parallel_for(traces.size(), opts.threads, [&](std::size_t k) {
      Rng rng(derive_seed(cfg.seed, {kCandidateEpisode, pop.generation, k / per, k % per}));
      traces[k] = rollout(d, pop.members[k / per], rng);
    });
    pop.fitnesses.assign(n, 0.0);
    bool stop = false;
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k < per; ++k) sum += traces[i * per + k].total_reward;
      pop.fitnesses[i] = sum / static_cast<double>(per);
      rec.offer_real(pop.members[i], pop.fitnesses[i]);
      if (sched.target_reward && pop.fitnesses[i] >= *sched.target_reward) stop = true;
    }
    const auto ranking = rank_by_fitness(pop.fitnesses);
    rec.set_returned(sched.returned_policy == ReturnedPolicy::top_fitness ? pop.members[ranking[0]]
                                                                          : *rec.best_real());
    rec.record(traces, pop.generation);
    if (stop && !result.target_reached_at) result.target_reached_at = rec.episodes();
    if (opts.progress)
      opts.progress({"generation", pop.generation, rec.episodes(), pop.fitnesses[ranking[0]],
                     rec.returned_performance(), 0});
    if (stop) break;
    if (sched.max_generations > 0 && pop.generation + 1 >= sched.max_generations) break;
    pop = next_generation(pop, cfg.evolution, evo_rng);
  }

  result.generations = pop.generation + 1;
  result.best_policy = rec.returned() ? *rec.returned() : pop.members.front();
  result.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (opts.progress) opts.progress({"finish", pop.generation, rec.episodes(), 0.0, rec.returned_performance(), 0});
  return result;
}

inline RunResult run(const EspConfig& cfg, const RunOptions& opts = {}) {
  return cfg.method == Method::esp ? run_esp(cfg, opts) : run_direct_evolution(cfg, opts);
}

}  // namespace esp
