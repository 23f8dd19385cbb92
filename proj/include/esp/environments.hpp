#pragma once

// Episodic domains: a one-step synthetic function, cart-pole balancing and a
// flappy-bird style side scroller.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esp/error.hpp"
#include "esp/neuralnet.hpp"
#include "esp/random.hpp"

namespace esp {

enum class DomainId { function, cartpole, flappy };

inline std::string_view to_string(DomainId d) {
  switch (d) {
    case DomainId::function: return "function";
    case DomainId::cartpole: return "cartpole";
    case DomainId::flappy: return "flappy";
  }
  return "?";
}

inline DomainId domain_from_string(std::string_view s) {
  if (s == "function") return DomainId::function;
  if (s == "cartpole") return DomainId::cartpole;
  if (s == "flappy") return DomainId::flappy;
  throw ConfigError("unknown domain '" + std::string(s) + "'");
}

enum class TerminalKind { none, success, failure, timeout };

inline std::string_view to_string(TerminalKind k) {
  switch (k) {
    case TerminalKind::none: return "none";
    case TerminalKind::success: return "success";
    case TerminalKind::failure: return "failure";
    case TerminalKind::timeout: return "timeout";
  }
  return "?";
}

struct EnvState {
  std::vector<double> observation;
  std::size_t step_index = 0;
  bool done = false;
  TerminalKind terminal_kind = TerminalKind::none;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
};

struct TraceStep {
  std::vector<double> observation;  // observed before acting
  std::vector<double> action;       // one-hot for discrete domains
  double reward = 0.0;

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

struct EpisodeTrace {
  std::vector<TraceStep> steps;
  TerminalKind terminal_kind = TerminalKind::none;
  double total_reward = 0.0;

  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

// ---------------------------------------------------------------------------
// Function domain: O = -|A - 3 sin(C / 2)|, one action per episode.

struct FunctionParams {
  double context_min = -10.0;
  double context_max = 10.0;
  double action_limit = 10.0;  // actions live in [-limit, limit]

  friend bool operator==(const FunctionParams&, const FunctionParams&) = default;
};

inline double optimal_function_action(double context) { return 3.0 * std::sin(context / 2.0); }

inline double function_outcome(double context, double action, const FunctionParams& p = {}) {
  const double a = std::clamp(action, -p.action_limit, p.action_limit);
  return -std::abs(a - optimal_function_action(context));
}

// ---------------------------------------------------------------------------
// Cart-pole with the classic Euler-integrated dynamics.

enum class CartAction { left = 0, right = 1 };

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_magnitude = 10.0;
  double timestep = 0.02;
  double position_limit = 2.4;
  double angle_limit_degrees = 12.0;
  std::size_t max_steps = 200;

  double angle_limit_radians() const { return angle_limit_degrees * 2.0 * std::numbers::pi / 360.0; }

  friend bool operator==(const CartPoleParams&, const CartPoleParams&) = default;
};

/// Initial state: each of (x, x_dot, theta, theta_dot) uniform on [-0.05, 0.05].
inline EnvState cartpole_reset(Rng& rng) {
  EnvState s;
  s.observation.resize(4);
  for (auto& v : s.observation) v = rng.uniform(-0.05, 0.05);
  return s;
}

/// Advances one timestep. Every step, including the last, earns reward 1.
/// Leaving the track or exceeding the angle limit is a failure; surviving
/// max_steps steps is a success.
inline StepResult cartpole_step(const CartPoleParams& p, const EnvState& state, CartAction action) {
  if (state.done) throw StateError("cart-pole episode already finished");
  if (state.observation.size() != 4) throw ShapeError("cart-pole state has 4 components");
  const double x = state.observation[0];
  const double x_dot = state.observation[1];
  const double theta = state.observation[2];
  const double theta_dot = state.observation[3];

  const double force = action == CartAction::right ? p.force_magnitude : -p.force_magnitude;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double polemass_length = p.pole_mass * p.pole_half_length;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + polemass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                           (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

  StepResult out;
  out.state.observation = {x + p.timestep * x_dot, x_dot + p.timestep * x_acc, theta + p.timestep * theta_dot,
                           theta_dot + p.timestep * theta_acc};
  out.state.step_index = state.step_index + 1;
  out.reward = 1.0;
  const double nx = out.state.observation[0];
  const double nt = out.state.observation[2];
  if (std::abs(nx) > p.position_limit || std::abs(nt) > p.angle_limit_radians()) {
    out.state.done = true;
    out.state.terminal_kind = TerminalKind::failure;
  } else if (out.state.step_index >= p.max_steps) {
    out.state.done = true;
    out.state.terminal_kind = TerminalKind::success;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flappy-bird style scroller. Units are pixels and frames; y grows downwards.

enum class FlappyAction { none = 0, flap = 1 };

struct FlappyParams {
  double width = 288.0;
  double height = 512.0;
  double bird_x = 57.0;
  double bird_width = 34.0;
  double bird_height = 24.0;
  double gravity = 1.0;          // px / frame^2
  double flap_velocity = -9.0;   // px / frame, set on flap
  double max_fall_speed = 10.0;  // px / frame
  double scroll_speed = 4.0;     // px / frame
  double pipe_width = 52.0;
  double pipe_spacing = 180.0;   // horizontal distance between pipe columns
  double gap_size = 100.0;
  double gap_margin = 60.0;      // min distance from a gap edge to a screen edge
  double max_gap_shift = 100.0;  // max change of gap centre between columns
  std::size_t max_frames = 3600;

  friend bool operator==(const FlappyParams&, const FlappyParams&) = default;
};

class FlappyGame {
 public:
  static constexpr std::size_t observation_width = 8;

  FlappyGame(const FlappyParams& p, std::uint64_t seed) : p_(p), rng_(seed) {
    bird_y_ = (p_.height - p_.bird_height) / 2.0;
    double x = p_.width;
    double centre = p_.height / 2.0;
    for (int i = 0; i < 3; ++i) {
      centre = next_gap_centre(centre);
      pipes_.push_back({x, centre});
      x += p_.pipe_spacing;
    }
  }

  /// [bird_y, bird_velocity, dist_to_next_pipe, next_gap_top, next_gap_bottom,
  ///  dist_to_second_pipe, second_gap_top, second_gap_bottom], with positions
  /// divided by the screen size and velocity by max_fall_speed.
  std::vector<double> observation() const {
    const std::size_t next = next_pipe_index();
    const Pipe& a = pipes_[next];
    const Pipe& b = pipes_[next + 1];
    const double half = p_.gap_size / 2.0;
    return {bird_y_ / p_.height,
            bird_velocity_ / p_.max_fall_speed,
            (a.x - p_.bird_x) / p_.width,
            (a.gap_centre - half) / p_.height,
            (a.gap_centre + half) / p_.height,
            (b.x - p_.bird_x) / p_.width,
            (b.gap_centre - half) / p_.height,
            (b.gap_centre + half) / p_.height};
  }

  EnvState state() const { return {observation(), frame_, done_, terminal_}; }

  StepResult step(FlappyAction action) {
    if (done_) throw StateError("flappy episode already finished");
    if (action == FlappyAction::flap)
      bird_velocity_ = p_.flap_velocity;
    else
      bird_velocity_ = std::min(bird_velocity_ + p_.gravity, p_.max_fall_speed);
    bird_y_ += bird_velocity_;
    for (auto& pipe : pipes_) pipe.x -= p_.scroll_speed;
    while (pipes_.front().x + p_.pipe_width < 0.0) pipes_.pop_front();
    while (pipes_.size() < 3) pipes_.push_back({pipes_.back().x + p_.pipe_spacing, next_gap_centre(pipes_.back().gap_centre)});
    ++frame_;

    StepResult out;
    if (collided()) {
      done_ = true;
      terminal_ = TerminalKind::failure;
    } else {
      out.reward = 1.0;
      if (frame_ >= p_.max_frames) {
        done_ = true;
        terminal_ = TerminalKind::success;
      }
    }
    out.state = state();
    return out;
  }

  double bird_y() const { return bird_y_; }
  double bird_velocity() const { return bird_velocity_; }
  void set_bird(double y, double velocity) {
    bird_y_ = y;
    bird_velocity_ = velocity;
  }

 private:
  struct Pipe {
    double x;
    double gap_centre;
  };

  double next_gap_centre(double previous) {
    const double lo = p_.gap_margin + p_.gap_size / 2.0;
    const double hi = p_.height - p_.gap_margin - p_.gap_size / 2.0;
    return rng_.uniform(std::max(lo, previous - p_.max_gap_shift), std::min(hi, previous + p_.max_gap_shift));
  }

  std::size_t next_pipe_index() const {
    std::size_t i = 0;
    while (pipes_[i].x + p_.pipe_width < p_.bird_x) ++i;
    return i;
  }

  bool collided() const {
    if (bird_y_ < 0.0 || bird_y_ + p_.bird_height > p_.height) return true;
    const double half = p_.gap_size / 2.0;
    for (const auto& pipe : pipes_) {
      const bool overlap_x = p_.bird_x + p_.bird_width > pipe.x && p_.bird_x < pipe.x + p_.pipe_width;
      if (overlap_x && (bird_y_ < pipe.gap_centre - half || bird_y_ + p_.bird_height > pipe.gap_centre + half))
        return true;
    }
    return false;
  }

  FlappyParams p_;
  Rng rng_;
  double bird_y_ = 0.0;
  double bird_velocity_ = 0.0;
  std::deque<Pipe> pipes_;
  std::size_t frame_ = 0;
  bool done_ = false;
  TerminalKind terminal_ = TerminalKind::none;
};

// ---------------------------------------------------------------------------
// Uniform episodic interface.

struct DomainParams {
  DomainId id = DomainId::function;
  FunctionParams function{};
  CartPoleParams cartpole{};
  FlappyParams flappy{};

  std::size_t observation_width() const {
    switch (id) {
      case DomainId::function: return 1;
      case DomainId::cartpole: return 4;
      case DomainId::flappy: return FlappyGame::observation_width;
    }
    return 0;
  }
  /// Width of the action encoding fed to a Predictor.
  std::size_t action_width() const { return id == DomainId::function ? 1 : 2; }
  bool discrete() const { return id != DomainId::function; }
  std::size_t max_steps() const {
    switch (id) {
      case DomainId::function: return 1;
      case DomainId::cartpole: return cartpole.max_steps;
      case DomainId::flappy: return flappy.max_frames;
    }
    return 0;
  }
  /// Best achievable total episode reward.
  double optimal_episode_reward() const {
    switch (id) {
      case DomainId::function: return 0.0;
      case DomainId::cartpole: return static_cast<double>(cartpole.max_steps);
      case DomainId::flappy: return static_cast<double>(flappy.max_frames);
    }
    return 0.0;
  }

  friend bool operator==(const DomainParams&, const DomainParams&) = default;
};

/// Maps a Prescriptor's outputs to the domain action encoding.
inline std::vector<double> decode_action(const DomainParams& d, std::span<const double> outputs) {
  if (d.discrete()) {
    std::vector<double> one_hot(d.action_width(), 0.0);
    one_hot[argmax_action(outputs)] = 1.0;
    return one_hot;
  }
  return {std::clamp(outputs[0] * d.function.action_limit, -d.function.action_limit, d.function.action_limit)};
}

namespace detail {

// chooser(observation, rng) -> action encoding
template <class Chooser>
EpisodeTrace run_episode(const DomainParams& d, Chooser&& choose, Rng& rng) {
  EpisodeTrace trace;
  auto record = [&](std::vector<double> obs, std::vector<double> action, double reward) {
    trace.total_reward += reward;
    trace.steps.push_back({std::move(obs), std::move(action), reward});
  };
  switch (d.id) {
    case DomainId::function: {
      const double context = rng.uniform(d.function.context_min, d.function.context_max);
      std::vector<double> obs{context};
      auto action = choose(obs, rng);
      const double reward = function_outcome(context, action[0], d.function);
      record(std::move(obs), std::move(action), reward);
      trace.terminal_kind = TerminalKind::timeout;
      break;
    }
    case DomainId::cartpole: {
      EnvState s = cartpole_reset(rng);
      while (!s.done) {
        auto action = choose(s.observation, rng);
        const auto dir = action[1] > 0.5 ? CartAction::right : CartAction::left;
        StepResult r = cartpole_step(d.cartpole, s, dir);
        record(std::move(s.observation), std::move(action), r.reward);
        s = std::move(r.state);
      }
      trace.terminal_kind = s.terminal_kind;
      break;
    }
    case DomainId::flappy: {
      FlappyGame game(d.flappy, rng.next_u64());
      EnvState s = game.state();
      while (!s.done) {
        auto action = choose(s.observation, rng);
        StepResult r = game.step(action[1] > 0.5 ? FlappyAction::flap : FlappyAction::none);
        record(std::move(s.observation), std::move(action), r.reward);
        s = std::move(r.state);
      }
      trace.terminal_kind = s.terminal_kind;
      break;
    }
  }
  return trace;
}

}  // namespace detail

/// One episode driven by a Prescriptor network.
inline EpisodeTrace rollout(const DomainParams& d, const NetworkGenome& policy, Rng& rng) {
  if (policy.input_width() != d.observation_width())
    throw ShapeError("policy input width " + std::to_string(policy.input_width()) + " != observation width " +
                     std::to_string(d.observation_width()));
  if (d.discrete() ? policy.output_width() != d.action_width() : policy.output_width() != 1)
    throw ShapeError("policy output width does not match the domain");
  return detail::run_episode(
      d, [&](const std::vector<double>& obs, Rng&) { return decode_action(d, forward(policy, obs)); }, rng);
}

/// One episode of a uniformly random agent.
inline EpisodeTrace rollout_random(const DomainParams& d, Rng& rng) {
  return detail::run_episode(
      d,
      [&](const std::vector<double>&, Rng& r) -> std::vector<double> {
        if (!d.discrete()) return {r.uniform(-d.function.action_limit, d.function.action_limit)};
        std::vector<double> one_hot(d.action_width(), 0.0);
        one_hot[r.below(d.action_width())] = 1.0;
        return one_hot;
      },
      rng);
}

}  // namespace esp
