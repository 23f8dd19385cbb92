#pragma once

// JSON experiment configs: domain presets merged with user settings, strict
// key checking and a fully resolved dump for archives.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "esp/engine.hpp"
#include "esp/error.hpp"
#include "esp/presets.hpp"

namespace esp {

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  EspConfig esp{};
  std::size_t run_count = 10;
  std::string output_dir = "runs";
};

namespace detail {

using nlohmann::json;

inline json physics_to_json(const DomainParams& d) {
  switch (d.id) {
    case DomainId::function:
      return {{"context_min", d.function.context_min},
              {"context_max", d.function.context_max},
              {"action_limit", d.function.action_limit}};
    case DomainId::cartpole: {
      const auto& p = d.cartpole;
      return {{"gravity", p.gravity},
              {"cart_mass", p.cart_mass},
              {"pole_mass", p.pole_mass},
              {"pole_half_length", p.pole_half_length},
              {"force_magnitude", p.force_magnitude},
              {"timestep", p.timestep},
              {"position_limit", p.position_limit},
              {"angle_limit_degrees", p.angle_limit_degrees},
              {"max_steps", p.max_steps}};
    }
    case DomainId::flappy: {
      const auto& p = d.flappy;
      return {{"width", p.width},
              {"height", p.height},
              {"bird_x", p.bird_x},
              {"bird_width", p.bird_width},
              {"bird_height", p.bird_height},
              {"gravity", p.gravity},
              {"flap_velocity", p.flap_velocity},
              {"max_fall_speed", p.max_fall_speed},
              {"scroll_speed", p.scroll_speed},
              {"pipe_width", p.pipe_width},
              {"pipe_spacing", p.pipe_spacing},
              {"gap_size", p.gap_size},
              {"gap_margin", p.gap_margin},
              {"max_gap_shift", p.max_gap_shift},
              {"max_frames", p.max_frames}};
    }
  }
  return json::object();
}

template <class T>
json optional_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// Locates a dotted key path in the raw config text, one component after the
// other. Returns 0 when the text does not mention it.
inline std::size_t line_of_path(std::string_view text, std::string_view path) {
  std::size_t pos = 0;
  while (!path.empty()) {
    const auto dot = path.find('.');
    const std::string key = "\"" + std::string(path.substr(0, dot)) + "\"";
    path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
    std::size_t found = std::string_view::npos;
    for (std::size_t at = text.find(key, pos); at != std::string_view::npos; at = text.find(key, at + 1)) {
      std::size_t after = at + key.size();
      while (after < text.size() && (text[after] == ' ' || text[after] == '\t' || text[after] == '\r' ||
                                     text[after] == '\n'))
        ++after;
      if (after < text.size() && text[after] == ':') {
        found = at;
        break;
      }
    }
    if (found == std::string_view::npos) return 0;
    pos = found + key.size();
  }
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// Where a setting came from, for error messages.
struct Source {
  std::string name;        // file name or "--domain-override"
  std::string_view text;   // raw JSON text when available
};

[[noreturn]] inline void config_fail(const Source& src, std::string_view path, const std::string& what) {
  std::string where = src.name;
  if (const std::size_t line = line_of_path(src.text, path); line > 0) where += ":" + std::to_string(line);
  throw ConfigError(where + ": " + (path.empty() ? std::string() : "'" + std::string(path) + "': ") + what);
}

inline void merge_checked(json& base, const json& patch, const std::string& prefix, const Source& src) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) config_fail(src, path, "unknown key");
    json& target = base[it.key()];
    if (target.is_object()) {
      if (!it.value().is_object()) config_fail(src, path, "expected an object");
      merge_checked(target, it.value(), path, src);
    } else {
      target = it.value();
    }
  }
}

// Typed field access with path-qualified errors.
class Reader {
 public:
  Reader(const json& root, const Source& src) : root_(root), src_(src) {}

  const json& at(const std::string& path) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      node = &node->at(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
      if (dot == std::string::npos) return *node;
      start = dot + 1;
    }
  }

  template <class T>
  T get(const std::string& path) const {
    const json& v = at(path);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) config_fail(src_, path, "expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) config_fail(src_, path, "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) config_fail(src_, path, "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) config_fail(src_, path, "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      config_fail(src_, path, e.what());
    }
  }

  template <class T>
  std::optional<T> get_optional(const std::string& path) const {
    if (at(path).is_null()) return std::nullopt;
    return get<T>(path);
  }

  std::vector<std::size_t> sizes(const std::string& path) const {
    const json& v = at(path);
    if (!v.is_array()) config_fail(src_, path, "expected an array of layer widths");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned() || e.get<std::size_t>() == 0)
        config_fail(src_, path, "layer widths must be positive integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  template <class F>
  auto parse(const std::string& path, F&& from_string) const {
    const auto s = get<std::string>(path);
    try {
      return from_string(s);
    } catch (const ConfigError& e) {
      config_fail(src_, path, e.what());
    }
  }

  const Source& source() const { return src_; }

 private:
  const json& root_;
  const Source& src_;
};

inline void read_physics(const Reader& r, DomainParams& d) {
  auto num = [&](const char* key) { return r.get<double>(std::string("physics.") + key); };
  auto count = [&](const char* key) { return r.get<std::size_t>(std::string("physics.") + key); };
  switch (d.id) {
    case DomainId::function:
      d.function.context_min = num("context_min");
      d.function.context_max = num("context_max");
      d.function.action_limit = num("action_limit");
      if (!(d.function.context_min < d.function.context_max))
        config_fail(r.source(), "physics.context_max", "must exceed context_min");
      if (!(d.function.action_limit > 0.0)) config_fail(r.source(), "physics.action_limit", "must be positive");
      break;
    case DomainId::cartpole: {
      auto& p = d.cartpole;
      p.gravity = num("gravity");
      p.cart_mass = num("cart_mass");
      p.pole_mass = num("pole_mass");
      p.pole_half_length = num("pole_half_length");
      p.force_magnitude = num("force_magnitude");
      p.timestep = num("timestep");
      p.position_limit = num("position_limit");
      p.angle_limit_degrees = num("angle_limit_degrees");
      p.max_steps = count("max_steps");
      if (p.max_steps == 0) config_fail(r.source(), "physics.max_steps", "must be positive");
      if (!(p.cart_mass + p.pole_mass > 0.0 && p.pole_half_length > 0.0 && p.timestep > 0.0))
        config_fail(r.source(), "physics", "masses, pole length and timestep must be positive");
      break;
    }
    case DomainId::flappy: {
      auto& p = d.flappy;
      p.width = num("width");
      p.height = num("height");
      p.bird_x = num("bird_x");
      p.bird_width = num("bird_width");
      p.bird_height = num("bird_height");
      p.gravity = num("gravity");
      p.flap_velocity = num("flap_velocity");
      p.max_fall_speed = num("max_fall_speed");
      p.scroll_speed = num("scroll_speed");
      p.pipe_width = num("pipe_width");
      p.pipe_spacing = num("pipe_spacing");
      p.gap_size = num("gap_size");
      p.gap_margin = num("gap_margin");
      p.max_gap_shift = num("max_gap_shift");
      p.max_frames = count("max_frames");
      if (p.max_frames == 0) config_fail(r.source(), "physics.max_frames", "must be positive");
      if (!(p.width > 0.0 && p.height > 0.0 && p.scroll_speed > 0.0 && p.max_fall_speed > 0.0))
        config_fail(r.source(), "physics", "sizes and speeds must be positive");
      if (!(2.0 * p.gap_margin + p.gap_size < p.height))
        config_fail(r.source(), "physics.gap_margin", "gap and margins do not fit the screen height");
      break;
    }
  }
}

}  // namespace detail

/// The resolved config as JSON, with every setting spelled out.
inline nlohmann::json config_to_json(const ExperimentConfig& x) {
  using nlohmann::json;
  const EspConfig& c = x.esp;
  const auto& e = c.evolution;
  const auto& p = c.predictor;
  const auto& t = p.mlp.train;
  const auto& s = c.schedule;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["domain"] = to_string(c.domain.id);
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  j["run_count"] = x.run_count;
  j["output_dir"] = x.output_dir;
  j["evolution"] = {{"population_size", e.population_size},   {"elite_fraction", e.elite_fraction},
                    {"parent_fraction", e.parent_fraction},   {"mutation_rate", e.mutation_rate},
                    {"mutation_factor_mean", e.mutation_factor_mean},
                    {"mutation_factor_std", e.mutation_factor_std}, {"tournament_size", e.tournament_size}};
  j["prescriptor"] = {{"hidden", c.prescriptor_hidden}};
  j["predictor"] = {
      {"kind", to_string(p.kind)},
      {"scaling", to_string(p.scaling)},
      {"target_bound", p.target_bound},
      {"mlp",
       {{"hidden", p.mlp.hidden},
        {"output_activation", to_string(p.mlp.output_activation)},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_epsilon", t.adam_epsilon}}},
      {"forest",
       {{"n_estimators", p.forest.n_estimators},
        {"bootstrap", p.forest.bootstrap},
        {"min_samples_leaf", p.forest.min_samples_leaf},
        {"max_depth", detail::optional_to_json(p.forest.max_depth)},
        {"feature_subsample", p.forest.feature_subsample}}}};
  j["schedule"] = {{"generations_per_predictor", s.generations_per_predictor},
                   {"elites_evaluated", s.elites_evaluated},
                   {"episodes_per_elite", s.episodes_per_elite},
                   {"initial_random_agents", s.initial_random_agents},
                   {"initial_random_episodes", s.initial_random_episodes},
                   {"episodes_per_candidate", s.episodes_per_candidate},
                   {"max_generations", s.max_generations},
                   {"max_episodes", s.max_episodes},
                   {"target_reward", detail::optional_to_json(s.target_reward)},
                   {"eval_episodes", s.eval_episodes},
                   {"max_pool_size", s.max_pool_size},
                   {"max_fitness_contexts", s.max_fitness_contexts},
                   {"returned_policy", to_string(s.returned_policy)},
                   {"protect_best", s.protect_best}};
  j["q"] = {{"gamma", c.q.gamma}, {"shaping", c.q.shaping}, {"terminal_bonus", c.q.terminal_bonus}};
  j["physics"] = detail::physics_to_json(c.domain);
  return j;
}

inline std::string dump_config(const ExperimentConfig& x) { return config_to_json(x).dump(2) + "\n"; }

/// Builds a config from fully resolved JSON (every key present).
inline ExperimentConfig config_from_json(const nlohmann::json& j, const detail::Source& src = {"config", {}}) {
  detail::Reader r(j, src);
  ExperimentConfig x;
  EspConfig& c = x.esp;
  c.domain.id = r.parse("domain", domain_from_string);
  c.method = r.parse("method", method_from_string);
  c.seed = r.get<std::uint64_t>("seed");
  x.run_count = r.get<std::size_t>("run_count");
  if (x.run_count == 0) detail::config_fail(src, "run_count", "must be at least 1");
  x.output_dir = r.get<std::string>("output_dir");

  auto& e = c.evolution;
  e.population_size = r.get<std::size_t>("evolution.population_size");
  e.elite_fraction = r.get<double>("evolution.elite_fraction");
  e.parent_fraction = r.get<double>("evolution.parent_fraction");
  e.mutation_rate = r.get<double>("evolution.mutation_rate");
  e.mutation_factor_mean = r.get<double>("evolution.mutation_factor_mean");
  e.mutation_factor_std = r.get<double>("evolution.mutation_factor_std");
  e.tournament_size = r.get<std::size_t>("evolution.tournament_size");
  c.prescriptor_hidden = r.sizes("prescriptor.hidden");

  auto& p = c.predictor;
  p.kind = r.parse("predictor.kind", predictor_kind_from_string);
  p.scaling = r.parse("predictor.scaling", scaling_mode_from_string);
  p.target_bound = r.get<double>("predictor.target_bound");
  p.mlp.hidden = r.sizes("predictor.mlp.hidden");
  p.mlp.output_activation = r.parse("predictor.mlp.output_activation", activation_from_string);
  if (p.mlp.output_activation == Activation::argmax)
    detail::config_fail(src, "predictor.mlp.output_activation", "a Predictor output must be differentiable");
  auto& t = p.mlp.train;
  t.epochs = r.get<std::size_t>("predictor.mlp.epochs");
  t.batch_size = r.get<std::size_t>("predictor.mlp.batch_size");
  t.learning_rate = r.get<double>("predictor.mlp.learning_rate");
  t.adam_beta1 = r.get<double>("predictor.mlp.adam_beta1");
  t.adam_beta2 = r.get<double>("predictor.mlp.adam_beta2");
  t.adam_epsilon = r.get<double>("predictor.mlp.adam_epsilon");
  if (t.epochs == 0 || t.batch_size == 0 || !(t.learning_rate > 0.0))
    detail::config_fail(src, "predictor.mlp", "epochs, batch_size and learning_rate must be positive");
  p.forest.n_estimators = r.get<std::size_t>("predictor.forest.n_estimators");
  p.forest.bootstrap = r.get<bool>("predictor.forest.bootstrap");
  p.forest.min_samples_leaf = r.get<std::size_t>("predictor.forest.min_samples_leaf");
  p.forest.max_depth = r.get_optional<std::size_t>("predictor.forest.max_depth");
  p.forest.feature_subsample = r.get<double>("predictor.forest.feature_subsample");

  auto& s = c.schedule;
  s.generations_per_predictor = r.get<std::size_t>("schedule.generations_per_predictor");
  s.elites_evaluated = r.get<std::size_t>("schedule.elites_evaluated");
  s.episodes_per_elite = r.get<std::size_t>("schedule.episodes_per_elite");
  s.initial_random_agents = r.get<std::size_t>("schedule.initial_random_agents");
  s.initial_random_episodes = r.get<std::size_t>("schedule.initial_random_episodes");
  s.episodes_per_candidate = r.get<std::size_t>("schedule.episodes_per_candidate");
  s.max_generations = r.get<std::size_t>("schedule.max_generations");
  s.max_episodes = r.get<std::size_t>("schedule.max_episodes");
  s.target_reward = r.get_optional<double>("schedule.target_reward");
  s.eval_episodes = r.get<std::size_t>("schedule.eval_episodes");
  s.max_pool_size = r.get<std::size_t>("schedule.max_pool_size");
  s.max_fitness_contexts = r.get<std::size_t>("schedule.max_fitness_contexts");
  s.returned_policy = r.parse("schedule.returned_policy", returned_policy_from_string);
  s.protect_best = r.get<bool>("schedule.protect_best");

  c.q.gamma = r.get<double>("q.gamma");
  c.q.shaping = r.get<bool>("q.shaping");
  c.q.terminal_bonus = r.get<double>("q.terminal_bonus");
  detail::read_physics(r, c.domain);

  try {
    c.validate();
  } catch (const ConfigError& err) {
    detail::config_fail(src, "", err.what());
  }
  return x;
}

/// Defaults for `domain` before any user setting is applied.
inline ExperimentConfig default_config(DomainId domain) {
  ExperimentConfig x;
  x.esp = preset(domain);
  return x;
}

/// Parses "key=value". Keys without a dot address the physics section; the
/// value is read as JSON and otherwise taken as a string.
inline std::pair<std::string, nlohmann::json> parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("--domain-override '" + std::string(text) + "': expected key=value");
  std::string key(text.substr(0, eq));
  const std::string raw(text.substr(eq + 1));
  if (key.find('.') == std::string::npos) key = "physics." + key;
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

/// Resolves config text against its domain preset, then applies overrides.
inline ExperimentConfig resolve_config(std::string_view text, const std::string& source_name = "config",
                                       std::span<const std::string> overrides = {}) {
  using nlohmann::json;
  const detail::Source src{source_name, text};
  json user;
  try {
    user = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError(source_name + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  if (!user.is_object()) throw ConfigError(source_name + ":1: the config must be a JSON object");
  if (!user.contains("schema_version")) throw ConfigError(source_name + ":1: missing 'schema_version'");
  if (user["schema_version"] != kConfigSchemaVersion)
    detail::config_fail(src, "schema_version",
                        "unsupported schema version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  if (!user.contains("domain")) throw ConfigError(source_name + ":1: missing 'domain'");
  if (!user["domain"].is_string()) detail::config_fail(src, "domain", "expected a string");
  DomainId domain;
  try {
    domain = domain_from_string(user["domain"].get<std::string>());
  } catch (const ConfigError& e) {
    detail::config_fail(src, "domain", e.what());
  }

  json resolved = config_to_json(default_config(domain));
  detail::merge_checked(resolved, user, "", src);
  const detail::Source cli{"--domain-override", {}};
  for (const auto& o : overrides) {
    auto [key, value] = parse_override(o);
    if (key == "domain" || key == "schema_version") detail::config_fail(cli, key, "cannot be overridden");
    json patch = value;
    for (auto pos = key.rfind('.'); ; pos = key.rfind('.')) {
      patch = json{{key.substr(pos == std::string::npos ? 0 : pos + 1), patch}};
      if (pos == std::string::npos) break;
      key.resize(pos);
    }
    detail::merge_checked(resolved, patch, "", cli);
  }
  return config_from_json(resolved, src);
}

inline ExperimentConfig load_config(const std::string& path, std::span<const std::string> overrides = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot read config file");
  std::ostringstream text;
  text << in.rdbuf();
  return resolve_config(text.str(), path, overrides);
}

}  // namespace esp
