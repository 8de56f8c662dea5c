#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipo/envs.hpp"

namespace ipo {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

CmdpSpec base_spec(const Scenario& s) {
  CmdpSpec spec;
  spec.gamma = s.gamma;
  for (const auto& c : s.constraints) {
    spec.constraint_kinds.push_back(c.kind);
    spec.limits.push_back(c.limit);
  }
  return spec;
}

std::unique_ptr<Env> build(const Scenario& s) {
  const json params = json::parse(s.params_json);
  const std::string where = "scenario '" + s.name + "' params";
  if (s.env == "mars_rover") {
    reject_unknown_keys(params, {"size", "holes", "slip"}, where);
    MarsRoverParams p;
    read_opt(params, "size", p.size, where);
    read_opt(params, "holes", p.holes, where);
    read_opt(params, "slip", p.slip, where);
    if (s.horizon) p.horizon = s.horizon;
    return std::make_unique<MarsRover>(p, base_spec(s));
  }
  if (s.env == "point_gather") {
    reject_unknown_keys(params,
                        {"arena_half", "apples", "bombs", "mines", "collect_radius",
                         "speed_scale", "turn_scale", "apple_reward", "spawn_clearance",
                         "object_spacing"},
                        where);
    PointGatherParams p;
    read_opt(params, "arena_half", p.arena_half, where);
    read_opt(params, "apples", p.apples, where);
    read_opt(params, "bombs", p.bombs, where);
    read_opt(params, "mines", p.mines, where);
    read_opt(params, "collect_radius", p.collect_radius, where);
    read_opt(params, "speed_scale", p.speed_scale, where);
    read_opt(params, "turn_scale", p.turn_scale, where);
    read_opt(params, "apple_reward", p.apple_reward, where);
    read_opt(params, "spawn_clearance", p.spawn_clearance, where);
    read_opt(params, "object_spacing", p.object_spacing, where);
    if (s.horizon) p.horizon = s.horizon;
    return std::make_unique<PointGather>(p, base_spec(s));
  }
  if (s.env == "point_circle") {
    reject_unknown_keys(params, {"radius", "x_limit", "speed_scale", "turn_scale", "start_jitter"},
                        where);
    PointCircleParams p;
    read_opt(params, "radius", p.radius, where);
    read_opt(params, "x_limit", p.x_limit, where);
    read_opt(params, "speed_scale", p.speed_scale, where);
    read_opt(params, "turn_scale", p.turn_scale, where);
    read_opt(params, "start_jitter", p.start_jitter, where);
    if (s.horizon) p.horizon = s.horizon;
    return std::make_unique<PointCircle>(p, base_spec(s));
  }
  if (s.env == "convex_bandit") {
    reject_unknown_keys(params, {}, where);
    auto env = std::make_unique<ConvexBandit>(s.constraints.size());
    if (env->spec().limits != s.limits()) {
      throw ConfigError("convex_bandit: limits are fixed at [1.0] or [1.0, 0.8]");
    }
    return env;
  }
  throw ConfigError("scenario '" + s.name + "': unknown env '" + s.env + "'");
}

}  // namespace

std::vector<double> Scenario::limits() const {
  std::vector<double> out;
  for (const auto& c : constraints) out.push_back(c.limit);
  return out;
}

Scenario parse_scenario(const std::string& json_text, const std::string& name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("scenario '" + name + "': " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scenario '" + name + "' must be an object");
  const std::string where = "scenario '" + name + "'";
  reject_unknown_keys(doc,
                      {"env", "description", "horizon", "gamma", "constraints",
                       "noise_sigma", "params"},
                      where);
  Scenario s;
  s.name = name;
  if (!doc.contains("env")) throw ConfigError(where + ": missing key 'env'");
  read_opt(doc, "env", s.env, where);
  read_opt(doc, "horizon", s.horizon, where);
  read_opt(doc, "gamma", s.gamma, where);
  read_opt(doc, "noise_sigma", s.noise_sigma, where);
  if (doc.contains("params")) {
    if (!doc["params"].is_object()) throw ConfigError(where + ": params must be an object");
    s.params_json = doc["params"].dump();
  }
  if (doc.contains("constraints")) {
    for (const auto& c : doc["constraints"]) {
      reject_unknown_keys(c, {"name", "kind", "limit"}, where + " constraint");
      ConstraintSpec cs;
      read_opt(c, "name", cs.name, where);
      std::string kind = "discounted";
      read_opt(c, "kind", kind, where);
      cs.kind = parse_constraint_kind(kind);
      if (!c.contains("limit")) throw ConfigError(where + ": constraint without 'limit'");
      read_opt(c, "limit", cs.limit, where);
      if (!(cs.limit > 0.0)) throw ConfigError(where + ": constraint limits must be positive");
      s.constraints.push_back(cs);
    }
  }
  if (s.noise_sigma < 0.0) throw ConfigError(where + ": noise_sigma must be non-negative");
  // Build once so structural errors surface at load time.
  make_env(s);
  return s;
}

std::vector<std::filesystem::path> default_scenario_dirs() {
  std::vector<std::filesystem::path> dirs;
  if (const char* env = std::getenv("IPO_SCENARIO_DIR")) dirs.emplace_back(env);
  dirs.emplace_back("scenarios");
#ifdef IPO_SOURCE_SCENARIO_DIR
  dirs.emplace_back(IPO_SOURCE_SCENARIO_DIR);
#endif
  return dirs;
}

Scenario load_scenario(const std::string& name_or_path,
                       const std::vector<std::filesystem::path>& search_dirs) {
  std::filesystem::path path(name_or_path);
  std::string name = path.stem().string();
  if (!std::filesystem::is_regular_file(path)) {
    path.clear();
    for (const auto& dir : search_dirs) {
      const auto candidate = dir / (name_or_path + ".json");
      if (std::filesystem::is_regular_file(candidate)) {
        path = candidate;
        break;
      }
    }
    if (path.empty()) throw ConfigError("scenario '" + name_or_path + "' not found");
    name = name_or_path;
  }
  std::ifstream is(path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_scenario(buf.str(), name);
}

std::unique_ptr<Env> make_env(const Scenario& scenario) {
  auto env = build(scenario);
  if (scenario.noise_sigma > 0.0) env = noisy_wrap(std::move(env), scenario.noise_sigma);
  return env;
}

}  // namespace ipo
