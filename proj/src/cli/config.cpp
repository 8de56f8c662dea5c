#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipo/cli.hpp"

namespace ipo::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError(key + ": " + what);
}

double as_double(const json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "expected a number, got " + j.dump());
  return j.get<double>();
}

std::uint64_t as_uint(const json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d))) {
      return static_cast<std::uint64_t>(d);
    }
  }
  bad(key, "expected a non-negative integer, got " + j.dump());
}

std::string as_string(const json& j, const std::string& key) {
  if (!j.is_string()) bad(key, "expected a string, got " + j.dump());
  return j.get<std::string>();
}

bool as_bool(const json& j, const std::string& key) {
  if (!j.is_boolean()) bad(key, "expected true or false, got " + j.dump());
  return j.get<bool>();
}

const json& as_array(const json& j, const std::string& key) {
  if (!j.is_array()) bad(key, "expected a list, got " + j.dump());
  return j;
}

struct Field {
  std::string key;
  bool list;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <class T>
Field number(const std::string& key, T RunConfig::*member) {
  return {key, false, [member](const RunConfig& c) { return json(c.*member); },
          [key, member](RunConfig& c, const json& j) {
            if constexpr (std::is_same_v<T, double>) {
              c.*member = as_double(j, key);
            } else {
              c.*member = static_cast<T>(as_uint(j, key));
            }
          }};
}

Field optional_number(const std::string& key, std::optional<double> RunConfig::*member) {
  return {key, false,
          [member](const RunConfig& c) { return (c.*member) ? json(*(c.*member)) : json(); },
          [key, member](RunConfig& c, const json& j) {
            if (j.is_null()) {
              c.*member = std::nullopt;
            } else {
              c.*member = as_double(j, key);
            }
          }};
}

Field text(const std::string& key, std::string RunConfig::*member) {
  return {key, false, [member](const RunConfig& c) { return json(c.*member); },
          [key, member](RunConfig& c, const json& j) { c.*member = as_string(j, key); }};
}

Field flag(const std::string& key, bool RunConfig::*member) {
  return {key, false, [member](const RunConfig& c) { return json(c.*member); },
          [key, member](RunConfig& c, const json& j) { c.*member = as_bool(j, key); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("algorithm", &RunConfig::algorithm));
    f.push_back(text("scenario", &RunConfig::scenario));
    f.push_back({"seeds", true, [](const RunConfig& c) { return json(c.seeds); },
                 [](RunConfig& c, const json& j) {
                   c.seeds.clear();
                   for (const auto& v : as_array(j, "seeds")) c.seeds.push_back(as_uint(v, "seeds"));
                 }});
    f.push_back(text("output_dir", &RunConfig::output_dir));
    f.push_back(optional_number("noise_sigma", &RunConfig::noise_sigma));
    f.push_back(optional_number("gamma", &RunConfig::gamma));
    f.push_back({"limits", true,
                 [](const RunConfig& c) { return c.limits ? json(*c.limits) : json(); },
                 [](RunConfig& c, const json& j) {
                   if (j.is_null()) {
                     c.limits = std::nullopt;
                     return;
                   }
                   std::vector<double> v;
                   for (const auto& x : as_array(j, "limits")) v.push_back(as_double(x, "limits"));
                   c.limits = v;
                 }});
    f.push_back(number("t", &RunConfig::t));
    f.push_back(number("barrier_margin", &RunConfig::barrier_margin));
    f.push_back(number("clip", &RunConfig::clip));
    f.push_back(number("gae_lambda", &RunConfig::gae_lambda));
    f.push_back(number("epochs", &RunConfig::epochs));
    f.push_back(number("minibatch", &RunConfig::minibatch));
    f.push_back(number("policy_lr", &RunConfig::policy_lr));
    f.push_back(number("critic_lr", &RunConfig::critic_lr));
    f.push_back(number("iterations", &RunConfig::iterations));
    f.push_back(number("kl_stop", &RunConfig::kl_stop));
    f.push_back(number("episodes", &RunConfig::episodes));
    f.push_back({"hidden", true, [](const RunConfig& c) { return json(c.hidden); },
                 [](RunConfig& c, const json& j) {
                   c.hidden.clear();
                   for (const auto& v : as_array(j, "hidden")) {
                     c.hidden.push_back(static_cast<std::size_t>(as_uint(v, "hidden")));
                   }
                 }});
    f.push_back(number("lambda_init", &RunConfig::lambda_init));
    f.push_back(number("lambda_lr", &RunConfig::lambda_lr));
    f.push_back(flag("freeze_lambda", &RunConfig::freeze_lambda));
    f.push_back(number("workers", &RunConfig::workers));
    f.push_back(flag("record_wall_time", &RunConfig::record_wall_time));
    f.push_back(number("log_every", &RunConfig::log_every));
    f.push_back({"algorithms", true, [](const RunConfig& c) { return json(c.algorithms); },
                 [](RunConfig& c, const json& j) {
                   c.algorithms.clear();
                   for (const auto& v : as_array(j, "algorithms")) {
                     c.algorithms.push_back(as_string(v, "algorithms"));
                   }
                 }});
    f.push_back(number("num_seeds", &RunConfig::num_seeds));
    f.push_back(number("t_lo", &RunConfig::t_lo));
    f.push_back(optional_number("t_hi", &RunConfig::t_hi));
    f.push_back(number("budget", &RunConfig::budget));
    f.push_back(number("t_tol", &RunConfig::t_tol));
    f.push_back(number("probe_iterations", &RunConfig::probe_iterations));
    f.push_back(text("checkpoint", &RunConfig::checkpoint));
    f.push_back(number("eval_episodes", &RunConfig::eval_episodes));
    return f;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError(key + ": unknown configuration key");
}

json parse_value(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  return j.is_discarded() ? json(text) : j;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) field(key).set(cfg, value);
  return cfg;
}

std::string serialize(const RunConfig& cfg) {
  json doc = json::object();
  for (const auto& f : fields()) doc[f.key] = f.get(cfg);
  return doc.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field& f = field(key);
  json j = parse_value(value);
  if (f.list && !j.is_array() && !j.is_null()) {
    json arr = json::array();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) arr.push_back(parse_value(item));
    }
    j = arr;
  }
  f.set(cfg, j);
}

Scenario resolve_scenario(const RunConfig& cfg) {
  if (cfg.scenario.empty()) throw ConfigError("scenario: required key is missing");
  Scenario s = load_scenario(cfg.scenario, default_scenario_dirs());
  if (cfg.gamma) s.gamma = *cfg.gamma;
  if (cfg.noise_sigma) {
    if (*cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma: must be non-negative");
    s.noise_sigma = *cfg.noise_sigma;
  }
  if (cfg.limits) {
    if (cfg.limits->size() != s.constraints.size()) {
      throw ConfigError("limits: scenario '" + s.name + "' has " +
                        std::to_string(s.constraints.size()) + " constraints");
    }
    for (std::size_t i = 0; i < s.constraints.size(); ++i) {
      s.constraints[i].limit = (*cfg.limits)[i];
    }
  }
  return s;
}

TrainConfig make_train_config(const RunConfig& cfg, const Scenario& scenario) {
  TrainConfig t;
  t.algorithm = parse_algorithm(cfg.algorithm);
  t.limits = scenario.limits();
  t.gamma = scenario.gamma;
  t.t = cfg.t;
  t.barrier_margin = cfg.barrier_margin;
  t.clip = cfg.clip;
  t.gae_lambda = cfg.gae_lambda;
  t.epochs = cfg.epochs;
  t.minibatch = cfg.minibatch;
  t.policy_lr = cfg.policy_lr;
  t.critic_lr = cfg.critic_lr;
  t.iterations = cfg.iterations;
  t.kl_stop = cfg.kl_stop;
  t.episodes = cfg.episodes;
  t.hidden = cfg.hidden;
  t.lambda_init = cfg.lambda_init;
  t.lambda_lr = cfg.lambda_lr;
  t.freeze_lambda = cfg.freeze_lambda;
  t.workers = cfg.workers;
  t.record_wall_time = cfg.record_wall_time;
  t.validate();
  return t;
}

std::filesystem::path output_root(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("IPO_OUTPUT_ROOT"); root && *root) {
    return std::filesystem::path(root) / dir;
  }
  return dir;
}

}  // namespace ipo::cli
