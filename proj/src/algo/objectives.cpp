#include <algorithm>
#include <cmath>
#include <numeric>

#include "ipo/algo.hpp"

namespace ipo {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "ipo") return Algorithm::ipo;
  if (name == "pdo") return Algorithm::pdo;
  if (name == "ppo") return Algorithm::ppo;
  throw ConfigError("unknown algorithm '" + name + "' (expected ipo, pdo or ppo)");
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::ipo: return "ipo";
    case Algorithm::pdo: return "pdo";
    case Algorithm::ppo: return "ppo";
  }
  return "?";
}

// ------------------------------------------------------------- barrier

BarrierConfig BarrierConfig::for_limits(double t, std::span<const double> limits) {
  BarrierConfig cfg;
  cfg.t = t;
  double smallest = 1.0;
  if (!limits.empty()) smallest = *std::min_element(limits.begin(), limits.end());
  cfg.margin = std::max(0.01 * smallest, 1e-4);
  return cfg;
}

void BarrierConfig::validate() const {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("barrier: t must be positive");
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw ConfigError("barrier: margin must be positive");
  }
}

double barrier(double x, const BarrierConfig& cfg) {
  const double d = cfg.margin;
  if (x <= -d) return std::log(-x) / cfg.t;
  return (std::log(d) - (x + d) / d) / cfg.t;
}

double barrier_slope(double x, const BarrierConfig& cfg) {
  const double d = cfg.margin;
  if (x <= -d) return 1.0 / (cfg.t * x);
  return -1.0 / (cfg.t * d);
}

Var barrier(Var x, const BarrierConfig& cfg) {
  const double d = cfg.margin;
  const double xv = x.value().item();
  if (xv <= -d) return log(-x) * (1.0 / cfg.t);
  return (std::log(d) - 1.0) / cfg.t + x * (-1.0 / (cfg.t * d));
}

// ---------------------------------------------------------- objectives

SurrogateBatch SurrogateBatch::from(const Batch& batch, std::span<const double> limits,
                                    std::span<const std::size_t> index) {
  const std::size_t n = index.size();
  const std::size_t od = batch.states.cols();
  const std::size_t aw = batch.actions.cols();
  const std::size_t m = batch.num_constraints;
  if (limits.size() != m) throw DimensionError("surrogate: one limit per constraint");

  SurrogateBatch b;
  std::vector<double> s(n * od), a(n * aw);
  const auto sv = batch.states.values();
  const auto av = batch.actions.values();
  b.behavior_log_prob.resize(n);
  b.advantages.resize(n);
  b.cost_advantages.assign(m, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = index[k];
    std::copy_n(sv.begin() + r * od, od, s.begin() + k * od);
    std::copy_n(av.begin() + r * aw, aw, a.begin() + k * aw);
    b.behavior_log_prob[k] = batch.behavior_log_prob[r];
    b.advantages[k] = batch.reward_advantages[r];
    for (std::size_t i = 0; i < m; ++i) b.cost_advantages[i][k] = batch.cost_advantages[i][r];
  }
  b.states = Tensor({n, od}, std::move(s));
  b.actions = Tensor({n, aw}, std::move(a));
  b.J_emp = batch.J_C;
  b.limits.assign(limits.begin(), limits.end());
  return b;
}

SurrogateBatch SurrogateBatch::from(const Batch& batch, std::span<const double> limits) {
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), 0);
  return from(batch, limits, all);
}

Var ratios(const Policy& policy, std::span<const Var> bound, const SurrogateBatch& b) {
  Tape& tape = bound.front().tape();
  Var lp = policy.log_prob(bound, b.states, b.actions);
  return exp(lp - tape.constant(Tensor::vector(b.behavior_log_prob)));
}

Var clip_surrogate(Var ratio, const SurrogateBatch& b, double clip_eps) {
  Tape& tape = ratio.tape();
  Var adv = tape.constant(Tensor::vector(b.advantages));
  return mean(min_pair(ratio * adv, clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv));
}

Var constraint_surrogate(Var ratio, const SurrogateBatch& b, std::size_t i) {
  Tape& tape = ratio.tape();
  Var adv = tape.constant(Tensor::vector(b.cost_advantages.at(i)));
  return mean(ratio * adv) + (b.J_emp.at(i) - b.limits.at(i));
}

ObjectiveTerms ipo_objective(Var ratio, const SurrogateBatch& b, double clip_eps,
                             const BarrierConfig& cfg) {
  ObjectiveTerms out;
  out.clip = clip_surrogate(ratio, b, clip_eps);
  out.objective = out.clip;
  for (std::size_t i = 0; i < b.limits.size(); ++i) {
    Var j = constraint_surrogate(ratio, b, i);
    out.constraints.push_back(j);
    out.objective = out.objective + barrier(j, cfg);
  }
  return out;
}

ObjectiveTerms pdo_objective(Var ratio, const SurrogateBatch& b, double clip_eps,
                             std::span<const double> lambda) {
  if (lambda.size() != b.limits.size()) {
    throw DimensionError("pdo: one multiplier per constraint");
  }
  ObjectiveTerms out;
  out.clip = clip_surrogate(ratio, b, clip_eps);
  out.objective = out.clip;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0) throw ContractError("pdo: negative multiplier");
    if (lambda[i] == 0.0) continue;
    Var j = constraint_surrogate(ratio, b, i);
    out.constraints.push_back(j);
    out.objective = out.objective - lambda[i] * j;
  }
  return out;
}

std::vector<double> pdo_dual_update(std::span<const double> lambda,
                                    std::span<const double> J_emp,
                                    std::span<const double> limits, double lr) {
  if (lambda.size() != J_emp.size() || lambda.size() != limits.size()) {
    throw DimensionError("pdo_dual_update: size mismatch");
  }
  std::vector<double> out(lambda.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(0.0, lambda[i] + lr * (J_emp[i] - limits[i]));
    if (!(out[i] >= 0.0)) throw NumericError("pdo_dual_update: non-finite multiplier");
  }
  return out;
}

}  // namespace ipo
