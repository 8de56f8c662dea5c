#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ipo/algo.hpp"

namespace ipo {

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (!(clip > 0.0 && clip < 1.0)) fail("clip", "must lie in (0, 1)");
  for (double e : limits) {
    if (!(e > 0.0) || !std::isfinite(e)) fail("limits", "every limit must be positive");
  }
  if (!(t > 0.0) || !std::isfinite(t)) fail("t", "must be positive");
  if (barrier_margin < 0.0) fail("barrier_margin", "must be non-negative");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda", "must lie in [0, 1]");
  if (epochs == 0) fail("epochs", "must be at least 1");
  if (minibatch == 0) fail("minibatch", "must be at least 1");
  if (!(policy_lr > 0.0)) fail("policy_lr", "must be positive");
  if (!(critic_lr > 0.0)) fail("critic_lr", "must be positive");
  if (!(kl_stop > 0.0)) fail("kl_stop", "must be positive");
  if (episodes == 0) fail("episodes", "must be at least 1");
  if (hidden.empty()) fail("hidden", "need at least one hidden layer");
  for (std::size_t h : hidden) {
    if (h == 0) fail("hidden", "layer widths must be positive");
  }
  if (!(lambda_init >= 0.0)) fail("lambda_init", "must be non-negative");
  if (!(lambda_lr > 0.0)) fail("lambda_lr", "must be positive");
  if (workers == 0) fail("workers", "must be at least 1");
}

BarrierConfig TrainConfig::barrier_config() const {
  BarrierConfig cfg = BarrierConfig::for_limits(t, limits);
  if (barrier_margin > 0.0) cfg.margin = barrier_margin;
  return cfg;
}

namespace {

// Seed streams derived from the run seed.
enum Stream : std::uint64_t {
  kPolicyInit = 1,
  kCriticInit = 2,
  kCollect = 3,
  kPolicyShuffle = 4,
  kCriticShuffle = 5,
};

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

std::vector<std::span<const std::size_t>> split(const std::vector<std::size_t>& order,
                                                std::size_t size) {
  std::vector<std::span<const std::size_t>> out;
  for (std::size_t b = 0; b < order.size(); b += size) {
    out.emplace_back(order.data() + b, std::min(size, order.size() - b));
  }
  return out;
}

bool all_finite(std::span<const Tensor* const> params) {
  for (const Tensor* p : params) {
    for (double v : p->values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::vector<double> batch_log_prob(const Policy& policy, const Tensor& states,
                                   const Tensor& actions) {
  Tape tape;
  const auto params = policy.parameters();
  std::vector<Var> bound;
  for (const Tensor* p : params) bound.push_back(tape.constant(*p));
  Var lp = policy.log_prob(bound, states, actions);
  const auto v = lp.value().values();
  return {v.begin(), v.end()};
}

double approx_kl(std::span<const double> behavior, std::span<const double> current) {
  double s = 0.0;
  for (std::size_t k = 0; k < behavior.size(); ++k) s += behavior[k] - current[k];
  return s / static_cast<double>(behavior.size());
}

// Mean squared error regression of a critic onto fixed targets.
void fit_critic(MlpParams& critic, Adam& opt, const Tensor& states,
                std::span<const double> targets, std::size_t epochs, std::size_t minibatch,
                Rng& rng) {
  const std::size_t n = states.rows(), od = states.cols();
  const auto sv = states.values();
  auto params = critic.parameters();
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = permutation(n, rng);
    for (auto idx : split(order, minibatch)) {
      std::vector<double> s(idx.size() * od), y(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        std::copy_n(sv.begin() + idx[k] * od, od, s.begin() + k * od);
        y[k] = targets[idx[k]];
      }
      Tape tape;
      auto bound = bind_params(tape, params);
      Var pred = mlp_forward(bound, tape.constant(Tensor({idx.size(), od}, std::move(s))));
      Var loss = mean(square(pred - tape.constant(Tensor({idx.size(), 1}, std::move(y)))));
      opt.step(params, tape.backward(loss));
    }
  }
}

std::string describe(const TrainConfig& cfg, std::size_t iteration, std::size_t epoch,
                     const Batch& batch, const Policy& policy,
                     const std::vector<double>& lambda) {
  std::ostringstream os;
  os.precision(17);
  os << "algorithm " << to_string(cfg.algorithm) << "\niteration " << iteration
     << "\nepoch " << epoch << "\nbatch_steps " << batch.size() << "\nJ_R " << batch.J_R
     << '\n';
  for (std::size_t i = 0; i < batch.J_C.size(); ++i) {
    os << "J_C_" << i + 1 << ' ' << batch.J_C[i] << '\n';
  }
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    os << "lambda_" << i + 1 << ' ' << lambda[i] << '\n';
  }
  const auto params = policy.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    double sq = 0.0, worst = 0.0;
    std::size_t bad = 0;
    for (double v : params[p]->values()) {
      if (!std::isfinite(v)) {
        ++bad;
        continue;
      }
      sq += v * v;
      worst = std::max(worst, std::abs(v));
    }
    os << "param_" << p << " norm " << std::sqrt(sq) << " max_abs " << worst
       << " non_finite " << bad << '\n';
  }
  return os.str();
}

}  // namespace

Policy initial_policy(const TrainConfig& cfg, const CmdpSpec& spec, std::uint64_t seed) {
  return Policy::make(spec.obs_dim, cfg.hidden, spec.action.dim, spec.action.discrete,
                      derive_seed(seed, kPolicyInit));
}

TrainResult train(const TrainConfig& cfg, const Env& env, std::uint64_t seed,
                  const IterationCallback& on_iteration) {
  cfg.validate();
  const CmdpSpec& spec = env.spec();
  const std::size_t m = spec.num_constraints();
  if (cfg.limits.size() != m) {
    throw ConfigError("limits: scenario has " + std::to_string(m) + " constraints, config " +
                      std::to_string(cfg.limits.size()));
  }
  const BarrierConfig bcfg = cfg.barrier_config();
  bcfg.validate();
  const bool uses_costs = cfg.algorithm != Algorithm::ppo && m > 0;
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  result.policy = initial_policy(cfg, spec, seed);
  result.critics = CriticSet::make(spec.obs_dim, cfg.hidden, m, derive_seed(seed, kCriticInit));
  if (cfg.algorithm == Algorithm::pdo) result.lambda.assign(m, cfg.lambda_init);

  Policy& policy = result.policy;
  Adam policy_opt(cfg.policy_lr);
  Adam reward_opt(cfg.critic_lr);
  std::vector<Adam> cost_opts(m, Adam(cfg.critic_lr));
  std::vector<double> ema;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    CollectOptions copt;
    copt.episodes = cfg.episodes;
    copt.seed = derive_seed(derive_seed(seed, kCollect), it);
    copt.gamma = cfg.gamma;
    copt.gae_lambda = cfg.gae_lambda;
    copt.workers = cfg.workers;
    copt.cost_advantages = uses_costs;
    const Batch batch = collect(env, policy, result.critics, copt);

    IterationMetrics row;
    row.iteration = it;
    row.trajectories = (it + 1) * cfg.episodes;
    row.J_R = batch.J_R;
    row.J_C = batch.J_C;
    row.mean_episode_length = batch.mean_episode_length();
    if (ema.empty()) {
      ema = batch.J_C;
    } else {
      for (std::size_t i = 0; i < m; ++i) ema[i] = 0.9 * ema[i] + 0.1 * batch.J_C[i];
    }
    row.J_C_ema = ema;

    auto params = policy.parameters();
    Rng shuffle(derive_seed(derive_seed(seed, kPolicyShuffle), it));
    std::size_t epoch = 0;
    try {
      for (; epoch < cfg.epochs; ++epoch) {
        const auto order = permutation(batch.size(), shuffle);
        for (auto idx : split(order, cfg.minibatch)) {
          const SurrogateBatch mb = SurrogateBatch::from(batch, cfg.limits, idx);
          Tape tape;
          auto bound = bind_params(tape, params);
          Var r = ratios(policy, bound, mb);
          Var objective;
          switch (cfg.algorithm) {
            case Algorithm::ipo: objective = ipo_objective(r, mb, cfg.clip, bcfg).objective; break;
            case Algorithm::pdo:
              objective = pdo_objective(r, mb, cfg.clip, result.lambda).objective;
              break;
            case Algorithm::ppo: objective = clip_surrogate(r, mb, cfg.clip); break;
          }
          Var loss = -objective;
          if (!std::isfinite(loss.value().item())) throw NumericError("non-finite loss");
          policy_opt.step(params, tape.backward(loss));
          policy.clamp_log_std();
          if (!all_finite(params)) throw NumericError("non-finite policy parameter");
        }
        const auto current = batch_log_prob(policy, batch.states, batch.actions);
        row.approx_kl = approx_kl(batch.behavior_log_prob, current);
        if (!std::isfinite(row.approx_kl)) throw NumericError("non-finite KL estimate");
        if (row.approx_kl > cfg.kl_stop) {
          ++epoch;
          break;
        }
      }
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string("training aborted: ") + e.what(),
                            describe(cfg, it, epoch, batch, policy, result.lambda));
    }
    row.epochs_run = epoch;

    {
      const SurrogateBatch full = SurrogateBatch::from(batch, cfg.limits);
      Tape tape;
      std::vector<Var> bound;
      for (const Tensor* p : policy.parameters()) bound.push_back(tape.constant(*p));
      Var r = ratios(policy, bound, full);
      row.L_clip = clip_surrogate(r, full, cfg.clip).value().item();
      if (cfg.algorithm == Algorithm::ipo) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          s += barrier(constraint_surrogate(r, full, i).value().item(), bcfg);
        }
        row.barrier_sum = s;
      }
    }

    for (std::size_t c = 0; c <= (uses_costs ? m : 0); ++c) {
      Rng crng(derive_seed(derive_seed(seed, kCriticShuffle + c), it));
      if (c == 0) {
        fit_critic(result.critics.reward, reward_opt, batch.states, batch.reward_targets,
                   cfg.epochs, cfg.minibatch, crng);
      } else {
        fit_critic(result.critics.costs[c - 1], cost_opts[c - 1], batch.states,
                   batch.cost_targets[c - 1], cfg.epochs, cfg.minibatch, crng);
      }
    }

    if (cfg.algorithm == Algorithm::pdo) {
      if (!cfg.freeze_lambda) {
        result.lambda = pdo_dual_update(result.lambda, batch.J_C, cfg.limits, cfg.lambda_lr);
      }
      row.lambda = result.lambda;
    }
    if (cfg.record_wall_time) {
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (on_iteration) on_iteration(row);
    result.metrics.push_back(std::move(row));
  }
  return result;
}

Evaluation evaluate(const Policy& policy, const Env& env, std::size_t episodes,
                    std::uint64_t seed, double gamma) {
  const auto trs = collect_trajectories(env, policy, episodes, seed, gamma);
  Evaluation ev;
  ev.J_C.assign(env.spec().num_constraints(), 0.0);
  double steps = 0.0;
  for (const auto& tr : trs) {
    ev.J_R += tr.discounted_return;
    for (std::size_t i = 0; i < ev.J_C.size(); ++i) ev.J_C[i] += tr.constraint_values[i];
    steps += static_cast<double>(tr.length());
  }
  const double n = static_cast<double>(trs.size());
  ev.J_R /= n;
  for (double& j : ev.J_C) j /= n;
  ev.mean_episode_length = steps / n;
  return ev;
}

}  // namespace ipo
