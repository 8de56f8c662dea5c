#include "ipo/rollout.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace ipo {

std::vector<double> Trajectory::cost_series(std::size_t i) const {
  std::vector<double> out(length());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = costs[t * num_constraints + i];
  return out;
}

double Batch::mean_episode_length() const {
  if (num_episodes == 0) return 0.0;
  return static_cast<double>(size()) / static_cast<double>(num_episodes);
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0, discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda, bool terminal) {
  const std::size_t T = rewards.size();
  if (values.size() != T + 1) {
    throw ContractError("gae: expected " + std::to_string(T + 1) + " values, got " +
                        std::to_string(values.size()));
  }
  std::vector<double> adv(T);
  double running = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double next = (t + 1 == T && terminal) ? 0.0 : values[t + 1];
    const double delta = rewards[t] + gamma * next - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

std::vector<double> reward_to_go(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

void standardize(std::span<double> xs) {
  if (xs.empty()) return;
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  for (double& x : xs) x = sd < 1e-12 ? x - mean : (x - mean) / sd;
}

namespace {

Trajectory run_episode(Env& env, const Policy& policy, std::uint64_t episode_seed,
                       double gamma) {
  const CmdpSpec& spec = env.spec();
  Rng rng(derive_seed(episode_seed, 1));
  Trajectory tr;
  tr.obs_dim = spec.obs_dim;
  tr.action_width = policy.action_width();
  tr.num_constraints = spec.num_constraints();

  Tensor obs = env.reset(episode_seed);
  for (;;) {
    const auto state = obs.values();
    SampledAction sa = policy.sample(state, rng);
    StepResult res = env.step(sa.action);
    tr.obs.insert(tr.obs.end(), state.begin(), state.end());
    tr.actions.insert(tr.actions.end(), sa.action.begin(), sa.action.end());
    tr.rewards.push_back(res.reward);
    tr.costs.insert(tr.costs.end(), res.costs.values().begin(), res.costs.values().end());
    tr.behavior_log_prob.push_back(sa.log_prob);
    tr.done.push_back(res.done);
    if (res.done) break;
    obs = std::move(res.obs);
  }

  tr.discounted_return = discounted_return(tr.rewards, gamma);
  for (std::size_t i = 0; i < tr.num_constraints; ++i) {
    tr.constraint_values.push_back(episode_constraint_accumulate(
        tr.cost_series(i), spec.constraint_kinds[i], gamma, spec.horizon));
  }
  return tr;
}

}  // namespace

std::vector<Trajectory> collect_trajectories(const Env& env, const Policy& policy,
                                             std::size_t episodes, std::uint64_t seed,
                                             double gamma, std::size_t workers) {
  if (episodes == 0) throw ContractError("collect: need at least one trajectory");
  if (policy.obs_dim() != env.spec().obs_dim) {
    throw DimensionError("collect: policy and environment observation sizes differ");
  }
  std::vector<Trajectory> out(episodes);
  workers = std::max<std::size_t>(1, std::min(workers, episodes));
  auto work = [&](std::size_t w) {
    auto local = env.clone();
    for (std::size_t k = w; k < episodes; k += workers) {
      out[k] = run_episode(*local, policy, derive_seed(seed, k), gamma);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return out;
}

void cost_advantages(Batch& batch, std::span<const MlpParams> cost_critics,
                     const CmdpSpec& spec, double gamma, double gae_lambda) {
  const std::size_t m = spec.num_constraints();
  if (cost_critics.size() != m) {
    throw ContractError("cost_advantages: one critic per constraint required");
  }
  batch.cost_advantages.assign(m, std::vector<double>(batch.size()));
  batch.cost_targets.assign(m, std::vector<double>(batch.size()));
  for (std::size_t i = 0; i < m; ++i) {
    const bool mean_kind = spec.constraint_kinds[i] == ConstraintKind::mean;
    const double scale = mean_kind ? 1.0 / static_cast<double>(spec.horizon) : 1.0;
    const double discount = mean_kind ? 1.0 : gamma;
    const auto values = value_forward_batch(cost_critics[i], batch.states);
    for (std::size_t e = 0; e < batch.num_episodes; ++e) {
      const std::size_t b = batch.episode_start[e], end = batch.episode_start[e + 1];
      std::vector<double> signal(batch.costs[i].begin() + b, batch.costs[i].begin() + end);
      for (double& c : signal) c *= scale;
      std::vector<double> v(values.begin() + b, values.begin() + end);
      v.push_back(0.0);
      const auto adv = gae(signal, v, discount, gae_lambda, true);
      const auto target = reward_to_go(signal, discount);
      std::copy(adv.begin(), adv.end(), batch.cost_advantages[i].begin() + b);
      std::copy(target.begin(), target.end(), batch.cost_targets[i].begin() + b);
    }
  }
}

Batch make_batch(const std::vector<Trajectory>& trajectories, const CmdpSpec& spec,
                 const CriticSet& critics, double gamma, double gae_lambda,
                 bool with_cost_advantages) {
  if (trajectories.empty()) throw ContractError("make_batch: empty batch");
  const std::size_t m = spec.num_constraints();
  const std::size_t obs_dim = trajectories.front().obs_dim;
  const std::size_t aw = trajectories.front().action_width;

  Batch batch;
  batch.num_episodes = trajectories.size();
  batch.num_constraints = m;
  batch.costs.assign(m, {});
  batch.J_C.assign(m, 0.0);
  std::vector<double> obs, actions;
  batch.episode_start.push_back(0);
  for (const auto& tr : trajectories) {
    obs.insert(obs.end(), tr.obs.begin(), tr.obs.end());
    actions.insert(actions.end(), tr.actions.begin(), tr.actions.end());
    batch.rewards.insert(batch.rewards.end(), tr.rewards.begin(), tr.rewards.end());
    batch.behavior_log_prob.insert(batch.behavior_log_prob.end(),
                                   tr.behavior_log_prob.begin(), tr.behavior_log_prob.end());
    for (std::size_t i = 0; i < m; ++i) {
      const auto series = tr.cost_series(i);
      batch.costs[i].insert(batch.costs[i].end(), series.begin(), series.end());
    }
    batch.episode_start.push_back(batch.rewards.size());
    batch.episode_returns.push_back(tr.discounted_return);
    batch.episode_constraints.push_back(tr.constraint_values);
  }
  const std::size_t n = batch.rewards.size();
  batch.states = Tensor({n, obs_dim}, std::move(obs));
  batch.actions = Tensor({n, aw}, std::move(actions));

  // Batch estimates: plain means over episodes.
  for (double r : batch.episode_returns) batch.J_R += r;
  batch.J_R /= static_cast<double>(batch.num_episodes);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& ec : batch.episode_constraints) batch.J_C[i] += ec[i];
    batch.J_C[i] /= static_cast<double>(batch.num_episodes);
  }

  const auto values = value_forward_batch(critics.reward, batch.states);
  batch.reward_advantages.resize(n);
  batch.reward_targets.resize(n);
  for (std::size_t e = 0; e < batch.num_episodes; ++e) {
    const std::size_t b = batch.episode_start[e], end = batch.episode_start[e + 1];
    std::span<const double> r(batch.rewards.data() + b, end - b);
    std::vector<double> v(values.begin() + b, values.begin() + end);
    v.push_back(0.0);
    const auto adv = gae(r, v, gamma, gae_lambda, true);
    const auto target = reward_to_go(r, gamma);
    std::copy(adv.begin(), adv.end(), batch.reward_advantages.begin() + b);
    std::copy(target.begin(), target.end(), batch.reward_targets.begin() + b);
  }
  standardize(batch.reward_advantages);

  if (with_cost_advantages && m > 0) {
    cost_advantages(batch, critics.costs, spec, gamma, gae_lambda);
  } else {
    batch.cost_advantages.assign(m, std::vector<double>(n, 0.0));
    batch.cost_targets.assign(m, std::vector<double>(n, 0.0));
  }
  return batch;
}

Batch collect(const Env& env, const Policy& policy, const CriticSet& critics,
              const CollectOptions& options) {
  const auto trajectories = collect_trajectories(env, policy, options.episodes, options.seed,
                                                 options.gamma, options.workers);
  return make_batch(trajectories, env.spec(), critics, options.gamma, options.gae_lambda,
                    options.cost_advantages);
}

void dump_trajectories(const std::filesystem::path& path,
                       const std::vector<Trajectory>& trajectories) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write trajectory dump " + path.string());
  if (trajectories.empty()) return;
  const auto& first = trajectories.front();
  os << "episode,t";
  for (std::size_t j = 0; j < first.obs_dim; ++j) os << ",obs_" << j;
  for (std::size_t j = 0; j < first.action_width; ++j) os << ",action_" << j;
  os << ",reward";
  for (std::size_t i = 0; i < first.num_constraints; ++i) os << ",cost_" << i + 1;
  os << ",log_prob,done\n";
  char buf[32];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  };
  for (std::size_t e = 0; e < trajectories.size(); ++e) {
    const auto& tr = trajectories[e];
    for (std::size_t t = 0; t < tr.length(); ++t) {
      os << e << ',' << t;
      for (double x : tr.obs_at(t)) os << ',' << num(x);
      for (std::size_t j = 0; j < tr.action_width; ++j)
        os << ',' << num(tr.actions[t * tr.action_width + j]);
      os << ',' << num(tr.rewards[t]);
      for (std::size_t i = 0; i < tr.num_constraints; ++i)
        os << ',' << num(tr.costs[t * tr.num_constraints + i]);
      os << ',' << num(tr.behavior_log_prob[t]) << ',' << (tr.done[t] ? 1 : 0) << '\n';
    }
  }
}

}  // namespace ipo
