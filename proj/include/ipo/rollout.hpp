#pragma once

// Trajectory collection and advantage / return estimation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ipo/envs.hpp"
#include "ipo/nn.hpp"

namespace ipo {

struct Trajectory {
  std::size_t obs_dim = 0;
  std::size_t action_width = 0;
  std::size_t num_constraints = 0;

  // Row-major per-timestep records; obs[t] is the state the action was
  // taken in.
  std::vector<double> obs;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> costs;  // [t * m + i]
  std::vector<double> behavior_log_prob;
  std::vector<bool> done;

  double discounted_return = 0.0;
  std::vector<double> constraint_values;  // one per constraint

  std::size_t length() const { return rewards.size(); }
  std::span<const double> obs_at(std::size_t t) const {
    return std::span(obs).subspan(t * obs_dim, obs_dim);
  }
  std::vector<double> cost_series(std::size_t i) const;
};

// Flattened batch of complete episodes plus everything the objectives need.
struct Batch {
  std::size_t num_episodes = 0;
  std::size_t num_constraints = 0;

  Tensor states;   // [n x obs_dim]
  Tensor actions;  // [n x action_width]
  std::vector<double> behavior_log_prob;
  std::vector<double> rewards;
  std::vector<std::vector<double>> costs;  // [m][n]
  std::vector<std::size_t> episode_start;  // N+1 offsets into the flat arrays

  std::vector<double> reward_advantages;  // standardized
  std::vector<std::vector<double>> cost_advantages;  // [m][n], raw scale
  std::vector<double> reward_targets;
  std::vector<std::vector<double>> cost_targets;

  std::vector<double> episode_returns;
  std::vector<std::vector<double>> episode_constraints;  // [episode][i]
  double J_R = 0.0;
  std::vector<double> J_C;

  std::size_t size() const { return rewards.size(); }
  double mean_episode_length() const;
};

// sum_t gamma^t r_t
double discounted_return(std::span<const double> rewards, double gamma);

// Generalized advantage estimation over one episode. `values` has one more
// entry than `rewards`; when `terminal` is set the bootstrap value is taken
// as zero regardless of values.back().
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda, bool terminal);

// Per-timestep discounted sum of the remaining signal.
std::vector<double> reward_to_go(std::span<const double> rewards, double gamma);

// In-place (x - mean) / std with the population standard deviation.
// Degenerate inputs (std below 1e-12) are only centered.
void standardize(std::span<double> xs);

struct CollectOptions {
  std::size_t episodes = 30;
  std::uint64_t seed = 0;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t workers = 1;
  bool cost_advantages = true;
};

// Runs complete episodes under a frozen policy. Episode k is seeded with
// derive_seed(seed, k) so results do not depend on worker scheduling.
std::vector<Trajectory> collect_trajectories(const Env& env, const Policy& policy,
                                             std::size_t episodes, std::uint64_t seed,
                                             double gamma, std::size_t workers = 1);

// Flattens trajectories and computes advantages, value targets and the
// batch constraint estimates.
Batch make_batch(const std::vector<Trajectory>& trajectories, const CmdpSpec& spec,
                 const CriticSet& critics, double gamma, double gae_lambda,
                 bool with_cost_advantages = true);

Batch collect(const Env& env, const Policy& policy, const CriticSet& critics,
              const CollectOptions& options);

// Cost advantages and value targets. Discounted constraints: GAE on costs
// with gamma. Mean constraints: GAE on costs / horizon with discount one.
void cost_advantages(Batch& batch, std::span<const MlpParams> cost_critics,
                     const CmdpSpec& spec, double gamma, double gae_lambda);

// One CSV row per timestep: episode,t,obs_*,action_*,reward,cost_*,log_prob,done
void dump_trajectories(const std::filesystem::path& path,
                       const std::vector<Trajectory>& trajectories);

}  // namespace ipo
