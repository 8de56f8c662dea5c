#pragma once

// Policy optimization: clipped surrogate (PPO), log-barrier objective (IPO),
// Lagrangian baseline (PDO), the convex duality-gap check and the search
// over the barrier parameter t.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipo/autodiff.hpp"
#include "ipo/envs.hpp"
#include "ipo/nn.hpp"
#include "ipo/rollout.hpp"

namespace ipo {

enum class Algorithm { ipo, pdo, ppo };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

// ---------------------------------------------------------------------------
// Barrier

struct BarrierConfig {
  double t = 20.0;
  double margin = 1e-3;  // delta_b

  // margin = max(0.01 * min(limits), 1e-4)
  static BarrierConfig for_limits(double t, std::span<const double> limits);
  void validate() const;
};

// log(-x)/t for x <= -margin; linear continuation with matching value and
// slope beyond that.
double barrier(double x, const BarrierConfig& cfg);
double barrier_slope(double x, const BarrierConfig& cfg);
Var barrier(Var x, const BarrierConfig& cfg);

// ---------------------------------------------------------------------------
// Objectives on one (mini)batch. All return scalars to be maximized.

struct SurrogateBatch {
  Tensor states;
  Tensor actions;
  std::vector<double> behavior_log_prob;
  std::vector<double> advantages;
  std::vector<std::vector<double>> cost_advantages;  // [m][n]
  std::vector<double> J_emp;   // full-batch empirical constraint values
  std::vector<double> limits;  // epsilon_i

  std::size_t size() const { return behavior_log_prob.size(); }
  // Rows `index` of a full batch.
  static SurrogateBatch from(const Batch& batch, std::span<const double> limits,
                             std::span<const std::size_t> index);
  static SurrogateBatch from(const Batch& batch, std::span<const double> limits);
};

// Importance ratios exp(log_prob - behavior_log_prob).
Var ratios(const Policy& policy, std::span<const Var> bound, const SurrogateBatch& b);

// mean_t min(r A, clip(r, 1 - eps, 1 + eps) A)
Var clip_surrogate(Var ratio, const SurrogateBatch& b, double clip_eps);
// J_emp_i + mean_t(r A^C_i) - eps_i
Var constraint_surrogate(Var ratio, const SurrogateBatch& b, std::size_t i);

struct ObjectiveTerms {
  Var objective;
  Var clip;
  std::vector<Var> constraints;  // J-hat per constraint
};

ObjectiveTerms ipo_objective(Var ratio, const SurrogateBatch& b, double clip_eps,
                             const BarrierConfig& cfg);
// Terms with lambda_i == 0 are skipped, so a zero multiplier reproduces the
// clipped surrogate exactly.
ObjectiveTerms pdo_objective(Var ratio, const SurrogateBatch& b, double clip_eps,
                             std::span<const double> lambda);

// Projected dual ascent: max(0, lambda + lr (J - eps)).
std::vector<double> pdo_dual_update(std::span<const double> lambda,
                                    std::span<const double> J_emp,
                                    std::span<const double> limits, double lr);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  Algorithm algorithm = Algorithm::ipo;
  std::vector<double> limits;  // one per constraint
  double t = 20.0;
  double barrier_margin = 0.0;  // 0: derived from the limits
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t epochs = 10;
  std::size_t minibatch = 64;
  double policy_lr = 3e-4;
  double critic_lr = 1e-3;
  std::size_t iterations = 300;
  double kl_stop = 0.015;
  std::size_t episodes = 30;
  std::vector<std::size_t> hidden{64, 64};
  double lambda_init = 0.01;
  double lambda_lr = 0.01;
  bool freeze_lambda = false;
  std::size_t workers = 1;
  bool record_wall_time = false;

  void validate() const;
  BarrierConfig barrier_config() const;
};

struct IterationMetrics {
  std::size_t iteration = 0;
  std::size_t trajectories = 0;  // cumulative
  double J_R = 0.0;
  std::vector<double> J_C;
  std::vector<double> J_C_ema;
  double mean_episode_length = 0.0;
  double L_clip = 0.0;  // full batch, after the update
  std::optional<double> barrier_sum;
  double approx_kl = 0.0;
  std::size_t epochs_run = 0;
  std::vector<double> lambda;  // PDO only, after the dual update
  std::optional<double> wall_time_s;
};

struct TrainResult {
  std::vector<IterationMetrics> metrics;
  Policy policy;
  CriticSet critics;
  std::vector<double> lambda;
};

// Thrown when a loss, gradient or parameter becomes non-finite. `dump` holds
// a plain-text snapshot of the offending iteration.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::string dump)
      : NumericError(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

using IterationCallback = std::function<void(const IterationMetrics&)>;

// The policy `train` starts from for this seed.
Policy initial_policy(const TrainConfig& cfg, const CmdpSpec& spec, std::uint64_t seed);

TrainResult train(const TrainConfig& cfg, const Env& env, std::uint64_t seed,
                  const IterationCallback& on_iteration = {});

// Mean J_R / J_C of `episodes` rollouts with the stochastic policy.
struct Evaluation {
  double J_R = 0.0;
  std::vector<double> J_C;
  double mean_episode_length = 0.0;
};
Evaluation evaluate(const Policy& policy, const Env& env, std::size_t episodes,
                    std::uint64_t seed, double gamma);

// ---------------------------------------------------------------------------
// Duality gap on the convex bandit

struct DualityGapResult {
  std::size_t m = 0;
  double t = 0.0;
  std::size_t resolution = 0;
  double p_star = 0.0;
  double barrier_value = 0.0;  // f at the barrier optimum
  double gap = 0.0;
  double bound = 0.0;           // m / t
  double grid_tolerance = 0.0;  // discretization allowance
  std::array<double, 2> a_star{};
  std::array<double, 2> a_barrier{};
  std::vector<double> multipliers;  // -1 / (t g_i(a_barrier))
  bool pass = false;
};

DualityGapResult duality_gap_check(std::size_t m, double t, std::size_t resolution);

// ---------------------------------------------------------------------------
// Search over t

struct Probe {
  double t = 0.0;
  bool feasible = false;
  double J_R = 0.0;
  std::vector<double> J_C;
};

using ProbeFn = std::function<Probe(double t)>;

struct TSearchResult {
  bool found = false;
  double t = 0.0;  // largest feasible probed t
  double lo = 0.0, hi = 0.0;
  std::vector<Probe> probes;
  std::string message;
};

// Bisection: feasible midpoints move the bracket right, infeasible ones
// left. Stops when hi - lo <= tol or after `budget` probes.
TSearchResult t_search(const ProbeFn& probe, double t_lo, double t_hi, std::size_t budget,
                       double tol);

// Probe that trains for cfg.iterations and judges the final batch
// constraint values against cfg.limits.
ProbeFn training_probe(const TrainConfig& cfg, const Env& env, std::uint64_t seed);

}  // namespace ipo
