#pragma once

// Constrained-MDP environments.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ipo/autodiff.hpp"
#include "ipo/random.hpp"

namespace ipo {

enum class ConstraintKind { discounted, mean };

ConstraintKind parse_constraint_kind(const std::string& s);
std::string to_string(ConstraintKind kind);

struct ActionSpace {
  bool discrete = false;
  std::size_t dim = 1;  // continuous: vector length; discrete: number of actions
  double lo = -1.0;
  double hi = 1.0;

  static ActionSpace continuous(std::size_t dim, double lo, double hi) {
    return {false, dim, lo, hi};
  }
  static ActionSpace discrete_n(std::size_t n) { return {true, n, 0.0, 0.0}; }
};

struct CmdpSpec {
  std::size_t obs_dim = 0;
  ActionSpace action;
  std::size_t horizon = 1;
  std::vector<ConstraintKind> constraint_kinds;
  std::vector<double> limits;
  double gamma = 0.99;

  std::size_t num_constraints() const { return limits.size(); }
  // Throws ConfigError when an invariant is broken.
  void validate() const;
};

struct StepResult {
  Tensor obs;    // [obs_dim]
  double reward = 0.0;
  Tensor costs;  // [m]
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual const CmdpSpec& spec() const = 0;
  // Reinitializes from the initial-state distribution. The seed fully
  // determines the episode given the action sequence.
  virtual Tensor reset(std::uint64_t seed) = 0;
  // Continuous actions are clamped to the declared box. Throws
  // ContractError when called after the episode has finished.
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
  // Largest attainable magnitude of the discounted return. Used as the
  // default upper bracket when searching the barrier parameter.
  virtual double reward_scale() const = 0;
};

// Discounted: sum_t gamma^t c_t. Mean: (1/horizon) sum_t c_t, where horizon
// is the configured episode limit, not the realized length.
double episode_constraint_accumulate(std::span<const double> costs,
                                     ConstraintKind kind, double gamma,
                                     std::size_t horizon);

// ---------------------------------------------------------------------------
// Mars Rover: grid world, start top-left, goal top-right, fixed holes.

struct MarsRoverParams {
  std::size_t size = 8;
  std::vector<std::array<std::size_t, 2>> holes;  // (row, col)
  double slip = 0.05;  // probability of each perpendicular deviation
  std::size_t horizon = 200;
};

class MarsRover final : public Env {
 public:
  enum Action : std::size_t { up = 0, down = 1, left = 2, right = 3 };

  MarsRover(MarsRoverParams params, CmdpSpec spec);

  const CmdpSpec& spec() const override { return spec_; }
  Tensor reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override;
  double reward_scale() const override;

  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }
  bool is_hole(std::size_t r, std::size_t c) const;

 private:
  Tensor observe() const;

  MarsRoverParams params_;
  CmdpSpec spec_;
  std::vector<bool> hole_mask_;
  Rng rng_;
  std::size_t row_ = 0, col_ = 0, t_ = 0;
  bool done_ = true;
};

// ---------------------------------------------------------------------------
// Point Gather: planar point agent collecting apples while avoiding bombs
// (constraint 1) and optionally mines (constraint 2).

struct PointGatherParams {
  double arena_half = 3.0;
  std::size_t apples = 2;
  std::size_t bombs = 8;
  std::size_t mines = 0;
  double collect_radius = 0.4;
  double speed_scale = 0.5;
  double turn_scale = 0.3;
  double apple_reward = 10.0;
  double spawn_clearance = 1.0;  // minimum object distance from the start
  double object_spacing = 0.8;   // minimum pairwise object distance
  std::size_t horizon = 15;
};

class PointGather final : public Env {
 public:
  struct Object {
    double x = 0.0, y = 0.0;
    int type = 0;  // 0 apple, 1 bomb, 2 mine
    bool alive = true;
  };

  PointGather(PointGatherParams params, CmdpSpec spec);

  const CmdpSpec& spec() const override { return spec_; }
  Tensor reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override;
  double reward_scale() const override;

  const std::vector<Object>& objects() const { return objects_; }
  std::array<double, 3> pose() const { return {x_, y_, heading_}; }

 private:
  Tensor observe() const;

  PointGatherParams params_;
  CmdpSpec spec_;
  Rng rng_;
  std::vector<Object> objects_;
  double x_ = 0.0, y_ = 0.0, heading_ = 0.0;
  std::size_t t_ = 0;
  bool done_ = true;
};

// ---------------------------------------------------------------------------
// Point Circle: reward for counter-clockwise motion along a circle of radius
// r, cost for leaving the strip |x| <= x_lim.

struct PointCircleParams {
  double radius = 10.0;
  double x_limit = 2.5;
  double speed_scale = 1.0;
  double turn_scale = 0.3;
  double start_jitter = 0.1;
  std::size_t horizon = 65;
};

class PointCircle final : public Env {
 public:
  PointCircle(PointCircleParams params, CmdpSpec spec);

  const CmdpSpec& spec() const override { return spec_; }
  Tensor reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override;
  double reward_scale() const override;

  std::array<double, 3> pose() const { return {x_, y_, heading_}; }

 private:
  Tensor observe() const;

  PointCircleParams params_;
  CmdpSpec spec_;
  Rng rng_;
  double x_ = 0.0, y_ = 0.0, heading_ = 0.0, vx_ = 0.0, vy_ = 0.0;
  std::size_t t_ = 0;
  bool done_ = true;
};

// ---------------------------------------------------------------------------
// Executes clamp(action + z) with z ~ N(0, sigma^2) per dimension.

class NoisyAction final : public Env {
 public:
  NoisyAction(std::unique_ptr<Env> inner, double sigma);

  const CmdpSpec& spec() const override { return inner_->spec(); }
  Tensor reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override;
  double reward_scale() const override { return inner_->reward_scale(); }

  double sigma() const { return sigma_; }
  // Action actually passed to the wrapped environment on the last step.
  const std::vector<double>& last_executed() const { return executed_; }

 private:
  std::unique_ptr<Env> inner_;
  double sigma_;
  Rng rng_;
  std::vector<double> executed_;
};

std::unique_ptr<Env> noisy_wrap(std::unique_ptr<Env> env, double sigma);

// ---------------------------------------------------------------------------
// One-step convex CMDP with a known constrained optimum.
//   reward f(a) = 1 - |a - (0.6, 0.6)|^2, a in [-1, 1]^2
//   g1(a) = a1 + a2 - 1 <= 0, g2(a) = a1 - a2 - 0.8 <= 0 (m = 2 only)
// Costs are emitted as a1 + a2 and a1 - a2 against limits 1 and 0.8, so the
// constraint surrogate J - eps equals g_i exactly.

class ConvexBandit final : public Env {
 public:
  explicit ConvexBandit(std::size_t m);

  const CmdpSpec& spec() const override { return spec_; }
  Tensor reset(std::uint64_t seed) override;
  StepResult step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override;
  double reward_scale() const override { return 1.0; }

  static constexpr std::array<double, 2> kTarget{0.6, 0.6};
  static double reward(double a1, double a2);
  // g_i(a); i is zero-based.
  static double constraint(std::size_t i, double a1, double a2);

 private:
  CmdpSpec spec_;
  bool done_ = true;
};

std::unique_ptr<Env> convex_bandit(std::size_t m);

// ---------------------------------------------------------------------------
// Scenario files (JSON). See scenarios/README.md for the schema.

struct ConstraintSpec {
  std::string name;
  ConstraintKind kind = ConstraintKind::discounted;
  double limit = 0.0;
};

struct Scenario {
  std::string name;
  std::string env;  // mars_rover | point_gather | point_circle | convex_bandit
  std::size_t horizon = 0;  // 0: environment default
  double gamma = 0.99;
  std::vector<ConstraintSpec> constraints;
  double noise_sigma = 0.0;
  std::string params_json = "{}";  // env-specific block, kept verbatim

  std::vector<double> limits() const;
};

Scenario parse_scenario(const std::string& json_text, const std::string& name);
// `name_or_path` is a file path or a bare name looked up as
// <dir>/<name>.json in each search directory.
Scenario load_scenario(const std::string& name_or_path,
                       const std::vector<std::filesystem::path>& search_dirs);
std::vector<std::filesystem::path> default_scenario_dirs();
std::unique_ptr<Env> make_env(const Scenario& scenario);

}  // namespace ipo
