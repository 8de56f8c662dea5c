#include <algorithm>
#include <cmath>

#include "ipo/envs.hpp"

namespace ipo {

namespace {

struct Move {
  int dr, dc;
};

constexpr std::array<Move, 4> kMoves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

}  // namespace

MarsRover::MarsRover(MarsRoverParams params, CmdpSpec spec)
    : params_(std::move(params)), spec_(std::move(spec)) {
  if (params_.size < 2) throw ConfigError("mars_rover: grid size must be at least 2");
  if (params_.slip < 0.0 || params_.slip > 0.5) {
    throw ConfigError("mars_rover: slip must lie in [0, 0.5]");
  }
  const std::size_t n = params_.size;
  hole_mask_.assign(n * n, false);
  for (const auto& [r, c] : params_.holes) {
    if (r >= n || c >= n) throw ConfigError("mars_rover: hole outside the grid");
    if ((r == 0 && c == 0) || (r == 0 && c == n - 1)) {
      throw ConfigError("mars_rover: hole on start or goal cell");
    }
    hole_mask_[r * n + c] = true;
  }
  spec_.obs_dim = n * n;
  spec_.action = ActionSpace::discrete_n(4);
  spec_.horizon = params_.horizon;
  if (spec_.num_constraints() != 1) {
    throw ConfigError("mars_rover has exactly one constraint (holes)");
  }
  spec_.validate();
}

bool MarsRover::is_hole(std::size_t r, std::size_t c) const {
  return hole_mask_[r * params_.size + c];
}

Tensor MarsRover::observe() const {
  Tensor obs({spec_.obs_dim});
  obs.mutable_values()[row_ * params_.size + col_] = 1.0;
  return obs;
}

Tensor MarsRover::reset(std::uint64_t seed) {
  rng_.seed(seed);
  row_ = 0;
  col_ = 0;
  t_ = 0;
  done_ = false;
  return observe();
}

StepResult MarsRover::step(std::span<const double> action) {
  if (done_) throw ContractError("mars_rover: step() after episode end");
  if (action.size() != 1 || action[0] < 0.0 || action[0] > 3.0 ||
      action[0] != std::floor(action[0])) {
    throw ContractError("mars_rover: action must be an index in {0,1,2,3}");
  }
  Move m = kMoves[static_cast<std::size_t>(action[0])];
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng_);
  if (u < params_.slip) {
    m = {-m.dc, m.dr};  // perpendicular left
  } else if (u < 2.0 * params_.slip) {
    m = {m.dc, -m.dr};  // perpendicular right
  }
  const int n = static_cast<int>(params_.size);
  const int r = std::clamp(static_cast<int>(row_) + m.dr, 0, n - 1);
  const int c = std::clamp(static_cast<int>(col_) + m.dc, 0, n - 1);
  row_ = static_cast<std::size_t>(r);
  col_ = static_cast<std::size_t>(c);
  ++t_;

  StepResult out;
  out.reward = -1.0;
  out.costs = Tensor({1});
  const bool hole = is_hole(row_, col_);
  const bool goal = row_ == 0 && col_ == params_.size - 1;
  if (hole) out.costs.mutable_values()[0] = 1.0;
  done_ = hole || goal || t_ >= params_.horizon;
  out.done = done_;
  out.obs = observe();
  return out;
}

std::unique_ptr<Env> MarsRover::clone() const {
  return std::make_unique<MarsRover>(*this);
}

double MarsRover::reward_scale() const {
  // Every step costs one unit of reward.
  const double g = spec_.gamma;
  return (1.0 - std::pow(g, static_cast<double>(params_.horizon))) / (1.0 - g);
}

}  // namespace ipo
