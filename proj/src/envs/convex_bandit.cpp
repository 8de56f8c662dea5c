#include <algorithm>

#include "ipo/envs.hpp"

namespace ipo {

ConvexBandit::ConvexBandit(std::size_t m) {
  if (m != 1 && m != 2) throw ConfigError("convex_bandit: m must be 1 or 2");
  spec_.obs_dim = 1;
  spec_.action = ActionSpace::continuous(2, -1.0, 1.0);
  spec_.horizon = 1;
  spec_.constraint_kinds.assign(m, ConstraintKind::discounted);
  spec_.limits = m == 1 ? std::vector<double>{1.0} : std::vector<double>{1.0, 0.8};
  spec_.gamma = 0.99;
}

double ConvexBandit::reward(double a1, double a2) {
  const double d1 = a1 - kTarget[0], d2 = a2 - kTarget[1];
  return 1.0 - (d1 * d1 + d2 * d2);
}

double ConvexBandit::constraint(std::size_t i, double a1, double a2) {
  switch (i) {
    case 0: return a1 + a2 - 1.0;
    case 1: return a1 - a2 - 0.8;
    default: throw ContractError("convex_bandit: constraint index out of range");
  }
}

Tensor ConvexBandit::reset(std::uint64_t) {
  done_ = false;
  return Tensor({1}, {1.0});
}

StepResult ConvexBandit::step(std::span<const double> action) {
  if (done_) throw ContractError("convex_bandit: step() after episode end");
  if (action.size() != 2) throw ContractError("convex_bandit: action must have 2 entries");
  const double a1 = std::clamp(action[0], -1.0, 1.0);
  const double a2 = std::clamp(action[1], -1.0, 1.0);
  StepResult out;
  out.obs = Tensor({1}, {1.0});
  out.reward = reward(a1, a2);
  std::vector<double> costs;
  for (std::size_t i = 0; i < spec_.num_constraints(); ++i) {
    costs.push_back(constraint(i, a1, a2) + spec_.limits[i]);
  }
  out.costs = Tensor::vector(std::move(costs));
  done_ = true;
  out.done = true;
  return out;
}

std::unique_ptr<Env> ConvexBandit::clone() const {
  return std::make_unique<ConvexBandit>(*this);
}

std::unique_ptr<Env> convex_bandit(std::size_t m) {
  return std::make_unique<ConvexBandit>(m);
}

}  // namespace ipo
