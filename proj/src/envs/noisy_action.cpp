#include <algorithm>

#include "ipo/envs.hpp"

namespace ipo {

namespace {
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
}

NoisyAction::NoisyAction(std::unique_ptr<Env> inner, double sigma)
    : inner_(std::move(inner)), sigma_(sigma) {
  if (!inner_) throw ConfigError("noisy_wrap: null environment");
  if (sigma_ < 0.0) throw ConfigError("noisy_wrap: sigma must be non-negative");
  if (inner_->spec().action.discrete) {
    throw ConfigError("noisy_wrap: wrapped environment must have continuous actions");
  }
}

Tensor NoisyAction::reset(std::uint64_t seed) {
  rng_.seed(derive_seed(seed, kNoiseStream));
  return inner_->reset(seed);
}

StepResult NoisyAction::step(std::span<const double> action) {
  const ActionSpace& space = inner_->spec().action;
  executed_.assign(action.begin(), action.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& a : executed_) {
    if (sigma_ > 0.0) a += sigma_ * normal(rng_);
    a = std::clamp(a, space.lo, space.hi);
  }
  return inner_->step(executed_);
}

std::unique_ptr<Env> NoisyAction::clone() const {
  auto copy = std::make_unique<NoisyAction>(inner_->clone(), sigma_);
  copy->rng_ = rng_;
  copy->executed_ = executed_;
  return copy;
}

std::unique_ptr<Env> noisy_wrap(std::unique_ptr<Env> env, double sigma) {
  return std::make_unique<NoisyAction>(std::move(env), sigma);
}

}  // namespace ipo
