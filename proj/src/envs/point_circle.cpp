#include <algorithm>
#include <cmath>
#include <numbers>

#include "ipo/envs.hpp"

namespace ipo {

PointCircle::PointCircle(PointCircleParams params, CmdpSpec spec)
    : params_(std::move(params)), spec_(std::move(spec)) {
  if (!(params_.radius > 0.0)) throw ConfigError("point_circle: radius must be positive");
  if (!(params_.x_limit > 0.0)) throw ConfigError("point_circle: x_limit must be positive");
  if (spec_.num_constraints() != 1) {
    throw ConfigError("point_circle has exactly one constraint (safe strip)");
  }
  spec_.obs_dim = 6;
  spec_.action = ActionSpace::continuous(2, -1.0, 1.0);
  spec_.horizon = params_.horizon;
  spec_.validate();
}

Tensor PointCircle::reset(std::uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> jitter(-params_.start_jitter, params_.start_jitter);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  x_ = jitter(rng_);
  y_ = jitter(rng_);
  heading_ = angle(rng_);
  vx_ = vy_ = 0.0;
  t_ = 0;
  done_ = false;
  return observe();
}

Tensor PointCircle::observe() const {
  const double r = params_.radius;
  return Tensor({6}, {x_ / r, y_ / r, vx_, vy_, std::cos(heading_), std::sin(heading_)});
}

StepResult PointCircle::step(std::span<const double> action) {
  if (done_) throw ContractError("point_circle: step() after episode end");
  if (action.size() != 2) throw ContractError("point_circle: action must have 2 entries");
  const double speed = std::clamp(action[0], -1.0, 1.0);
  const double turn = std::clamp(action[1], -1.0, 1.0);
  heading_ = std::remainder(heading_ + params_.turn_scale * turn, 2.0 * std::numbers::pi);
  vx_ = speed * params_.speed_scale * std::cos(heading_);
  vy_ = speed * params_.speed_scale * std::sin(heading_);
  x_ += vx_;
  y_ += vy_;
  ++t_;

  StepResult out;
  const double off_circle = std::abs(std::hypot(x_, y_) - params_.radius);
  out.reward = (-y_ * vx_ + x_ * vy_) / (1.0 + off_circle);
  out.costs = Tensor({1}, {std::abs(x_) > params_.x_limit ? 1.0 : 0.0});
  done_ = t_ >= params_.horizon;
  out.done = done_;
  out.obs = observe();
  return out;
}

std::unique_ptr<Env> PointCircle::clone() const {
  return std::make_unique<PointCircle>(*this);
}

double PointCircle::reward_scale() const {
  // |(-y vx + x vy)| <= |p| |v| and |p| / (1 + ||p| - r|) <= r + 1.
  const double g = spec_.gamma;
  const double per_step = (params_.radius + 1.0) * params_.speed_scale;
  return per_step * (1.0 - std::pow(g, static_cast<double>(params_.horizon))) / (1.0 - g);
}

}  // namespace ipo
