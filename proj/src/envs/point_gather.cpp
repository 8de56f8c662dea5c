#include <algorithm>
#include <cmath>
#include <numbers>

#include "ipo/envs.hpp"

namespace ipo {

PointGather::PointGather(PointGatherParams params, CmdpSpec spec)
    : params_(std::move(params)), spec_(std::move(spec)) {
  const auto& p = params_;
  if (!(p.arena_half > 0.0)) throw ConfigError("point_gather: arena_half must be positive");
  if (!(p.collect_radius > 0.0)) throw ConfigError("point_gather: collect_radius must be positive");
  if (p.spawn_clearance < 0.0 || p.object_spacing < 0.0) {
    throw ConfigError("point_gather: clearances must be non-negative");
  }
  if (p.spawn_clearance >= p.arena_half) {
    throw ConfigError("point_gather: spawn_clearance leaves no room for objects");
  }
  const std::size_t expected_m = p.mines > 0 ? 2 : 1;
  if (spec_.num_constraints() != expected_m) {
    throw ConfigError("point_gather: expected " + std::to_string(expected_m) +
                      " constraint(s) (bombs" + (p.mines > 0 ? ", mines)" : ")"));
  }
  spec_.obs_dim = 4 + 3 * (p.apples + p.bombs + p.mines);
  spec_.action = ActionSpace::continuous(2, -1.0, 1.0);
  spec_.horizon = p.horizon;
  spec_.validate();
}

Tensor PointGather::reset(std::uint64_t seed) {
  rng_.seed(seed);
  const double a = params_.arena_half;
  const double margin = std::min(params_.collect_radius, 0.5 * a);
  std::uniform_real_distribution<double> pos(-a + margin, a - margin);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);

  x_ = 0.0;
  y_ = 0.0;
  heading_ = angle(rng_);
  t_ = 0;
  done_ = false;
  objects_.clear();

  auto place = [&](int type) {
    Object obj;
    obj.type = type;
    for (int attempt = 0;; ++attempt) {
      obj.x = pos(rng_);
      obj.y = pos(rng_);
      if (std::hypot(obj.x, obj.y) < params_.spawn_clearance) continue;
      // Spacing is relaxed after many failures so crowded layouts still load.
      const double spacing = attempt < 1000 ? params_.object_spacing : 0.0;
      const bool crowded = std::any_of(objects_.begin(), objects_.end(), [&](const Object& o) {
        return std::hypot(o.x - obj.x, o.y - obj.y) < spacing;
      });
      if (!crowded) break;
    }
    objects_.push_back(obj);
  };
  for (std::size_t i = 0; i < params_.apples; ++i) place(0);
  for (std::size_t i = 0; i < params_.bombs; ++i) place(1);
  for (std::size_t i = 0; i < params_.mines; ++i) place(2);
  return observe();
}

Tensor PointGather::observe() const {
  const double a = params_.arena_half;
  std::vector<double> obs;
  obs.reserve(spec_.obs_dim);
  const double c = std::cos(heading_), s = std::sin(heading_);
  obs.insert(obs.end(), {x_ / a, y_ / a, c, s});
  for (const auto& o : objects_) {
    if (!o.alive) {
      obs.insert(obs.end(), {0.0, 0.0, 0.0});
      continue;
    }
    const double dx = o.x - x_, dy = o.y - y_;
    // Egocentric frame: +x ahead of the agent, +y to its left.
    obs.push_back((c * dx + s * dy) / a);
    obs.push_back((-s * dx + c * dy) / a);
    obs.push_back(1.0);
  }
  return Tensor::vector(std::move(obs));
}

StepResult PointGather::step(std::span<const double> action) {
  if (done_) throw ContractError("point_gather: step() after episode end");
  if (action.size() != 2) throw ContractError("point_gather: action must have 2 entries");
  const double speed = std::clamp(action[0], -1.0, 1.0);
  const double turn = std::clamp(action[1], -1.0, 1.0);
  const double a = params_.arena_half;

  heading_ += params_.turn_scale * turn;
  heading_ = std::remainder(heading_, 2.0 * std::numbers::pi);
  x_ = std::clamp(x_ + speed * params_.speed_scale * std::cos(heading_), -a, a);
  y_ = std::clamp(y_ + speed * params_.speed_scale * std::sin(heading_), -a, a);
  ++t_;

  StepResult out;
  out.costs = Tensor({spec_.num_constraints()});
  auto costs = out.costs.mutable_values();
  for (auto& o : objects_) {
    if (!o.alive || std::hypot(o.x - x_, o.y - y_) > params_.collect_radius) continue;
    o.alive = false;
    if (o.type == 0) {
      out.reward += params_.apple_reward;
    } else {
      costs[static_cast<std::size_t>(o.type - 1)] += 1.0;
    }
  }
  done_ = t_ >= params_.horizon;
  out.done = done_;
  out.obs = observe();
  return out;
}

std::unique_ptr<Env> PointGather::clone() const {
  return std::make_unique<PointGather>(*this);
}

double PointGather::reward_scale() const {
  return static_cast<double>(params_.apples) * params_.apple_reward;
}

}  // namespace ipo
