#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ipo/rollout.hpp"
#include "support.hpp"

using namespace ipo;

namespace {

std::unique_ptr<Env> scenario_env(const std::string& name) {
  return make_env(load_scenario(name, default_scenario_dirs()));
}

// A_t = sum_{l=0}^{T-1-t} (gamma lambda)^l delta_{t+l}, evaluated term by term.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                               double gamma, double lambda) {
  const std::size_t T = r.size();
  std::vector<double> delta(T), out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double next = t + 1 == T ? 0.0 : v[t + 1];
    delta[t] = r[t] + gamma * next - v[t];
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t l = 0; t + l < T; ++l) out[t] += std::pow(gamma * lambda, double(l)) * delta[t + l];
  }
  return out;
}

double return_oracle(const std::vector<double>& r, double gamma) {
  double total = 0.0;
  for (std::size_t t = 0; t < r.size(); ++t) total += std::pow(gamma, double(t)) * r[t];
  return total;
}

CriticSet zero_critics(std::size_t obs_dim, std::size_t m) {
  CriticSet set = CriticSet::make(obs_dim, std::vector<std::size_t>{4}, m, 0);
  for (Tensor* p : set.reward.parameters()) std::fill(p->mutable_values().begin(), p->mutable_values().end(), 0.0);
  for (auto& c : set.costs) {
    for (Tensor* p : c.parameters()) std::fill(p->mutable_values().begin(), p->mutable_values().end(), 0.0);
  }
  return set;
}

}  // namespace

TEST_CASE("discounted_return") {
  CHECK(discounted_return(std::vector<double>{1, 1, 1}, 0.99) == doctest::Approx(2.9701).epsilon(1e-15));
  CHECK(discounted_return(std::vector<double>{4, 5, 6}, 0.0) == 4.0);
  CHECK(discounted_return(std::vector<double>{0, 0, 0}, 0.7) == 0.0);
}

TEST_CASE("gae matches the double-sum oracle on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2, 2), g(0.5, 0.999), l(0, 1);
  std::uniform_int_distribution<int> len(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = len(rng);
    std::vector<double> r(T), v(T + 1);
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    const double gamma = g(rng), lambda = l(rng);
    const auto fast = gae(r, v, gamma, lambda, true);
    const auto slow = gae_oracle(r, v, gamma, lambda);
    for (std::size_t t = 0; t < T; ++t) worst = std::max(worst, std::abs(fast[t] - slow[t]));
    CHECK(std::abs(discounted_return(r, gamma) - return_oracle(r, gamma)) <= 1e-12);

    // lambda = 0: one-step TD residuals.
    const auto td = gae(r, v, gamma, 0.0, true);
    for (std::size_t t = 0; t < T; ++t) {
      const double next = t + 1 == T ? 0.0 : v[t + 1];
      CHECK(td[t] == r[t] + gamma * next - v[t]);
    }
    // lambda = 1 with a zero critic: discounted reward-to-go.
    const std::vector<double> zero(T + 1, 0.0);
    const auto mc = gae(r, zero, gamma, 1.0, true);
    const auto rtg = reward_to_go(r, gamma);
    for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(mc[t] - rtg[t]) <= 1e-12);
    CHECK(std::abs(rtg[0] - discounted_return(r, gamma)) <= 1e-12);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("gae bootstraps from the last value when the episode is cut off") {
  const std::vector<double> r{1.0, 2.0}, v{0.5, 0.25, 4.0};
  const auto adv = gae(r, v, 0.9, 0.0, false);
  CHECK(adv[1] == doctest::Approx(2.0 + 0.9 * 4.0 - 0.25));
  CHECK_THROWS_AS(gae(r, std::vector<double>{0.0, 0.0}, 0.9, 0.9, true), ContractError);
}

TEST_CASE("standardize") {
  std::vector<double> xs{1, 2, 3, 4, 10};
  standardize(xs);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / 5.0;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(std::abs(std::sqrt(var / 5.0) - 1.0) <= 1e-12);

  std::vector<double> flat{3, 3, 3};
  standardize(flat);
  CHECK(flat == std::vector<double>{0, 0, 0});
}

TEST_CASE("collect") {
  auto env = scenario_env("point_gather");
  const auto& spec = env->spec();
  const Policy policy = Policy::make(spec.obs_dim, std::vector<std::size_t>{8}, 2, false, 1);
  const CriticSet critics = CriticSet::make(spec.obs_dim, std::vector<std::size_t>{8}, 1, 2);
  CollectOptions opt;
  opt.episodes = 12;
  opt.seed = 99;

  const Batch a = collect(*env, policy, critics, opt);
  CHECK(a.num_episodes == 12);
  CHECK(a.size() == 12 * spec.horizon);
  CHECK(a.episode_start.size() == 13);
  CHECK(a.mean_episode_length() == double(spec.horizon));

  SUBCASE("deterministic and independent of the worker count") {
    opt.workers = 3;
    const Batch b = collect(*env, policy, critics, opt);
    CHECK(a.states == b.states);
    CHECK(a.actions == b.actions);
    CHECK(a.behavior_log_prob == b.behavior_log_prob);
    CHECK(a.reward_advantages == b.reward_advantages);
    CHECK(a.cost_advantages == b.cost_advantages);
    CHECK(a.J_R == b.J_R);
    CHECK(a.J_C == b.J_C);
  }

  SUBCASE("batch estimates are exact episode means") {
    double jr = 0.0, jc = 0.0;
    for (std::size_t e = 0; e < a.num_episodes; ++e) {
      const std::size_t b = a.episode_start[e], end = a.episode_start[e + 1];
      const std::vector<double> r(a.rewards.begin() + b, a.rewards.begin() + end);
      const std::vector<double> c(a.costs[0].begin() + b, a.costs[0].begin() + end);
      jr += discounted_return(r, spec.gamma);
      jc += episode_constraint_accumulate(c, spec.constraint_kinds[0], spec.gamma, spec.horizon);
    }
    CHECK(a.J_R == jr / 12.0);
    CHECK(a.J_C[0] == jc / 12.0);
  }

  SUBCASE("reward advantages are standardized, cost advantages are not") {
    const double n = double(a.size());
    const double mean = std::accumulate(a.reward_advantages.begin(), a.reward_advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double x : a.reward_advantages) var += (x - mean) * (x - mean);
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(std::sqrt(var / n) - 1.0) <= 1e-10);
  }

  SUBCASE("behavior log-probs come from the sampling policy") {
    for (std::size_t k = 0; k < a.size(); k += 17) {
      const auto s = a.states.values().subspan(k * spec.obs_dim, spec.obs_dim);
      const auto act = a.actions.values().subspan(k * 2, 2);
      CHECK(a.behavior_log_prob[k] == doctest::Approx(policy.log_prob(s, act)).epsilon(1e-12));
    }
  }

  SUBCASE("empty batches and mismatched policies are rejected") {
    opt.episodes = 0;
    CHECK_THROWS_AS(collect(*env, policy, critics, opt), ContractError);
    opt.episodes = 1;
    const Policy wrong = Policy::make(3, std::vector<std::size_t>{4}, 2, false, 0);
    CHECK_THROWS_AS(collect(*env, wrong, critics, opt), DimensionError);
  }
}

TEST_CASE("rover without holes never violates") {
  auto env = scenario_env("mars_rover");
  MarsRoverParams p;
  CmdpSpec spec = env->spec();
  MarsRover open(p, spec);
  const Policy policy = Policy::make(64, std::vector<std::size_t>{8}, 4, true, 3);
  CollectOptions opt;
  opt.episodes = 5;
  const Batch b = collect(open, policy, zero_critics(64, 1), opt);
  CHECK(b.J_C[0] == 0.0);
  for (double x : b.cost_advantages[0]) CHECK(x == 0.0);
}

TEST_CASE("cost advantages with a zero critic") {
  SUBCASE("mean valued: per-step c/T, undiscounted") {
    auto env = scenario_env("point_gather_mean");
    const auto& spec = env->spec();
    REQUIRE(spec.constraint_kinds[0] == ConstraintKind::mean);
    const Policy policy = Policy::make(spec.obs_dim, std::vector<std::size_t>{8}, 2, false, 5);
    const auto trajs = collect_trajectories(*env, policy, 40, 7, spec.gamma);
    const CriticSet zero = zero_critics(spec.obs_dim, 1);
    const Batch mc = make_batch(trajs, spec, zero, spec.gamma, 1.0);
    const Batch td = make_batch(trajs, spec, zero, spec.gamma, 0.0);
    bool any_cost = false;
    for (std::size_t e = 0; e < mc.num_episodes; ++e) {
      const std::size_t b = mc.episode_start[e], end = mc.episode_start[e + 1];
      const double expected = mc.episode_constraints[e][0];
      any_cost = any_cost || expected > 0.0;
      CHECK(std::abs(mc.cost_advantages[0][b] - expected) <= 1e-12);
      const double sum = std::accumulate(td.cost_advantages[0].begin() + b,
                                         td.cost_advantages[0].begin() + end, 0.0);
      CHECK(std::abs(sum - expected) <= 1e-12);
    }
    CHECK(any_cost);
  }

  SUBCASE("discounted: A at t=0 equals the episode's discounted cost") {
    auto env = scenario_env("point_gather");
    const auto& spec = env->spec();
    const Policy policy = Policy::make(spec.obs_dim, std::vector<std::size_t>{8}, 2, false, 5);
    const auto trajs = collect_trajectories(*env, policy, 40, 8, spec.gamma);
    const Batch b = make_batch(trajs, spec, zero_critics(spec.obs_dim, 1), spec.gamma, 1.0);
    for (std::size_t e = 0; e < b.num_episodes; ++e) {
      CHECK(std::abs(b.cost_advantages[0][b.episode_start[e]] - b.episode_constraints[e][0]) <= 1e-12);
    }
  }

  SUBCASE("cost advantages can be skipped") {
    auto env = scenario_env("point_gather");
    const auto& spec = env->spec();
    const Policy policy = Policy::make(spec.obs_dim, std::vector<std::size_t>{8}, 2, false, 5);
    const auto trajs = collect_trajectories(*env, policy, 3, 8, spec.gamma);
    const Batch b = make_batch(trajs, spec, zero_critics(spec.obs_dim, 1), spec.gamma, 0.95, false);
    for (double x : b.cost_advantages[0]) CHECK(x == 0.0);
  }
}

TEST_CASE("trajectory dump") {
  auto env = scenario_env("point_gather");
  const auto& spec = env->spec();
  const Policy policy = Policy::make(spec.obs_dim, std::vector<std::size_t>{4}, 2, false, 0);
  const auto trajs = collect_trajectories(*env, policy, 2, 1, spec.gamma);
  const auto dir = ipo::testing::fresh_dir(std::filesystem::path(IPO_TEST_TMP) / "rollout_dump");
  dump_trajectories(dir / "t.csv", trajs);
  std::ifstream is(dir / "t.csv");
  std::string header, line;
  std::getline(is, header);
  CHECK(header.rfind("episode,t,obs_0,", 0) == 0);
  CHECK(header.find(",action_1,reward,cost_1,log_prob,done") != std::string::npos);
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 2 * spec.horizon);
}
