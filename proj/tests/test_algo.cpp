#include <doctest.h>

#include <cmath>
#include <random>

#include "ipo/algo.hpp"
#include "support.hpp"

using namespace ipo;
using ipo::testing::check_gradient;

namespace {

std::unique_ptr<Env> scenario_env(const std::string& name) {
  return make_env(load_scenario(name, default_scenario_dirs()));
}

// Single-sample batch for hand evaluation of the surrogates.
SurrogateBatch one_sample(double advantage) {
  SurrogateBatch b;
  b.advantages = {advantage};
  b.behavior_log_prob = {0.0};
  return b;
}

double eval(const std::function<Var(Var)>& f, double r) {
  Tape tape;
  return f(tape.constant(Tensor::vector({r}))).value().item();
}

// Small Gaussian policy plus a random batch drawn around it.
struct Toy {
  Policy policy;
  SurrogateBatch batch;
};

Toy make_toy(std::uint64_t seed, std::size_t m) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Toy toy{Policy::make(2, std::vector<std::size_t>{3}, 1, false, seed), {}};
  // Give the output layer some weight so the ratios move with every parameter.
  for (Tensor* p : toy.policy.parameters()) {
    for (double& v : p->mutable_values()) v += 0.3 * n01(rng);
  }
  const std::size_t n = 16;
  std::vector<double> s(2 * n), a(n);
  for (auto& x : s) x = n01(rng);
  for (auto& x : a) x = n01(rng);
  SurrogateBatch& b = toy.batch;
  b.states = Tensor::matrix(n, 2, s);
  b.actions = Tensor::matrix(n, 1, a);
  for (std::size_t k = 0; k < n; ++k) {
    const double lp = toy.policy.log_prob(b.states.values().subspan(2 * k, 2),
                                          b.actions.values().subspan(k, 1));
    // Behavior policy slightly off the current one so the ratios differ from 1.
    b.behavior_log_prob.push_back(lp + 0.05 * n01(rng));
    b.advantages.push_back(n01(rng));
  }
  b.cost_advantages.assign(m, {});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) b.cost_advantages[i].push_back(0.2 * n01(rng));
    b.J_emp.push_back(0.05 + 0.1 * i);
    b.limits.push_back(0.1 + 0.05 * i);
  }
  return toy;
}

std::vector<Tensor> params_of(const Policy& p) {
  std::vector<Tensor> out;
  for (const Tensor* t : p.parameters()) out.push_back(*t);
  return out;
}

TrainConfig quick_config(Algorithm alg, std::vector<double> limits) {
  TrainConfig cfg;
  cfg.algorithm = alg;
  cfg.limits = std::move(limits);
  cfg.iterations = 4;
  cfg.episodes = 6;
  cfg.epochs = 3;
  cfg.hidden = {16};
  return cfg;
}

}  // namespace

TEST_CASE("barrier values and shape") {
  const BarrierConfig cfg{20.0, 1e-3};
  CHECK(barrier(-1.0, cfg) == 0.0);
  CHECK(barrier(-0.5, cfg) == doctest::Approx(-0.034657359).epsilon(1e-8));

  double prev = barrier(-10.0, cfg);
  for (int k = 1; k <= 10000; ++k) {
    const double x = -10.0 + 20.0 * k / 10000.0;
    const double v = barrier(x, cfg);
    CHECK(v < prev);
    CHECK(std::isfinite(v));
    prev = v;
  }

  const double d = cfg.margin;
  CHECK(std::abs(barrier(-d - 1e-12, cfg) - barrier(-d + 1e-12, cfg)) <= 1e-7);
  CHECK(std::abs(barrier_slope(-d - 1e-12, cfg) - barrier_slope(-d + 1e-12, cfg)) <= 1e-5);

  const BarrierConfig other{50.0, 1e-3};
  for (double x : {-0.002, -0.3, -1.0, -7.5}) {
    CHECK(barrier(x, other) == doctest::Approx(barrier(x, cfg) * 20.0 / 50.0).epsilon(1e-15));
  }
}

TEST_CASE("barrier margin defaults") {
  CHECK(BarrierConfig::for_limits(20, std::vector<double>{0.1, 5.0}).margin == doctest::Approx(1e-3));
  CHECK(BarrierConfig::for_limits(20, std::vector<double>{0.005}).margin == 1e-4);
  CHECK_THROWS_AS((BarrierConfig{0.0, 1e-3}.validate()), ConfigError);
  TrainConfig tc;
  tc.limits = {0.1};
  tc.barrier_margin = 0.02;
  CHECK(tc.barrier_config().margin == 0.02);
}

TEST_CASE("taped barrier matches the scalar version") {
  const BarrierConfig cfg{20.0, 1e-2};
  for (double x : {-3.0, -0.5, -0.011, -0.009, 0.0, 0.4}) {
    Tape tape;
    const Var v = tape.param(Tensor::scalar(x), ParamId{0});
    const Var b = barrier(v, cfg);
    CHECK(b.value().item() == doctest::Approx(barrier(x, cfg)).epsilon(1e-14));
    CHECK(tape.backward(b).at(ParamId{0}).item() ==
          doctest::Approx(barrier_slope(x, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("clip surrogate hand values") {
  const auto pos = one_sample(1.0), neg = one_sample(-1.0);
  CHECK(eval([&](Var r) { return clip_surrogate(r, pos, 0.2); }, 1.5) == doctest::Approx(1.2));
  CHECK(eval([&](Var r) { return clip_surrogate(r, neg, 0.2); }, 0.5) == doctest::Approx(-0.8));
  CHECK(eval([&](Var r) { return clip_surrogate(r, pos, 0.2); }, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("surrogates at the behavior policy") {
  auto env = scenario_env("point_gather");
  const auto& spec = env->spec();
  const Policy policy = Policy::make(spec.obs_dim, std::vector<std::size_t>{8}, 2, false, 1);
  const CriticSet critics = CriticSet::make(spec.obs_dim, std::vector<std::size_t>{8}, 1, 2);
  CollectOptions opt;
  opt.episodes = 8;
  const Batch batch = collect(*env, policy, critics, opt);
  const SurrogateBatch full = SurrogateBatch::from(batch, spec.limits);

  Tape tape;
  const auto bound = bind_params(tape, policy.parameters());
  const Var r = ratios(policy, bound, full);
  for (double x : r.value().values()) CHECK(std::abs(x - 1.0) <= 1e-12);
  CHECK(std::abs(clip_surrogate(r, full, 0.2).value().item()) <= 1e-10);

  double mean_adv = 0.0;
  for (double a : full.cost_advantages[0]) mean_adv += a;
  mean_adv /= double(full.size());
  CHECK(constraint_surrogate(r, full, 0).value().item() ==
        doctest::Approx(batch.J_C[0] + mean_adv - 0.1).epsilon(1e-12));

  SUBCASE("zero-cost batch gives minus the limit") {
    SurrogateBatch zero = full;
    zero.cost_advantages[0].assign(zero.size(), 0.0);
    zero.J_emp = {0.0};
    CHECK(constraint_surrogate(r, zero, 0).value().item() == -0.1);
  }
}

TEST_CASE("objective gradients match finite differences") {
  const BarrierConfig bcfg{20.0, 1e-3};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Toy toy = make_toy(seed, 2);
    const auto& pol = toy.policy;
    const auto& b = toy.batch;
    const auto p = params_of(pol);
    const auto r = [&](const std::vector<Var>& v) { return ratios(pol, v, b); };
    CAPTURE(seed);
    CHECK(check_gradient([&](Tape&, const std::vector<Var>& v) { return clip_surrogate(r(v), b, 0.2); }, p)
              .rel_error <= 1e-4);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(check_gradient(
                [&](Tape&, const std::vector<Var>& v) { return constraint_surrogate(r(v), b, i); }, p)
                .rel_error <= 1e-4);
    }
    CHECK(check_gradient(
              [&](Tape&, const std::vector<Var>& v) { return ipo_objective(r(v), b, 0.2, bcfg).objective; },
              p)
              .rel_error <= 1e-4);
    const std::vector<double> lambda{0.3, 1.7};
    CHECK(check_gradient(
              [&](Tape&, const std::vector<Var>& v) { return pdo_objective(r(v), b, 0.2, lambda).objective; },
              p)
              .rel_error <= 1e-4);
  }
}

TEST_CASE("ipo objective reductions and barrier pressure") {
  const BarrierConfig bcfg{20.0, 1e-3};
  const Toy toy = make_toy(3, 1);
  Tape tape;
  const auto bound = bind_params(tape, toy.policy.parameters());
  const Var r = ratios(toy.policy, bound, toy.batch);

  SUBCASE("no constraints reduces to the clipped surrogate") {
    SurrogateBatch b = toy.batch;
    b.cost_advantages.clear();
    b.J_emp.clear();
    b.limits.clear();
    CHECK(ipo_objective(r, b, 0.2, bcfg).objective.value().item() ==
          clip_surrogate(r, b, 0.2).value().item());
    const std::vector<double> none;
    CHECK(pdo_objective(r, b, 0.2, none).objective.value().item() ==
          clip_surrogate(r, b, 0.2).value().item());
  }

  SUBCASE("objective slope in J-hat") {
    for (double jemp : {-50.0, -5.0, 2.0}) {
      SurrogateBatch b = toy.batch;
      b.J_emp = {jemp};
      const auto terms = ipo_objective(r, b, 0.2, bcfg);
      const double j = terms.constraints[0].value().item();
      const double slope = barrier_slope(j, bcfg);
      if (j < -bcfg.margin) {
        CHECK(std::abs(slope) <= 1.0 / (bcfg.t * std::abs(j)) + 1e-15);
      } else {
        CHECK(slope == doctest::Approx(-1.0 / (bcfg.t * bcfg.margin)));
      }
      CHECK(slope < 0.0);
    }
  }

  SUBCASE("zero multiplier is the clipped surrogate, bit for bit") {
    const std::vector<double> zero{0.0};
    CHECK(pdo_objective(r, toy.batch, 0.2, zero).objective.value().item() ==
          clip_surrogate(r, toy.batch, 0.2).value().item());
    const std::vector<double> negative{-1.0};
    CHECK_THROWS_AS(pdo_objective(r, toy.batch, 0.2, negative), ContractError);
  }
}

TEST_CASE("pdo dual update") {
  const std::vector<double> lam{0.01}, lim{0.1};
  CHECK(pdo_dual_update(lam, std::vector<double>{0.6}, lim, 0.01)[0] == doctest::Approx(0.015));
  CHECK(pdo_dual_update(lam, std::vector<double>{0.1}, lim, 0.01)[0] == 0.01);
  CHECK(pdo_dual_update(lam, std::vector<double>{-100.0}, lim, 0.01)[0] == 0.0);
}

TEST_CASE("duality gap on the convex oracle") {
  for (std::size_t m : {1u, 2u}) {
    double prev = 1e9;
    for (double t : {10.0, 50.0, 100.0}) {
      const auto res = duality_gap_check(m, t, 801);
      CAPTURE(m);
      CAPTURE(t);
      CHECK(res.p_star == doctest::Approx(0.98).epsilon(1e-3));
      CHECK(res.gap >= 0.0);
      CHECK(res.gap <= double(m) / t + res.grid_tolerance);
      CHECK(res.gap <= prev);
      CHECK(res.pass);
      CHECK(res.multipliers.size() == m);
      for (double l : res.multipliers) CHECK(l > 0.0);
      prev = res.gap;
    }
  }
  CHECK_THROWS_AS(duality_gap_check(3, 10.0, 101), ConfigError);
}

TEST_CASE("t search") {
  // Cost rises with t and crosses the limit at t = 37.3.
  const double crossing = 37.3;
  std::size_t calls = 0;
  const ProbeFn synthetic = [&](double t) {
    ++calls;
    return Probe{t, t <= crossing, t, {t / crossing * 0.1}};
  };

  SUBCASE("brackets the crossing") {
    const auto res = t_search(synthetic, 1.0, 100.0, 20, 0.5);
    REQUIRE(res.found);
    CHECK(res.t <= crossing);
    CHECK(res.lo <= crossing);
    CHECK(res.hi > crossing);
    CHECK(res.hi - res.lo <= 0.5);
    CHECK(crossing - res.t <= 0.5);
    CHECK(res.probes.size() == calls);
    CHECK(calls <= 8);
  }

  SUBCASE("budget caps the probes") {
    const auto res = t_search(synthetic, 1.0, 100.0, 3, 1e-6);
    CHECK(res.probes.size() == 3);
  }

  SUBCASE("degenerate bracket") {
    const auto res = t_search(synthetic, 20.0, 20.0, 5, 0.1);
    CHECK(res.probes.size() == 1);
    CHECK(res.t == 20.0);
    CHECK(res.found);
  }

  SUBCASE("zero budget fails with a message") {
    const auto res = t_search(synthetic, 1.0, 10.0, 0, 0.1);
    CHECK_FALSE(res.found);
    CHECK(calls == 0);
    CHECK_FALSE(res.message.empty());
  }

  SUBCASE("nothing feasible") {
    const auto res = t_search(synthetic, 50.0, 90.0, 10, 0.1);
    CHECK_FALSE(res.found);
    CHECK(res.message.find("no feasible") != std::string::npos);
  }

  CHECK_THROWS_AS(t_search(synthetic, 10.0, 5.0, 3, 0.1), ConfigError);
}

TEST_CASE("training") {
  auto env = scenario_env("point_gather");
  const auto limits = env->spec().limits;

  SUBCASE("ppo ignores costs") {
    const auto res = train(quick_config(Algorithm::ppo, limits), *env, 1);
    REQUIRE(res.metrics.size() == 4);
    for (const auto& row : res.metrics) {
      CHECK_FALSE(row.barrier_sum.has_value());
      CHECK(row.lambda.empty());
      CHECK(row.J_C.size() == 1);
      CHECK(row.epochs_run >= 1);
    }
    CHECK(res.metrics.back().trajectories == 24);
  }

  SUBCASE("same seed, same run") {
    const auto cfg = quick_config(Algorithm::ipo, limits);
    const auto a = train(cfg, *env, 5), b = train(cfg, *env, 5);
    CHECK(a.policy == b.policy);
    CHECK(a.critics == b.critics);
    for (std::size_t k = 0; k < a.metrics.size(); ++k) {
      CHECK(a.metrics[k].J_R == b.metrics[k].J_R);
      CHECK(a.metrics[k].L_clip == b.metrics[k].L_clip);
      CHECK(a.metrics[k].barrier_sum == b.metrics[k].barrier_sum);
    }
    CHECK_FALSE(train(cfg, *env, 6).policy == a.policy);
  }

  SUBCASE("worker count does not change the run") {
    auto cfg = quick_config(Algorithm::ipo, limits);
    const auto a = train(cfg, *env, 2);
    cfg.workers = 3;
    CHECK(train(cfg, *env, 2).policy == a.policy);
  }

  SUBCASE("pdo keeps multipliers non-negative and frozen zero matches ppo") {
    auto cfg = quick_config(Algorithm::pdo, limits);
    cfg.lambda_lr = 5.0;
    const auto pdo = train(cfg, *env, 3);
    for (const auto& row : pdo.metrics) {
      REQUIRE(row.lambda.size() == 1);
      CHECK(row.lambda[0] >= 0.0);
    }

    cfg.lambda_init = 0.0;
    cfg.freeze_lambda = true;
    const auto frozen = train(cfg, *env, 3);
    const auto ppo = train(quick_config(Algorithm::ppo, limits), *env, 3);
    CHECK(frozen.policy == ppo.policy);
    CHECK(frozen.critics.reward == ppo.critics.reward);
    for (std::size_t k = 0; k < ppo.metrics.size(); ++k) {
      CHECK(frozen.metrics[k].L_clip == ppo.metrics[k].L_clip);
      CHECK(frozen.metrics[k].approx_kl == ppo.metrics[k].approx_kl);
      CHECK(frozen.metrics[k].lambda == std::vector<double>{0.0});
    }
  }

  SUBCASE("invalid configurations") {
    auto cfg = quick_config(Algorithm::ipo, {0.1, 0.2});
    CHECK_THROWS_AS(train(cfg, *env, 0), ConfigError);
    cfg = quick_config(Algorithm::ipo, limits);
    cfg.clip = 1.5;
    CHECK_THROWS_AS(train(cfg, *env, 0), ConfigError);
    CHECK_THROWS_AS(parse_algorithm("trpo"), ConfigError);
  }

  SUBCASE("a diverging run aborts with a dump") {
    auto cfg = quick_config(Algorithm::ppo, limits);
    cfg.policy_lr = 1e300;
    try {
      train(cfg, *env, 0);
      FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
      CHECK(e.dump().find("iteration ") != std::string::npos);
    }
  }
}

TEST_CASE("evaluate") {
  auto env = scenario_env("point_gather");
  const Policy p = Policy::make(env->spec().obs_dim, std::vector<std::size_t>{8}, 2, false, 0);
  const auto a = evaluate(p, *env, 5, 1, 0.99), b = evaluate(p, *env, 5, 1, 0.99);
  CHECK(a.J_R == b.J_R);
  CHECK(a.J_C == b.J_C);
  CHECK(a.mean_episode_length == 15.0);
}
