#include <cmath>
#include <limits>

#include "ipo/algo.hpp"

namespace ipo {

namespace {

double grad_norm(double a1, double a2) {
  // f = 1 - |a - target|^2
  const double g1 = -2.0 * (a1 - ConvexBandit::kTarget[0]);
  const double g2 = -2.0 * (a2 - ConvexBandit::kTarget[1]);
  return std::hypot(g1, g2);
}

}  // namespace

DualityGapResult duality_gap_check(std::size_t m, double t, std::size_t resolution) {
  if (m != 1 && m != 2) throw ConfigError("duality gap: m must be 1 or 2");
  if (!(t > 0.0)) throw ConfigError("duality gap: t must be positive");
  if (resolution < 2) throw ConfigError("duality gap: resolution must be at least 2");

  const double h = 2.0 / static_cast<double>(resolution - 1);
  std::vector<double> axis(resolution);
  for (std::size_t k = 0; k < resolution; ++k) axis[k] = -1.0 + h * static_cast<double>(k);

  DualityGapResult out;
  out.m = m;
  out.t = t;
  out.resolution = resolution;
  out.bound = static_cast<double>(m) / t;

  double best_f = -std::numeric_limits<double>::infinity();
  double best_b = -std::numeric_limits<double>::infinity();
  bool any_feasible = false, any_strict = false;
  for (double a1 : axis) {
    for (double a2 : axis) {
      double gmax = -std::numeric_limits<double>::infinity();
      double logs = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double g = ConvexBandit::constraint(i, a1, a2);
        gmax = std::max(gmax, g);
        if (g < 0.0) logs += std::log(-g);
      }
      if (gmax > 0.0) continue;
      const double f = ConvexBandit::reward(a1, a2);
      any_feasible = true;
      if (f > best_f) {
        best_f = f;
        out.a_star = {a1, a2};
      }
      if (gmax < 0.0) {
        any_strict = true;
        const double b = f + logs / t;
        if (b > best_b) {
          best_b = b;
          out.a_barrier = {a1, a2};
        }
      }
    }
  }
  if (!any_feasible || !any_strict) {
    throw ConfigError("duality gap: grid has no strictly feasible point");
  }

  out.p_star = best_f;
  out.barrier_value = ConvexBandit::reward(out.a_barrier[0], out.a_barrier[1]);
  out.gap = out.p_star - out.barrier_value;
  // Both grid maximizers sit within h*sqrt(2)/2 of their continuous
  // counterparts; a first-order bound on f plus a curvature term.
  out.grid_tolerance = h * std::sqrt(2.0) *
                           (grad_norm(out.a_star[0], out.a_star[1]) +
                            grad_norm(out.a_barrier[0], out.a_barrier[1])) +
                       2.0 * h * h;
  for (std::size_t i = 0; i < m; ++i) {
    const double g = ConvexBandit::constraint(i, out.a_barrier[0], out.a_barrier[1]);
    out.multipliers.push_back(-1.0 / (t * g));
  }
  out.pass = out.gap >= 0.0 && out.gap <= out.bound + out.grid_tolerance;
  return out;
}

}  // namespace ipo
