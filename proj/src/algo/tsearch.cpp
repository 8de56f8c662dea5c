#include <cmath>
#include <sstream>

#include "ipo/algo.hpp"

namespace ipo {

TSearchResult t_search(const ProbeFn& probe, double t_lo, double t_hi, std::size_t budget,
                       double tol) {
  if (!(t_lo > 0.0) || !std::isfinite(t_hi)) {
    throw ConfigError("t_search: bracket must be positive and finite");
  }
  if (t_lo > t_hi) throw ConfigError("t_search: t_lo exceeds t_hi");
  if (!(tol > 0.0)) throw ConfigError("t_search: tolerance must be positive");

  TSearchResult out;
  out.lo = t_lo;
  out.hi = t_hi;
  if (budget == 0) {
    out.message = "probe budget is zero; nothing was tried";
    return out;
  }

  if (t_lo == t_hi) {
    Probe p = probe(t_lo);
    p.t = t_lo;
    out.probes.push_back(p);
    out.found = p.feasible;
    out.t = t_lo;
    out.message = p.feasible ? "single probe feasible" : "single probe infeasible";
    return out;
  }

  double lo = t_lo, hi = t_hi;
  while (out.probes.size() < budget && hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    Probe p = probe(mid);
    p.t = mid;
    out.probes.push_back(p);
    if (p.feasible) {
      out.found = true;
      out.t = mid;
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.lo = lo;
  out.hi = hi;
  std::ostringstream os;
  if (out.found) {
    os << "largest feasible t " << out.t << " after " << out.probes.size() << " probes";
  } else {
    os << "no feasible t in [" << t_lo << ", " << t_hi << "] after " << out.probes.size()
       << " probes";
  }
  out.message = os.str();
  return out;
}

ProbeFn training_probe(const TrainConfig& cfg, const Env& env, std::uint64_t seed) {
  return [cfg, &env, seed](double t) {
    TrainConfig c = cfg;
    c.t = t;
    const TrainResult r = train(c, env, seed);
    Probe p;
    p.t = t;
    p.feasible = true;
    if (!r.metrics.empty()) {
      const auto& last = r.metrics.back();
      p.J_R = last.J_R;
      p.J_C = last.J_C;
      for (std::size_t i = 0; i < p.J_C.size(); ++i) {
        if (p.J_C[i] > c.limits[i]) p.feasible = false;
      }
    }
    return p;
  };
}

}  // namespace ipo
