#include <cmath>

#include "ipo/envs.hpp"

namespace ipo {

ConstraintKind parse_constraint_kind(const std::string& s) {
  if (s == "discounted") return ConstraintKind::discounted;
  if (s == "mean") return ConstraintKind::mean;
  throw ConfigError("unknown constraint kind '" + s + "' (expected discounted or mean)");
}

std::string to_string(ConstraintKind kind) {
  return kind == ConstraintKind::discounted ? "discounted" : "mean";
}

void CmdpSpec::validate() const {
  if (obs_dim == 0) throw ConfigError("obs_dim must be positive");
  if (action.dim == 0) throw ConfigError("action dimension must be positive");
  if (!action.discrete && !(action.lo < action.hi)) {
    throw ConfigError("action bounds must satisfy lo < hi");
  }
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (constraint_kinds.size() != limits.size()) {
    throw ConfigError("constraint kinds and limits differ in length");
  }
}

double episode_constraint_accumulate(std::span<const double> costs,
                                     ConstraintKind kind, double gamma,
                                     std::size_t horizon) {
  double total = 0.0;
  switch (kind) {
    case ConstraintKind::discounted: {
      double discount = 1.0;
      for (double c : costs) {
        total += discount * c;
        discount *= gamma;
      }
      return total;
    }
    case ConstraintKind::mean:
      if (horizon == 0) throw ConfigError("mean constraint needs a positive horizon");
      for (double c : costs) total += c;
      return total / static_cast<double>(horizon);
  }
  throw ConfigError("unknown constraint kind");
}

}  // namespace ipo
