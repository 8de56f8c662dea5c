#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "ipo/autodiff.hpp"

namespace ipo::testing {

// Builds a scalar on `tape` from parameter leaves bound to the given values.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheck {
  // max over entries of |analytic - numeric| / max(1, |numeric|)
  double rel_error = 0.0;
  double abs_error = 0.0;  // max over entries of |analytic - numeric|
};

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.push_back(tape.param(params[i], ParamId{static_cast<std::uint32_t>(i)}));
  }
  return f(tape, vars).value().item();
}

// Compares reverse-mode gradients with central differences.
inline GradCheck check_gradient(const ScalarFn& f, std::vector<Tensor> params,
                                double h = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.push_back(tape.param(params[i], ParamId{static_cast<std::uint32_t>(i)}));
  }
  const GradientMap grads = tape.backward(f(tape, vars));

  GradCheck out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto analytic = grads.at(ParamId{static_cast<std::uint32_t>(i)}).values();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double orig = params[i].values()[j];
      params[i].mutable_values()[j] = orig + h;
      const double up = eval_scalar(f, params);
      params[i].mutable_values()[j] = orig - h;
      const double down = eval_scalar(f, params);
      params[i].mutable_values()[j] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[j] - numeric);
      out.abs_error = std::max(out.abs_error, err);
      out.rel_error = std::max(out.rel_error, err / std::max(1.0, std::abs(numeric)));
    }
  }
  return out;
}

inline std::filesystem::path fresh_dir(const std::filesystem::path& path) {
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
  return path;
}

}  // namespace ipo::testing
