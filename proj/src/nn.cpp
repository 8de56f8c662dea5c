#include "ipo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace ipo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

Tensor row_tensor(std::span<const double> x) {
  return Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end()));
}

std::vector<const Tensor*> const_view(const std::vector<Tensor*>& v) {
  return {v.begin(), v.end()};
}

void check_batch(const Tensor& states, const Tensor& actions, std::size_t width) {
  if (states.rank() != 2 || actions.rank() != 2 || states.rows() != actions.rows()) {
    throw DimensionError("log_prob: states " + to_string(states.shape()) +
                         " and actions " + to_string(actions.shape()) +
                         " do not align");
  }
  if (actions.cols() != width) {
    throw DimensionError("log_prob: action width " + std::to_string(actions.cols()) +
                         ", policy expects " + std::to_string(width));
  }
}

// bound = mean-network leaves followed by the log_std leaf.
Var gaussian_log_prob_batch(std::span<const Var> bound, const Tensor& states,
                            const Tensor& actions) {
  Tape& tape = bound.front().tape();
  const std::size_t n = states.rows();
  Var mu = mlp_forward(bound.first(bound.size() - 1), tape.constant(states));
  Var log_std = broadcast_rows(bound.back(), n);
  Var z = (tape.constant(actions) - mu) * exp(-log_std);
  Var per_dim = (-0.5 * square(z) - log_std) - kHalfLog2Pi;
  return row_sum(per_dim);
}

Var categorical_log_prob_batch(std::span<const Var> bound, const Tensor& states,
                               const Tensor& actions) {
  Tape& tape = bound.front().tape();
  const std::size_t n = states.rows();
  Var logp = log_softmax(mlp_forward(bound, tape.constant(states)));
  const std::size_t num_actions = logp.value().cols();
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double a = actions[r];
    if (a < 0.0 || a != std::floor(a) || a >= static_cast<double>(num_actions)) {
      throw DimensionError("invalid discrete action " + std::to_string(a));
    }
    idx[r] = static_cast<std::size_t>(a);
  }
  return pick(logp, std::move(idx));
}

}  // namespace

// ------------------------------------------------------------------ MLP

std::size_t MlpParams::input_dim() const {
  if (layers.empty()) throw ContractError("empty MLP");
  return layers.front().weight.shape()[1];
}

std::size_t MlpParams::output_dim() const {
  if (layers.empty()) throw ContractError("empty MLP");
  return layers.back().weight.shape()[0];
}

std::vector<Tensor*> MlpParams::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> MlpParams::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

MlpParams init_mlp(std::span<const std::size_t> dims, std::uint64_t seed,
                   double output_scale) {
  if (dims.size() < 2) throw ConfigError("init_mlp: need at least two dims");
  if (std::find(dims.begin(), dims.end(), std::size_t{0}) != dims.end()) {
    throw ConfigError("init_mlp: zero layer extent");
  }
  Rng rng(seed);
  MlpParams mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-s, s);
    const bool last = l + 2 == dims.size();
    std::vector<double> w(out * in);
    for (double& x : w) x = u(rng) * (last ? output_scale : 1.0);
    mlp.layers.push_back({Tensor({out, in}, std::move(w)), Tensor({out})});
  }
  return mlp;
}

std::vector<Var> bind_params(Tape& tape, std::span<const Tensor* const> params,
                      std::uint32_t first_id) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(tape.param(*params[i], ParamId{first_id + static_cast<std::uint32_t>(i)}));
  }
  return out;
}

Var mlp_forward(std::span<const Var> bound, Var x) {
  if (bound.size() % 2 != 0 || bound.empty()) {
    throw ContractError("mlp_forward: expected weight/bias pairs");
  }
  const std::size_t n = x.value().rows();
  Var h = x;
  for (std::size_t l = 0; l < bound.size(); l += 2) {
    h = matmul(h, transpose(bound[l])) + broadcast_rows(bound[l + 1], n);
    if (l + 2 < bound.size()) h = tanh(h);
  }
  return h;
}

std::vector<double> mlp_eval(const MlpParams& mlp, std::span<const double> x) {
  if (x.size() != mlp.input_dim()) {
    throw DimensionError("state has " + std::to_string(x.size()) +
                         " entries, network expects " +
                         std::to_string(mlp.input_dim()));
  }
  Tape tape;
  std::vector<Var> bound;
  for (const Tensor* p : mlp.parameters()) bound.push_back(tape.constant(*p));
  Var out = mlp_forward(bound, tape.constant(row_tensor(x)));
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

// ------------------------------------------------------------ policies

double gaussian_log_prob(const GaussianHead& head, std::span<const double> state,
                         std::span<const double> action) {
  const std::size_t d = head.log_std.size();
  if (action.size() != d) {
    throw DimensionError("action has " + std::to_string(action.size()) +
                         " entries, head expects " + std::to_string(d));
  }
  Tape tape;
  std::vector<Var> bound;
  for (const Tensor* p : head.mean.parameters()) bound.push_back(tape.constant(*p));
  bound.push_back(tape.constant(head.log_std));
  const Tensor states = row_tensor(state);
  const Tensor actions = row_tensor(action);
  check_batch(states, actions, d);
  return gaussian_log_prob_batch(bound, states, actions).value()[0];
}

double categorical_log_prob(const CategoricalHead& head,
                            std::span<const double> state, std::size_t action) {
  Tape tape;
  std::vector<Var> bound;
  for (const Tensor* p : head.logits.parameters()) bound.push_back(tape.constant(*p));
  const double a = static_cast<double>(action);
  return categorical_log_prob_batch(bound, row_tensor(state),
                                    row_tensor(std::span(&a, 1)))
      .value()[0];
}

std::vector<double> categorical_probs(const CategoricalHead& head,
                                      std::span<const double> state) {
  const auto logits = mlp_eval(head.logits, state);
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - top);
  const double lse = top + std::log(z);
  std::vector<double> p(logits.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(logits[j] - lse);
  return p;
}

SampledAction sample_action(const GaussianHead& head, std::span<const double> state,
                            Rng& rng) {
  const auto mu = mlp_eval(head.mean, state);
  std::normal_distribution<double> normal(0.0, 1.0);
  SampledAction out;
  out.action.resize(mu.size());
  for (std::size_t d = 0; d < mu.size(); ++d) {
    out.action[d] = mu[d] + std::exp(head.log_std[d]) * normal(rng);
  }
  out.log_prob = gaussian_log_prob(head, state, out.action);
  return out;
}

SampledAction sample_action(const CategoricalHead& head,
                            std::span<const double> state, Rng& rng) {
  const auto p = categorical_probs(head, state);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  std::size_t choice = p.size() - 1;
  double cum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    cum += p[j];
    if (u < cum) {
      choice = j;
      break;
    }
  }
  // Guard the rounding tail of the CDF: never return a zero-probability action.
  while (p[choice] == 0.0 && choice > 0) --choice;
  SampledAction out;
  out.action = {static_cast<double>(choice)};
  out.log_prob = categorical_log_prob(head, state, choice);
  return out;
}

Policy Policy::make(std::size_t obs_dim, std::span<const std::size_t> hidden,
                    std::size_t action_outputs, bool discrete, std::uint64_t seed) {
  std::vector<std::size_t> dims{obs_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(action_outputs);
  MlpParams mlp = init_mlp(dims, seed, 0.01);
  if (discrete) return Policy(CategoricalHead{std::move(mlp)});
  return Policy(GaussianHead{std::move(mlp), Tensor({action_outputs})});
}

std::size_t Policy::action_width() const {
  if (const auto* g = gaussian()) return g->log_std.size();
  return 1;
}

std::size_t Policy::obs_dim() const {
  if (const auto* g = gaussian()) return g->mean.input_dim();
  return categorical()->logits.input_dim();
}

std::vector<Tensor*> Policy::parameters() {
  if (auto* g = std::get_if<GaussianHead>(&head_)) {
    auto p = g->mean.parameters();
    p.push_back(&g->log_std);
    return p;
  }
  return std::get<CategoricalHead>(head_).logits.parameters();
}

std::vector<const Tensor*> Policy::parameters() const {
  return const_view(const_cast<Policy*>(this)->parameters());
}

Var Policy::log_prob(std::span<const Var> bound, const Tensor& states,
                     const Tensor& actions) const {
  check_batch(states, actions, action_width());
  if (gaussian()) return gaussian_log_prob_batch(bound, states, actions);
  return categorical_log_prob_batch(bound, states, actions);
}

double Policy::log_prob(std::span<const double> state,
                        std::span<const double> action) const {
  if (const auto* g = gaussian()) return gaussian_log_prob(*g, state, action);
  if (action.size() != 1) throw DimensionError("categorical action must be one index");
  return categorical_log_prob(*categorical(), state,
                              static_cast<std::size_t>(action[0]));
}

SampledAction Policy::sample(std::span<const double> state, Rng& rng) const {
  return std::visit([&](const auto& h) { return sample_action(h, state, rng); }, head_);
}

std::vector<double> Policy::mode(std::span<const double> state) const {
  if (const auto* g = gaussian()) return mlp_eval(g->mean, state);
  const auto p = categorical_probs(*categorical(), state);
  const auto best = std::max_element(p.begin(), p.end()) - p.begin();
  return {static_cast<double>(best)};
}

void Policy::clamp_log_std() {
  if (auto* g = std::get_if<GaussianHead>(&head_)) {
    for (double& v : g->log_std.mutable_values()) v = std::clamp(v, kLogStdMin, kLogStdMax);
  }
}

// -------------------------------------------------------------- critics

double value_forward(const MlpParams& critic, std::span<const double> state) {
  return mlp_eval(critic, state).at(0);
}

std::vector<double> value_forward_batch(const MlpParams& critic, const Tensor& states) {
  Tape tape;
  std::vector<Var> bound;
  for (const Tensor* p : critic.parameters()) bound.push_back(tape.constant(*p));
  Var out = mlp_forward(bound, tape.constant(states));
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

CriticSet CriticSet::make(std::size_t obs_dim, std::span<const std::size_t> hidden,
                          std::size_t num_constraints, std::uint64_t seed) {
  std::vector<std::size_t> dims{obs_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  CriticSet set;
  set.reward = init_mlp(dims, derive_seed(seed, 0));
  for (std::size_t i = 0; i < num_constraints; ++i) {
    set.costs.push_back(init_mlp(dims, derive_seed(seed, i + 1)));
  }
  return set;
}

// ----------------------------------------------------------------- Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ConfigError("Adam: learning rate must be positive");
}

void Adam::step(std::span<Tensor* const> params, const GradientMap& grads) {
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = grads.at(ParamId{static_cast<std::uint32_t>(i)});
    if (g.shape() != params[i]->shape()) throw DimensionError("Adam: gradient shape");
    auto p = params[i]->mutable_values();
    const auto gv = g.values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gv[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gv[j] * gv[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

// ----------------------------------------------------------- checkpoint

namespace {

constexpr const char* kCheckpointMagic = "ipo-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os << "tensor " << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) os << ' ' << d;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", t[i]);
    os << (i ? " " : "") << buf;
  }
  os << '\n';
}

void write_mlp(std::ostream& os, const std::string& prefix, const MlpParams& mlp) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    write_tensor(os, prefix + "." + std::to_string(l) + ".weight", mlp.layers[l].weight);
    write_tensor(os, prefix + "." + std::to_string(l) + ".bias", mlp.layers[l].bias);
  }
}

MlpParams read_mlp(std::map<std::string, Tensor>& tensors, const std::string& prefix) {
  MlpParams mlp;
  for (std::size_t l = 0;; ++l) {
    auto w = tensors.find(prefix + "." + std::to_string(l) + ".weight");
    auto b = tensors.find(prefix + "." + std::to_string(l) + ".bias");
    if (w == tensors.end() || b == tensors.end()) break;
    mlp.layers.push_back({w->second, b->second});
  }
  if (mlp.layers.empty()) throw ConfigError("checkpoint: missing network " + prefix);
  return mlp;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  const Policy& policy = ckpt.policy;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "head " << (policy.discrete() ? "categorical" : "gaussian") << '\n';
  os << "constraints " << ckpt.critics.costs.size() << '\n';
  if (const auto* g = policy.gaussian()) {
    write_mlp(os, "policy", g->mean);
    write_tensor(os, "policy.log_std", g->log_std);
  } else {
    write_mlp(os, "policy", policy.categorical()->logits);
  }
  write_mlp(os, "critic.reward", ckpt.critics.reward);
  for (std::size_t i = 0; i < ckpt.critics.costs.size(); ++i) {
    write_mlp(os, "critic.cost" + std::to_string(i), ckpt.critics.costs[i]);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read checkpoint " + path.string());
  std::string magic, key, head;
  int version = 0;
  std::size_t m = 0;
  is >> magic >> version;
  if (magic != kCheckpointMagic || version != kCheckpointVersion) {
    throw ConfigError("not a version-1 checkpoint: " + path.string());
  }
  is >> key >> head;
  if (key != "head" || (head != "gaussian" && head != "categorical")) {
    throw ConfigError("checkpoint: bad head line");
  }
  is >> key >> m;
  if (key != "constraints") throw ConfigError("checkpoint: bad constraints line");

  std::map<std::string, Tensor> tensors;
  std::string word;
  while (is >> word) {
    if (word != "tensor") throw ConfigError("checkpoint: unexpected token " + word);
    std::string name;
    std::size_t rank = 0;
    is >> name >> rank;
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      is >> d;
      count *= d;
    }
    std::vector<double> data(count);
    for (auto& x : data) {
      std::string tok;
      is >> tok;
      char* end = nullptr;
      x = std::strtod(tok.c_str(), &end);
      if (tok.empty() || *end != '\0') throw ConfigError("checkpoint: bad number " + tok);
    }
    if (!is) throw ConfigError("checkpoint: truncated tensor " + name);
    tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
  }

  Checkpoint ckpt;
  MlpParams body = read_mlp(tensors, "policy");
  if (head == "gaussian") {
    auto ls = tensors.find("policy.log_std");
    if (ls == tensors.end()) throw ConfigError("checkpoint: missing policy.log_std");
    ckpt.policy = Policy(GaussianHead{std::move(body), ls->second});
  } else {
    ckpt.policy = Policy(CategoricalHead{std::move(body)});
  }
  ckpt.critics.reward = read_mlp(tensors, "critic.reward");
  for (std::size_t i = 0; i < m; ++i) {
    ckpt.critics.costs.push_back(read_mlp(tensors, "critic.cost" + std::to_string(i)));
  }
  return ckpt;
}

}  // namespace ipo
