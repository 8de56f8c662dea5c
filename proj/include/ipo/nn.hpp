#pragma once

// Small tanh MLPs used as policies and critics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ipo/autodiff.hpp"
#include "ipo/random.hpp"

namespace ipo {

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Tanh on hidden layers, linear output.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  // weight0, bias0, weight1, bias1, ...
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Glorot-uniform weights, zero biases. The last layer's weights are further
// multiplied by output_scale. Throws ConfigError for fewer than two dims or
// a zero extent.
MlpParams init_mlp(std::span<const std::size_t> dims, std::uint64_t seed,
                   double output_scale = 1.0);

// Binds parameters to a tape as leaves with ids first_id, first_id+1, ...
std::vector<Var> bind_params(Tape& tape, std::span<const Tensor* const> params,
                      std::uint32_t first_id = 0);

// x: [n x in] -> [n x out]. `bound` holds the MLP's leaves in parameters()
// order.
Var mlp_forward(std::span<const Var> bound, Var x);

// Plain evaluation of a single state, bitwise identical to the taped path.
std::vector<double> mlp_eval(const MlpParams& mlp, std::span<const double> x);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct GaussianHead {
  MlpParams mean;
  Tensor log_std;  // [action_dim], state independent
  friend bool operator==(const GaussianHead&, const GaussianHead&) = default;
};

struct CategoricalHead {
  MlpParams logits;
  friend bool operator==(const CategoricalHead&, const CategoricalHead&) = default;
};

struct SampledAction {
  std::vector<double> action;  // categorical: a single entry holding the index
  double log_prob = 0.0;
};

double gaussian_log_prob(const GaussianHead& head, std::span<const double> state,
                         std::span<const double> action);
double categorical_log_prob(const CategoricalHead& head,
                            std::span<const double> state, std::size_t action);
std::vector<double> categorical_probs(const CategoricalHead& head,
                                      std::span<const double> state);

SampledAction sample_action(const GaussianHead& head, std::span<const double> state,
                            Rng& rng);
SampledAction sample_action(const CategoricalHead& head,
                            std::span<const double> state, Rng& rng);

class Policy {
 public:
  Policy() = default;
  explicit Policy(GaussianHead head) : head_(std::move(head)) {}
  explicit Policy(CategoricalHead head) : head_(std::move(head)) {}

  // Continuous policy over action_dim outputs, or categorical over
  // num_actions when `discrete`.
  static Policy make(std::size_t obs_dim, std::span<const std::size_t> hidden,
                     std::size_t action_outputs, bool discrete, std::uint64_t seed);

  bool discrete() const { return std::holds_alternative<CategoricalHead>(head_); }
  // Columns of the action matrix stored in a batch (1 for categorical).
  std::size_t action_width() const;
  std::size_t obs_dim() const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  // Log-probabilities [n] of actions [n x action_width] under states [n x obs].
  Var log_prob(std::span<const Var> bound, const Tensor& states,
               const Tensor& actions) const;
  double log_prob(std::span<const double> state, std::span<const double> action) const;
  SampledAction sample(std::span<const double> state, Rng& rng) const;
  // Deterministic action: Gaussian mean or categorical argmax.
  std::vector<double> mode(std::span<const double> state) const;

  // Enforces the log_std range; no-op for categorical heads.
  void clamp_log_std();
  const GaussianHead* gaussian() const { return std::get_if<GaussianHead>(&head_); }
  const CategoricalHead* categorical() const {
    return std::get_if<CategoricalHead>(&head_);
  }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::variant<GaussianHead, CategoricalHead> head_;
};

double value_forward(const MlpParams& critic, std::span<const double> state);
// Batched values [n] for states [n x obs].
std::vector<double> value_forward_batch(const MlpParams& critic, const Tensor& states);

struct CriticSet {
  MlpParams reward;
  std::vector<MlpParams> costs;  // one per constraint

  static CriticSet make(std::size_t obs_dim, std::span<const std::size_t> hidden,
                        std::size_t num_constraints, std::uint64_t seed);
  friend bool operator==(const CriticSet&, const CriticSet&) = default;
};

// Adam on a fixed list of parameter tensors; minimizes.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(std::span<Tensor* const> params, const GradientMap& grads);
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Checkpoint: policy plus critics, stored as named tensors in a text file.
// See README for the format.
struct Checkpoint {
  Policy policy;
  CriticSet critics;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ipo
