#pragma once

// Define-by-run reverse-mode automatic differentiation over dense
// row-major tensors of doubles.
//
// A Tape records every operation applied to its Vars. Calling backward() on
// a scalar Var walks the tape once in reverse and returns the gradient of
// that scalar with respect to every parameter leaf registered on the tape.
// Tapes are cheap and are meant to be rebuilt for every loss evaluation.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipo/error.hpp"

namespace ipo {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class Tensor {
 public:
  // Scalar zero.
  Tensor();
  explicit Tensor(Shape shape);
  // Throws DimensionError if the element count disagrees with the shape and
  // NumericError if any entry is NaN or Inf.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor full(Shape shape, double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1 && shape_.empty(); }

  // Rank-2 extents. A rank-1 tensor counts as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const noexcept { return data_; }
  // Raw write access for optimizers. Callers are responsible for keeping
  // entries finite.
  std::span<double> mutable_values() noexcept { return data_; }

  double item() const;
  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Identifies a trainable tensor within one model. Ids are assigned by the
// caller when binding parameters to a tape.
struct ParamId {
  std::uint32_t value = 0;
  friend auto operator<=>(const ParamId&, const ParamId&) = default;
};

class GradientMap {
 public:
  void accumulate(ParamId id, const Tensor& grad);
  bool contains(ParamId id) const { return grads_.contains(id); }
  const Tensor& at(ParamId id) const;
  std::size_t size() const { return grads_.size(); }

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<ParamId, Tensor> grads_;
};

class Tape;

// Handle to a node on a tape. Only valid while the tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const;
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  transpose,
  add,
  sub,
  mul,
  neg,
  exp,
  log,
  tanh,
  square,
  sum,
  mean,
  min_pair,
  clip,
  broadcast_rows,
  row_sum,
  log_softmax,
  pick,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A trainable leaf. The same id may be bound more than once; gradients
  // for repeated bindings are summed.
  Var param(const Tensor& value, ParamId id);
  // A leaf that receives no gradient.
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  std::size_t size() const { return nodes_.size(); }

  // Gradients of a scalar loss with respect to every parameter leaf on the
  // tape. Parameters the loss does not depend on get zero gradients.
  GradientMap backward(Var loss) const;

  // Used by the op functions below.
  Var record(OpKind op, std::size_t lhs, std::size_t rhs, Tensor value,
             double lo = 0.0, double hi = 0.0,
             std::vector<std::size_t> index = {});

 private:
  struct Node {
    OpKind op = OpKind::leaf;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    Tensor value;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> index;
    std::optional<ParamId> param;
  };

  std::deque<Node> nodes_;  // deque keeps value() references stable
};

// Matrix product of [r x k] and [k x c].
Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise. Binary ops accept equal shapes or a scalar on either side.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);  // DomainError on non-positive entries
Var tanh(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);  // DomainError on empty input
// Elementwise minimum; ties take the first argument.
Var min_pair(Var a, Var b);
// Clamp to [lo, hi]. Gradient passes on the closed interval.
Var clip(Var a, double lo, double hi);

// [c] -> [n x c] by repeating the vector on every row.
Var broadcast_rows(Var v, std::size_t n);
// [n x c] -> [n]
Var row_sum(Var a);
// Row-wise log-softmax of [n x c].
Var log_softmax(Var a);
// Selects entry index[i] from row i of [n x c], giving [n].
Var pick(Var a, std::vector<std::size_t> index);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);

}  // namespace ipo
