#include "ipo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

namespace ipo {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_finite(std::span<const double> data, const char* what) {
  for (double x : data) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + what);
    }
  }
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a rank-2 tensor, got " +
                         to_string(t.shape()));
  }
}

// out[r x c] += a[r x k] * b[k x c]
void gemm_acc(const double* a, const double* b, double* out, std::size_t r,
              std::size_t k, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * c;
      for (std::size_t j = 0; j < c; ++j) row[j] += av * brow[j];
    }
  }
}

std::vector<double> transpose_data(std::span<const double> a, std::size_t r,
                                   std::size_t c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

enum class Broadcast { none, lhs_scalar, rhs_scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (a.is_scalar()) return Broadcast::lhs_scalar;
  if (b.is_scalar()) return Broadcast::rhs_scalar;
  throw DimensionError(std::string(what) + ": incompatible shapes " +
                       to_string(a.shape()) + " and " + to_string(b.shape()));
}

template <typename F>
Var binary(Var a, Var b, OpKind op, const char* what, F f) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av, bv, what);
  const Shape shape = kind == Broadcast::lhs_scalar ? bv.shape() : av.shape();
  std::vector<double> out(element_count(shape));
  const auto x = av.values();
  const auto y = bv.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double l = kind == Broadcast::lhs_scalar ? x[0] : x[i];
    const double r = kind == Broadcast::rhs_scalar ? y[0] : y[i];
    out[i] = f(l, r);
  }
  require_finite(out, what);
  return a.tape().record(op, a.id(), b.id(), Tensor(shape, std::move(out)));
}

template <typename F>
Var unary(Var a, OpKind op, const char* what, F f, double lo = 0.0,
          double hi = 0.0) {
  const Tensor& av = a.value();
  std::vector<double> out(av.size());
  const auto x = av.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  require_finite(out, what);
  return a.tape().record(op, a.id(), a.id(), Tensor(av.shape(), std::move(out)),
                         lo, hi);
}

void ensure(std::vector<double>& g, std::size_t n) {
  if (g.empty()) g.assign(n, 0.0);
}

// Adds an incoming gradient of the (possibly broadcast) output into an
// operand's gradient buffer.
void accumulate_operand(std::vector<double>& g, std::size_t operand_size,
                        const std::vector<double>& contrib) {
  ensure(g, operand_size);
  if (operand_size == contrib.size()) {
    for (std::size_t i = 0; i < contrib.size(); ++i) g[i] += contrib[i];
  } else {
    double total = 0.0;
    for (double v : contrib) total += v;
    g[0] += total;
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("shape " + to_string(shape_) + " holds " +
                         std::to_string(element_count(shape_)) +
                         " elements, got " + std::to_string(data_.size()));
  }
  require_finite(data_, "tensor construction");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return 1;
  throw DimensionError("rows() on tensor of shape " + to_string(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  throw DimensionError("cols() on tensor of shape " + to_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

// ----------------------------------------------------------- GradientMap

void GradientMap::accumulate(ParamId id, const Tensor& grad) {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    grads_.emplace(id, grad);
    return;
  }
  if (it->second.shape() != grad.shape()) {
    throw DimensionError("parameter " + std::to_string(id.value) +
                         " bound with inconsistent shapes");
  }
  auto dst = it->second.mutable_values();
  const auto src = grad.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

const Tensor& GradientMap::at(ParamId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw ContractError("no gradient for parameter " + std::to_string(id.value));
  }
  return it->second;
}

// ------------------------------------------------------------------ Var

Tape& Var::tape() const {
  if (tape_ == nullptr) throw ContractError("Var is not bound to a tape");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

// ----------------------------------------------------------------- Tape

Var Tape::param(const Tensor& value, ParamId id) {
  Node node;
  node.value = value;
  node.param = id;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, std::size_t lhs, std::size_t rhs, Tensor value,
                 double lo, double hi, std::vector<std::size_t> index) {
  Node node;
  node.op = op;
  node.lhs = lhs;
  node.rhs = rhs;
  node.value = std::move(value);
  node.lo = lo;
  node.hi = hi;
  node.index = std::move(index);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradientMap Tape::backward(Var loss) const {
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        to_string(root.value.shape()));
  }

  std::vector<std::vector<double>> grads(loss.id() + 1);
  grads[loss.id()] = {1.0};

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.op == OpKind::leaf || grads[i].empty()) continue;
    const std::vector<double>& g = grads[i];
    const Tensor& y = node.value;
    const Tensor& a = nodes_[node.lhs].value;
    const Tensor& b = nodes_[node.rhs].value;
    std::vector<double>& ga = grads[node.lhs];
    const auto av = a.values();
    const auto yv = y.values();

    switch (node.op) {
      case OpKind::leaf:
        break;
      case OpKind::matmul: {
        const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
        ensure(ga, a.size());
        const auto bt = transpose_data(b.values(), k, c);
        gemm_acc(g.data(), bt.data(), ga.data(), r, c, k);
        std::vector<double>& gb = grads[node.rhs];
        ensure(gb, b.size());
        const auto at = transpose_data(av, r, k);
        gemm_acc(at.data(), g.data(), gb.data(), k, r, c);
        break;
      }
      case OpKind::transpose: {
        ensure(ga, a.size());
        const auto gt = transpose_data(g, y.shape()[0], y.shape()[1]);
        for (std::size_t j = 0; j < gt.size(); ++j) ga[j] += gt[j];
        break;
      }
      case OpKind::add:
      case OpKind::sub: {
        accumulate_operand(ga, a.size(), g);
        std::vector<double> gneg = g;
        if (node.op == OpKind::sub)
          for (double& v : gneg) v = -v;
        accumulate_operand(grads[node.rhs], b.size(), gneg);
        break;
      }
      case OpKind::mul: {
        const auto bv = b.values();
        std::vector<double> da(g.size()), db(g.size());
        for (std::size_t j = 0; j < g.size(); ++j) {
          da[j] = g[j] * (bv.size() == 1 ? bv[0] : bv[j]);
          db[j] = g[j] * (av.size() == 1 ? av[0] : av[j]);
        }
        accumulate_operand(ga, a.size(), da);
        accumulate_operand(grads[node.rhs], b.size(), db);
        break;
      }
      case OpKind::neg:
        ensure(ga, a.size());
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] -= g[j];
        break;
      case OpKind::exp:
        ensure(ga, a.size());
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * yv[j];
        break;
      case OpKind::log:
        ensure(ga, a.size());
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] / av[j];
        break;
      case OpKind::tanh:
        ensure(ga, a.size());
        for (std::size_t j = 0; j < g.size(); ++j)
          ga[j] += g[j] * (1.0 - yv[j] * yv[j]);
        break;
      case OpKind::square:
        ensure(ga, a.size());
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * 2.0 * av[j];
        break;
      case OpKind::sum:
        ensure(ga, a.size());
        for (double& v : ga) v += g[0];
        break;
      case OpKind::mean: {
        ensure(ga, a.size());
        const double s = g[0] / static_cast<double>(a.size());
        for (double& v : ga) v += s;
        break;
      }
      case OpKind::min_pair: {
        const auto bv = b.values();
        ensure(ga, a.size());
        std::vector<double>& gb = grads[node.rhs];
        ensure(gb, b.size());
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (av[j] <= bv[j]) {
            ga[j] += g[j];
          } else {
            gb[j] += g[j];
          }
        }
        break;
      }
      case OpKind::clip:
        ensure(ga, a.size());
        for (std::size_t j = 0; j < g.size(); ++j)
          if (av[j] >= node.lo && av[j] <= node.hi) ga[j] += g[j];
        break;
      case OpKind::broadcast_rows: {
        ensure(ga, a.size());
        const std::size_t c = a.size();
        for (std::size_t j = 0; j < g.size(); ++j) ga[j % c] += g[j];
        break;
      }
      case OpKind::row_sum: {
        ensure(ga, a.size());
        const std::size_t c = a.shape()[1];
        for (std::size_t j = 0; j < ga.size(); ++j) ga[j] += g[j / c];
        break;
      }
      case OpKind::log_softmax: {
        ensure(ga, a.size());
        const std::size_t n = y.shape()[0], c = y.shape()[1];
        for (std::size_t r = 0; r < n; ++r) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < c; ++j) gsum += g[r * c + j];
          for (std::size_t j = 0; j < c; ++j)
            ga[r * c + j] += g[r * c + j] - std::exp(yv[r * c + j]) * gsum;
        }
        break;
      }
      case OpKind::pick: {
        ensure(ga, a.size());
        const std::size_t c = a.shape()[1];
        for (std::size_t r = 0; r < node.index.size(); ++r)
          ga[r * c + node.index[r]] += g[r];
        break;
      }
    }
  }

  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (!node.param) continue;
    if (i < grads.size() && !grads[i].empty()) {
      out.accumulate(*node.param, Tensor(node.value.shape(), grads[i]));
    } else {
      out.accumulate(*node.param, Tensor(node.value.shape()));
    }
  }
  return out;
}

// ------------------------------------------------------------------ ops

Var matmul(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t r = av.shape()[0], k = av.shape()[1], c = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         to_string(av.shape()) + " x " + to_string(bv.shape()));
  }
  std::vector<double> out(r * c, 0.0);
  gemm_acc(av.values().data(), bv.values().data(), out.data(), r, k, c);
  require_finite(out, "matmul");
  return a.tape().record(OpKind::matmul, a.id(), b.id(),
                         Tensor({r, c}, std::move(out)));
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t r = av.shape()[0], c = av.shape()[1];
  return a.tape().record(OpKind::transpose, a.id(), a.id(),
                         Tensor({c, r}, transpose_data(av.values(), r, c)));
}

Var add(Var a, Var b) {
  return binary(a, b, OpKind::add, "add", [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
  return binary(a, b, OpKind::sub, "sub", [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
  return binary(a, b, OpKind::mul, "mul", [](double x, double y) { return x * y; });
}

Var neg(Var a) {
  return unary(a, OpKind::neg, "neg", [](double x) { return -x; });
}

Var exp(Var a) {
  return unary(a, OpKind::exp, "exp", [](double x) { return std::exp(x); });
}

Var log(Var a) {
  for (double x : a.value().values()) {
    if (!(x > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(x));
    }
  }
  return unary(a, OpKind::log, "log", [](double x) { return std::log(x); });
}

Var tanh(Var a) {
  return unary(a, OpKind::tanh, "tanh", [](double x) { return std::tanh(x); });
}

Var square(Var a) {
  return unary(a, OpKind::square, "square", [](double x) { return x * x; });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().values()) total += x;
  require_finite(std::span<const double>(&total, 1), "sum");
  return a.tape().record(OpKind::sum, a.id(), a.id(), Tensor::scalar(total));
}

Var mean(Var a) {
  const Tensor& av = a.value();
  if (av.size() == 0) throw DomainError("mean of an empty tensor");
  double total = 0.0;
  for (double x : av.values()) total += x;
  return a.tape().record(OpKind::mean, a.id(), a.id(),
                         Tensor::scalar(total / static_cast<double>(av.size())));
}

Var min_pair(Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("min_pair: shapes differ, " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
  return binary(a, b, OpKind::min_pair, "min_pair",
                [](double x, double y) { return x <= y ? x : y; });
}

Var clip(Var a, double lo, double hi) {
  if (!(lo < hi)) {
    throw ConfigError("clip: lower bound " + std::to_string(lo) +
                      " must be below upper bound " + std::to_string(hi));
  }
  return unary(
      a, OpKind::clip, "clip", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      lo, hi);
}

Var broadcast_rows(Var v, std::size_t n) {
  const Tensor& vv = v.value();
  if (vv.rank() != 1) {
    throw DimensionError("broadcast_rows expects a vector, got " +
                         to_string(vv.shape()));
  }
  const std::size_t c = vv.size();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r)
    std::copy(vv.values().begin(), vv.values().end(), out.begin() + r * c);
  return v.tape().record(OpKind::broadcast_rows, v.id(), v.id(),
                         Tensor({n, c}, std::move(out)));
}

Var row_sum(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "row_sum");
  const std::size_t n = av.shape()[0], c = av.shape()[1];
  std::vector<double> out(n, 0.0);
  const auto x = av.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r] += x[r * c + j];
  require_finite(out, "row_sum");
  return a.tape().record(OpKind::row_sum, a.id(), a.id(),
                         Tensor({n}, std::move(out)));
}

Var log_softmax(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "log_softmax");
  const std::size_t n = av.shape()[0], c = av.shape()[1];
  const auto x = av.values();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * c;
    const double top = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - top);
    const double lse = top + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = row[j] - lse;
  }
  return a.tape().record(OpKind::log_softmax, a.id(), a.id(),
                         Tensor({n, c}, std::move(out)));
}

Var pick(Var a, std::vector<std::size_t> index) {
  const Tensor& av = a.value();
  require_rank2(av, "pick");
  const std::size_t n = av.shape()[0], c = av.shape()[1];
  if (index.size() != n) {
    throw DimensionError("pick: " + std::to_string(index.size()) +
                         " indices for " + std::to_string(n) + " rows");
  }
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (index[r] >= c) throw DimensionError("pick: index out of range");
    out[r] = av.values()[r * c + index[r]];
  }
  return a.tape().record(OpKind::pick, a.id(), a.id(), Tensor({n}, std::move(out)),
                         0.0, 0.0, std::move(index));
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double b) { return add(a, a.tape().constant(b)); }
Var operator+(double a, Var b) { return add(b.tape().constant(a), b); }
Var operator-(Var a, double b) { return sub(a, a.tape().constant(b)); }
Var operator-(double a, Var b) { return sub(b.tape().constant(a), b); }
Var operator*(Var a, double b) { return mul(a, a.tape().constant(b)); }
Var operator*(double a, Var b) { return mul(b.tape().constant(a), b); }

}  // namespace ipo
