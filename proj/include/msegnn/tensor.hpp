#pragma once

// Dense row-major tensors of doubles with reverse-mode differentiation.
//
// Every op that receives at least one input with requires_grad() (while
// gradient recording is enabled) attaches a node holding its inputs and a
// local gradient rule. backward() linearises the reachable nodes into a tape
// in topological order and replays it once in reverse. The tape is consumed
// afterwards unless it is explicitly retained.
//
// Supported ranks are 0, 1 and 2. Binary elementwise ops accept equal shapes
// or a row vector ([k] or [1,k]) broadcast over the rows of an [m,k] matrix.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace msegnn {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
struct TensorImpl;
}  // namespace detail

class Tensor {
 public:
  Tensor();  // empty rank-1 tensor of length 0

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Rows/cols of a rank-2 tensor; a rank-1 tensor is treated as one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Direct write access. Intended for leaves (parameter updates, test
  // perturbations); writing to a recorded intermediate invalidates its tape.
  std::span<double> mutable_values();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  // Accumulated gradient; empty when requires_grad() is false.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // New leaf sharing no state with this tensor.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  void backward(bool retain_tape = false) const;

  bool same_object(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Gradient recording switch, thread-local. Ops run under a guard never
// record nodes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

enum class ElementwiseKind { kAdd, kSub, kMul, kDiv, kExp, kLog, kNegate, kScale };

// Unary kinds ignore `b`; kScale multiplies by `scalar`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b = nullptr,
                   double scalar = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// d|x|/dx is taken as 0 at x == 0.
Tensor abs(const Tensor& a);
Tensor asinh(const Tensor& a);

// Rank-2 (or rank-1 as a single row) matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

enum class ReduceKind { kSum, kMean };
// Reduce a rank-2 tensor along axis 0 (-> [cols]) or axis 1 (-> [rows]);
// a rank-1 tensor only along axis 0 (-> scalar).
Tensor reduce(ReduceKind kind, const Tensor& a, std::size_t axis);
// Reduce every element to a scalar.
Tensor reduce_all(ReduceKind kind, const Tensor& a);
inline Tensor sum(const Tensor& a) { return reduce_all(ReduceKind::kSum, a); }
inline Tensor mean(const Tensor& a) { return reduce_all(ReduceKind::kMean, a); }

// Concatenate along `axis`. Rank-1 inputs concatenate end to end (axis 0).
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
// Stack equal-length vectors into the rows of a matrix.
Tensor stack_rows(std::span<const Tensor> rows);
Tensor reshape(const Tensor& a, Shape shape);
// [k] or [1,k] -> [n,k].
Tensor repeat_rows(const Tensor& row, std::size_t n);
// Rows of a rank-2 tensor picked by index (duplicates allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
Tensor row(const Tensor& a, std::size_t r);

// Row-wise softmax / log-softmax over the last axis.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
// x / sqrt(|x|^2 + eps) per row.
Tensor normalize_rows(const Tensor& a, double eps = 1e-12);

void backward(const Tensor& loss, bool retain_tape = false);

}  // namespace msegnn
