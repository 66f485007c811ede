#include "msegnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "msegnn/error.hpp"

namespace msegnn {

namespace detail {

using ImplPtr = std::shared_ptr<TensorImpl>;
using BackwardFn =
    std::function<void(const TensorImpl& out, const std::vector<ImplPtr>& in)>;

struct Node {
  std::vector<ImplPtr> inputs;
  BackwardFn backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

}  // namespace detail

using detail::ImplPtr;
using detail::TensorImpl;

struct TensorAccess {
  static const ImplPtr& impl(const Tensor& t) { return t.impl_; }
  static Tensor wrap(ImplPtr impl) { return Tensor(std::move(impl)); }
};

namespace {

thread_local bool g_grad_enabled = true;

const ImplPtr& impl_of(const Tensor& t) { return TensorAccess::impl(t); }

// Gradient sink for an input, or nullptr when it does not take gradients.
double* sink(const ImplPtr& p) {
  if (!p->requires_grad) return nullptr;
  if (p->grad.size() != p->value.size()) p->grad.assign(p->value.size(), 0.0);
  return p->grad.data();
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<ImplPtr> inputs, detail::BackwardFn fn) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->value = std::move(values);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    out->requires_grad = true;
    out->node = std::make_shared<detail::Node>();
    out->node->inputs = std::move(inputs);
    out->node->backward = std::move(fn);
  }
  return TensorAccess::wrap(std::move(out));
}

std::size_t rows_of(const Shape& s) { return s.size() == 2 ? s[0] : 1; }
std::size_t cols_of(const Shape& s) {
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

void require_rank_at_most_2(const Tensor& t, const char* op) {
  if (t.rank() > 2) {
    throw RankError(std::string(op) + ": rank " + std::to_string(t.rank()) +
                    " tensors are not supported");
  }
}

bool is_row_vector(const Shape& s) {
  return s.size() == 1 || (s.size() == 2 && s[0] == 1);
}

// Layout of a binary elementwise op after row-vector broadcasting.
struct BinaryLayout {
  Shape out;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool a_bcast = false;
  bool b_bcast = false;
};

BinaryLayout binary_layout(const Tensor& a, const Tensor& b) {
  BinaryLayout l;
  if (a.shape() == b.shape()) {
    l.out = a.shape();
    l.rows = 1;
    l.cols = a.numel();
    return l;
  }
  auto fits = [](const Shape& m, const Shape& v) {
    return m.size() == 2 && is_row_vector(v) && shape_numel(v) == m[1] &&
           !(v.size() == 2 && m[0] == 1);
  };
  if (fits(a.shape(), b.shape())) {
    l.out = a.shape();
    l.b_bcast = true;
  } else if (fits(b.shape(), a.shape())) {
    l.out = b.shape();
    l.a_bcast = true;
  } else {
    throw DimensionError("elementwise: shapes " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()) +
                         " are not broadcast-compatible");
  }
  l.rows = l.out[0];
  l.cols = l.out[1];
  return l;
}

Tensor binary(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  const BinaryLayout l = binary_layout(a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(l.rows * l.cols);
  for (std::size_t i = 0; i < l.rows; ++i) {
    for (std::size_t j = 0; j < l.cols; ++j) {
      const double x = av[l.a_bcast ? j : i * l.cols + j];
      const double y = bv[l.b_bcast ? j : i * l.cols + j];
      double r = 0.0;
      switch (kind) {
        case ElementwiseKind::kAdd: r = x + y; break;
        case ElementwiseKind::kSub: r = x - y; break;
        case ElementwiseKind::kMul: r = x * y; break;
        case ElementwiseKind::kDiv:
          if (y == 0.0) throw DomainError("div: division by zero");
          r = x / y;
          break;
        default: throw DomainError("elementwise: not a binary kind");
      }
      out[i * l.cols + j] = r;
    }
  }
  auto fn = [kind, l](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* ga = sink(in[0]);
    double* gb = sink(in[1]);
    const double* x = in[0]->value.data();
    const double* y = in[1]->value.data();
    const double* g = o.grad.data();
    for (std::size_t i = 0; i < l.rows; ++i) {
      for (std::size_t j = 0; j < l.cols; ++j) {
        const std::size_t k = i * l.cols + j;
        const std::size_t ia = l.a_bcast ? j : k;
        const std::size_t ib = l.b_bcast ? j : k;
        switch (kind) {
          case ElementwiseKind::kAdd:
            if (ga) ga[ia] += g[k];
            if (gb) gb[ib] += g[k];
            break;
          case ElementwiseKind::kSub:
            if (ga) ga[ia] += g[k];
            if (gb) gb[ib] -= g[k];
            break;
          case ElementwiseKind::kMul:
            if (ga) ga[ia] += g[k] * y[ib];
            if (gb) gb[ib] += g[k] * x[ia];
            break;
          case ElementwiseKind::kDiv:
            if (ga) ga[ia] += g[k] / y[ib];
            if (gb) gb[ib] -= g[k] * x[ia] / (y[ib] * y[ib]);
            break;
          default: break;
        }
      }
    }
  };
  return make_result(l.out, std::move(out), {impl_of(a), impl_of(b)}, fn);
}

// Unary op with gradient rule dout/dx expressed through (x, y).
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative d) {
  std::vector<double> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  auto fn = [d](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* ga = sink(in[0]);
    if (!ga) return;
    const auto& x = in[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ga[i] += o.grad[i] * d(x[i], o.value[i]);
    }
  };
  return make_result(a.shape(), std::move(out), {impl_of(a)}, fn);
}

// c[m,n] (+)= a[m,k] * b[k,n]; rows of `a` with zero entries are skipped,
// which keeps adjacency products proportional to the edge count.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,k] += g[m,n] * b[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * g[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = {0};
}

Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return from({rows.size(), cols}, std::move(values));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->value.size(); }
std::size_t Tensor::rows() const { return rows_of(impl_->shape); }
std::size_t Tensor::cols() const { return cols_of(impl_->shape); }
std::span<const double> Tensor::values() const { return impl_->value; }
std::span<double> Tensor::mutable_values() { return impl_->value; }
std::vector<double> Tensor::to_vector() const { return impl_->value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw RankError("item: tensor of shape " + shape_to_string(shape()) +
                    " is not a single element");
  }
  return impl_->value[0];
}

double Tensor::at(std::size_t i) const {
  if (i >= numel()) throw DimensionError("at: index out of range");
  return impl_->value[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw DimensionError("at: index out of range");
  return impl_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw TapeError("set_requires_grad: only leaves can be flagged");
  impl_->requires_grad = flag;
  if (flag) {
    impl_->grad.assign(impl_->value.size(), 0.0);
  } else {
    impl_->grad.clear();
  }
  return *this;
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->grad; }

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->value); }

void Tensor::backward(bool retain_tape) const { msegnn::backward(*this, retain_tape); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor* b,
                   double scalar) {
  switch (kind) {
    case ElementwiseKind::kAdd:
    case ElementwiseKind::kSub:
    case ElementwiseKind::kMul:
    case ElementwiseKind::kDiv:
      if (b == nullptr) throw DimensionError("elementwise: missing second operand");
      return binary(kind, a, *b);
    case ElementwiseKind::kExp:
      return unary(
          a, [](double x) { return std::exp(x); },
          [](double, double y) { return y; });
    case ElementwiseKind::kLog:
      for (double x : a.values()) {
        if (!(x > 0.0)) {
          throw DomainError("log: argument " + std::to_string(x) + " is not positive");
        }
      }
      return unary(
          a, [](double x) { return std::log(x); },
          [](double x, double) { return 1.0 / x; });
    case ElementwiseKind::kNegate:
      return unary(
          a, [](double x) { return -x; }, [](double, double) { return -1.0; });
    case ElementwiseKind::kScale:
      return unary(
          a, [scalar](double x) { return scalar * x; },
          [scalar](double, double) { return scalar; });
  }
  throw DomainError("elementwise: unknown kind");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kDiv, a, b); }
Tensor exp(const Tensor& a) { return elementwise(ElementwiseKind::kExp, a); }
Tensor log(const Tensor& a) { return elementwise(ElementwiseKind::kLog, a); }
Tensor neg(const Tensor& a) { return elementwise(ElementwiseKind::kNegate, a); }
Tensor scale(const Tensor& a, double factor) {
  return elementwise(ElementwiseKind::kScale, a, nullptr, factor);
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  // Clamped so the result stays strictly inside (0, 1) in double precision.
  static constexpr double kLo = std::numeric_limits<double>::min();
  static constexpr double kHi = 1.0 - 0x1.0p-53;
  return unary(
      a,
      [](double x) {
        const double z = std::exp(-std::abs(x));
        const double y = x >= 0.0 ? 1.0 / (1.0 + z) : z / (1.0 + z);
        return std::clamp(y, kLo, kHi);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor asinh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::asinh(x); },
      [](double x, double) { return 1.0 / std::sqrt(1.0 + x * x); });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank_at_most_2(a, "matmul");
  if (a.rank() == 0 || b.rank() != 2) {
    throw DimensionError("matmul: shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " are not matrices");
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions of " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()) + " disagree");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
  auto fn = [m, k, n](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    if (double* ga = sink(in[0])) {
      gemm_nt(o.grad.data(), in[1]->value.data(), ga, m, k, n);
    }
    if (double* gb = sink(in[1])) {
      gemm_tn(in[0]->value.data(), o.grad.data(), gb, m, k, n);
    }
  };
  return make_result(std::move(shape), std::move(out), {impl_of(a), impl_of(b)}, fn);
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw RankError("transpose: expects a rank-2 tensor");
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  auto fn = [m, n](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* ga = sink(in[0]);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j * m + i];
  };
  return make_result({n, m}, std::move(out), {impl_of(a)}, fn);
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(ReduceKind kind, const Tensor& a, std::size_t axis) {
  require_rank_at_most_2(a, "reduce");
  if (axis >= a.rank()) {
    throw RankError("reduce: axis " + std::to_string(axis) + " out of range for " +
                    shape_to_string(a.shape()));
  }
  if (a.rank() == 1) {
    if (a.numel() == 0) throw EmptyReductionError("reduce: empty axis");
    return reduce_all(kind, a);
  }
  const std::size_t m = a.shape()[0];
  const std::size_t n = a.shape()[1];
  const std::size_t len = axis == 0 ? m : n;
  if (len == 0) throw EmptyReductionError("reduce: empty axis");
  const double f = kind == ReduceKind::kMean ? 1.0 / static_cast<double>(len) : 1.0;
  const std::size_t out_n = axis == 0 ? n : m;
  std::vector<double> out(out_n, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += av[i * n + j];
  for (double& v : out) v *= f;
  auto fn = [m, n, axis, f](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* ga = sink(in[0]);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += f * o.grad[axis == 0 ? j : i];
  };
  return make_result({out_n}, std::move(out), {impl_of(a)}, fn);
}

Tensor reduce_all(ReduceKind kind, const Tensor& a) {
  const std::size_t len = a.numel();
  if (len == 0) throw EmptyReductionError("reduce: empty tensor");
  const double f = kind == ReduceKind::kMean ? 1.0 / static_cast<double>(len) : 1.0;
  double total = 0.0;
  for (double v : a.values()) total += v;
  auto fn = [f](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* ga = sink(in[0]);
    if (!ga) return;
    const double g = f * o.grad[0];
    for (std::size_t i = 0; i < in[0]->value.size(); ++i) ga[i] += g;
  };
  return make_result({}, {total * f}, {impl_of(a)}, fn);
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(std::span<const Tensor> parts_in, std::size_t axis) {
  std::vector<Tensor> parts;
  for (const auto& p : parts_in) {
    if (!(p.rank() == 1 && p.numel() == 0)) parts.push_back(p);
  }
  if (parts.empty()) return Tensor();
  const std::size_t rank = parts.front().rank();
  for (const auto& p : parts) {
    if (p.rank() != rank || rank == 0 || rank > 2) {
      throw DimensionError("concat: incompatible ranks, e.g. " +
                           shape_to_string(parts.front().shape()) + " and " +
                           shape_to_string(p.shape()));
    }
  }
  if (axis >= rank) throw DimensionError("concat: axis out of range");
  // View every part as [outer, inner_i] and concatenate along inner.
  const bool along_rows = rank == 2 && axis == 0;
  std::size_t outer = along_rows ? 1 : parts.front().rows();
  std::vector<std::size_t> inner;
  for (const auto& p : parts) {
    if (rank == 2) {
      const std::size_t other = along_rows ? p.shape()[1] : p.shape()[0];
      const std::size_t ref =
          along_rows ? parts.front().shape()[1] : parts.front().shape()[0];
      if (other != ref) {
        throw DimensionError("concat: shapes " + shape_to_string(parts.front().shape()) +
                             " and " + shape_to_string(p.shape()) +
                             " differ off the concatenation axis");
      }
    }
    inner.push_back(along_rows || rank == 1 ? p.numel() : p.shape()[1]);
  }
  const std::size_t total_inner = std::accumulate(inner.begin(), inner.end(), std::size_t{0});
  std::vector<double> out(outer * total_inner);
  std::size_t offset = 0;
  std::vector<ImplPtr> inputs;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    const auto pv = parts[t].values();
    for (std::size_t r = 0; r < outer; ++r)
      std::copy_n(pv.begin() + r * inner[t], inner[t],
                  out.begin() + r * total_inner + offset);
    offset += inner[t];
    inputs.push_back(impl_of(parts[t]));
  }
  Shape shape;
  if (rank == 1) {
    shape = {total_inner};
  } else if (along_rows) {
    std::size_t rows = 0;
    for (const auto& p : parts) rows += p.shape()[0];
    shape = {rows, parts.front().shape()[1]};
  } else {
    shape = {outer, total_inner};
  }
  auto fn = [outer, inner, total_inner](const TensorImpl& o,
                                        const std::vector<ImplPtr>& in) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < in.size(); ++t) {
      if (double* g = sink(in[t])) {
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t j = 0; j < inner[t]; ++j)
            g[r * inner[t] + j] += o.grad[r * total_inner + off + j];
      }
      off += inner[t];
    }
  };
  return make_result(std::move(shape), std::move(out), std::move(inputs), fn);
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                         shape_to_string(shape));
  }
  auto fn = [](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* ga = sink(in[0]);
    if (!ga) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  };
  return make_result(std::move(shape), a.to_vector(), {impl_of(a)}, fn);
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t k = rows.front().numel();
  std::vector<Tensor> views;
  views.reserve(rows.size());
  for (const auto& r : rows) {
    if (!is_row_vector(r.shape()) || r.numel() != k) {
      throw DimensionError("stack_rows: row of shape " + shape_to_string(r.shape()) +
                           " does not match length " + std::to_string(k));
    }
    views.push_back(r.rank() == 2 ? r : reshape(r, {1, k}));
  }
  return concat(views, 0);
}

Tensor repeat_rows(const Tensor& r, std::size_t n) {
  if (!is_row_vector(r.shape())) {
    throw DimensionError("repeat_rows: expected a row vector, got " +
                         shape_to_string(r.shape()));
  }
  const std::size_t k = r.numel();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(r.values().begin(), r.values().end(), out.begin() + i * k);
  auto fn = [n, k](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* g = sink(in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) g[j] += o.grad[i * k + j];
  };
  return make_result({n, k}, std::move(out), {impl_of(r)}, fn);
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  if (a.rank() != 2) throw RankError("gather_rows: expects a rank-2 tensor");
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * k);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(a.values().begin() + idx[i] * k, k, out.begin() + i * k);
  }
  const std::size_t count = idx.size();
  auto fn = [idx, k](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* g = sink(in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < k; ++j) g[idx[i] * k + j] += o.grad[i * k + j];
  };
  return make_result({count, k}, std::move(out), {impl_of(a)}, fn);
}

Tensor row(const Tensor& a, std::size_t r) {
  const std::size_t index[] = {r};
  return reshape(gather_rows(a, index), {a.cols()});
}

// ---------------------------------------------------------------------------
// Softmax

Tensor softmax_rows(const Tensor& a) {
  require_rank_at_most_2(a, "softmax_rows");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (n == 0) throw EmptyReductionError("softmax_rows: empty rows");
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double mx = *std::max_element(av.begin() + i * n, av.begin() + (i + 1) * n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(av[i * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  auto fn = [m, n](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* g = sink(in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
    }
  };
  return make_result(a.shape(), std::move(out), {impl_of(a)}, fn);
}

Tensor normalize_rows(const Tensor& a, double eps) {
  require_rank_at_most_2(a, "normalize_rows");
  if (!(eps > 0.0)) throw DomainError("normalize_rows: eps must be positive");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    double ss = eps;
    for (std::size_t j = 0; j < n; ++j) ss += av[i * n + j] * av[i * n + j];
    norms[i] = std::sqrt(ss);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] / norms[i];
  }
  auto fn = [m, n, norms = std::move(norms)](const TensorImpl& o,
                                             const std::vector<ImplPtr>& in) {
    double* g = sink(in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += (o.grad[i * n + j] - o.value[i * n + j] * dot) / norms[i];
    }
  };
  return make_result(a.shape(), std::move(out), {impl_of(a)}, fn);
}

Tensor log_softmax_rows(const Tensor& a) {
  require_rank_at_most_2(a, "log_softmax_rows");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (n == 0) throw EmptyReductionError("log_softmax_rows: empty rows");
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double mx = *std::max_element(av.begin() + i * n, av.begin() + (i + 1) * n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(av[i * n + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] - lse;
  }
  auto fn = [m, n](const TensorImpl& o, const std::vector<ImplPtr>& in) {
    double* g = sink(in[0]);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += o.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += o.grad[i * n + j] - std::exp(o.value[i * n + j]) * total;
    }
  };
  return make_result(a.shape(), std::move(out), {impl_of(a)}, fn);
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Tensor& loss, bool retain_tape) {
  const ImplPtr& root = impl_of(loss);
  if (root->value.size() != 1) {
    throw RankError("backward: loss of shape " + shape_to_string(root->shape) +
                    " is not a scalar");
  }
  if (!root->requires_grad) {
    throw TapeError("backward: loss does not depend on any tensor requiring grad");
  }
  if (!root->node) {
    sink(root)[0] += 1.0;
    return;
  }

  // Linearise the reachable nodes into a tape: post-order DFS yields an
  // order where every op follows the ops producing its inputs.
  std::vector<TensorImpl*> tape;
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    if (cur->node->consumed) {
      throw TapeError("backward: tape was already consumed by an earlier backward()");
    }
    if (next < cur->node->inputs.size()) {
      TensorImpl* child = cur->node->inputs[next++].get();
      if (child->node && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    tape.push_back(cur);
    stack.pop_back();
  }

  for (TensorImpl* t : tape) t->grad.assign(t->value.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    TensorImpl* t = *it;
    t->node->backward(*t, t->node->inputs);
  }
  for (TensorImpl* t : tape) {
    t->grad.clear();
    t->grad.shrink_to_fit();
    if (!retain_tape) {
      t->node->consumed = true;
      t->node->inputs.clear();
      t->node->backward = nullptr;
    }
  }
}

}  // namespace msegnn
