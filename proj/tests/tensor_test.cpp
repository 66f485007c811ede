#include "msegnn/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "msegnn/error.hpp"
#include "test_util.hpp"

namespace msegnn {
namespace {

using testing::check_gradients;
using testing::random_tensor;

constexpr double kOpTolerance = 1e-4;

// Reduces an arbitrary-shaped output to a scalar with fixed random weights,
// so every output element contributes a distinct amount to the gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = random_tensor(y.shape(), rng, -1.0, 1.0, /*requires_grad=*/false);
  return sum(mul(y, w));
}

void expect_op_gradient(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                        std::vector<Tensor> inputs, std::uint64_t seed = 17) {
  auto loss = [&] { return weighted_sum(op(inputs), seed); };
  const auto check = check_gradients(loss, inputs);
  EXPECT_GT(check.checked, 0u);
  EXPECT_LT(check.max_rel_error, kOpTolerance);
}

TEST(TensorTest, FactoriesAndShape) {
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.shape(), (Shape{2, 3}));
  EXPECT_EQ(m.numel(), 6u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_EQ(Tensor::zeros({4}).rank(), 1u);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_EQ(Tensor().numel(), 0u);
}

TEST(TensorTest, MatmulIdentityAndZero) {
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(matmul(a, eye).to_vector(), (std::vector<double>{1, 2, 3, 4}));
  Tensor b = Tensor::matrix({{1, 0}, {0, 0}});
  Tensor z = Tensor::matrix({{0, 0}, {0, 0}});
  EXPECT_EQ(matmul(b, z).to_vector(), (std::vector<double>{0, 0, 0, 0}));
}

TEST(TensorTest, MatmulShapeMismatchNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("[2,3]"), std::string::npos) << what;
  }
}

TEST(TensorTest, MatmulGradientOfSumMatchesFiniteDifferences) {
  Rng rng(1);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  const auto check = check_gradients([&] { return sum(matmul(a, b)); }, {a});
  EXPECT_LT(check.max_rel_error, kOpTolerance);
}

TEST(TensorTest, ElementwiseExamples) {
  EXPECT_EQ(mul(Tensor::vector({1, 2, 3}), Tensor::vector({0, 0, 0})).to_vector(),
            (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(exp(Tensor::vector({0})).to_vector(), (std::vector<double>{1}));
  Tensor x = Tensor::vector({0.3, -0.7});
  x.set_requires_grad(true);
  const auto check = check_gradients([&] { return sum(exp(x)); }, {x});
  EXPECT_LT(check.max_rel_error, kOpTolerance);
}

TEST(TensorTest, DomainErrors) {
  EXPECT_THROW(log(Tensor::vector({1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor::vector({-1.0})), DomainError);
  EXPECT_THROW(div(Tensor::vector({1.0}), Tensor::vector({0.0})), DomainError);
}

TEST(TensorTest, BroadcastOnlyRowVectorOverMatrix) {
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(add(m, Tensor::vector({10, 20})).to_vector(),
            (std::vector<double>{11, 22, 13, 24}));
  EXPECT_THROW(add(m, Tensor::vector({1, 2, 3})), DimensionError);
  EXPECT_THROW(add(Tensor::zeros({2, 1}), m), DimensionError);
}

TEST(TensorTest, SigmoidExamples) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  const double x = 3.7;
  EXPECT_NEAR(sigmoid(Tensor::scalar(-x)).item() + sigmoid(Tensor::scalar(x)).item(), 1.0,
              1e-15);
  const double big = sigmoid(Tensor::scalar(100.0)).item();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_GT(big, 1.0 - 1e-12);
  EXPECT_LE(big, 1.0);
}

TEST(TensorTest, SigmoidStaysInsideOpenInterval) {
  std::vector<double> xs;
  for (double x = -1e6; x <= 1e6; x += 1e6 / 64) xs.push_back(x);
  for (double x : {-745.0, -40.0, -1e-300, 0.0, 1e-300, 36.0, 37.0, 40.0, 745.0}) xs.push_back(x);
  const Tensor s = sigmoid(Tensor::vector(xs));
  for (double v : s.values()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
}

TEST(TensorTest, ReduceExamples) {
  Tensor m = Tensor::matrix({{2, 2}, {4, 4}});
  EXPECT_EQ(reduce(ReduceKind::kMean, m, 0).to_vector(), (std::vector<double>{3, 3}));
  EXPECT_EQ(reduce_all(ReduceKind::kSum, Tensor::zeros({3, 2})).item(), 0.0);
  Rng rng(2);
  Tensor a = random_tensor({4, 3}, rng);
  const auto check = check_gradients([&] { return sum(mul(mean(a), mean(a))); }, {a});
  EXPECT_LT(check.max_rel_error, kOpTolerance);
  EXPECT_THROW(reduce(ReduceKind::kMean, Tensor::zeros({0, 3}), 0), EmptyReductionError);
  EXPECT_THROW(mean(Tensor()), EmptyReductionError);
  EXPECT_THROW(reduce(ReduceKind::kSum, m, 2), RankError);
}

TEST(TensorTest, ConcatExamples) {
  EXPECT_EQ(concat({Tensor::vector({1, 2}), Tensor::vector({3})}, 0).to_vector(),
            (std::vector<double>{1, 2, 3}));
  Tensor x = Tensor::vector({4, 5});
  EXPECT_EQ(concat({x, Tensor()}, 0).to_vector(), x.to_vector());
  EXPECT_THROW(concat({Tensor::zeros({2, 2}), Tensor::zeros({3, 3})}, 1), DimensionError);
}

TEST(TensorTest, ConcatSplitsBackAtRecordedOffsets) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> parts;
    std::vector<std::size_t> widths;
    const std::size_t rows = 1 + rng.below(4);
    for (int i = 0; i < 3; ++i) {
      widths.push_back(1 + rng.below(5));
      parts.push_back(random_tensor({rows, widths.back()}, rng, -2, 2, false));
    }
    Tensor out = concat(parts, 1);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < widths[i]; ++c)
          ASSERT_EQ(out.at(r, offset + c), parts[i].at(r, c));
      offset += widths[i];
    }
  }
}

TEST(TensorTest, BackwardBasics) {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad(true);
  Tensor y = Tensor::scalar(5.0);
  y.set_requires_grad(true);
  backward(mul(x, x));
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(y.grad()[0], 0.0);
}

TEST(TensorTest, BackwardErrors) {
  Tensor x = Tensor::vector({1, 2});
  x.set_requires_grad(true);
  EXPECT_THROW(backward(scale(x, 2.0)), RankError);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), TapeError);
}

TEST(TensorTest, RetainedTapeCanBeReplayedAndAccumulates) {
  Tensor x = Tensor::vector({1, 2});
  x.set_requires_grad(true);
  Tensor loss = sum(mul(x, x));
  backward(loss, /*retain_tape=*/true);
  backward(loss);
  EXPECT_EQ(x.to_vector(), (std::vector<double>{1, 2}));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{4, 8}));
}

TEST(TensorTest, RepeatedBackwardWithoutResetAccumulates) {
  Tensor x = Tensor::scalar(2.0);
  x.set_requires_grad(true);
  backward(mul(x, x));
  backward(mul(x, x));
  EXPECT_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(TensorTest, GradientAccumulationIsLinear) {
  Rng rng(4);
  Tensor a = random_tensor({3, 2}, rng);
  Tensor b = random_tensor({2, 2}, rng);
  auto l1 = [&] { return sum(exp(scale(matmul(a, b), 0.3))); };
  auto l2 = [&] { return sum(mul(sigmoid(a), a)); };
  backward(add(l1(), l2()));
  const std::vector<double> joint(a.grad().begin(), a.grad().end());
  a.zero_grad();
  backward(l1());
  backward(l2());
  const std::vector<double> separate(a.grad().begin(), a.grad().end());
  for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NEAR(joint[i], separate[i], 1e-12);
}

TEST(TensorTest, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng(5);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({3, 2}, rng);
    backward(sum(log_softmax_rows(matmul(relu(a), b))));
    std::vector<double> g(a.grad().begin(), a.grad().end());
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  EXPECT_EQ(run(), run());
}

TEST(TensorTest, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::scalar(1.0);
  x.set_requires_grad(true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    Tensor y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(grad_enabled());
}

TEST(TensorTest, SetRequiresGradRejectsIntermediates) {
  Tensor x = Tensor::scalar(1.0);
  x.set_requires_grad(true);
  Tensor y = mul(x, x);
  EXPECT_THROW(y.set_requires_grad(false), TapeError);
}

// Every differentiable op against central differences on inputs in [-2, 2].
TEST(TensorGradientProperty, ElementwiseOps) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    Tensor row = random_tensor({4}, rng);
    expect_op_gradient([](const auto& in) { return add(in[0], in[1]); }, {a, b});
    expect_op_gradient([](const auto& in) { return sub(in[0], in[1]); }, {a, b});
    expect_op_gradient([](const auto& in) { return mul(in[0], in[1]); }, {a, b});
    expect_op_gradient([](const auto& in) { return div(in[0], in[1]); }, {a, pos});
    expect_op_gradient([](const auto& in) { return exp(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return log(in[0]); }, {pos});
    expect_op_gradient([](const auto& in) { return neg(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return scale(in[0], -1.7); }, {a});
    expect_op_gradient([](const auto& in) { return add_scalar(in[0], 0.4); }, {a});
    expect_op_gradient([](const auto& in) { return sigmoid(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return relu(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return abs(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return asinh(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return mul(in[0], in[1]); }, {a, row});
    Tensor pos_row = random_tensor({4}, rng, 0.5, 2.0);
    expect_op_gradient([](const auto& in) { return div(in[0], in[1]); }, {a, pos_row});
  }
}

TEST(TensorGradientProperty, StructuralOps) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor c = random_tensor({3, 2}, rng);
    Tensor v = random_tensor({4}, rng);
    expect_op_gradient([](const auto& in) { return matmul(in[0], in[1]); }, {a, b});
    expect_op_gradient([](const auto& in) { return matmul(in[0], in[1]); }, {v, b});
    expect_op_gradient([](const auto& in) { return transpose(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return reduce(ReduceKind::kSum, in[0], 0); }, {a});
    expect_op_gradient([](const auto& in) { return reduce(ReduceKind::kMean, in[0], 1); }, {a});
    expect_op_gradient([](const auto& in) { return reduce_all(ReduceKind::kMean, in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return concat({in[0], in[1]}, 1); }, {a, c});
    expect_op_gradient([](const auto& in) { return concat({in[0], in[1]}, 0); }, {v, v});
    expect_op_gradient([](const auto& in) { return reshape(in[0], {2, 6}); }, {a});
    Tensor w = random_tensor({4}, rng);
    expect_op_gradient(
        [](const auto& in) {
          const std::vector<Tensor> rows{in[0], in[1], in[0]};
          return stack_rows(rows);
        },
        {v, w});
    expect_op_gradient([](const auto& in) { return repeat_rows(in[0], 3); }, {v});
    expect_op_gradient(
        [](const auto& in) {
          const std::size_t idx[] = {2, 0, 2, 1};
          return gather_rows(in[0], idx);
        },
        {a});
    expect_op_gradient([](const auto& in) { return row(in[0], 1); }, {a});
    expect_op_gradient([](const auto& in) { return softmax_rows(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return log_softmax_rows(in[0]); }, {a});
    expect_op_gradient([](const auto& in) { return normalize_rows(in[0]); }, {a});
  }
}

TEST(TensorTest, SoftmaxRowsSumToOne) {
  Rng rng(6);
  Tensor a = random_tensor({5, 3}, rng, -50, 50, false);
  Tensor p = softmax_rows(a);
  Tensor lp = log_softmax_rows(a);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      s += p.at(r, c);
      EXPECT_NEAR(std::exp(lp.at(r, c)), p.at(r, c), 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(TensorTest, GatherAndRepeatRows) {
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::size_t idx[] = {2, 2, 0};
  EXPECT_EQ(gather_rows(a, idx).to_vector(), (std::vector<double>{5, 6, 5, 6, 1, 2}));
  const std::size_t bad[] = {3};
  EXPECT_THROW(gather_rows(a, bad), DimensionError);
  EXPECT_EQ(repeat_rows(Tensor::vector({7, 8}), 2).to_vector(),
            (std::vector<double>{7, 8, 7, 8}));
}

TEST(TensorTest, NormalizeRowsHasUnitNorm) {
  Rng rng(7);
  Tensor a = random_tensor({4, 5}, rng, -3, 3, false);
  Tensor n = normalize_rows(a);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += n.at(r, c) * n.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

}  // namespace
}  // namespace msegnn
