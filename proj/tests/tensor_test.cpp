// Autodiff engine: forward values, finite-difference gradient oracle for every
// op, accumulation semantics, tape lifecycle, optimizer behavior.

#include <gtest/gtest.h>

#include "fd_check.hpp"
#include "srf/optim.hpp"
#include "srf/tensor.hpp"
#include "srf/tensor_nn.hpp"

using srf::Tensor;
using D = double;

namespace {

constexpr double kTol = 1e-4;

using Leaves = std::vector<Tensor<D>>;

void expect_fd(const std::function<Tensor<D>(Leaves&)>& fn,
               std::vector<std::vector<size_t>> shapes, std::vector<std::vector<double>> values) {
  auto rep = fd::check_gradients(fn, std::move(shapes), std::move(values));
  EXPECT_LT(rep.max_rel_err, kTol) << "worst element: " << rep.worst;
  EXPECT_GT(rep.checked, 0u);
}

}  // namespace

TEST(TensorForward, ElementwiseValues) {
  auto a = Tensor<D>::from_data({3}, {1.0, -2.0, 3.0});
  auto b = Tensor<D>::from_data({3}, {0.5, 4.0, -1.0});
  EXPECT_EQ(srf::add(a, b).value(), (std::vector<D>{1.5, 2.0, 2.0}));
  EXPECT_EQ(srf::sub(a, b).value(), (std::vector<D>{0.5, -6.0, 4.0}));
  EXPECT_EQ(srf::mul(a, b).value(), (std::vector<D>{0.5, -8.0, -3.0}));
  EXPECT_EQ(srf::relu(a).value(), (std::vector<D>{1.0, 0.0, 3.0}));
  auto s = srf::sigmoid(Tensor<D>::from_data({1}, {0.0}));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  auto e = srf::vexp(Tensor<D>::from_data({2}, {0.0, 1.0}));
  EXPECT_DOUBLE_EQ(e.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(e.value()[1], std::exp(1.0));
  auto af = srf::affine(a, 2.0, 1.0);
  EXPECT_EQ(af.value(), (std::vector<D>{3.0, -3.0, 7.0}));
}

TEST(TensorForward, CumsumExclusive) {
  auto x = Tensor<D>::from_data({4}, {1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(srf::cumsum_exclusive(x).value(), (std::vector<D>{0.0, 1.0, 3.0, 6.0}));
}

TEST(TensorForward, MseMatchesHandComputation) {
  auto a = Tensor<D>::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  auto b = Tensor<D>::from_data({2, 2}, {1.0, 0.0, 0.0, 0.0});
  // mean of {0, 4, 9, 16}
  EXPECT_DOUBLE_EQ(srf::mean_squared_error(a, b).item(), 29.0 / 4.0);
}

TEST(TensorForward, ShapeMismatchThrows) {
  auto a = Tensor<D>::zeros({2});
  auto b = Tensor<D>::zeros({3});
  EXPECT_THROW(srf::add(a, b), std::invalid_argument);
  EXPECT_THROW(srf::mean_squared_error(a, b), std::invalid_argument);
}

TEST(TensorGrad, Add) {
  expect_fd([](Leaves& l) { return srf::sum(srf::add(l[0], l[1])); }, {{5}, {5}},
            {fd::ramp(5, -2, 2, 1), fd::ramp(5, -2, 2, 2)});
}

TEST(TensorGrad, SubMul) {
  expect_fd(
      [](Leaves& l) { return srf::sum(srf::mul(srf::sub(l[0], l[1]), l[1])); }, {{6}, {6}},
      {fd::ramp(6, -2, 2, 3), fd::ramp(6, -2, 2, 4)});
}

TEST(TensorGrad, ExpSigmoidAffine) {
  expect_fd(
      [](Leaves& l) {
        return srf::sum(srf::vexp(srf::affine(srf::sigmoid(l[0]), 0.5, -0.2)));
      },
      {{7}}, {fd::ramp(7, -3, 3, 5)});
}

TEST(TensorGrad, ReluAwayFromKink) {
  expect_fd([](Leaves& l) { return srf::sum(srf::relu(l[0])); }, {{8}},
            {fd::ramp(8, -2, 2, 6)});
}

TEST(TensorGrad, ReluSubgradientZeroAtKink) {
  auto x = Tensor<D>::from_data({3}, {-1.0, 0.0, 2.0}, true);
  auto y = srf::sum(srf::relu(x));
  y.backward();
  EXPECT_EQ(x.grad(), (std::vector<D>{0.0, 0.0, 1.0}));
}

TEST(TensorGrad, ConcatSlice) {
  expect_fd(
      [](Leaves& l) {
        auto c = srf::concat_last(std::vector<Tensor<D>>{l[0], l[1]});
        return srf::sum(srf::mul(srf::slice_last(c, 1, 4), srf::slice_last(c, 2, 4)));
      },
      {{3}, {4}}, {fd::ramp(3, -2, 2, 7), fd::ramp(4, -2, 2, 8)});
}

TEST(TensorGrad, CumsumExclusive) {
  expect_fd(
      [](Leaves& l) { return srf::sum(srf::mul(srf::cumsum_exclusive(l[0]), l[0])); }, {{6}},
      {fd::ramp(6, -2, 2, 9)});
}

TEST(TensorGrad, Mse) {
  expect_fd([](Leaves& l) { return srf::mean_squared_error(l[0], l[1]); }, {{2, 3}, {2, 3}},
            {fd::ramp(6, -2, 2, 10), fd::ramp(6, -2, 2, 11)});
}

TEST(TensorGrad, StackAndWeightedSumRows) {
  expect_fd(
      [](Leaves& l) {
        auto m = srf::stack_rows(std::vector<Tensor<D>>{l[0], l[1], l[2]});
        return srf::sum(srf::weighted_sum_rows(m, l[3]));
      },
      {{4}, {4}, {4}, {3}},
      {fd::ramp(4, -2, 2, 12), fd::ramp(4, -2, 2, 13), fd::ramp(4, -2, 2, 14),
       fd::ramp(3, -2, 2, 15)});
}

TEST(TensorGrad, Linear) {
  expect_fd(
      [](Leaves& l) { return srf::sum(srf::linear(l[0], l[1], l[2])); }, {{5}, {3, 5}, {3}},
      {fd::ramp(5, -2, 2, 16), fd::ramp(15, -1, 1, 17), fd::ramp(3, -1, 1, 18)});
}

TEST(TensorGrad, LinearBatched) {
  expect_fd(
      [](Leaves& l) {
        return srf::sum(srf::mul(srf::linear(l[0], l[1], l[2]), srf::linear(l[0], l[1], l[2])));
      },
      {{4, 5}, {3, 5}, {3}},
      {fd::ramp(20, -1, 1, 19), fd::ramp(15, -1, 1, 20), fd::ramp(3, -1, 1, 21)});
}

TEST(TensorGrad, Conv2dValid) {
  expect_fd(
      [](Leaves& l) {
        return srf::sum(srf::conv2d(l[0], l[1], l[2], 1, 1, srf::Padding::kValid));
      },
      {{2, 5, 5}, {3, 2, 3, 3}, {3}},
      {fd::ramp(50, -1, 1, 22), fd::ramp(54, -1, 1, 23), fd::ramp(3, -1, 1, 24)});
}

TEST(TensorGrad, Conv2dSameStride2) {
  expect_fd(
      [](Leaves& l) {
        auto y = srf::conv2d(l[0], l[1], l[2], 2, 2, srf::Padding::kSameZero);
        return srf::sum(srf::mul(y, y));
      },
      {{2, 6, 5}, {3, 2, 3, 3}, {3}},
      {fd::ramp(60, -1, 1, 25), fd::ramp(54, -1, 1, 26), fd::ramp(3, -1, 1, 27)});
}

TEST(TensorGrad, BilinearSample) {
  expect_fd(
      [](Leaves& l) { return srf::sum(srf::bilinear_sample(l[0], 1.3, 2.7)); }, {{2, 4, 4}},
      {fd::ramp(32, -1, 1, 28)});
  // Near the border, where some taps fall outside and contribute zero.
  expect_fd(
      [](Leaves& l) { return srf::sum(srf::bilinear_sample(l[0], -0.4, 3.6)); }, {{2, 4, 4}},
      {fd::ramp(32, -1, 1, 29)});
}

TEST(TensorGrad, MaxPoolRows) {
  expect_fd([](Leaves& l) { return srf::sum(srf::max_pool_rows(l[0])); }, {{5, 3}},
            {fd::ramp(15, -2, 2, 30)});
}

TEST(TensorGrad, PadTransposeReshape) {
  expect_fd(
      [](Leaves& l) {
        auto p = srf::pad_rows(l[0], 4);
        auto t = srf::transpose2d(p);
        auto r = srf::reshape(t, {12});
        return srf::sum(srf::mul(r, r));
      },
      {{2, 3}}, {fd::ramp(6, -2, 2, 31)});
}

TEST(TensorNN, MaxPoolTiesGoToLowestRow) {
  auto x = Tensor<D>::from_data({2, 2}, {3.0, 1.0, 3.0, 2.0}, true);
  auto y = srf::max_pool_rows(x);
  EXPECT_EQ(y.value(), (std::vector<D>{3.0, 2.0}));
  srf::sum(y).backward();
  EXPECT_EQ(x.grad(), (std::vector<D>{1.0, 0.0, 0.0, 1.0}));
}

TEST(TensorNN, BilinearSampleInterpolatesAndZeroPads) {
  // 1-channel 2x2 map: values 0,1 / 2,3 at integer texel centers.
  auto m = Tensor<D>::from_data({1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(srf::bilinear_sample(m, 0.0, 0.0).value()[0], 0.0);
  EXPECT_DOUBLE_EQ(srf::bilinear_sample(m, 1.0, 1.0).value()[0], 3.0);
  EXPECT_DOUBLE_EQ(srf::bilinear_sample(m, 0.5, 0.5).value()[0], 1.5);
  EXPECT_DOUBLE_EQ(srf::bilinear_sample(m, 0.5, 0.0).value()[0], 0.5);
  // Fully outside the map.
  EXPECT_DOUBLE_EQ(srf::bilinear_sample(m, -5.0, 0.0).value()[0], 0.0);
  EXPECT_DOUBLE_EQ(srf::bilinear_sample(m, 0.0, 10.0).value()[0], 0.0);
}

TEST(TensorNN, Conv2dSameShapeLaw) {
  // out = ceil(in / stride) with zero same-padding.
  auto x = Tensor<D>::zeros({3, 7, 9});
  auto k = Tensor<D>::zeros({5, 3, 3, 3});
  auto b = Tensor<D>::zeros({5});
  auto y = srf::conv2d(x, k, b, 2, 2, srf::Padding::kSameZero);
  EXPECT_EQ(y.shape(), (std::vector<size_t>{5, 4, 5}));
  auto yv = srf::conv2d(x, k, b, 1, 1, srf::Padding::kValid);
  EXPECT_EQ(yv.shape(), (std::vector<size_t>{5, 5, 7}));
}

TEST(TensorTape, GradientsAccumulateAcrossUses) {
  auto x = Tensor<D>::from_data({1}, {3.0}, true);
  auto y = srf::sum(srf::add(srf::mul(x, x), x));  // d/dx (x^2 + x) = 2x + 1
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(TensorTape, SecondBackwardThrows) {
  auto x = Tensor<D>::from_data({1}, {2.0}, true);
  auto y = srf::mul(x, x);
  y.backward();
  EXPECT_THROW(y.backward(), std::logic_error);
}

TEST(TensorTape, BackwardRequiresScalarRoot) {
  auto x = Tensor<D>::from_data({2}, {1.0, 2.0}, true);
  auto y = srf::mul(x, x);
  EXPECT_THROW(y.backward(), std::invalid_argument);
}

TEST(TensorTape, NoGradGuardRecordsNothing) {
  auto x = Tensor<D>::from_data({2}, {1.0, 2.0}, true);
  srf::NoGradGuard guard;
  auto y = srf::sum(srf::mul(x, x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(TensorTape, DiamondGraphAccumulates) {
  // z = a*b + a*b reuses the same intermediate through two paths.
  auto a = Tensor<D>::from_data({1}, {2.0}, true);
  auto b = Tensor<D>::from_data({1}, {5.0}, true);
  auto p = srf::mul(a, b);
  auto z = srf::sum(srf::add(p, p));
  z.backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 10.0);
  EXPECT_DOUBLE_EQ(b.grad()[0], 4.0);
}

TEST(TensorDeterminism, SameSeedSameValues) {
  srf::Rng r1(42), r2(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r1.next_u64(), r2.next_u64());
  srf::Rng r3(43);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= (srf::Rng(42).next_u64() != r3.next_u64());
  EXPECT_TRUE(differs);
}

TEST(Adam, ConvergesOnQuadratic) {
  // min (p - 3)^2 from p = 0, lr 0.1: well under 0.05 away after 200 steps.
  auto p = Tensor<D>::from_data({1}, {0.0}, true);
  std::vector<Tensor<D>> params{p};
  srf::AdamState<D> state;
  srf::AdamConfig<D> cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 200; ++i) {
    auto diff = srf::affine(p, 1.0, -3.0);
    auto loss = srf::sum(srf::mul(diff, diff));
    loss.backward();
    srf::adam_step(params, state, cfg);
    p.zero_grad();
  }
  EXPECT_LT(std::fabs(p.value()[0] - 3.0), 0.05);
}

TEST(Adam, StateReinitializesOnParamCountChange) {
  auto a = Tensor<D>::from_data({1}, {1.0}, true);
  std::vector<Tensor<D>> params{a};
  srf::AdamState<D> state;
  srf::AdamConfig<D> cfg;
  srf::sum(srf::mul(a, a)).backward();
  srf::adam_step(params, state, cfg);
  EXPECT_EQ(state.step, 1u);
  auto b = Tensor<D>::from_data({2}, {1.0, 2.0}, true);
  params.push_back(b);
  a.zero_grad();
  srf::sum(srf::add(srf::mul(a, a), srf::sum(srf::mul(b, b)))).backward();
  srf::adam_step(params, state, cfg);
  EXPECT_EQ(state.step, 1u);  // fresh state after the parameter list changed
  EXPECT_EQ(state.m.size(), 2u);
}
