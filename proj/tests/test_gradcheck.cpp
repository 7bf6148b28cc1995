// Central finite-difference checks for every differentiable op, run in
// 64-bit shadow mode, plus the RMSProp closed-form cases.
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vrn/gradcheck.hpp"
#include "vrn/ops.hpp"
#include "vrn/optim.hpp"
#include "vrn/rng.hpp"

using vrn::Tensor;
using D = double;

namespace {

Tensor<D> randt(std::vector<int> shape, vrn::Rng& rng, double lo = -1.0,
                double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  for (long long i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so relu kinks stay clear of the fd step.
Tensor<D> randt_signed(std::vector<int> shape, vrn::Rng& rng) {
  Tensor<D> t(std::move(shape));
  for (long long i = 0; i < t.numel(); ++i)
    t.data()[i] = rng.uniform(0.05, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return t;
}

template <typename F>
void expect_grads_ok(F&& forward, const std::vector<Tensor<D>>& wrt) {
  auto rep = vrn::check_gradients<D>(std::forward<F>(forward), wrt);
  EXPECT_TRUE(rep.passed) << "max relative error " << rep.max_rel_err
                          << " over " << rep.checked << " elements";
}

}  // namespace

TEST(GradCheck, Conv2dIm2col) {
  vrn::Rng rng(21);
  auto x = randt({2, 5, 5}, rng);
  auto w = randt({3, 2, 3, 3}, rng);
  auto b = randt({3}, rng);
  expect_grads_ok(
      [&] {
        return vrn::sum_all(
            vrn::sigmoid(vrn::conv2d(x, w, b, 1, 1, vrn::ConvEngine::kIm2col)));
      },
      {x, w, b});
}

TEST(GradCheck, Conv2dDirect) {
  vrn::Rng rng(22);
  auto x = randt({2, 6, 6}, rng);
  auto w = randt({2, 2, 3, 3}, rng);
  auto b = randt({2}, rng);
  expect_grads_ok(
      [&] {
        return vrn::sum_all(
            vrn::sigmoid(vrn::conv2d(x, w, b, 2, 2, vrn::ConvEngine::kDirect)));
      },
      {x, w, b});
}

TEST(GradCheck, Conv3dFlatEachAxis) {
  for (int axis = 0; axis < 4; ++axis) {  // 3 = pointwise
    vrn::Rng rng(23 + axis);
    int k[3] = {1, 1, 1}, pad[3] = {0, 0, 0};
    if (axis < 3) {
      k[axis] = 3;
      pad[axis] = 1;
    }
    auto x = randt({2, 3, 4, 4}, rng);
    auto w = randt({2, 2, k[0], k[1], k[2]}, rng);
    auto b = randt({2}, rng);
    expect_grads_ok(
        [&] {
          return vrn::sum_all(vrn::sigmoid(
              vrn::conv3d_flat(x, w, b, {pad[0], pad[1], pad[2]})));
        },
        {x, w, b});
  }
}

TEST(GradCheck, Relu) {
  vrn::Rng rng(26);
  auto x = randt_signed({3, 4, 4}, rng);
  expect_grads_ok([&] { return vrn::sum_all(vrn::sigmoid(vrn::relu(x))); }, {x});
}

TEST(GradCheck, SigmoidSlopeAtZeroMatchesQuarter) {
  auto x = Tensor<D>::zeros({1});
  auto rep = vrn::check_gradients<D>(
      [&] { return vrn::sum_all(vrn::sigmoid(x)); }, {x});
  EXPECT_TRUE(rep.passed);
  vrn::Tape<D>::Scope scope;
  auto loss = vrn::sum_all(vrn::sigmoid(x));
  scope.tape().backward(loss);
  EXPECT_NEAR(x.grad()[0], 0.25, 1e-5);
}

TEST(GradCheck, Maxpool2) {
  vrn::Rng rng(27);
  auto x = randt({2, 4, 4}, rng);
  expect_grads_ok([&] { return vrn::sum_all(vrn::sigmoid(vrn::maxpool2(x))); },
                  {x});
}

TEST(GradCheck, Upsample2) {
  vrn::Rng rng(28);
  auto x = randt({2, 3, 3}, rng);
  expect_grads_ok(
      [&] { return vrn::sum_all(vrn::sigmoid(vrn::upsample_nearest2(x))); },
      {x});
}

TEST(GradCheck, UpsampleAxis2) {
  vrn::Rng rng(29);
  auto x = randt({2, 2, 3, 3}, rng);
  expect_grads_ok(
      [&] { return vrn::sum_all(vrn::sigmoid(vrn::upsample_axis2(x, 1))); },
      {x});
}

TEST(GradCheck, AddAndConcat) {
  vrn::Rng rng(30);
  auto a = randt({2, 3, 3}, rng);
  auto b = randt({2, 3, 3}, rng);
  auto c = randt({1, 3, 3}, rng);
  expect_grads_ok(
      [&] {
        auto y = vrn::concat_channels<D>({vrn::add(a, b), c});
        return vrn::sum_all(vrn::sigmoid(y));
      },
      {a, b, c});
}

TEST(GradCheck, BatchNormTrain) {
  vrn::Rng rng(31);
  auto x = randt({2, 4, 4}, rng);
  auto gamma = randt({2}, rng, 0.5, 1.5);
  auto beta = randt({2}, rng, -0.5, 0.5);
  auto rm = Tensor<D>::zeros({2});
  auto rv = Tensor<D>::full({2}, 1.0);
  expect_grads_ok(
      [&] {
        return vrn::sum_all(vrn::sigmoid(
            vrn::batchnorm(x, gamma, beta, rm, rv, vrn::BnMode::kTrain)));
      },
      {x, gamma, beta});
}

TEST(GradCheck, BatchNormEval) {
  vrn::Rng rng(32);
  auto x = randt({2, 4, 4}, rng);
  auto gamma = randt({2}, rng, 0.5, 1.5);
  auto beta = randt({2}, rng, -0.5, 0.5);
  auto rm = randt({2}, rng, -0.2, 0.2);
  auto rv = randt({2}, rng, 0.5, 2.0);
  expect_grads_ok(
      [&] {
        return vrn::sum_all(vrn::sigmoid(
            vrn::batchnorm(x, gamma, beta, rm, rv, vrn::BnMode::kEval)));
      },
      {x, gamma, beta});
}

TEST(GradCheck, BceBothModes) {
  vrn::Rng rng(33);
  auto x = randt({2, 2, 2}, rng);
  std::vector<D> target;
  for (int i = 0; i < 8; ++i) target.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  expect_grads_ok([&] { return vrn::bce_loss(vrn::sigmoid(x), target, true); },
                  {x});
  expect_grads_ok([&] { return vrn::bce_loss(vrn::sigmoid(x), target, false); },
                  {x});
}

TEST(GradCheck, Reshape) {
  vrn::Rng rng(34);
  auto x = randt({2, 6}, rng);
  expect_grads_ok(
      [&] { return vrn::sum_all(vrn::sigmoid(vrn::reshape(x, {3, 4}))); }, {x});
}

TEST(GradCheck, ComposedStack) {
  // conv -> bn -> relu -> pool -> upsample -> conv -> sigmoid -> bce
  vrn::Rng rng(35);
  auto x = randt({2, 4, 4}, rng);
  auto w1 = randt({4, 2, 3, 3}, rng, -0.5, 0.5);
  auto b1 = randt({4}, rng, -0.2, 0.2);
  auto gamma = randt({4}, rng, 0.8, 1.2);
  auto beta = randt({4}, rng, -0.2, 0.2);
  auto rm = Tensor<D>::zeros({4});
  auto rv = Tensor<D>::full({4}, 1.0);
  auto w2 = randt({1, 4, 1, 1}, rng, -0.5, 0.5);
  auto b2 = randt({1}, rng, -0.2, 0.2);
  std::vector<D> target;
  for (int i = 0; i < 16; ++i) target.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  expect_grads_ok(
      [&] {
        auto h = vrn::conv2d(x, w1, b1, 1, 1);
        h = vrn::batchnorm(h, gamma, beta, rm, rv, vrn::BnMode::kTrain);
        h = vrn::relu(h);
        h = vrn::maxpool2(h);
        h = vrn::upsample_nearest2(h);
        h = vrn::conv2d(h, w2, b2);
        return vrn::bce_loss(vrn::sigmoid(h), target);
      },
      {x, w1, b1, gamma, beta, w2, b2});
}

TEST(GradCheck, SubsamplingCapsWork) {
  vrn::Rng rng(36);
  auto x = randt({4, 8, 8}, rng);
  vrn::FdOptions<D> opt;
  opt.max_per_tensor = 10;
  auto rep = vrn::check_gradients<D>(
      [&] { return vrn::sum_all(vrn::sigmoid(x)); }, {x}, opt);
  EXPECT_EQ(rep.checked, 10);
  EXPECT_TRUE(rep.passed);
}

TEST(RmsProp, FirstStepMagnitude) {
  auto p = Tensor<D>::zeros({1});
  p.grad()[0] = 1.0;
  vrn::OptimizerState<D> st;
  vrn::rmsprop_step<D>({p}, st);
  // lr / (sqrt((1-rho)*g^2) + eps) = 1e-4 / (0.1 + 1e-8)
  EXPECT_NEAR(-p.data()[0], 9.99999e-4, 1e-8);
}

TEST(RmsProp, ZeroGradLeavesParameterUnchanged) {
  auto p = Tensor<D>::full({2}, 1.5);
  p.ensure_grad();
  vrn::OptimizerState<D> st;
  vrn::rmsprop_step<D>({p}, st);
  EXPECT_EQ(p.data()[0], 1.5);
  EXPECT_EQ(p.data()[1], 1.5);
}

TEST(RmsProp, UpdateMagnitudeConvergesToLr) {
  auto p = Tensor<D>::zeros({1});
  vrn::OptimizerState<D> st;
  double prev = 0.0, delta = 0.0;
  for (int i = 0; i < 2000; ++i) {
    p.zero_grad();
    p.grad()[0] = 2.0;  // constant gradient, accumulator -> g^2
    prev = p.data()[0];
    vrn::rmsprop_step<D>({p}, st);
    delta = prev - p.data()[0];
  }
  EXPECT_NEAR(delta, st.lr, st.lr * 0.01);
}

TEST(RmsProp, AccumulatorStaysNonNegative) {
  vrn::Rng rng(37);
  auto p = randt({8}, rng);
  vrn::OptimizerState<D> st;
  for (int i = 0; i < 50; ++i) {
    p.zero_grad();
    for (int j = 0; j < 8; ++j) p.grad()[j] = rng.normal();
    vrn::rmsprop_step<D>({p}, st);
  }
  for (int j = 0; j < 8; ++j) EXPECT_GE(st.acc[0][j], 0.0);
}
