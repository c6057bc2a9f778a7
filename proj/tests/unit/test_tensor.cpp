#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "seismogpt/errors.hpp"
#include "seismogpt/ops.hpp"
#include "seismogpt/tensor.hpp"

using namespace seismo;
using seismo::testing::random_tensor;

TEST(Tensor, FactoriesAndShape) {
  Tensor z = Tensor::zeros({2, 3});
  EXPECT_EQ(z.numel(), 6u);
  EXPECT_EQ(z.rank(), 2u);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  Tensor f = Tensor::full({4}, 2.5);
  EXPECT_EQ(f.at(3), 2.5);
  EXPECT_EQ(Tensor::scalar(7.0).item(), 7.0);
  EXPECT_EQ(shape_string({2, 3}), "(2, 3)");
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError);
  EXPECT_THROW(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor::zeros({2}).item(), ContractError);
}

TEST(Tensor, BackwardRequiresScalar) {
  Tensor x = Tensor::full({3}, 1.0, true);
  EXPECT_THROW(scale(x, 2.0).backward(), ContractError);
}

TEST(Tensor, LeafGradientsAccumulate) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  sum(scale(x, 3.0)).backward();
  sum(scale(x, 3.0)).backward();
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(x.grad()[1], 6.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Tensor, SharedSubgraphGradient) {
  // y = x * x reused twice: d/dx sum(y + y) = 4x
  Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  Tensor y = mul(x, x);
  sum(add(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 2.0);
}

TEST(Tensor, NoGradGuardStopsRecording) {
  Tensor x = Tensor::full({2}, 1.0, true);
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    Tensor y = scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Tensor, DetachDropsTape) {
  Tensor x = Tensor::full({2}, 1.0, true);
  Tensor d = scale(x, 2.0).detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d.at(0), 2.0);
}

TEST(Tensor, DeepChainDoesNotOverflowStack) {
  Tensor x = Tensor::scalar(1.0, true);
  Tensor y = x;
  for (int i = 0; i < 20000; ++i) y = scale(y, 1.0);
  y.backward();
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Tensor, RandomTensorHelperIsSeeded) {
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(random_tensor({4}, a).at(2), random_tensor({4}, b).at(2));
}
