// Copyright 2026 The wmdagger Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "wmdagger/nn.h"

namespace wmdagger {
namespace {

// 0.5 * ||W o f(x) - y||^2 summed over the batch, with a fixed readout W.
double probe_loss(const Mlp& net, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& w) {
  return 0.5 * (net.forward(x).cwiseProduct(w)).sum();
}

class MlpGradient : public ::testing::TestWithParam<Activation> {};

TEST_P(MlpGradient, MatchesCentralDifferences) {
  Mlp net({3, 5, 4, 2}, GetParam());
  Rng rng(7);
  net.init(rng);
  // Nonzero biases so ReLU kinks are not sitting at the sample points.
  std::normal_distribution<double> g(0.0, 0.3);
  for (double& p : net.params()) p += g(rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 6);
  Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 6);

  Mlp::Cache cache;
  net.forward(x, cache);
  std::vector<double> grad;
  const Eigen::MatrixXd dx = net.backward(cache, 0.5 * w, grad);
  ASSERT_EQ(grad.size(), net.params().size());

  const double h = 1e-6;
  for (size_t i = 0; i < net.params().size(); ++i) {
    Mlp plus = net, minus = net;
    plus.params()[i] += h;
    minus.params()[i] -= h;
    const double fd = (probe_loss(plus, x, w) - probe_loss(minus, x, w)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "param " << i;
  }
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(r, c) += h;
      xm(r, c) -= h;
      const double fd = (probe_loss(net, xp, w) - probe_loss(net, xm, w)) / (2 * h);
      EXPECT_NEAR(dx(r, c), fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, MlpGradient,
                         ::testing::Values(Activation::kTanh, Activation::kRelu));

TEST(Mlp, InputGradientCanBeSkipped) {
  Mlp net({2, 3, 1}, Activation::kTanh);
  Rng rng(1);
  net.init(rng);
  Mlp::Cache cache;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  net.forward(x, cache);
  std::vector<double> with, without;
  const Eigen::MatrixXd g_out = Eigen::MatrixXd::Ones(1, 4);
  EXPECT_EQ(net.backward(cache, g_out, with, true).rows(), 2);
  EXPECT_EQ(net.backward(cache, g_out, without, false).size(), 0);
  EXPECT_EQ(with, without);
}

TEST(Mlp, ParameterCountAndInit) {
  Mlp net({4, 8, 2}, Activation::kRelu);
  EXPECT_EQ(net.num_params(), 4 * 8 + 8 + 8 * 2 + 2);
  Rng a(5), b(5);
  Mlp n1 = net, n2 = net;
  n1.init(a);
  n2.init(b);
  EXPECT_EQ(n1.params(), n2.params());
  EXPECT_TRUE(all_finite(n1.params()));
}

TEST(Mlp, ForwardShapeMismatchThrows) {
  Mlp net({4, 2}, Activation::kTanh);
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Zero(3, 1)), InvalidInput);
}

TEST(Adam, MinimizesQuadratic) {
  std::vector<double> p = {3.0, -2.0};
  Adam opt(p.size(), 0.05);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> g = {2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)};
    opt.step(p, g);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
  EXPECT_NEAR(p[1], -0.5, 1e-3);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  std::vector<double> p = {0.25, -1.5, 4.0};
  const std::vector<double> before = p;
  Adam opt(p.size(), 0.0);
  opt.step(p, {1.0, -2.0, 3.0});
  EXPECT_EQ(p, before);
}

TEST(Adam, RejectsSizeChange) {
  std::vector<double> p = {1.0};
  Adam opt(2, 0.1);
  EXPECT_THROW(opt.step(p, {0.0}), InvalidInput);
}

TEST(Numerics, FiniteCheckAndFloatRounding) {
  std::vector<double> v = {0.1, 1.0 / 3.0, -2.5};
  EXPECT_TRUE(all_finite(v));
  round_to_float32(v);
  for (double x : v) EXPECT_EQ(x, static_cast<double>(static_cast<float>(x)));
  v.push_back(std::numeric_limits<double>::quiet_NaN());
  EXPECT_FALSE(all_finite(v));
}

TEST(Activation, StringRoundTrip) {
  for (Activation a : {Activation::kTanh, Activation::kRelu}) {
    EXPECT_EQ(activation_from_string(to_string(a)), a);
  }
  EXPECT_THROW(activation_from_string("gelu"), InvalidInput);
}

}  // namespace
}  // namespace wmdagger
