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

#include <gtest/gtest.h>

#include "wmdagger/policy.h"

namespace wmdagger {
namespace {

Trajectory line_trajectory(int n, std::int64_t id = 0) {
  Trajectory t;
  t.id = id;
  for (int i = 0; i < n; ++i) {
    Step s;
    s.pose.translation = Vec3(0.01 * i, 0.0, 0.1);
    s.action = s.pose;
    s.action.translation.x() += 0.01;
    s.action.gripper = 0.5 + 0.1 * i;
    s.frame = Frame(64, 64, 1);
    s.frame.pixels.assign(s.frame.pixels.size(), 0.1f * static_cast<float>(i));
    t.steps.push_back(s);
  }
  return t;
}

Eigen::VectorXd relative(const Action& a, const Vec3& origin) {
  auto arr = a.to_array();
  for (int d = 0; d < 3; ++d) arr[d] -= origin[d];
  return Eigen::Map<const Eigen::VectorXd>(arr.data(), Action::kDim);
}

// A net whose output ignores the observation and equals `chunk`.
PolicyNet constant_net(const Eigen::VectorXd& chunk, int horizon) {
  PolicyNet net(32, horizon, {4}, Activation::kTanh);
  Rng rng(1);
  net.mlp().init(rng);
  net.offset() = chunk;
  net.scale().setZero();
  return net;
}

TEST(Chunks, PadsWithFinalAction) {
  AggregatedDataset d;
  d.expert.push_back(line_trajectory(5));
  const auto pairs = make_chunks(d, 2, 32);
  ASSERT_EQ(pairs.size(), 5u);
  const Trajectory& t = d.expert[0];
  const Vec3 o = t.steps[4].pose.translation;
  const Eigen::VectorXd& last = pairs.back().target;
  EXPECT_EQ(last.head(8), relative(t.steps[4].action, o));
  EXPECT_EQ(last.tail(8), relative(t.steps[4].action, o));
  const Vec3 o1 = t.steps[1].pose.translation;
  EXPECT_EQ(pairs[1].target.tail(8), relative(t.steps[2].action, o1));
  for (const auto& p : pairs) EXPECT_EQ(p.provenance, Provenance::kExpert);
}

TEST(Chunks, HorizonOneIsPlainBehaviorCloning) {
  AggregatedDataset d;
  d.expert.push_back(line_trajectory(4));
  const auto pairs = make_chunks(d, 1, 32);
  ASSERT_EQ(pairs.size(), 4u);
  for (size_t i = 0; i < pairs.size(); ++i) {
    const Step& s = d.expert[0].steps[i];
    EXPECT_EQ(pairs[i].target, relative(s.action, s.pose.translation));
    EXPECT_EQ(pairs[i].obs, observation_features(s.frame, 32));
  }
}

TEST(Chunks, SynthesizedTrajectoriesAreTaggedAndContinueOnTheSource) {
  AggregatedDataset d;
  d.expert.push_back(line_trajectory(10, 3));
  Trajectory syn = line_trajectory(4, 50);
  syn.provenance = Provenance::kSynthesized;
  syn.source_id = 3;
  syn.pivot = 6;
  for (Step& s : syn.steps) s.phase = Phase::kRecovery;
  d.synthesized.push_back(syn);
  const auto pairs = make_chunks(d, 3, 32);
  ASSERT_EQ(pairs.size(), 14u);
  for (size_t i = 10; i < 14; ++i) {
    EXPECT_EQ(pairs[i].provenance, Provenance::kSynthesized);
    EXPECT_EQ(pairs[i].source_id, 3);
    EXPECT_EQ(pairs[i].phase, Phase::kRecovery);
  }
  // The last recovery step's chunk runs on along the demo from the pivot.
  const Vec3 o = syn.steps[3].pose.translation;
  EXPECT_EQ(pairs[13].target.segment(8, 8),
            relative(d.expert[0].steps[6].action, o));
  EXPECT_EQ(pairs[13].target.segment(16, 8),
            relative(d.expert[0].steps[7].action, o));
}

TEST(Chunks, DeviationPhaseIsRejected) {
  AggregatedDataset d;
  Trajectory syn = line_trajectory(3);
  syn.provenance = Provenance::kSynthesized;
  syn.steps[1].phase = Phase::kDeviation;
  d.synthesized.push_back(syn);
  EXPECT_THROW(make_chunks(d, 2, 32), InvalidInput);
  EXPECT_THROW(make_chunks(AggregatedDataset{}, 0, 32), InvalidInput);
}

TEST(PolicyLoss, Examples) {
  TrainingPair p;
  p.obs = Eigen::VectorXf::Zero(32 * 32);
  p.target = Eigen::VectorXd::LinSpaced(8, 0.0, 0.7);
  PolicyNet net = constant_net(p.target, 1);
  EXPECT_EQ(policy_loss(net, std::span(&p, 1)), 0.0);
  net.offset()[0] += 1.0;
  EXPECT_DOUBLE_EQ(policy_loss(net, std::span(&p, 1)), 1.0);
  // Mean over H of squared per-action errors.
  TrainingPair q;
  q.obs = p.obs;
  q.target = Eigen::VectorXd::Zero(16);
  PolicyNet net2 = constant_net(Eigen::VectorXd::Zero(16), 2);
  net2.offset()[0] = 2.0;
  net2.offset()[9] = 1.0;
  EXPECT_DOUBLE_EQ(policy_loss(net2, std::span(&q, 1)), 2.5);
  EXPECT_THROW(policy_loss(net2, std::span<const TrainingPair>()), InvalidInput);
  EXPECT_THROW(policy_loss(net, std::span(&q, 1)), InvalidInput);
}

TEST(PolicyLoss, GradientMatchesFiniteDifferences) {
  PolicyNet net(4, 2, {5}, Activation::kTanh);
  Rng rng(2);
  net.mlp().init(rng);
  net.offset() = Eigen::VectorXd::Random(16);
  net.scale() = Eigen::VectorXd::Random(16).cwiseAbs() + Eigen::VectorXd::Constant(16, 0.5);
  std::vector<TrainingPair> pairs(3);
  std::vector<const TrainingPair*> ptrs;
  for (auto& p : pairs) {
    p.obs = Eigen::VectorXf::Random(16);
    p.target = Eigen::VectorXd::Random(16);
    ptrs.push_back(&p);
  }
  std::vector<double> grad;
  const double loss = policy_loss_and_grad(net, ptrs, grad);
  EXPECT_NEAR(loss, policy_loss(net, pairs), 1e-12);
  const double h = 1e-6;
  for (size_t i = 0; i < grad.size(); ++i) {
    PolicyNet plus = net, minus = net;
    plus.mlp().params()[i] += h;
    minus.mlp().params()[i] -= h;
    const double fd = (policy_loss(plus, pairs) - policy_loss(minus, pairs)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << i;
  }
}

PolicyConfig tiny_config() {
  PolicyConfig c;
  c.horizon = 2;
  c.hidden = {32};
  c.steps = 1500;
  c.batch = 4;
  c.lr = 3e-3;
  c.seed = 4;
  return c;
}

TEST(TrainPolicy, OverfitsSinglePair) {
  AggregatedDataset d;
  d.expert.push_back(line_trajectory(1));
  const auto pairs = make_chunks(d, 2, 32);
  const PolicyTrainResult r = train_policy(pairs, tiny_config());
  EXPECT_LT(r.train_loss.back(), 1e-4);
  const auto chunk = predict_chunk(r.net, d.expert[0].steps[0].frame);
  ASSERT_EQ(chunk.size(), 2u);
  Eigen::VectorXd flat(16);
  for (int i = 0; i < 2; ++i) {
    flat.segment(8 * i, 8) = relative(chunk[i], Vec3::Zero());
  }
  // Quaternions are re-normalized, so compare after normalizing the target.
  Eigen::VectorXd target = pairs[0].target;
  for (int i = 0; i < 2; ++i) {
    target.segment(8 * i + 3, 4).normalize();
    target[8 * i + 7] = std::clamp(target[8 * i + 7], 0.0, 1.0);
  }
  EXPECT_LT((flat - target).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(TrainPolicy, SameSeedSameParameters) {
  AggregatedDataset d;
  d.expert.push_back(line_trajectory(12));
  PolicyConfig c = tiny_config();
  c.steps = 100;
  const auto a = train_policy(d, c);
  const auto b = train_policy(d, c);
  EXPECT_EQ(a.net.flat_params(), b.net.flat_params());
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_FALSE(a.heldout_loss.empty());
  c.seed = 5;
  EXPECT_NE(train_policy(d, c).net.flat_params(), a.net.flat_params());
}

TEST(TrainPolicy, ConstantTargetsReachZeroLoss) {
  AggregatedDataset d;
  Trajectory t = line_trajectory(20);
  for (size_t i = 0; i < t.size(); ++i) {
    t.steps[i].pose.translation.setZero();
    t.steps[i].action = t.steps[0].action;
  }
  d.expert.push_back(t);
  PolicyConfig c = tiny_config();
  c.steps = 300;
  const auto r = train_policy(d, c);
  EXPECT_LT(policy_loss(r.net, make_chunks(d, 2, 32)), 1e-6);
}

TEST(TrainPolicy, RejectsEmptyData) {
  EXPECT_THROW(train_policy(std::vector<TrainingPair>{}, tiny_config()),
               InvalidInput);
}

TEST(PredictChunk, ShapeAndUnitQuaternions) {
  PolicyNet net(32, 5, {8}, Activation::kRelu);
  Rng rng(3);
  net.mlp().init(rng);
  const EnvConfig env = EnvConfig::for_task(TaskId::kPush);
  Rng srng(4);
  const auto chunk = predict_chunk(net, render(sample_initial_state(env, srng), env));
  ASSERT_EQ(chunk.size(), 5u);
  for (const Action& a : chunk) {
    EXPECT_NEAR(a.orientation.norm(), 1.0, 1e-12);
    EXPECT_GE(a.orientation.w(), 0.0);
    EXPECT_GE(a.gripper, 0.0);
    EXPECT_LE(a.gripper, 1.0);
  }
}

class Rollout : public ::testing::Test {
 protected:
  void SetUp() override {
    env_ = EnvConfig::for_task(TaskId::kPush);
    Rng rng(7);
    init_ = sample_initial_state(env_, rng);
    init_.gripper.translation.z() = 0.25;  // well above the object
  }
  EnvConfig env_;
  EnvState init_;
};

TEST_F(Rollout, StrideSetsReplanningRate) {
  Eigen::VectorXd chunk = Eigen::VectorXd::Zero(4 * 8);
  for (int i = 0; i < 4; ++i) {
    chunk[8 * i] = 0.01;
    chunk[8 * i + 3] = init_.gripper.orientation.w();
    chunk.segment(8 * i + 4, 3) = init_.gripper.orientation.vec();
    chunk[8 * i + 7] = init_.gripper.gripper;
  }
  const PolicyNet net = constant_net(chunk, 4);
  const Vec3 start = init_.gripper.translation;
  // Closed loop: every step re-plans and moves a further centimetre.
  const RolloutResult closed = rollout(net, init_, env_, 8, 1);
  ASSERT_EQ(closed.steps, 8);
  EXPECT_NEAR(closed.poses.back().translation.x() - start.x(), 0.08, 1e-9);
  // Open loop: the whole chunk targets start + 1 cm, so progress is one
  // centimetre per chunk.
  const RolloutResult open = rollout(net, init_, env_, 8, 4);
  ASSERT_EQ(open.steps, 8);
  EXPECT_NEAR(open.poses[3].translation.x() - start.x(), 0.01, 1e-9);
  EXPECT_NEAR(open.poses.back().translation.x() - start.x(), 0.02, 1e-9);
  EXPECT_FALSE(open.success);
  EXPECT_THROW(rollout(net, init_, env_, 8, 0), InvalidInput);
  EXPECT_THROW(rollout(net, init_, env_, 8, 5), InvalidInput);
}

TEST(RolloutPolicy, OverfitExpertSucceedsAndRandomNetFails) {
  const EnvConfig env = EnvConfig::for_task(TaskId::kPush);
  Rng rng(12);
  const EnvState init = sample_initial_state(env, rng);
  const ExpertResult expert = scripted_expert(init, env, 0);
  ASSERT_TRUE(expert.trajectory.has_value());
  AggregatedDataset d;
  d.expert.push_back(*expert.trajectory);
  PolicyConfig c;
  c.steps = 3000;
  c.seed = 1;
  const PolicyNet net = train_policy(d, c).net;
  EXPECT_TRUE(rollout(net, init, env, 70, c.stride).success);

  PolicyNet random_net(c.obs_size, c.horizon, c.hidden, c.activation);
  Rng init_rng(2);
  random_net.mlp().init(init_rng);
  int wins = 0;
  for (int s = 0; s < 100; ++s) {
    Rng r(1000 + s);
    wins += rollout(random_net, sample_initial_state(env, r), env, 70, c.stride).success;
  }
  RecordProperty("random_net_successes", wins);
  EXPECT_LE(wins, 5);
}

}  // namespace
}  // namespace wmdagger
