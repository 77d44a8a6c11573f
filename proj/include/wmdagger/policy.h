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

#ifndef WMDAGGER_POLICY_H_
#define WMDAGGER_POLICY_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "wmdagger/envsim.h"
#include "wmdagger/nn.h"

// Action-chunking behavioral cloning.
//
// The network maps a down-sampled frame to H consecutive actions. Targets
// keep the raw 8-dim action layout, with the translation expressed relative to
// the gripper pose at which the frame was observed; orientation and gripper
// are absolute. The loss is the plain chunk MSE, so quaternion rows are only
// re-normalized when actions are executed.

namespace wmdagger {

struct PolicyConfig {
  int horizon = 8;
  int stride = 4;
  int obs_size = 32;
  std::vector<int> hidden = {128, 64};
  Activation activation = Activation::kRelu;
  int steps = 2000;
  int batch = 64;
  double lr = 1e-3;
  double heldout_fraction = 0.1;
  int eval_every = 100;
  std::uint64_t seed = 0;
};

struct TrainingPair {
  Eigen::VectorXf obs;     // obs_size^2 features
  Eigen::VectorXd target;  // H * 8, chunk-major
  Provenance provenance = Provenance::kExpert;
  std::int64_t source_id = -1;
  Phase phase = Phase::kNone;
};

// D_aug = expert demonstrations plus retained synthesized recovery data.
struct AggregatedDataset {
  std::vector<Trajectory> expert;
  std::vector<Trajectory> synthesized;
};

// Block-averaged, zero-centred grayscale features.
Eigen::VectorXf observation_features(const Frame& frame, int obs_size);

// Chunk target for step t of `traj`. Past the last step the chunk continues
// with `continuation` and is then padded with the final action.
Eigen::VectorXd chunk_target(const Trajectory& traj, size_t t, int horizon,
                             std::span<const Action> continuation = {});

// Sliding-window pairs over every trajectory. A synthesized trajectory's
// chunks continue along its source demonstration from the pivot on, since
// the recovery ends back on the expert path. Throws InvalidInput if a
// synthesized trajectory carries any deviation-phase step.
std::vector<TrainingPair> make_chunks(const AggregatedDataset& dataset,
                                      int horizon, int obs_size);

class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(int obs_size, int horizon, const std::vector<int>& hidden,
            Activation activation);

  int obs_size() const { return obs_size_; }
  int horizon() const { return horizon_; }
  int output_dim() const { return horizon_ * Action::kDim; }

  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }
  // Fixed output de-normalization: out = offset + scale * mlp(x).
  Eigen::VectorXd& offset() { return offset_; }
  Eigen::VectorXd& scale() { return scale_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  const Eigen::VectorXd& scale() const { return scale_; }

  // (H*8) x batch raw outputs for a (obs_size^2) x batch input.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& obs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& obs, Mlp::Cache& cache) const;

  // Flat view of every stored parameter (mlp, offset, scale).
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> values);

 private:
  int obs_size_ = 0;
  int horizon_ = 0;
  Mlp mlp_;
  Eigen::VectorXd offset_;
  Eigen::VectorXd scale_;
};

// Mean over the batch of (1/H) sum_i ||a_hat_i - a_i||^2.
double policy_loss(const PolicyNet& net, std::span<const TrainingPair> batch);

// Loss and d(loss)/d(mlp params) for a batch.
double policy_loss_and_grad(const PolicyNet& net,
                            std::span<const TrainingPair* const> batch,
                            std::vector<double>& grad);

struct PolicyTrainResult {
  PolicyNet net;
  std::vector<double> train_loss;    // per step
  std::vector<double> heldout_loss;  // every eval_every steps
};

PolicyTrainResult train_policy(const std::vector<TrainingPair>& pairs,
                               const PolicyConfig& cfg);
PolicyTrainResult train_policy(const AggregatedDataset& dataset,
                               const PolicyConfig& cfg);

// H actions; translation relative to the observing pose, unit quaternions,
// gripper clamped to [0, 1].
std::vector<Action> predict_chunk(const PolicyNet& net, const Frame& obs);

struct RolloutResult {
  bool success = false;
  int steps = 0;
  std::vector<Action> poses;  // gripper pose after every executed step
  EnvState final_state;
};

// Observe, predict a chunk, execute its first `stride` actions, repeat.
RolloutResult rollout(const PolicyNet& net, const EnvState& init,
                      const EnvConfig& env, int max_steps, int stride);

}  // namespace wmdagger

#endif  // WMDAGGER_POLICY_H_
