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

#ifndef WMDAGGER_WORLDMODEL_H_
#define WMDAGGER_WORLDMODEL_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wmdagger/envsim.h"
#include "wmdagger/nn.h"

namespace wmdagger {

// p history frames plus the p + q poses they and the q predicted frames are
// observed at. actions[p - 1] is the pose of the most recent history frame.
struct WMRequest {
  std::vector<Frame> history;
  std::vector<Action> actions;
  int horizon = 1;
  // Ground-truth state at the last history frame. Required by OracleWM,
  // ignored by learned models.
  std::optional<EnvState> sim_state;
  // Selects the stochastic stream (hallucination draws, flow noise).
  std::uint64_t noise_seed = 0;
};

// Throws InvalidInput on count mismatches.
void validate(const WMRequest& req);

class WorldModel {
 public:
  virtual ~WorldModel() = default;
  virtual std::vector<Frame> predict(const WMRequest& req) const = 0;
  virtual std::string name() const = 0;
};

// Synthetic failure modes. A request is corrupted with probability
// `corruption_prob`; its k-th of q predicted frames then shows the object with
// semi-axes scaled by (1 + amplitude * k/q * xi), xi ~ N(0, 1) per axis, and
// displaced by drift * k object radii along the camera's first commanded
// motion (the object "follows" the camera). amplitude == 0 disables both.
struct HallucinationConfig {
  double amplitude = 0.0;
  double drift = 0.0;
  double corruption_prob = 0.0;
  std::uint64_t seed = 0;
};
void validate(const HallucinationConfig& h);

class OracleWM : public WorldModel {
 public:
  OracleWM(EnvConfig env, HallucinationConfig hallucination = {});

  std::vector<Frame> predict(const WMRequest& req) const override;
  std::string name() const override { return "oracle"; }

  // Whether `req` would be corrupted (same draw predict() makes).
  bool corrupts(const WMRequest& req) const;

 private:
  EnvConfig env_;
  HallucinationConfig hallucination_;
};

struct LatentFrame {
  int height = 0;
  int width = 0;
  Eigen::VectorXd tokens;  // row-major height x width
};

// Deterministic stride-s block-average tokenizer; decode replicates blocks.
class Tokenizer {
 public:
  explicit Tokenizer(int stride = 8) : stride_(stride) {}
  int stride() const { return stride_; }
  LatentFrame encode(const Frame& frame) const;
  Frame decode(const LatentFrame& latent) const;
  int latent_dim(int height, int width) const;

 private:
  int stride_;
};

// Block-averaged frame at full resolution (what decode(encode(f)) returns).
Frame block_average(const Frame& frame, int stride);

// Compact summary of a dense geometric condition:
// [dO (3), mean dD (3), gripper (1), mean |dD| (1)].
inline constexpr int kGeoSummaryDim = 8;
Eigen::VectorXd geo_summary(const DenseGeoCondition& cond);

enum class FlowWeighting { kUniform, kLinear };  // w = 1, w = 1 - lambda
std::string to_string(FlowWeighting w);
FlowWeighting flow_weighting_from_string(const std::string& s);

struct FlowConfig {
  int history = 2;        // p
  int max_horizon = 8;    // largest future offset seen in training
  int latent_stride = 8;
  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::kTanh;
  FlowWeighting weighting = FlowWeighting::kUniform;
  int steps = 2000;
  int batch = 32;
  double lr = 1e-3;
  int sample_steps = 20;
  double heldout_fraction = 0.1;
  int eval_every = 100;
  std::uint64_t seed = 0;
};

// Velocity field phi(z, lambda, c) over flattened latents.
class FlowNet {
 public:
  FlowNet() = default;
  FlowNet(int latent_dim, int context_frames, const std::vector<int>& hidden,
          Activation activation);

  int latent_dim() const { return latent_dim_; }
  int context_frames() const { return context_frames_; }
  int input_dim() const {
    return latent_dim_ * (1 + context_frames_) + 1 + kGeoSummaryDim;
  }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  // Column-wise batch: z (D x B), lambda (B), context (pD x B), geo (8 x B).
  Eigen::MatrixXd assemble(const Eigen::MatrixXd& z,
                           const Eigen::VectorXd& lambda,
                           const Eigen::MatrixXd& context,
                           const Eigen::MatrixXd& geo) const;
  Eigen::VectorXd velocity(const Eigen::VectorXd& z, double lambda,
                           const Eigen::VectorXd& context,
                           const Eigen::VectorXd& geo) const;

 private:
  int latent_dim_ = 0;
  int context_frames_ = 0;
  Mlp mlp_;
};

// z = (1 - lambda) x + lambda eps.
Eigen::VectorXd rf_noise(const Eigen::VectorXd& x, double lambda,
                         const Eigen::VectorXd& eps);

// One element of a flow batch. Context latents enter only as conditions.
struct FlowSample {
  Eigen::VectorXd x;
  Eigen::VectorXd eps;
  double lambda = 0.0;
  Eigen::VectorXd context;
  Eigen::VectorXd geo;
};

double flow_weight(FlowWeighting w, double lambda);

// Mean over the batch of w(lambda) * ||phi - (eps - x)||^2 / D.
double rf_loss(const FlowNet& net, std::span<const FlowSample> batch,
               FlowWeighting weighting = FlowWeighting::kUniform);
double rf_loss_and_grad(const FlowNet& net, std::span<const FlowSample> batch,
                        FlowWeighting weighting, std::vector<double>& grad);

// Unnoised training example: history latents, a future latent, and the
// geometric condition between the last history pose and the future pose.
struct FlowExample {
  Eigen::VectorXd context;
  Eigen::VectorXd target;
  Eigen::VectorXd geo;
};

std::vector<FlowExample> make_flow_examples(
    std::span<const Trajectory> trajectories, const FlowConfig& cfg,
    const EnvConfig& env);

struct FlowTrainResult {
  FlowNet net;
  std::vector<double> train_loss;
  std::vector<double> heldout_loss;
  std::vector<double> smoothed;  // running minimum of the held-out curve
  bool converged = false;
  std::string report;
};

// Adam on rf_loss. Throws StageFailure on a non-finite loss.
FlowTrainResult rf_train(FlowNet net, std::span<const FlowExample> examples,
                         const FlowConfig& cfg);

using VelocityField =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& z, double lambda)>;

// Euler integration from lambda = 1 (noise) to lambda = 0 in `steps`
// uniform steps, starting from N(0, I) noise drawn from `noise_seed`.
Eigen::VectorXd rf_sample(const VelocityField& field, int dim, int steps,
                          std::uint64_t noise_seed);
Eigen::VectorXd rf_sample_from(const VelocityField& field,
                               Eigen::VectorXd start, int steps);

class FlowWM : public WorldModel {
 public:
  FlowWM(FlowNet net, EnvConfig env, int latent_stride, int sample_steps,
         std::uint64_t seed = 0);

  std::vector<Frame> predict(const WMRequest& req) const override;
  std::string name() const override { return "flow"; }
  const FlowNet& net() const { return net_; }

 private:
  FlowNet net_;
  EnvConfig env_;
  Tokenizer tokenizer_;
  int sample_steps_;
  std::uint64_t seed_;
};

}  // namespace wmdagger

#endif  // WMDAGGER_WORLDMODEL_H_
