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

#include "wmdagger/policy.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace wmdagger {

Eigen::VectorXf observation_features(const Frame& frame, int obs_size) {
  if (obs_size <= 0 || frame.height % obs_size != 0 ||
      frame.width % obs_size != 0 || frame.channels != 1) {
    throw InvalidInput("frame resolution is not a multiple of the policy input");
  }
  const int sy = frame.height / obs_size;
  const int sx = frame.width / obs_size;
  const float norm = 1.0f / static_cast<float>(sx * sy);
  Eigen::VectorXf out(obs_size * obs_size);
  for (int by = 0; by < obs_size; ++by) {
    for (int bx = 0; bx < obs_size; ++bx) {
      float acc = 0.0f;
      for (int y = 0; y < sy; ++y) {
        for (int x = 0; x < sx; ++x) acc += frame.at(by * sy + y, bx * sx + x);
      }
      out[by * obs_size + bx] = acc * norm - 0.5f;
    }
  }
  return out;
}

Eigen::VectorXd chunk_target(const Trajectory& traj, size_t t, int horizon,
                             std::span<const Action> continuation) {
  const Vec3 origin = traj.steps[t].pose.translation;
  const size_t available = traj.size() + continuation.size();
  Eigen::VectorXd target(horizon * Action::kDim);
  for (int i = 0; i < horizon; ++i) {
    const size_t src = std::min(t + i, available - 1);
    auto a = src < traj.size() ? traj.steps[src].action.to_array()
                               : continuation[src - traj.size()].to_array();
    for (int d = 0; d < 3; ++d) a[d] -= origin[d];
    for (int d = 0; d < Action::kDim; ++d) target[i * Action::kDim + d] = a[d];
  }
  return target;
}

std::vector<TrainingPair> make_chunks(const AggregatedDataset& dataset,
                                      int horizon, int obs_size) {
  if (horizon < 1) throw InvalidInput("chunk horizon must be >= 1");
  std::vector<TrainingPair> pairs;
  std::unordered_map<std::int64_t, const Trajectory*> experts;
  for (const auto& t : dataset.expert) experts[t.id] = &t;
  auto add = [&](const Trajectory& traj) {
    std::vector<Action> continuation;
    if (traj.provenance == Provenance::kSynthesized) {
      const auto it = experts.find(traj.source_id);
      if (it != experts.end() && traj.pivot >= 0) {
        const auto& src = it->second->steps;
        for (size_t i = traj.pivot;
             i < src.size() && continuation.size() + 1 < static_cast<size_t>(horizon);
             ++i) {
          continuation.push_back(src[i].action);
        }
      }
    }
    if (traj.size() < 1) {
      spdlog::warn("skipping empty trajectory {}", traj.id);
      return;
    }
    for (size_t t = 0; t < traj.size(); ++t) {
      const Step& st = traj.steps[t];
      if (st.phase == Phase::kDeviation) {
        throw InvalidInput("deviation-phase step in trajectory " +
                           std::to_string(traj.id));
      }
      TrainingPair p;
      p.obs = observation_features(st.frame, obs_size);
      p.target = chunk_target(traj, t, horizon, continuation);
      p.provenance = traj.provenance;
      p.source_id = traj.provenance == Provenance::kSynthesized ? traj.source_id
                                                               : traj.id;
      p.phase = st.phase;
      pairs.push_back(std::move(p));
    }
  };
  for (const auto& t : dataset.expert) add(t);
  for (const auto& t : dataset.synthesized) add(t);
  return pairs;
}

PolicyNet::PolicyNet(int obs_size, int horizon, const std::vector<int>& hidden,
                     Activation activation)
    : obs_size_(obs_size), horizon_(horizon) {
  if (obs_size <= 0 || horizon <= 0) throw InvalidInput("bad policy shape");
  std::vector<int> sizes{obs_size * obs_size};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(horizon * Action::kDim);
  mlp_ = Mlp(sizes, activation);
  offset_ = Eigen::VectorXd::Zero(output_dim());
  scale_ = Eigen::VectorXd::Ones(output_dim());
}

Eigen::MatrixXd PolicyNet::forward(const Eigen::MatrixXd& obs) const {
  Mlp::Cache cache;
  return forward(obs, cache);
}

Eigen::MatrixXd PolicyNet::forward(const Eigen::MatrixXd& obs,
                                   Mlp::Cache& cache) const {
  Eigen::MatrixXd y = mlp_.forward(obs, cache);
  y = scale_.asDiagonal() * y;
  y.colwise() += offset_;
  return y;
}

std::vector<double> PolicyNet::flat_params() const {
  std::vector<double> out = mlp_.params();
  out.insert(out.end(), offset_.data(), offset_.data() + offset_.size());
  out.insert(out.end(), scale_.data(), scale_.data() + scale_.size());
  return out;
}

void PolicyNet::set_flat_params(std::span<const double> values) {
  const size_t n = mlp_.params().size();
  if (values.size() != n + 2 * static_cast<size_t>(output_dim())) {
    throw InvalidInput("policy parameter count mismatch");
  }
  std::copy(values.begin(), values.begin() + n, mlp_.params().begin());
  for (int i = 0; i < output_dim(); ++i) {
    offset_[i] = values[n + i];
    scale_[i] = values[n + output_dim() + i];
  }
}

namespace {

Eigen::MatrixXd stack_obs(std::span<const TrainingPair* const> batch, int dim) {
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(batch.size()));
  for (size_t j = 0; j < batch.size(); ++j) {
    x.col(j) = batch[j]->obs.cast<double>();
  }
  return x;
}

Eigen::MatrixXd stack_targets(std::span<const TrainingPair* const> batch, int dim) {
  Eigen::MatrixXd y(dim, static_cast<Eigen::Index>(batch.size()));
  for (size_t j = 0; j < batch.size(); ++j) y.col(j) = batch[j]->target;
  return y;
}

void check_pair_shapes(const PolicyNet& net, const TrainingPair& p) {
  if (p.obs.size() != net.obs_size() * net.obs_size() ||
      p.target.size() != net.output_dim()) {
    throw InvalidInput("training pair shape does not match the policy");
  }
}

}  // namespace

double policy_loss_and_grad(const PolicyNet& net,
                            std::span<const TrainingPair* const> batch,
                            std::vector<double>& grad) {
  if (batch.empty()) throw InvalidInput("policy loss needs a nonempty batch");
  for (const auto* p : batch) check_pair_shapes(net, *p);
  const int in_dim = net.obs_size() * net.obs_size();
  Mlp::Cache cache;
  const Eigen::MatrixXd pred = net.forward(stack_obs(batch, in_dim), cache);
  const Eigen::MatrixXd diff = pred - stack_targets(batch, net.output_dim());
  const double norm = 1.0 / (static_cast<double>(batch.size()) * net.horizon());
  const double loss = diff.squaredNorm() * norm;
  const Eigen::MatrixXd grad_out = net.scale().asDiagonal() * (2.0 * norm * diff);
  net.mlp().backward(cache, grad_out, grad, false);
  return loss;
}

double policy_loss(const PolicyNet& net, std::span<const TrainingPair> batch) {
  if (batch.empty()) throw InvalidInput("policy loss needs a nonempty batch");
  const int in_dim = net.obs_size() * net.obs_size();
  double total = 0.0;
  constexpr size_t kBlock = 256;
  for (size_t start = 0; start < batch.size(); start += kBlock) {
    const size_t n = std::min(kBlock, batch.size() - start);
    std::vector<const TrainingPair*> ptrs;
    for (size_t j = 0; j < n; ++j) {
      check_pair_shapes(net, batch[start + j]);
      ptrs.push_back(&batch[start + j]);
    }
    const Eigen::MatrixXd pred = net.forward(stack_obs(ptrs, in_dim));
    total += (pred - stack_targets(ptrs, net.output_dim())).squaredNorm();
  }
  return total / (static_cast<double>(batch.size()) * net.horizon());
}

PolicyTrainResult train_policy(const std::vector<TrainingPair>& pairs,
                               const PolicyConfig& cfg) {
  if (pairs.empty()) throw InvalidInput("cannot train a policy on no data");
  if (cfg.steps < 0 || cfg.batch <= 0) throw InvalidInput("bad training budget");
  PolicyTrainResult result;
  PolicyNet net(cfg.obs_size, cfg.horizon, cfg.hidden, cfg.activation);
  Rng rng = make_rng(cfg.seed, streams::kTrain);
  net.mlp().init(rng);

  // Held-out split (skipped for tiny datasets).
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_held = static_cast<size_t>(cfg.heldout_fraction * pairs.size());
  if (pairs.size() < 10) n_held = 0;
  std::vector<size_t> train_idx(order.begin() + n_held, order.end());
  std::vector<TrainingPair> heldout;
  for (size_t i = 0; i < n_held; ++i) heldout.push_back(pairs[order[i]]);

  // Output statistics from the training split.
  const int out = net.output_dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(out);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(out);
  for (size_t i : train_idx) {
    mean += pairs[i].target;
    sq += pairs[i].target.cwiseAbs2();
  }
  mean /= static_cast<double>(train_idx.size());
  sq /= static_cast<double>(train_idx.size());
  net.offset() = mean;
  net.scale() = (sq - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-2);
  round_to_float32(net.mlp().params());
  for (int i = 0; i < out; ++i) {
    net.offset()[i] = static_cast<float>(net.offset()[i]);
    net.scale()[i] = static_cast<float>(net.scale()[i]);
  }

  Adam adam(net.mlp().params().size(), cfg.lr);
  std::uniform_int_distribution<size_t> pick(0, train_idx.size() - 1);
  std::vector<const TrainingPair*> batch(cfg.batch);
  std::vector<double> grad;
  for (int s = 0; s < cfg.steps; ++s) {
    for (auto& p : batch) p = &pairs[train_idx[pick(rng)]];
    const double loss = policy_loss_and_grad(net, batch, grad);
    if (!std::isfinite(loss) || !all_finite(grad)) {
      throw StageFailure("policy training diverged (non-finite loss) at step " +
                         std::to_string(s));
    }
    adam.step(net.mlp().params(), grad);
    result.train_loss.push_back(loss);
    if (!heldout.empty() && cfg.eval_every > 0 &&
        ((s + 1) % cfg.eval_every == 0 || s + 1 == cfg.steps)) {
      result.heldout_loss.push_back(policy_loss(net, heldout));
    }
  }
  if (!all_finite(net.mlp().params())) {
    throw StageFailure("policy parameters became non-finite");
  }
  round_to_float32(net.mlp().params());
  result.net = std::move(net);
  return result;
}

PolicyTrainResult train_policy(const AggregatedDataset& dataset,
                               const PolicyConfig& cfg) {
  return train_policy(make_chunks(dataset, cfg.horizon, cfg.obs_size), cfg);
}

std::vector<Action> predict_chunk(const PolicyNet& net, const Frame& obs) {
  const Eigen::VectorXd y =
      net.forward(observation_features(obs, net.obs_size()).cast<double>());
  std::vector<Action> chunk;
  chunk.reserve(net.horizon());
  for (int i = 0; i < net.horizon(); ++i) {
    const double* a = y.data() + i * Action::kDim;
    Action act;
    act.translation = Vec3(a[0], a[1], a[2]);
    const Quat q(a[3], a[4], a[5], a[6]);
    act.orientation = q.norm() > 1e-9 ? canonical_quaternion(q) : Quat::Identity();
    act.gripper = std::clamp(a[7], 0.0, 1.0);
    chunk.push_back(act);
  }
  return chunk;
}

RolloutResult rollout(const PolicyNet& net, const EnvState& init,
                      const EnvConfig& env, int max_steps, int stride) {
  if (stride < 1 || stride > net.horizon()) {
    throw InvalidInput("execution stride must lie in [1, H]");
  }
  RolloutResult r;
  EnvState s = init;
  while (r.steps < max_steps && !success(s, env.task)) {
    const Vec3 origin = s.gripper.translation;
    const auto chunk = predict_chunk(net, render(s, env));
    for (int i = 0; i < stride && r.steps < max_steps; ++i) {
      Action a = chunk[i];
      a.translation = env.workspace.clamp(origin + a.translation);
      s = step(s, a, env);
      r.poses.push_back(s.gripper);
      ++r.steps;
      if (success(s, env.task)) break;
    }
  }
  r.success = success(s, env.task);
  r.final_state = s;
  return r;
}

}  // namespace wmdagger
