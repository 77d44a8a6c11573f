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

#include "wmdagger/worldmodel.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wmdagger {

void validate(const WMRequest& req) {
  if (req.history.empty()) throw InvalidInput("world model needs p >= 1 history frames");
  if (req.horizon < 1) throw InvalidInput("world model horizon q must be >= 1");
  if (req.actions.size() != req.history.size() + static_cast<size_t>(req.horizon)) {
    throw InvalidInput("world model request: expected p + q actions, got " +
                       std::to_string(req.actions.size()));
  }
  for (const auto& a : req.actions) validate(a);
}

void validate(const HallucinationConfig& h) {
  if (!(h.amplitude >= 0.0) || !(h.drift >= 0.0)) {
    throw InvalidInput("hallucination amplitude and drift must be >= 0");
  }
  if (!(h.corruption_prob >= 0.0 && h.corruption_prob <= 1.0)) {
    throw InvalidInput("hallucination corruption probability outside [0, 1]");
  }
}

// --- OracleWM ---------------------------------------------------------------

OracleWM::OracleWM(EnvConfig env, HallucinationConfig hallucination)
    : env_(std::move(env)), hallucination_(hallucination) {
  validate(hallucination_);
}

bool OracleWM::corrupts(const WMRequest& req) const {
  if (hallucination_.amplitude <= 0.0) return false;
  Rng rng = make_rng(hallucination_.seed, streams::kHallucination, req.noise_seed);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
         hallucination_.corruption_prob;
}

std::vector<Frame> OracleWM::predict(const WMRequest& req) const {
  validate(req);
  if (!req.sim_state) throw InvalidInput("oracle world model needs the simulator state");
  const size_t p = req.history.size();

  Rng rng = make_rng(hallucination_.seed, streams::kHallucination, req.noise_seed);
  const bool corrupted =
      hallucination_.amplitude > 0.0 &&
      std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
          hallucination_.corruption_prob;
  Vec3 morph = Vec3::Zero();
  Vec3 drift_dir = Vec3::Zero();
  if (corrupted) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 3; ++i) morph[i] = std::clamp(gauss(rng), -2.0, 2.0);
    drift_dir.head<2>() =
        (req.actions[p].translation - req.actions[p - 1].translation).head<2>();
    if (drift_dir.norm() < 1e-9) {
      const double angle = std::uniform_real_distribution<double>(0.0, 2 * M_PI)(rng);
      drift_dir = Vec3(std::cos(angle), std::sin(angle), 0.0);
    }
    drift_dir.normalize();
  }

  std::vector<Frame> out;
  out.reserve(req.horizon);
  EnvState s = *req.sim_state;
  for (int i = 0; i < req.horizon; ++i) {
    s = step(s, req.actions[p + i], env_);
    if (!corrupted) {
      out.push_back(render(s, env_));
      continue;
    }
    const double k = static_cast<double>(i + 1);
    EnvState shown = s;
    Scene& scene = shown.scene;
    const double radius = std::max(scene.object_half_extent.x(),
                                   scene.object_half_extent.y());
    const Vec3 scale =
        (Vec3::Ones() + hallucination_.amplitude * (k / req.horizon) * morph)
            .cwiseMax(0.3);
    scene.object_half_extent = scene.object_half_extent.cwiseProduct(scale);
    scene.object_position += hallucination_.drift * k * radius * drift_dir;
    out.push_back(render(shown, env_));
  }
  return out;
}

// --- Tokenizer --------------------------------------------------------------

namespace {

void check_divisible(const Frame& f, int stride) {
  if (stride <= 0 || f.height % stride != 0 || f.width % stride != 0 ||
      f.channels != 1) {
    throw InvalidInput("frame size is not a multiple of the tokenizer stride");
  }
}

}  // namespace

int Tokenizer::latent_dim(int height, int width) const {
  return (height / stride_) * (width / stride_);
}

LatentFrame Tokenizer::encode(const Frame& frame) const {
  check_divisible(frame, stride_);
  LatentFrame lf;
  lf.height = frame.height / stride_;
  lf.width = frame.width / stride_;
  lf.tokens.resize(lf.height * lf.width);
  const double norm = 1.0 / (stride_ * stride_);
  for (int by = 0; by < lf.height; ++by) {
    for (int bx = 0; bx < lf.width; ++bx) {
      double acc = 0.0;
      for (int y = 0; y < stride_; ++y) {
        for (int x = 0; x < stride_; ++x) {
          acc += frame.at(by * stride_ + y, bx * stride_ + x);
        }
      }
      lf.tokens[by * lf.width + bx] = acc * norm;
    }
  }
  return lf;
}

Frame Tokenizer::decode(const LatentFrame& latent) const {
  Frame f(latent.height * stride_, latent.width * stride_, 1);
  for (int v = 0; v < f.height; ++v) {
    for (int u = 0; u < f.width; ++u) {
      const double t = latent.tokens[(v / stride_) * latent.width + u / stride_];
      f.pixels[static_cast<size_t>(v) * f.width + u] =
          static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
  }
  return f;
}

Frame block_average(const Frame& frame, int stride) {
  const Tokenizer tok(stride);
  return tok.decode(tok.encode(frame));
}

Eigen::VectorXd geo_summary(const DenseGeoCondition& cond) {
  const DenseTensor& t = cond.data;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(kGeoSummaryDim);
  if (t.height == 0 || t.width == 0) return s;
  s.head<3>() = t.vec3(0, 0, 0);
  double mag = 0.0;
  for (int v = 0; v < t.height; ++v) {
    for (int u = 0; u < t.width; ++u) {
      const Vec3 d = t.vec3(v, u, 3);
      s.segment<3>(3) += d;
      mag += d.norm();
    }
  }
  const double n = static_cast<double>(t.height) * t.width;
  s.segment<3>(3) /= n;
  s[6] = t.at(0, 0, 6);
  s[7] = mag / n;
  return s;
}

// --- Rectified flow ---------------------------------------------------------

std::string to_string(FlowWeighting w) {
  return w == FlowWeighting::kUniform ? "uniform" : "linear";
}

FlowWeighting flow_weighting_from_string(const std::string& s) {
  if (s == "uniform") return FlowWeighting::kUniform;
  if (s == "linear") return FlowWeighting::kLinear;
  throw InvalidInput("unknown flow weighting '" + s + "'");
}

double flow_weight(FlowWeighting w, double lambda) {
  return w == FlowWeighting::kUniform ? 1.0 : 1.0 - lambda;
}

FlowNet::FlowNet(int latent_dim, int context_frames,
                 const std::vector<int>& hidden, Activation activation)
    : latent_dim_(latent_dim), context_frames_(context_frames) {
  if (latent_dim <= 0 || context_frames < 1) throw InvalidInput("bad flow net shape");
  std::vector<int> sizes{input_dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(latent_dim);
  mlp_ = Mlp(sizes, activation);
}

Eigen::MatrixXd FlowNet::assemble(const Eigen::MatrixXd& z,
                                  const Eigen::VectorXd& lambda,
                                  const Eigen::MatrixXd& context,
                                  const Eigen::MatrixXd& geo) const {
  const Eigen::Index b = z.cols();
  if (z.rows() != latent_dim_ || lambda.size() != b ||
      context.rows() != latent_dim_ * context_frames_ || context.cols() != b ||
      geo.rows() != kGeoSummaryDim || geo.cols() != b) {
    throw InvalidInput("flow net input has wrong shape");
  }
  Eigen::MatrixXd in(input_dim(), b);
  in.topRows(latent_dim_) = z;
  in.row(latent_dim_) = lambda.transpose();
  in.middleRows(latent_dim_ + 1, context.rows()) = context;
  in.bottomRows(kGeoSummaryDim) = geo;
  return in;
}

Eigen::VectorXd FlowNet::velocity(const Eigen::VectorXd& z, double lambda,
                                  const Eigen::VectorXd& context,
                                  const Eigen::VectorXd& geo) const {
  Eigen::VectorXd l(1);
  l[0] = lambda;
  return mlp_.forward(assemble(z, l, context, geo)).col(0);
}

Eigen::VectorXd rf_noise(const Eigen::VectorXd& x, double lambda,
                         const Eigen::VectorXd& eps) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("lambda outside [0, 1]");
  if (x.size() != eps.size()) throw InvalidInput("latent and noise shapes differ");
  return (1.0 - lambda) * x + lambda * eps;
}

namespace {

Eigen::MatrixXd flow_inputs(const FlowNet& net,
                            std::span<const FlowSample> batch,
                            Eigen::MatrixXd* target) {
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const int d = net.latent_dim();
  Eigen::MatrixXd z(d, b), ctx(d * net.context_frames(), b),
      geo(kGeoSummaryDim, b);
  Eigen::VectorXd lambda(b);
  target->resize(d, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const FlowSample& s = batch[j];
    z.col(j) = rf_noise(s.x, s.lambda, s.eps);
    lambda[j] = s.lambda;
    ctx.col(j) = s.context;
    geo.col(j) = s.geo;
    target->col(j) = s.eps - s.x;
  }
  return net.assemble(z, lambda, ctx, geo);
}

}  // namespace

double rf_loss(const FlowNet& net, std::span<const FlowSample> batch,
               FlowWeighting weighting) {
  if (batch.empty()) throw InvalidInput("flow loss needs a nonempty batch");
  Eigen::MatrixXd target;
  const Eigen::MatrixXd pred = net.mlp().forward(flow_inputs(net, batch, &target));
  double loss = 0.0;
  for (size_t j = 0; j < batch.size(); ++j) {
    loss += flow_weight(weighting, batch[j].lambda) *
            (pred.col(j) - target.col(j)).squaredNorm();
  }
  return loss / (static_cast<double>(batch.size()) * net.latent_dim());
}

double rf_loss_and_grad(const FlowNet& net, std::span<const FlowSample> batch,
                        FlowWeighting weighting, std::vector<double>& grad) {
  if (batch.empty()) throw InvalidInput("flow loss needs a nonempty batch");
  Eigen::MatrixXd target;
  Mlp::Cache cache;
  const Eigen::MatrixXd pred =
      net.mlp().forward(flow_inputs(net, batch, &target), cache);
  Eigen::MatrixXd diff = pred - target;
  const double norm = 1.0 / (static_cast<double>(batch.size()) * net.latent_dim());
  double loss = 0.0;
  for (size_t j = 0; j < batch.size(); ++j) {
    const double w = flow_weight(weighting, batch[j].lambda);
    loss += w * diff.col(j).squaredNorm();
    diff.col(j) *= 2.0 * w * norm;
  }
  net.mlp().backward(cache, diff, grad, false);
  return loss * norm;
}

std::vector<FlowExample> make_flow_examples(
    std::span<const Trajectory> trajectories, const FlowConfig& cfg,
    const EnvConfig& env) {
  const Tokenizer tok(cfg.latent_stride);
  std::vector<FlowExample> out;
  for (const Trajectory& traj : trajectories) {
    const int n = static_cast<int>(traj.size());
    if (n < cfg.history + 1) continue;
    std::vector<Eigen::VectorXd> latents;
    latents.reserve(n);
    for (const Step& st : traj.steps) latents.push_back(tok.encode(st.frame).tokens);
    const int d = static_cast<int>(latents.front().size());
    for (int t = cfg.history - 1; t + 1 < n; ++t) {
      Eigen::VectorXd ctx(d * cfg.history);
      for (int h = 0; h < cfg.history; ++h) {
        ctx.segment(h * d, d) = latents[t - cfg.history + 1 + h];
      }
      const CameraPose pose_t = pose_from_action(traj.steps[t].pose, env.calib);
      for (int i = 1; i <= cfg.max_horizon && t + i < n; ++i) {
        const Action& future = traj.steps[t + i].pose;
        FlowExample ex;
        ex.context = ctx;
        ex.target = latents[t + i];
        ex.geo = geo_summary(dense_geo_condition(
            pose_t, pose_from_action(future, env.calib), env.intrinsics,
            future.gripper));
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

FlowTrainResult rf_train(FlowNet net, std::span<const FlowExample> examples,
                         const FlowConfig& cfg) {
  if (examples.empty()) throw InvalidInput("flow training needs aligned frame/action data");
  for (const auto& ex : examples) {
    if (ex.target.size() != net.latent_dim() ||
        ex.context.size() != net.latent_dim() * net.context_frames() ||
        ex.geo.size() != kGeoSummaryDim) {
      throw InvalidInput("flow example does not match the network shape");
    }
  }
  FlowTrainResult result;
  Rng rng = make_rng(cfg.seed, streams::kTrain, 1);
  net.mlp().init(rng);
  round_to_float32(net.mlp().params());

  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_held = static_cast<size_t>(cfg.heldout_fraction * examples.size());
  if (examples.size() < 10) n_held = 0;
  std::vector<size_t> train_idx(order.begin() + n_held, order.end());
  std::vector<size_t> held_idx(order.begin(), order.begin() + n_held);
  // A single-example dataset is evaluated on itself.
  if (held_idx.empty()) held_idx = train_idx;

  const int d = net.latent_dim();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto draw = [&](size_t idx, Rng& r) {
    FlowSample s;
    s.x = examples[idx].target;
    s.context = examples[idx].context;
    s.geo = examples[idx].geo;
    s.lambda = uni(r);
    s.eps.resize(d);
    for (int i = 0; i < d; ++i) s.eps[i] = gauss(r);
    return s;
  };

  // Fixed evaluation draws so the held-out curve is comparable across steps.
  std::vector<FlowSample> heldout;
  {
    Rng eval_rng = make_rng(cfg.seed, streams::kTrain, 2);
    const size_t reps = std::max<size_t>(1, 256 / held_idx.size());
    for (size_t r = 0; r < reps; ++r) {
      for (size_t idx : held_idx) heldout.push_back(draw(idx, eval_rng));
    }
  }
  auto eval = [&] { return rf_loss(net, heldout, cfg.weighting); };

  Adam adam(net.mlp().params().size(), cfg.lr);
  std::uniform_int_distribution<size_t> pick(0, train_idx.size() - 1);
  std::vector<FlowSample> batch(cfg.batch);
  std::vector<double> grad;
  result.heldout_loss.push_back(eval());
  for (int s = 0; s < cfg.steps; ++s) {
    for (auto& b : batch) b = draw(train_idx[pick(rng)], rng);
    const double loss = rf_loss_and_grad(net, batch, cfg.weighting, grad);
    if (!std::isfinite(loss) || !all_finite(grad)) {
      throw StageFailure("flow training produced a non-finite loss at step " +
                         std::to_string(s));
    }
    adam.step(net.mlp().params(), grad);
    if (!all_finite(net.mlp().params())) {
      throw StageFailure("flow parameters became non-finite at step " +
                         std::to_string(s));
    }
    result.train_loss.push_back(loss);
    if (cfg.eval_every > 0 && ((s + 1) % cfg.eval_every == 0 || s + 1 == cfg.steps)) {
      result.heldout_loss.push_back(eval());
    }
  }
  round_to_float32(net.mlp().params());
  for (double v : result.heldout_loss) {
    result.smoothed.push_back(result.smoothed.empty()
                                  ? v
                                  : std::min(result.smoothed.back(), v));
  }
  result.converged = result.smoothed.back() < result.heldout_loss.front();
  result.report = result.converged
                      ? "held-out loss " + std::to_string(result.heldout_loss.front()) +
                            " -> " + std::to_string(result.smoothed.back())
                      : "held-out loss did not decrease below its initial value " +
                            std::to_string(result.heldout_loss.front());
  result.net = std::move(net);
  return result;
}

Eigen::VectorXd rf_sample_from(const VelocityField& field, Eigen::VectorXd z,
                               int steps) {
  if (steps < 1) throw InvalidInput("sampler needs at least one step");
  const double dt = 1.0 / steps;
  for (int i = 0; i < steps; ++i) {
    const double lambda = 1.0 - i * dt;
    z -= dt * field(z, lambda);
  }
  return z;
}

Eigen::VectorXd rf_sample(const VelocityField& field, int dim, int steps,
                          std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(dim);
  for (int i = 0; i < dim; ++i) z[i] = gauss(rng);
  return rf_sample_from(field, std::move(z), steps);
}

// --- FlowWM -----------------------------------------------------------------

FlowWM::FlowWM(FlowNet net, EnvConfig env, int latent_stride, int sample_steps,
               std::uint64_t seed)
    : net_(std::move(net)), env_(std::move(env)), tokenizer_(latent_stride),
      sample_steps_(sample_steps), seed_(seed) {
  const int d = tokenizer_.latent_dim(env_.intrinsics.height, env_.intrinsics.width);
  if (d != net_.latent_dim()) {
    throw InvalidInput("flow net latent size does not match the tokenizer");
  }
}

std::vector<Frame> FlowWM::predict(const WMRequest& req) const {
  validate(req);
  const int p = net_.context_frames();
  if (static_cast<int>(req.history.size()) != p) {
    throw InvalidInput("flow world model expects exactly " + std::to_string(p) +
                       " history frames");
  }
  const int d = net_.latent_dim();
  Eigen::VectorXd ctx(d * p);
  LatentFrame shape;
  for (int h = 0; h < p; ++h) {
    const LatentFrame lf = tokenizer_.encode(req.history[h]);
    ctx.segment(h * d, d) = lf.tokens;
    shape = lf;
  }
  const CameraPose pose_t = pose_from_action(req.actions[p - 1], env_.calib);
  std::vector<Frame> out;
  for (int i = 0; i < req.horizon; ++i) {
    const Action& future = req.actions[p + i];
    const Eigen::VectorXd geo = geo_summary(dense_geo_condition(
        pose_t, pose_from_action(future, env_.calib), env_.intrinsics,
        future.gripper));
    const VelocityField field = [&](const Eigen::VectorXd& z, double lambda) {
      return net_.velocity(z, lambda, ctx, geo);
    };
    shape.tokens = rf_sample(field, d, sample_steps_,
                             stream_seed(seed_, req.noise_seed, i));
    out.push_back(tokenizer_.decode(shape));
  }
  return out;
}

}  // namespace wmdagger
