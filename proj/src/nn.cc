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

#include "wmdagger/nn.h"

#include <cmath>

namespace wmdagger {

std::string to_string(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw InvalidInput("unknown activation '" + s + "'");
}

Mlp::Mlp(std::vector<int> sizes, Activation hidden)
    : sizes_(std::move(sizes)), activation_(hidden) {
  if (sizes_.size() < 2) throw InvalidInput("mlp needs at least two layer sizes");
  size_t total = 0;
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) {
      throw InvalidInput("mlp layer sizes must be positive");
    }
    offsets_.push_back(total);
    total += static_cast<size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

void Mlp::init(Rng& rng) {
  for (int l = 0; l < num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const size_t n = static_cast<size_t>(sizes_[l]) * sizes_[l + 1];
    for (size_t i = 0; i < n; ++i) params_[weight_offset(l) + i] = dist(rng);
    for (int i = 0; i < sizes_[l + 1]; ++i) params_[bias_offset(l) + i] = 0.0;
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Cache unused;
  return forward(x, unused);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.rows() != input_dim()) throw InvalidInput("mlp input has wrong size");
  cache.inputs.clear();
  cache.pre.clear();
  Eigen::MatrixXd a = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + weight_offset(l),
                                        sizes_[l + 1], sizes_[l]);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset(l),
                                        sizes_[l + 1]);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    cache.inputs.push_back(std::move(a));
    if (l + 1 == num_layers()) {
      a = z;
    } else if (activation_ == Activation::kTanh) {
      a = z.array().tanh().matrix();
    } else {
      a = z.cwiseMax(0.0);
    }
    cache.pre.push_back(std::move(z));
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache,
                              const Eigen::MatrixXd& grad_out,
                              std::vector<double>& grad,
                              bool input_grad) const {
  grad.assign(params_.size(), 0.0);
  Eigen::MatrixXd delta = grad_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    if (l + 1 != num_layers()) {
      const Eigen::MatrixXd& z = cache.pre[l];
      if (activation_ == Activation::kTanh) {
        delta.array() *= 1.0 - z.array().tanh().square();
      } else {
        delta.array() *= (z.array() > 0.0).cast<double>();
      }
    }
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + weight_offset(l),
                                   sizes_[l + 1], sizes_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l), sizes_[l + 1]);
    gw.noalias() = delta * cache.inputs[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0 && !input_grad) return {};
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + weight_offset(l),
                                        sizes_[l + 1], sizes_[l]);
    delta = w.transpose() * delta;
  }
  return delta;
}

Adam::Adam(size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidInput("adam: parameter count changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void round_to_float32(std::vector<double>& values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace wmdagger
