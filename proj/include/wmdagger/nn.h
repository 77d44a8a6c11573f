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

#ifndef WMDAGGER_NN_H_
#define WMDAGGER_NN_H_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wmdagger/common.h"

// Minimal fully connected network with hand-written backprop. Samples are
// columns: an input batch is (input_dim x batch). Parameters live in one flat
// vector so optimizers and checkpoints can treat them uniformly.

namespace wmdagger {

enum class Activation { kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation hidden);

  // Glorot-uniform weights, zero biases.
  void init(Rng& rng);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int num_params() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return activation_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  // Writes d(loss)/d(params) into `grad` (resized) given d(loss)/d(output).
  // Returns d(loss)/d(input), or an empty matrix when `input_grad` is false.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& grad_out,
                           std::vector<double>& grad,
                           bool input_grad = true) const;

 private:
  size_t weight_offset(int layer) const { return offsets_[layer]; }
  size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<size_t>(sizes_[layer]) * sizes_[layer + 1];
  }

  std::vector<int> sizes_;
  Activation activation_ = Activation::kTanh;
  std::vector<size_t> offsets_;
  std::vector<double> params_;
};

class Adam {
 public:
  Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grad);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

bool all_finite(std::span<const double> values);

// Rounds every value to the nearest float32 so a float32 checkpoint holds the
// parameters exactly.
void round_to_float32(std::vector<double>& values);

}  // namespace wmdagger

#endif  // WMDAGGER_NN_H_
