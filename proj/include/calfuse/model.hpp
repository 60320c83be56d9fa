// Copyright (c) 2026 The calfuse Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calfuse/fusion.hpp"

namespace calfuse {

// ---------------------------------------------------------------------------
// Label smoothing

struct SmoothingConfig {
  double alpha = 0.0;  // in [0, 1)
  int num_classes = 2;

  void validate() const;
};

/// y * (1 - alpha) + alpha / K for a one-hot y.
Vector smooth_targets(const Vector& one_hot, const SmoothingConfig& cfg);
Vector smooth_targets(int label, const SmoothingConfig& cfg);

Vector softmax(const Vector& logits);
double log_sum_exp(const Vector& logits);

struct LossResult {
  double loss = 0.0;
  Vector d_logits;  // p - y_smoothed
  Vector probs;
};

/// Cross-entropy against smoothed targets, evaluated in logit space.
/// With alpha = 0 this is the standard cross-entropy.
LossResult smoothed_cross_entropy_logits(const Vector& logits, int label,
                                         const SmoothingConfig& cfg);

/// Same loss for a probability vector (treated as softmax(log p)). Exact
/// zeros in p give an infinite loss for a positive target, never NaN.
LossResult smoothed_cross_entropy(const Vector& probs, const Vector& one_hot,
                                  const SmoothingConfig& cfg);

// ---------------------------------------------------------------------------
// Toy encoder: hashed embeddings -> fusion -> mean pool -> 128-ReLU -> K

struct ModelDims {
  std::size_t vocab_size = 4096;
  Index dim = 32;
  Index feature_raw_dim = 1;
  Index feature_proj_dim = 128;
  Index hidden_dim = 128;
  int num_classes = 2;
  double beta = 1e-4;
  double dropout = 0.1;
};

struct ToyModelParams {
  ModelDims dims;
  Matrix embed_table;   // V x d
  FusionParams fusion;  // d, feature_proj_dim
  Matrix proj_weights;  // feature_proj_dim x feature_raw_dim
  Vector proj_bias;
  Matrix hidden_weights;  // hidden_dim x d
  Vector hidden_bias;
  Matrix out_weights;  // K x hidden_dim
  Vector out_bias;

  static ToyModelParams init(const ModelDims& dims, std::uint64_t seed);
  /// Same shapes as `like`, every entry zero (used for gradients and moments).
  static ToyModelParams zeros_like(const ToyModelParams& like);

  void validate() const;
  std::size_t parameter_count() const;
};

/// Calls f(double* a, double* b, size_t n) on every parameter block of two
/// identically shaped parameter sets. beta and ln_eps are hyperparameters and
/// are skipped.
template <typename F>
void for_each_block(ToyModelParams& a, ToyModelParams& b, F&& f) {
  auto blk = [&](auto& x, auto& y) {
    f(x.data(), y.data(), static_cast<std::size_t>(x.size()));
  };
  blk(a.embed_table, b.embed_table);
  blk(a.fusion.gate_weights, b.fusion.gate_weights);
  f(&a.fusion.gate_bias, &b.fusion.gate_bias, std::size_t{1});
  blk(a.fusion.shift_weights, b.fusion.shift_weights);
  blk(a.fusion.shift_bias, b.fusion.shift_bias);
  blk(a.fusion.ln_gain, b.fusion.ln_gain);
  blk(a.fusion.ln_bias, b.fusion.ln_bias);
  blk(a.proj_weights, b.proj_weights);
  blk(a.proj_bias, b.proj_bias);
  blk(a.hidden_weights, b.hidden_weights);
  blk(a.hidden_bias, b.hidden_bias);
  blk(a.out_weights, b.out_weights);
  blk(a.out_bias, b.out_bias);
}

struct ToyForward {
  Matrix embeddings;      // gathered rows, N x d
  Vector projected;       // feature after projection
  FusionResult fusion;
  Vector pooled;          // d
  Vector hidden_pre;      // before ReLU
  Vector hidden;          // after ReLU
  Vector logits;
  Vector probs;
};

ToyForward toy_forward(const std::vector<std::size_t>& token_ids,
                       const Vector& feature_raw, const ToyModelParams& params,
                       const DropoutSpec& dropout = {});

/// Adds the gradient of the loss (given d_logits) into grads.
void toy_backward(const ToyForward& fwd, const std::vector<std::size_t>& token_ids,
                  const Vector& feature_raw, const ToyModelParams& params,
                  const Vector& d_logits, ToyModelParams& grads);

// ---------------------------------------------------------------------------
// Training

enum class SelectionMode { BestValLoss, EarlyStopping, FinalEpoch };

const char* to_string(SelectionMode m);
SelectionMode selection_mode_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  int step_size = 5;
  double gamma = 0.1;
  int batch_size = 8;
  int max_epochs = 30;
  int patience = 7;
  SelectionMode selection = SelectionMode::BestValLoss;
  std::uint64_t seed = 0;

  void validate() const;
};

/// StepLR: lr0 * gamma^floor((epoch - 1) / step_size), epochs 1-indexed.
double learning_rate_at(const TrainConfig& cfg, int epoch);

/// 1-indexed epoch of the minimum validation loss; ties go to the earliest.
int select_checkpoint(const std::vector<double>& val_losses);

struct Sample {
  std::vector<std::size_t> token_ids;
  Vector features;
  int label = 0;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ToyModelParams params;
  std::vector<EpochRecord> history;
  int selected_epoch = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction, stepping every parameter block.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const ToyModelParams& like, AdamConfig cfg = {});
  void step(ToyModelParams& params, ToyModelParams& grads, double lr);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  ToyModelParams m_;
  ToyModelParams v_;
  long t_ = 0;
};

/// Mean smoothed loss over a set (evaluation mode, no dropout).
double evaluate_loss(const ToyModelParams& params, const std::vector<Sample>& data,
                     const SmoothingConfig& smoothing);

/// Per-sample class probabilities, N x K (evaluation mode).
Matrix predict(const ToyModelParams& params, const std::vector<Sample>& data);

TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const ModelDims& dims,
                  const TrainConfig& cfg, const SmoothingConfig& smoothing);

// ---------------------------------------------------------------------------
// Serialization (versioned JSON with a dimension header)

std::string params_to_json(const ToyModelParams& params);
ToyModelParams params_from_json(const std::string& json);
void save_params(const ToyModelParams& params, const std::string& path);
ToyModelParams load_params(const std::string& path);

}  // namespace calfuse
