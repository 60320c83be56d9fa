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

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace calfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// N x d token embeddings. Rows are tokens.
class EmbeddingSequence {
 public:
  explicit EmbeddingSequence(Matrix data);

  const Matrix& data() const { return data_; }
  Index seq_len() const { return data_.rows(); }
  Index dim() const { return data_.cols(); }

 private:
  Matrix data_;
};

/// Per-text feature representation after projection. The same vector is
/// broadcast to every token position of the text.
class ProjectedFeature {
 public:
  explicit ProjectedFeature(Vector data);

  const Vector& data() const { return data_; }
  Index dim() const { return data_.size(); }

 private:
  Vector data_;
};

/// Learnable parameters of the adaptation gate, the shift projection and the
/// post-fusion layer normalization.
struct FusionParams {
  RowVector gate_weights;  // 1 x (d + d_f), acts on [e; h_v]
  double gate_bias = 0.0;
  Matrix shift_weights;    // d x d_f
  Vector shift_bias;       // d, shared by all tokens
  double beta = 1e-4;      // displacement cap relative to ||e||
  Vector ln_gain;          // d
  Vector ln_bias;          // d
  double ln_eps = 1e-5;

  Index dim() const { return shift_weights.rows(); }
  Index feature_dim() const { return shift_weights.cols(); }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit gain.
  static FusionParams init(Index dim, Index feature_dim, double beta,
                           std::uint64_t seed);
  static FusionParams zeros(Index dim, Index feature_dim, double beta);

  /// Throws ValidationError on non-finite entries, beta <= 0 or ln_eps <= 0,
  /// DimensionError on inconsistent shapes.
  void validate() const;
};

struct DropoutSpec {
  double rate = 0.1;
  std::uint64_t seed = 0;
  bool training = false;
};

/// Inverted-dropout multipliers (0 or 1/(1-rate)) for a rows x cols output.
Matrix dropout_mask(Index rows, Index cols, double rate, std::uint64_t seed);

/// Everything fusion_backward needs besides the inputs.
struct FusionCache {
  Vector projected;          // W_v h_v, shared across tokens (d)
  Vector gate;               // per-token gate activation, in (0,1)
  Matrix shift;              // N x d shift vectors
  Vector alpha;              // per-token scale, in (0,1]
  std::vector<bool> clamped; // alpha hit the cap of 1
  Matrix pre_norm;           // e + alpha * shift, before layer normalization
  Vector ln_mean;            // per-token
  Vector ln_var;             // per-token biased variance
  Matrix normalized;         // (pre_norm - mean) / sqrt(var + eps)
  DropoutSpec dropout;
};

struct FusionResult {
  Matrix fused;  // N x d
  FusionCache cache;
};

struct FusionGradients {
  RowVector gate_weights;
  double gate_bias = 0.0;
  Matrix shift_weights;
  Vector shift_bias;
  Vector ln_gain;
  Vector ln_bias;
  Matrix embeddings;  // N x d
  Vector features;    // d_f, summed over token positions
};

FusionResult fusion_forward(const EmbeddingSequence& embeddings,
                            const ProjectedFeature& feature,
                            const FusionParams& params,
                            const DropoutSpec& dropout = {});

/// Gradients of sum(upstream .* fused) with respect to every parameter and
/// input. Clamped tokens treat alpha as the constant 1.
FusionGradients fusion_backward(const FusionCache& cache,
                                const EmbeddingSequence& embeddings,
                                const ProjectedFeature& feature,
                                const FusionParams& params,
                                const Matrix& upstream);

}  // namespace calfuse
