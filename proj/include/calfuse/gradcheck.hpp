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
#include <functional>
#include <string>
#include <vector>

#include "calfuse/fusion.hpp"
#include "calfuse/model.hpp"

namespace calfuse {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::size_t coordinates = 0;
  std::string worst;  // name of the coordinate with the largest error
};

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences of `f` at `x` compared against `analytic`.
/// `names` labels coordinates for the report and may be empty.
GradCheckReport compare_with_finite_differences(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, const std::vector<double>& analytic,
    double step, double tolerance, const std::vector<std::string>& names = {});

/// A fusion problem generated away from the alpha cap and gate saturation.
struct FusionInstance {
  EmbeddingSequence embeddings;
  ProjectedFeature feature;
  FusionParams params;
  Matrix upstream;
  DropoutSpec dropout;
};

/// Gaussian inputs; beta is chosen so every token's alpha ratio is at most 0.5
/// and pre-sigmoid gate values are resampled until |z| < 4.
FusionInstance random_fusion_instance(std::uint64_t seed, Index dim = 4,
                                      Index feature_dim = 3, Index seq_len = 5,
                                      bool training = false);

GradCheckReport check_fusion_gradients(const FusionInstance& inst, double step,
                                       double tolerance);

GradCheckReport check_smoothed_ce_gradients(const Vector& logits, int label,
                                            const SmoothingConfig& cfg,
                                            double step, double tolerance);

/// Whole toy-model gradient (all parameter blocks) on a tiny configuration.
GradCheckReport check_toy_model_gradients(std::uint64_t seed, double step,
                                          double tolerance);

enum class GradCheckOp { Fusion, SmoothedCrossEntropy, ToyModel };

GradCheckOp gradcheck_op_from_string(const std::string& name);
const char* to_string(GradCheckOp op);

/// Builds a seeded instance for `op` and runs the check. Always returns a
/// report.
GradCheckReport gradient_check(GradCheckOp op, std::uint64_t seed, double step,
                               double tolerance);

}  // namespace calfuse
