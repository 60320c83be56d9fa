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

#include "calfuse/fusion.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "calfuse/error.hpp"
#include "calfuse/gradcheck.hpp"
#include "calfuse/random.hpp"

namespace calfuse {
namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index j = 0;
  for (double x : v) m(0, j++) = x;
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index j = 0;
  for (double x : v) out(j++) = x;
  return out;
}

// d = 2, d_f = 1 with the shift forced to (0, 2) through the bias.
FusionParams forced_shift_params(double beta) {
  FusionParams p = FusionParams::zeros(2, 1, beta);
  p.shift_bias = vec({0.0, 2.0});
  return p;
}

TEST(FusionForward, ZeroGateWeightsGiveHalfGate) {
  Rng rng(3);
  Matrix e(6, 4);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  FusionParams p = FusionParams::init(4, 3, 0.1, 11);
  p.gate_weights.setZero();
  p.gate_bias = 0.0;
  const auto r = fusion_forward(EmbeddingSequence(e), ProjectedFeature(vec({1, -2, 3})), p);
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(r.cache.gate(i), 0.5);
}

TEST(FusionForward, ZeroShiftIsNoOp) {
  Rng rng(5);
  Matrix e(3, 4);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  FusionParams p = FusionParams::init(4, 2, 0.3, 1);
  p.shift_weights.setZero();
  p.shift_bias.setZero();
  const auto r = fusion_forward(EmbeddingSequence(e), ProjectedFeature(vec({0.4, 0.7})), p);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_EQ(r.cache.alpha(i), 1.0);
    EXPECT_TRUE(r.cache.clamped[static_cast<std::size_t>(i)]);
  }
  EXPECT_EQ(r.cache.pre_norm, e);
}

TEST(FusionForward, AlphaBelowCap) {
  const auto r = fusion_forward(EmbeddingSequence(row({3, 4})),
                                ProjectedFeature(vec({1.0})), forced_shift_params(0.1));
  EXPECT_DOUBLE_EQ(r.cache.alpha(0), 0.25);
  EXPECT_FALSE(r.cache.clamped[0]);
  EXPECT_DOUBLE_EQ(r.cache.pre_norm(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(r.cache.pre_norm(0, 1), 4.5);
}

TEST(FusionForward, AlphaAtCap) {
  const auto r = fusion_forward(EmbeddingSequence(row({3, 4})),
                                ProjectedFeature(vec({1.0})), forced_shift_params(10.0));
  EXPECT_EQ(r.cache.alpha(0), 1.0);
  EXPECT_TRUE(r.cache.clamped[0]);
  EXPECT_DOUBLE_EQ(r.cache.pre_norm(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(r.cache.pre_norm(0, 1), 6.0);
}

TEST(FusionForward, GateAndAlphaRanges) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Index n = 1 + static_cast<Index>(rng.below(8));
    Matrix e(n, 5);
    for (Index i = 0; i < e.size(); ++i) e.data()[i] = 3.0 * rng.normal();
    Vector h(4);
    for (Index i = 0; i < 4; ++i) h(i) = rng.normal();
    const double beta = std::pow(10.0, rng.uniform(-4, 1));
    const auto p = FusionParams::init(5, 4, beta, seed);
    const auto r = fusion_forward(EmbeddingSequence(e), ProjectedFeature(h), p);
    for (Index i = 0; i < n; ++i) {
      EXPECT_GT(r.cache.gate(i), 0.0);
      EXPECT_LT(r.cache.gate(i), 1.0);
      EXPECT_GT(r.cache.alpha(i), 0.0);
      EXPECT_LE(r.cache.alpha(i), 1.0);
      const double hn = r.cache.shift.row(i).norm();
      const bool expect_clamp = hn == 0.0 || beta * e.row(i).norm() >= hn;
      EXPECT_EQ(r.cache.clamped[static_cast<std::size_t>(i)], expect_clamp);
      EXPECT_EQ(expect_clamp, r.cache.alpha(i) == 1.0);
    }
  }
}

TEST(FusionForward, VanishingBetaLeavesEmbeddings) {
  Rng rng(17);
  Matrix e(4, 6);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  const auto p = FusionParams::init(6, 3, 1e-30, 2);
  const auto r = fusion_forward(EmbeddingSequence(e), ProjectedFeature(vec({1, 2, 3})), p);
  EXPECT_EQ(r.cache.pre_norm, e);
}

TEST(FusionForward, LayerNormStatistics) {
  const auto inst = random_fusion_instance(21, 8, 3, 6);
  const auto r = fusion_forward(inst.embeddings, inst.feature, inst.params);
  for (Index i = 0; i < 6; ++i) {
    const auto xhat = r.cache.normalized.row(i);
    const double var = r.cache.ln_var(i);
    EXPECT_NEAR(xhat.mean(), 0.0, 1e-6);
    EXPECT_NEAR(xhat.squaredNorm() / 8.0, var / (var + inst.params.ln_eps), 1e-6);
  }
}

TEST(FusionForward, DeterministicReplay) {
  auto inst = random_fusion_instance(4, 6, 3, 7, true);
  const auto a = fusion_forward(inst.embeddings, inst.feature, inst.params, inst.dropout);
  const auto b = fusion_forward(inst.embeddings, inst.feature, inst.params, inst.dropout);
  EXPECT_EQ(a.fused, b.fused);
}

TEST(FusionForward, EvaluationModeIgnoresDropout) {
  auto inst = random_fusion_instance(4, 6, 3, 7, false);
  inst.dropout.rate = 0.5;
  const auto r = fusion_forward(inst.embeddings, inst.feature, inst.params, inst.dropout);
  EXPECT_EQ(r.fused.array().cwiseEqual(0.0).count(), 0);
}

TEST(Dropout, RateAndExpectation) {
  const double rate = 0.1;
  const Index n = 100, d = 100;  // 10,000 coordinates
  const Matrix mask = dropout_mask(n, d, rate, 99);
  const double zeros = static_cast<double>(mask.array().cwiseEqual(0.0).count());
  const double total = static_cast<double>(n * d);
  const double sigma = std::sqrt(total * rate * (1 - rate));
  EXPECT_LT(std::abs(zeros - rate * total), 3 * sigma);

  Rng rng(1);
  Matrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(1.0, 3.0);
  const double scaled_mean = (x.array() * mask.array()).mean();
  EXPECT_LT(std::abs(scaled_mean - x.mean()) / x.mean(), 0.02);
}

TEST(FusionForward, RejectsDimensionMismatch) {
  const auto p = FusionParams::init(4, 3, 0.1, 0);
  try {
    fusion_forward(EmbeddingSequence(Matrix::Ones(2, 5)), ProjectedFeature(vec({1, 2, 3})), p);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& err) {
    EXPECT_NE(std::string(err.what()).find("embedding dim d"), std::string::npos);
    EXPECT_EQ(err.expected(), 4);
    EXPECT_EQ(err.actual(), 5);
  }
  try {
    fusion_forward(EmbeddingSequence(Matrix::Ones(2, 4)), ProjectedFeature(vec({1, 2})), p);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& err) {
    EXPECT_NE(std::string(err.what()).find("feature dim d_f"), std::string::npos);
  }
}

TEST(FusionForward, RejectsNonFinite) {
  Matrix e = Matrix::Ones(2, 2);
  e(1, 1) = std::nan("");
  EXPECT_THROW(EmbeddingSequence{e}, ValidationError);
  EXPECT_THROW(ProjectedFeature(vec({INFINITY})), ValidationError);
  auto p = FusionParams::init(2, 1, 0.1, 0);
  p.shift_weights(0, 0) = INFINITY;
  EXPECT_THROW(p.validate(), ValidationError);
  p = FusionParams::init(2, 1, 0.0, 0);
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(FusionBackward, ZeroUpstreamGivesZeroGradients) {
  const auto inst = random_fusion_instance(2);
  const auto r = fusion_forward(inst.embeddings, inst.feature, inst.params);
  const auto g = fusion_backward(r.cache, inst.embeddings, inst.feature, inst.params,
                                 Matrix::Zero(inst.upstream.rows(), inst.upstream.cols()));
  EXPECT_TRUE(g.gate_weights.isZero(0));
  EXPECT_EQ(g.gate_bias, 0.0);
  EXPECT_TRUE(g.shift_weights.isZero(0));
  EXPECT_TRUE(g.shift_bias.isZero(0));
  EXPECT_TRUE(g.ln_gain.isZero(0));
  EXPECT_TRUE(g.ln_bias.isZero(0));
  EXPECT_TRUE(g.embeddings.isZero(0));
  EXPECT_TRUE(g.features.isZero(0));
}

// With no shift, the layer is plain layer normalization of e.
TEST(FusionBackward, ZeroShiftReducesToLayerNorm) {
  auto inst = random_fusion_instance(8);
  inst.params.shift_weights.setZero();
  inst.params.shift_bias.setZero();
  const auto r = fusion_forward(inst.embeddings, inst.feature, inst.params);
  const auto g = fusion_backward(r.cache, inst.embeddings, inst.feature, inst.params,
                                 inst.upstream);
  EXPECT_TRUE(g.gate_weights.isZero(0));

  // Independent oracle: central differences of a standalone layer norm.
  const auto& p = inst.params;
  auto layer_norm_objective = [&](const Matrix& e) {
    double total = 0;
    for (Index i = 0; i < e.rows(); ++i) {
      const double mu = e.row(i).mean();
      const double var = (e.row(i).array() - mu).square().mean();
      for (Index j = 0; j < e.cols(); ++j)
        total += inst.upstream(i, j) *
                 (p.ln_gain(j) * (e(i, j) - mu) / std::sqrt(var + p.ln_eps) + p.ln_bias(j));
    }
    return total;
  };
  Matrix e = inst.embeddings.data();
  const double h = 1e-6;
  for (Index k = 0; k < e.size(); ++k) {
    const double keep = e.data()[k];
    e.data()[k] = keep + h;
    const double up = layer_norm_objective(e);
    e.data()[k] = keep - h;
    const double down = layer_norm_objective(e);
    e.data()[k] = keep;
    EXPECT_NEAR(g.embeddings.data()[k], (up - down) / (2 * h), 1e-7);
  }
}

TEST(FusionBackward, RejectsMismatchedUpstream) {
  const auto inst = random_fusion_instance(1);
  const auto r = fusion_forward(inst.embeddings, inst.feature, inst.params);
  EXPECT_THROW(fusion_backward(r.cache, inst.embeddings, inst.feature, inst.params,
                               Matrix::Zero(2, 2)),
               DimensionError);
  const auto other = random_fusion_instance(1, 4, 3, 6);
  EXPECT_THROW(fusion_backward(r.cache, other.embeddings, other.feature, other.params,
                               other.upstream),
               DimensionError);
}

TEST(GradCheck, FusionSeedSeven) {
  const auto rep = gradient_check(GradCheckOp::Fusion, 7, 1e-5, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.max_rel_error << " at " << rep.worst;
  EXPECT_EQ(rep.coordinates, 7u + 1 + 12 + 4 + 4 + 4 + 20 + 3);
}

TEST(GradCheck, FusionWithDropoutMask) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto rep = check_fusion_gradients(random_fusion_instance(seed, 4, 3, 5, true),
                                            1e-5, 1e-5);
    EXPECT_TRUE(rep.pass) << "seed " << seed << ": " << rep.max_rel_error << " at "
                          << rep.worst;
  }
}

TEST(GradCheck, LargeStepIsWorse) {
  const auto fine = gradient_check(GradCheckOp::Fusion, 3, 1e-5, 1e-5);
  const auto coarse = gradient_check(GradCheckOp::Fusion, 3, 1e-1, 1e-5);
  EXPECT_GT(coarse.max_rel_error, fine.max_rel_error);
}

TEST(GradCheck, ToyModelEndToEnd) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rep = check_toy_model_gradients(seed, 1e-5, 1e-5);
    EXPECT_TRUE(rep.pass) << "seed " << seed << ": " << rep.max_rel_error << " at "
                          << rep.worst;
  }
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10), 1e-2);
}

}  // namespace
}  // namespace calfuse
