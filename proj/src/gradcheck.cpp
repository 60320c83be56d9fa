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

#include "calfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "calfuse/error.hpp"
#include "calfuse/random.hpp"

namespace calfuse {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport compare_with_finite_differences(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, const std::vector<double>& analytic,
    double step, double tolerance, const std::vector<std::string>& names) {
  require(step > 0 && tolerance > 0, "step and tolerance must be positive");
  require_dim("analytic gradient length", static_cast<long>(x.size()),
              static_cast<long>(analytic.size()));
  GradCheckReport report;
  report.coordinates = x.size();
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    if (!(err <= report.max_rel_error)) {
      report.max_rel_error = err;
      report.worst = i < names.size() ? names[i] : "x[" + std::to_string(i) + "]";
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

void push_all(std::vector<double>& out, std::vector<std::string>& names,
              const double* data, Index n, const std::string& label) {
  for (Index i = 0; i < n; ++i) {
    out.push_back(data[i]);
    names.push_back(label + "[" + std::to_string(i) + "]");
  }
}

struct FusionPoint {
  Matrix embeddings;
  Vector feature;
  FusionParams params;
};

std::vector<double> pack(const FusionPoint& p, std::vector<std::string>* names) {
  std::vector<double> v;
  std::vector<std::string> tmp;
  auto& nm = names ? *names : tmp;
  push_all(v, nm, p.params.gate_weights.data(), p.params.gate_weights.size(),
           "gate_weights");
  push_all(v, nm, &p.params.gate_bias, 1, "gate_bias");
  push_all(v, nm, p.params.shift_weights.data(), p.params.shift_weights.size(),
           "shift_weights");
  push_all(v, nm, p.params.shift_bias.data(), p.params.shift_bias.size(),
           "shift_bias");
  push_all(v, nm, p.params.ln_gain.data(), p.params.ln_gain.size(), "ln_gain");
  push_all(v, nm, p.params.ln_bias.data(), p.params.ln_bias.size(), "ln_bias");
  push_all(v, nm, p.embeddings.data(), p.embeddings.size(), "embeddings");
  push_all(v, nm, p.feature.data(), p.feature.size(), "features");
  return v;
}

void unpack(const std::vector<double>& v, FusionPoint& p) {
  std::size_t k = 0;
  auto take = [&](double* data, Index n) {
    for (Index i = 0; i < n; ++i) data[i] = v[k++];
  };
  take(p.params.gate_weights.data(), p.params.gate_weights.size());
  take(&p.params.gate_bias, 1);
  take(p.params.shift_weights.data(), p.params.shift_weights.size());
  take(p.params.shift_bias.data(), p.params.shift_bias.size());
  take(p.params.ln_gain.data(), p.params.ln_gain.size());
  take(p.params.ln_bias.data(), p.params.ln_bias.size());
  take(p.embeddings.data(), p.embeddings.size());
  take(p.feature.data(), p.feature.size());
}

Matrix gaussian(Index rows, Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

}  // namespace

FusionInstance random_fusion_instance(std::uint64_t seed, Index dim,
                                      Index feature_dim, Index seq_len,
                                      bool training) {
  Rng rng(mix_seed(seed, 0xF051));
  for (;;) {
    Matrix e = gaussian(seq_len, dim, 1.0, rng);
    Vector h = gaussian(feature_dim, 1, 1.0, rng).col(0);
    FusionParams p = FusionParams::zeros(dim, feature_dim, 1.0);
    p.gate_weights = gaussian(1, dim + feature_dim, 0.5, rng).row(0);
    p.gate_bias = 0.5 * rng.normal();
    p.shift_weights = gaussian(dim, feature_dim, 1.0, rng);
    p.shift_bias = gaussian(dim, 1, 0.5, rng).col(0);
    for (Index j = 0; j < dim; ++j) p.ln_gain(j) = rng.uniform(0.5, 1.5);
    p.ln_bias = gaussian(dim, 1, 0.5, rng).col(0);
    Matrix upstream = gaussian(seq_len, dim, 1.0, rng);

    const Vector projected = p.shift_weights * h;
    const double feature_term = p.gate_weights.tail(feature_dim).dot(h);
    bool ok = true;
    double max_ratio = 0.0;
    for (Index i = 0; i < seq_len && ok; ++i) {
      const double z =
          p.gate_weights.head(dim).dot(e.row(i)) + feature_term + p.gate_bias;
      if (std::abs(z) >= 4.0) ok = false;
      const double w = 1.0 / (1.0 + std::exp(-z));
      const double hn = (w * projected + p.shift_bias).norm();
      if (hn < 1e-3) ok = false;
      else max_ratio = std::max(max_ratio, e.row(i).norm() / hn);
    }
    if (!ok || max_ratio <= 0.0) continue;
    p.beta = 0.5 / max_ratio;
    DropoutSpec drop{0.1, mix_seed(seed, 0xD0), training};
    return FusionInstance{EmbeddingSequence(std::move(e)),
                          ProjectedFeature(std::move(h)), std::move(p),
                          std::move(upstream), drop};
  }
}

GradCheckReport check_fusion_gradients(const FusionInstance& inst, double step,
                                       double tolerance) {
  const FusionResult fwd =
      fusion_forward(inst.embeddings, inst.feature, inst.params, inst.dropout);
  const FusionGradients g = fusion_backward(fwd.cache, inst.embeddings,
                                            inst.feature, inst.params, inst.upstream);

  FusionPoint analytic{g.embeddings, g.features, inst.params};
  analytic.params.gate_weights = g.gate_weights;
  analytic.params.gate_bias = g.gate_bias;
  analytic.params.shift_weights = g.shift_weights;
  analytic.params.shift_bias = g.shift_bias;
  analytic.params.ln_gain = g.ln_gain;
  analytic.params.ln_bias = g.ln_bias;

  const FusionPoint base{inst.embeddings.data(), inst.feature.data(), inst.params};
  std::vector<std::string> names;
  const std::vector<double> x = pack(base, &names);
  const std::vector<double> a = pack(analytic, nullptr);

  FusionPoint work = base;
  auto objective = [&](const std::vector<double>& v) {
    unpack(v, work);
    const FusionResult r =
        fusion_forward(EmbeddingSequence(work.embeddings),
                       ProjectedFeature(work.feature), work.params, inst.dropout);
    return (r.fused.array() * inst.upstream.array()).sum();
  };
  return compare_with_finite_differences(objective, x, a, step, tolerance, names);
}

// ---------------------------------------------------------------------------
// Loss and whole model

GradCheckReport check_smoothed_ce_gradients(const Vector& logits, int label,
                                            const SmoothingConfig& cfg,
                                            double step, double tolerance) {
  const LossResult r = smoothed_cross_entropy_logits(logits, label, cfg);
  std::vector<double> x(logits.data(), logits.data() + logits.size());
  std::vector<double> a(r.d_logits.data(), r.d_logits.data() + r.d_logits.size());
  auto objective = [&](const std::vector<double>& v) {
    const Vector z = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    return smoothed_cross_entropy_logits(z, label, cfg).loss;
  };
  return compare_with_finite_differences(objective, x, a, step, tolerance);
}

GradCheckReport check_toy_model_gradients(std::uint64_t seed, double step,
                                          double tolerance) {
  ModelDims dims;
  dims.vocab_size = 3;
  dims.dim = 4;
  dims.feature_raw_dim = 3;
  dims.feature_proj_dim = 5;
  dims.hidden_dim = 6;
  dims.num_classes = 3;
  dims.beta = 0.3;
  dims.dropout = 0.1;
  ToyModelParams params = ToyModelParams::init(dims, seed);
  Rng rng(mix_seed(seed, 0x70));
  // Move off the zero-initialized biases so every block is exercised.
  params.fusion.shift_bias = gaussian(dims.dim, 1, 0.3, rng).col(0);
  params.proj_bias = gaussian(dims.feature_proj_dim, 1, 0.3, rng).col(0);
  params.hidden_bias = gaussian(dims.hidden_dim, 1, 0.3, rng).col(0);
  params.out_bias = gaussian(dims.num_classes, 1, 0.3, rng).col(0);

  const std::vector<std::size_t> ids{0, 1, 2, 1};
  const Vector feature = gaussian(dims.feature_raw_dim, 1, 1.0, rng).col(0);
  const int label = static_cast<int>(rng.below(3));
  const SmoothingConfig smoothing{0.1, dims.num_classes};
  const DropoutSpec drop{dims.dropout, mix_seed(seed, 0xD1), true};

  const ToyForward fwd = toy_forward(ids, feature, params, drop);
  const LossResult loss = smoothed_cross_entropy_logits(fwd.logits, label, smoothing);
  ToyModelParams grads = ToyModelParams::zeros_like(params);
  toy_backward(fwd, ids, feature, params, loss.d_logits, grads);

  std::vector<double> x;
  std::vector<double> a;
  for_each_block(params, grads, [&](double* p, double* g, std::size_t n) {
    x.insert(x.end(), p, p + n);
    a.insert(a.end(), g, g + n);
  });
  ToyModelParams work = params;
  auto objective = [&](const std::vector<double>& v) {
    std::size_t k = 0;
    for_each_block(work, work, [&](double* p, double*, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) p[i] = v[k++];
    });
    const ToyForward f = toy_forward(ids, feature, work, drop);
    return smoothed_cross_entropy_logits(f.logits, label, smoothing).loss;
  };
  return compare_with_finite_differences(objective, x, a, step, tolerance);
}

GradCheckOp gradcheck_op_from_string(const std::string& name) {
  if (name == "fusion") return GradCheckOp::Fusion;
  if (name == "smoothed_ce") return GradCheckOp::SmoothedCrossEntropy;
  if (name == "toy_model") return GradCheckOp::ToyModel;
  throw ValidationError("unknown gradcheck op '" + name +
                        "' (expected fusion, smoothed_ce or toy_model)");
}

const char* to_string(GradCheckOp op) {
  switch (op) {
    case GradCheckOp::Fusion:
      return "fusion";
    case GradCheckOp::SmoothedCrossEntropy:
      return "smoothed_ce";
    case GradCheckOp::ToyModel:
      return "toy_model";
  }
  return "unknown";
}

GradCheckReport gradient_check(GradCheckOp op, std::uint64_t seed, double step,
                               double tolerance) {
  switch (op) {
    case GradCheckOp::Fusion:
      return check_fusion_gradients(random_fusion_instance(seed), step, tolerance);
    case GradCheckOp::SmoothedCrossEntropy: {
      Rng rng(mix_seed(seed, 0xCE));
      const int k = 2 + static_cast<int>(rng.below(4));
      Vector logits(k);
      for (int i = 0; i < k; ++i) logits(i) = 2.0 * rng.normal();
      const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      const double alphas[] = {0.0, 0.001, 0.1};
      const SmoothingConfig cfg{alphas[rng.below(3)], k};
      return check_smoothed_ce_gradients(logits, label, cfg, step, tolerance);
    }
    case GradCheckOp::ToyModel:
      return check_toy_model_gradients(seed, step, tolerance);
  }
  return {};
}

}  // namespace calfuse
