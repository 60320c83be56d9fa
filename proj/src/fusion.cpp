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

#include <cmath>
#include <string>

#include "calfuse/error.hpp"
#include "calfuse/random.hpp"

namespace calfuse {

namespace {

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
}

void check_inputs(const EmbeddingSequence& e, const ProjectedFeature& h,
                  const FusionParams& p) {
  p.validate();
  require_dim("embedding dim d", p.dim(), e.dim());
  require_dim("feature dim d_f", p.feature_dim(), h.dim());
}

}  // namespace

EmbeddingSequence::EmbeddingSequence(Matrix data) : data_(std::move(data)) {
  require(data_.rows() >= 1, "embedding sequence needs at least one token");
  require(data_.cols() >= 1, "embedding dimension must be at least 1");
  require(all_finite(data_), "embedding sequence contains non-finite values");
}

ProjectedFeature::ProjectedFeature(Vector data) : data_(std::move(data)) {
  require(data_.size() >= 1, "feature dimension must be at least 1");
  require(all_finite(data_), "feature vector contains non-finite values");
}

FusionParams FusionParams::zeros(Index dim, Index feature_dim, double beta) {
  FusionParams p;
  p.gate_weights = RowVector::Zero(dim + feature_dim);
  p.gate_bias = 0.0;
  p.shift_weights = Matrix::Zero(dim, feature_dim);
  p.shift_bias = Vector::Zero(dim);
  p.beta = beta;
  p.ln_gain = Vector::Ones(dim);
  p.ln_bias = Vector::Zero(dim);
  return p;
}

FusionParams FusionParams::init(Index dim, Index feature_dim, double beta,
                                std::uint64_t seed) {
  FusionParams p = zeros(dim, feature_dim, beta);
  Rng rng(seed);
  Matrix gate(1, dim + feature_dim);
  fill_uniform(gate, 1.0 / std::sqrt(static_cast<double>(dim + feature_dim)),
               rng);
  p.gate_weights = gate.row(0);
  fill_uniform(p.shift_weights,
               1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  return p;
}

void FusionParams::validate() const {
  const Index d = dim();
  const Index df = feature_dim();
  require(d >= 1 && df >= 1, "fusion parameters are empty");
  require_dim("gate weight columns (d + d_f)", d + df, gate_weights.size());
  require_dim("shift bias dim d", d, shift_bias.size());
  require_dim("layer-norm gain dim d", d, ln_gain.size());
  require_dim("layer-norm bias dim d", d, ln_bias.size());
  require(std::isfinite(beta) && beta > 0, "beta must be positive and finite");
  require(std::isfinite(ln_eps) && ln_eps > 0,
          "ln_eps must be positive and finite");
  require(std::isfinite(gate_bias) && all_finite(gate_weights) &&
              all_finite(shift_weights) && all_finite(shift_bias) &&
              all_finite(ln_gain) && all_finite(ln_bias),
          "fusion parameters contain non-finite values");
}

Matrix dropout_mask(Index rows, Index cols, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  Matrix mask(rows, cols);
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      mask(i, j) = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

FusionResult fusion_forward(const EmbeddingSequence& embeddings,
                            const ProjectedFeature& feature,
                            const FusionParams& params,
                            const DropoutSpec& dropout) {
  check_inputs(embeddings, feature, params);
  require(dropout.rate >= 0.0 && dropout.rate < 1.0,
          "dropout rate must lie in [0, 1)");

  const Matrix& e = embeddings.data();
  const Vector& hv = feature.data();
  const Index n = e.rows();
  const Index d = e.cols();

  FusionResult out;
  FusionCache& c = out.cache;
  c.dropout = dropout;
  c.projected = params.shift_weights * hv;
  c.gate.resize(n);
  c.shift.resize(n, d);
  c.alpha.resize(n);
  c.clamped.assign(static_cast<std::size_t>(n), false);
  c.pre_norm.resize(n, d);
  c.ln_mean.resize(n);
  c.ln_var.resize(n);
  c.normalized.resize(n, d);

  const auto w_e = params.gate_weights.head(d);
  const double feature_term = params.gate_weights.tail(hv.size()).dot(hv);

  for (Index i = 0; i < n; ++i) {
    const double z = w_e.dot(e.row(i)) + feature_term + params.gate_bias;
    const double w = sigmoid(z);
    c.gate(i) = w;
    c.shift.row(i) = (w * c.projected + params.shift_bias).transpose();

    const double e_norm = e.row(i).norm();
    const double h_norm = c.shift.row(i).norm();
    double a = 1.0;
    bool clamped = true;
    if (h_norm > 0.0) {
      const double ratio = params.beta * e_norm / h_norm;
      if (ratio < 1.0) {
        a = ratio;
        clamped = false;
      }
    }
    c.alpha(i) = a;
    c.clamped[static_cast<std::size_t>(i)] = clamped;
    c.pre_norm.row(i) = e.row(i) + a * c.shift.row(i);

    const double mean = c.pre_norm.row(i).mean();
    const double var =
        (c.pre_norm.row(i).array() - mean).square().sum() / static_cast<double>(d);
    c.ln_mean(i) = mean;
    c.ln_var(i) = var;
    c.normalized.row(i) =
        (c.pre_norm.row(i).array() - mean) / std::sqrt(var + params.ln_eps);
  }

  out.fused = (c.normalized.array().rowwise() * params.ln_gain.transpose().array())
                  .rowwise() +
              params.ln_bias.transpose().array();
  if (dropout.training && dropout.rate > 0.0)
    out.fused.array() *= dropout_mask(n, d, dropout.rate, dropout.seed).array();
  if (!out.fused.allFinite())
    throw RuntimeError("fusion forward produced non-finite values");
  return out;
}

FusionGradients fusion_backward(const FusionCache& cache,
                                const EmbeddingSequence& embeddings,
                                const ProjectedFeature& feature,
                                const FusionParams& params,
                                const Matrix& upstream) {
  check_inputs(embeddings, feature, params);
  const Matrix& e = embeddings.data();
  const Vector& hv = feature.data();
  const Index n = e.rows();
  const Index d = e.cols();
  const Index df = hv.size();
  require_dim("upstream rows (N)", n, upstream.rows());
  require_dim("upstream cols (d)", d, upstream.cols());
  require_dim("cache tokens (N)", n, cache.gate.size());
  require_dim("cache dim (d)", d, cache.shift.cols());
  require_dim("cache projected dim (d)", d, cache.projected.size());
  require_dim("cache clamp flags (N)", n, static_cast<long>(cache.clamped.size()));

  Matrix dy = upstream;
  if (cache.dropout.training && cache.dropout.rate > 0.0)
    dy.array() *=
        dropout_mask(n, d, cache.dropout.rate, cache.dropout.seed).array();

  FusionGradients g;
  g.ln_gain = (dy.array() * cache.normalized.array()).colwise().sum().transpose();
  g.ln_bias = dy.colwise().sum().transpose();
  g.gate_weights = RowVector::Zero(d + df);
  g.gate_bias = 0.0;
  g.shift_bias = Vector::Zero(d);
  g.embeddings.resize(n, d);
  g.features = Vector::Zero(df);

  Vector d_projected = Vector::Zero(d);
  const auto w_e = params.gate_weights.head(d);
  const auto w_h = params.gate_weights.tail(df);
  const double inv_d = 1.0 / static_cast<double>(d);

  for (Index i = 0; i < n; ++i) {
    // Layer normalization.
    const double inv_std = 1.0 / std::sqrt(cache.ln_var(i) + params.ln_eps);
    const RowVector dxhat = dy.row(i).cwiseProduct(params.ln_gain.transpose());
    const RowVector xhat = cache.normalized.row(i);
    const double mean_dxhat = dxhat.sum() * inv_d;
    const double mean_dxhat_xhat = dxhat.dot(xhat) * inv_d;
    const RowVector dx =
        inv_std * (dxhat.array() - mean_dxhat - xhat.array() * mean_dxhat_xhat)
                      .matrix();

    // Shifting: x = e + alpha * h_m.
    const RowVector hm = cache.shift.row(i);
    const double a = cache.alpha(i);
    RowVector de = dx;
    RowVector dhm = a * dx;
    if (!cache.clamped[static_cast<std::size_t>(i)]) {
      // alpha = beta * ||e|| / ||h_m||
      const double dalpha = dx.dot(hm);
      const double e_norm = e.row(i).norm();
      const double h_norm2 = hm.squaredNorm();
      if (e_norm > 0.0)
        de += dalpha * params.beta / (e_norm * std::sqrt(h_norm2)) * e.row(i);
      dhm -= dalpha * a / h_norm2 * hm;
    }

    // Shift vector: h_m = w * (W_v h_v) + b_m.
    const double w = cache.gate(i);
    g.shift_bias += dhm.transpose();
    const double dw = dhm.dot(cache.projected.transpose());
    d_projected += w * dhm.transpose();

    // Gate: w = sigmoid(W_hv [e; h_v] + b_v).
    const double dz = dw * w * (1.0 - w);
    g.gate_weights.head(d) += dz * e.row(i);
    g.gate_weights.tail(df) += dz * hv.transpose();
    g.gate_bias += dz;
    de += dz * w_e;
    g.features += dz * w_h.transpose();

    g.embeddings.row(i) = de;
  }

  g.shift_weights = d_projected * hv.transpose();
  g.features += params.shift_weights.transpose() * d_projected;
  return g;
}

}  // namespace calfuse
