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

#include "calfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "calfuse/error.hpp"
#include "calfuse/random.hpp"

namespace calfuse {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Label smoothing

void SmoothingConfig::validate() const {
  require(num_classes >= 2, "smoothing needs at least two classes");
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha < 1.0,
          "smoothing alpha must lie in [0, 1)");
}

Vector smooth_targets(const Vector& one_hot, const SmoothingConfig& cfg) {
  cfg.validate();
  require_dim("target length (K)", cfg.num_classes, one_hot.size());
  int ones = 0;
  for (Index k = 0; k < one_hot.size(); ++k) {
    if (one_hot(k) == 1.0) {
      ++ones;
    } else {
      require(one_hot(k) == 0.0, "target is not one-hot");
    }
  }
  require(ones == 1, "target is not one-hot");
  return one_hot * (1.0 - cfg.alpha) +
         Vector::Constant(one_hot.size(), cfg.alpha / cfg.num_classes);
}

Vector smooth_targets(int label, const SmoothingConfig& cfg) {
  require(label >= 0 && label < cfg.num_classes, "label out of range");
  Vector y = Vector::Zero(cfg.num_classes);
  y(label) = 1.0;
  return smooth_targets(y, cfg);
}

double log_sum_exp(const Vector& logits) {
  const double m = logits.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((logits.array() - m).exp().sum());
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector p = (logits.array() - m).exp();
  return p / p.sum();
}

namespace {

LossResult loss_from_logits(const Vector& logits, const Vector& target) {
  const double lse = log_sum_exp(logits);
  LossResult r;
  r.probs = (logits.array() - lse).exp();
  r.loss = 0.0;
  for (Index k = 0; k < logits.size(); ++k) {
    // 0 * log 0 contributes nothing.
    if (target(k) > 0.0) r.loss -= target(k) * (logits(k) - lse);
  }
  r.d_logits = r.probs - target;
  return r;
}

}  // namespace

LossResult smoothed_cross_entropy_logits(const Vector& logits, int label,
                                         const SmoothingConfig& cfg) {
  require_dim("logit length (K)", cfg.num_classes, logits.size());
  require(logits.allFinite(), "logits contain non-finite values");
  return loss_from_logits(logits, smooth_targets(label, cfg));
}

LossResult smoothed_cross_entropy(const Vector& probs, const Vector& one_hot,
                                  const SmoothingConfig& cfg) {
  require_dim("probability length (K)", cfg.num_classes, probs.size());
  require((probs.array() >= 0.0).all() && probs.allFinite(),
          "probabilities must be finite and non-negative");
  require(std::abs(probs.sum() - 1.0) <= 1e-9,
          "probabilities must sum to 1 within 1e-9");
  const Vector target = smooth_targets(one_hot, cfg);
  return loss_from_logits(probs.array().log().matrix(), target);
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
}

double fan_in_bound(Index fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

}  // namespace

ToyModelParams ToyModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  require(dims.vocab_size >= 2, "vocab_size must be at least 2");
  require(dims.dim >= 1 && dims.feature_raw_dim >= 1 &&
              dims.feature_proj_dim >= 1 && dims.hidden_dim >= 1,
          "model dimensions must be positive");
  require(dims.num_classes >= 2, "model needs at least two classes");
  require(dims.dropout >= 0.0 && dims.dropout < 1.0,
          "dropout must lie in [0, 1)");

  ToyModelParams p;
  p.dims = dims;
  Rng rng(mix_seed(seed, 0x70A5));
  p.embed_table.resize(static_cast<Index>(dims.vocab_size), dims.dim);
  fill_uniform(p.embed_table, fan_in_bound(dims.dim), rng);
  p.fusion = FusionParams::init(dims.dim, dims.feature_proj_dim, dims.beta,
                                mix_seed(seed, 1));
  p.proj_weights.resize(dims.feature_proj_dim, dims.feature_raw_dim);
  fill_uniform(p.proj_weights, fan_in_bound(dims.feature_raw_dim), rng);
  p.proj_bias = Vector::Zero(dims.feature_proj_dim);
  p.hidden_weights.resize(dims.hidden_dim, dims.dim);
  fill_uniform(p.hidden_weights, fan_in_bound(dims.dim), rng);
  p.hidden_bias = Vector::Zero(dims.hidden_dim);
  p.out_weights.resize(dims.num_classes, dims.hidden_dim);
  fill_uniform(p.out_weights, fan_in_bound(dims.hidden_dim), rng);
  p.out_bias = Vector::Zero(dims.num_classes);
  return p;
}

ToyModelParams ToyModelParams::zeros_like(const ToyModelParams& like) {
  ToyModelParams z = like;
  for_each_block(z, z, [](double* a, double*, std::size_t n) {
    std::fill(a, a + n, 0.0);
  });
  return z;
}

void ToyModelParams::validate() const {
  const auto& d = dims;
  require_dim("embedding rows (V)", static_cast<long>(d.vocab_size),
              embed_table.rows());
  require_dim("embedding cols (d)", d.dim, embed_table.cols());
  fusion.validate();
  require_dim("fusion dim (d)", d.dim, fusion.dim());
  require_dim("fusion feature dim", d.feature_proj_dim, fusion.feature_dim());
  require_dim("projection rows", d.feature_proj_dim, proj_weights.rows());
  require_dim("projection cols (raw feature dim)", d.feature_raw_dim,
              proj_weights.cols());
  require_dim("projection bias", d.feature_proj_dim, proj_bias.size());
  require_dim("hidden rows", d.hidden_dim, hidden_weights.rows());
  require_dim("hidden cols (d)", d.dim, hidden_weights.cols());
  require_dim("hidden bias", d.hidden_dim, hidden_bias.size());
  require_dim("output rows (K)", d.num_classes, out_weights.rows());
  require_dim("output cols", d.hidden_dim, out_weights.cols());
  require_dim("output bias (K)", d.num_classes, out_bias.size());
  require(d.num_classes >= 2, "model needs at least two classes");
  require(embed_table.allFinite() && proj_weights.allFinite() &&
              proj_bias.allFinite() && hidden_weights.allFinite() &&
              hidden_bias.allFinite() && out_weights.allFinite() &&
              out_bias.allFinite(),
          "model parameters contain non-finite values");
}

std::size_t ToyModelParams::parameter_count() const {
  ToyModelParams a = *this;
  std::size_t total = 0;
  for_each_block(a, a, [&](double*, double*, std::size_t n) { total += n; });
  return total;
}

// ---------------------------------------------------------------------------
// Forward / backward

ToyForward toy_forward(const std::vector<std::size_t>& token_ids,
                       const Vector& feature_raw, const ToyModelParams& params,
                       const DropoutSpec& dropout) {
  require(!token_ids.empty(), "token list is empty");
  require_dim("raw feature dim", params.dims.feature_raw_dim, feature_raw.size());
  const auto n = static_cast<Index>(token_ids.size());

  ToyForward f;
  f.embeddings.resize(n, params.dims.dim);
  for (Index i = 0; i < n; ++i) {
    const auto id = token_ids[static_cast<std::size_t>(i)];
    require(id < params.dims.vocab_size, "token id outside vocabulary");
    f.embeddings.row(i) = params.embed_table.row(static_cast<Index>(id));
  }
  f.projected = params.proj_weights * feature_raw + params.proj_bias;
  f.fusion = fusion_forward(EmbeddingSequence(f.embeddings),
                            ProjectedFeature(f.projected), params.fusion, dropout);
  f.pooled = f.fusion.fused.colwise().mean().transpose();
  f.hidden_pre = params.hidden_weights * f.pooled + params.hidden_bias;
  f.hidden = f.hidden_pre.cwiseMax(0.0);
  f.logits = params.out_weights * f.hidden + params.out_bias;
  f.probs = softmax(f.logits);
  return f;
}

void toy_backward(const ToyForward& fwd, const std::vector<std::size_t>& token_ids,
                  const Vector& feature_raw, const ToyModelParams& params,
                  const Vector& d_logits, ToyModelParams& grads) {
  require_dim("d_logits (K)", params.dims.num_classes, d_logits.size());
  grads.out_weights.noalias() += d_logits * fwd.hidden.transpose();
  grads.out_bias += d_logits;

  Vector d_hidden = params.out_weights.transpose() * d_logits;
  for (Index j = 0; j < d_hidden.size(); ++j)
    if (!(fwd.hidden_pre(j) > 0.0)) d_hidden(j) = 0.0;
  grads.hidden_weights.noalias() += d_hidden * fwd.pooled.transpose();
  grads.hidden_bias += d_hidden;

  const Vector d_pooled = params.hidden_weights.transpose() * d_hidden;
  const Index n = fwd.embeddings.rows();
  const Matrix upstream =
      (d_pooled / static_cast<double>(n)).transpose().replicate(n, 1);
  const FusionGradients fg =
      fusion_backward(fwd.fusion.cache, EmbeddingSequence(fwd.embeddings),
                      ProjectedFeature(fwd.projected), params.fusion, upstream);

  grads.fusion.gate_weights += fg.gate_weights;
  grads.fusion.gate_bias += fg.gate_bias;
  grads.fusion.shift_weights += fg.shift_weights;
  grads.fusion.shift_bias += fg.shift_bias;
  grads.fusion.ln_gain += fg.ln_gain;
  grads.fusion.ln_bias += fg.ln_bias;
  for (Index i = 0; i < n; ++i)
    grads.embed_table.row(static_cast<Index>(token_ids[static_cast<std::size_t>(i)])) +=
        fg.embeddings.row(i);
  grads.proj_weights.noalias() += fg.features * feature_raw.transpose();
  grads.proj_bias += fg.features;
}

// ---------------------------------------------------------------------------
// Training

const char* to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::BestValLoss:
      return "best-val-loss-checkpoint";
    case SelectionMode::EarlyStopping:
      return "early-stopping";
    case SelectionMode::FinalEpoch:
      return "final-epoch";
  }
  return "unknown";
}

SelectionMode selection_mode_from_string(const std::string& s) {
  if (s == "best-val-loss-checkpoint") return SelectionMode::BestValLoss;
  if (s == "early-stopping") return SelectionMode::EarlyStopping;
  if (s == "final-epoch") return SelectionMode::FinalEpoch;
  throw ValidationError("unknown selection mode '" + s + "'");
}

void TrainConfig::validate() const {
  require(std::isfinite(learning_rate) && learning_rate > 0,
          "learning_rate must be positive");
  require(step_size > 0, "step_size must be positive");
  require(std::isfinite(gamma) && gamma > 0, "gamma must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(max_epochs > 0, "max_epochs must be positive");
  require(patience > 0, "patience must be positive");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  require(epoch >= 1, "epochs are 1-indexed");
  const int decays = (epoch - 1) / cfg.step_size;
  return cfg.learning_rate * std::pow(cfg.gamma, decays);
}

int select_checkpoint(const std::vector<double>& val_losses) {
  require(!val_losses.empty(), "no validation losses recorded");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i)
    if (val_losses[i] < val_losses[best]) best = i;
  return static_cast<int>(best) + 1;
}

AdamOptimizer::AdamOptimizer(const ToyModelParams& like, AdamConfig cfg)
    : cfg_(cfg),
      m_(ToyModelParams::zeros_like(like)),
      v_(ToyModelParams::zeros_like(like)) {}

void AdamOptimizer::step(ToyModelParams& params, ToyModelParams& grads,
                         double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  // Walk params/grads and the two moment sets in lockstep.
  std::vector<double*> ms;
  std::vector<double*> vs;
  for_each_block(m_, v_, [&](double* m, double* v, std::size_t) {
    ms.push_back(m);
    vs.push_back(v);
  });
  std::size_t block = 0;
  for_each_block(params, grads, [&](double* p, double* g, std::size_t n) {
    double* m = ms[block];
    double* v = vs[block];
    ++block;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  });
}

double evaluate_loss(const ToyModelParams& params, const std::vector<Sample>& data,
                     const SmoothingConfig& smoothing) {
  require(!data.empty(), "cannot evaluate on an empty set");
  double total = 0.0;
  for (const auto& s : data) {
    const ToyForward f = toy_forward(s.token_ids, s.features, params);
    total += smoothed_cross_entropy_logits(f.logits, s.label, smoothing).loss;
  }
  return total / static_cast<double>(data.size());
}

Matrix predict(const ToyModelParams& params, const std::vector<Sample>& data) {
  Matrix probs(static_cast<Index>(data.size()), params.dims.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    probs.row(static_cast<Index>(i)) =
        toy_forward(data[i].token_ids, data[i].features, params).probs.transpose();
  return probs;
}

TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const ModelDims& dims,
                  const TrainConfig& cfg, const SmoothingConfig& smoothing) {
  cfg.validate();
  smoothing.validate();
  require(!train_set.empty(), "training split is empty");
  require(!val_set.empty(), "validation split is empty");
  require_dim("smoothing classes (K)", dims.num_classes, smoothing.num_classes);

  TrainResult result;
  result.params = ToyModelParams::init(dims, cfg.seed);
  ToyModelParams& params = result.params;
  ToyModelParams grads = ToyModelParams::zeros_like(params);
  ToyModelParams best = params;
  AdamOptimizer adam(params);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> val_losses;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::uint64_t sample_counter = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    Rng rng(mix_seed(cfg.seed, 0x5EED0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for_each_block(grads, grads, [](double* g, double*, std::size_t n) {
        std::fill(g, g + n, 0.0);
      });
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = train_set[order[b]];
        const DropoutSpec drop{dims.dropout,
                               mix_seed(cfg.seed ^ 0xD809ULL, sample_counter++),
                               true};
        const ToyForward f = toy_forward(s.token_ids, s.features, params, drop);
        const LossResult l = smoothed_cross_entropy_logits(f.logits, s.label, smoothing);
        epoch_loss += l.loss;
        toy_backward(f, s.token_ids, s.features, params, l.d_logits, grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for_each_block(grads, grads, [&](double* g, double*, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) g[i] *= scale;
      });
      adam.step(params, grads, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
    rec.val_loss = evaluate_loss(params, val_set, smoothing);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw RuntimeError("training diverged at epoch " + std::to_string(epoch));
    result.history.push_back(rec);
    val_losses.push_back(rec.val_loss);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      since_best = 0;
      if (cfg.selection != SelectionMode::FinalEpoch) best = params;
    } else {
      ++since_best;
    }
    if (cfg.selection == SelectionMode::EarlyStopping && since_best >= cfg.patience)
      break;
  }

  if (cfg.selection == SelectionMode::FinalEpoch) {
    result.selected_epoch = static_cast<int>(result.history.size());
  } else {
    result.selected_epoch = select_checkpoint(val_losses);
    params = std::move(best);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kModelFormat = "calfuse-toy-model";
constexpr int kModelVersion = 1;

template <typename M>
json matrix_json(const M& m) {
  json rows = json::array();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from(const json& j, const char* name, Index rows, Index cols) {
  require(j.contains(name), std::string("model file lacks '") + name + "'");
  const json& b = j.at(name);
  require_dim((std::string(name) + " rows").c_str(), rows, b.at("rows").get<long>());
  require_dim((std::string(name) + " cols").c_str(), cols, b.at("cols").get<long>());
  const auto data = b.at("data").get<std::vector<double>>();
  require_dim((std::string(name) + " entries").c_str(), rows * cols,
              static_cast<long>(data.size()));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j2 = 0; j2 < cols; ++j2)
      m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
  return m;
}

}  // namespace

std::string params_to_json(const ToyModelParams& p) {
  const auto& d = p.dims;
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["dims"] = {{"vocab_size", d.vocab_size},
               {"dim", d.dim},
               {"feature_raw_dim", d.feature_raw_dim},
               {"feature_proj_dim", d.feature_proj_dim},
               {"hidden_dim", d.hidden_dim},
               {"num_classes", d.num_classes},
               {"beta", d.beta},
               {"dropout", d.dropout}};
  j["embed_table"] = matrix_json(p.embed_table);
  j["gate_weights"] = matrix_json(p.fusion.gate_weights);
  j["gate_bias"] = p.fusion.gate_bias;
  j["shift_weights"] = matrix_json(p.fusion.shift_weights);
  j["shift_bias"] = matrix_json(p.fusion.shift_bias);
  j["ln_gain"] = matrix_json(p.fusion.ln_gain);
  j["ln_bias"] = matrix_json(p.fusion.ln_bias);
  j["ln_eps"] = p.fusion.ln_eps;
  j["proj_weights"] = matrix_json(p.proj_weights);
  j["proj_bias"] = matrix_json(p.proj_bias);
  j["hidden_weights"] = matrix_json(p.hidden_weights);
  j["hidden_bias"] = matrix_json(p.hidden_bias);
  j["out_weights"] = matrix_json(p.out_weights);
  j["out_bias"] = matrix_json(p.out_bias);
  return j.dump();
}

ToyModelParams params_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    require(j.value("format", "") == kModelFormat, "not a calfuse model file");
    require(j.value("version", 0) == kModelVersion,
            "unsupported model file version");
    const json& dj = j.at("dims");
    ModelDims d;
    d.vocab_size = dj.at("vocab_size").get<std::size_t>();
    d.dim = dj.at("dim").get<Index>();
    d.feature_raw_dim = dj.at("feature_raw_dim").get<Index>();
    d.feature_proj_dim = dj.at("feature_proj_dim").get<Index>();
    d.hidden_dim = dj.at("hidden_dim").get<Index>();
    d.num_classes = dj.at("num_classes").get<int>();
    d.beta = dj.at("beta").get<double>();
    d.dropout = dj.at("dropout").get<double>();

    ToyModelParams p;
    p.dims = d;
    const auto V = static_cast<Index>(d.vocab_size);
    p.embed_table = matrix_from(j, "embed_table", V, d.dim);
    p.fusion.gate_weights =
        matrix_from(j, "gate_weights", 1, d.dim + d.feature_proj_dim).row(0);
    p.fusion.gate_bias = j.at("gate_bias").get<double>();
    p.fusion.shift_weights =
        matrix_from(j, "shift_weights", d.dim, d.feature_proj_dim);
    p.fusion.shift_bias = matrix_from(j, "shift_bias", d.dim, 1).col(0);
    p.fusion.ln_gain = matrix_from(j, "ln_gain", d.dim, 1).col(0);
    p.fusion.ln_bias = matrix_from(j, "ln_bias", d.dim, 1).col(0);
    p.fusion.ln_eps = j.at("ln_eps").get<double>();
    p.fusion.beta = d.beta;
    p.proj_weights =
        matrix_from(j, "proj_weights", d.feature_proj_dim, d.feature_raw_dim);
    p.proj_bias = matrix_from(j, "proj_bias", d.feature_proj_dim, 1).col(0);
    p.hidden_weights = matrix_from(j, "hidden_weights", d.hidden_dim, d.dim);
    p.hidden_bias = matrix_from(j, "hidden_bias", d.hidden_dim, 1).col(0);
    p.out_weights = matrix_from(j, "out_weights", d.num_classes, d.hidden_dim);
    p.out_bias = matrix_from(j, "out_bias", d.num_classes, 1).col(0);
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

void save_params(const ToyModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write model file " + path);
  out << params_to_json(params);
  if (!out) throw RuntimeError("failed writing model file " + path);
}

ToyModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace calfuse
