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

#include "calfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "calfuse/csv.hpp"
#include "calfuse/error.hpp"
#include "calfuse/random.hpp"
#include "calfuse/text.hpp"
#include "json.hpp"

namespace calfuse {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Corpus

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.id);
  return out;
}

std::vector<std::string> Corpus::texts() const {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.text);
  return out;
}

std::vector<int> Corpus::labels() const {
  std::vector<int> out;
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

namespace {

bool parses_as_integer(const std::string& s, long& value) {
  try {
    value = parse_long(s, "");
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

}  // namespace

Corpus parse_corpus(std::string_view text, const std::string& source) {
  const CsvTable csv = parse_csv(text, source);
  const int text_col = csv.column("text");
  const int label_col = csv.column("label");
  const int id_col = csv.column("id");
  const int split_col = csv.column("split");
  require(text_col >= 0, source + ": missing required column 'text'");
  require(label_col >= 0, source + ": missing required column 'label'");
  require(!csv.rows.empty(), source + ": no data rows");

  std::vector<std::string> raw;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const std::string& l = csv.rows[i][static_cast<std::size_t>(label_col)];
    const auto body = l.find_first_not_of(" \t");
    if (body == std::string::npos)
      throw ValidationError(csv.where(i) + ": unparsable label (empty)");
    raw.push_back(l.substr(body, l.find_last_not_of(" \t") - body + 1));
  }

  // Label numbering.
  std::vector<std::string> names;
  bool numeric = true;
  std::map<long, std::string> by_value;
  for (const auto& l : raw) {
    long v = 0;
    if (!parses_as_integer(l, v)) {
      numeric = false;
      break;
    }
    by_value.emplace(v, l);
  }
  if (numeric) {
    for (const auto& [v, l] : by_value) names.push_back(std::to_string(v));
  } else {
    std::unordered_set<std::string> seen;
    for (const auto& l : raw)
      if (seen.insert(l).second) names.push_back(l);
  }
  std::unordered_map<std::string, int> index;
  for (std::size_t k = 0; k < names.size(); ++k) index[names[k]] = static_cast<int>(k);

  Corpus corpus;
  corpus.source = source;
  corpus.label_names = names;
  corpus.num_classes = static_cast<int>(names.size());
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    Record r;
    r.id = id_col >= 0 ? row[static_cast<std::size_t>(id_col)] : std::to_string(i);
    require(!r.id.empty(), csv.where(i) + ": empty id");
    if (!ids.insert(r.id).second)
      throw ValidationError(csv.where(i) + ": duplicate id '" + r.id + "'");
    r.text = row[static_cast<std::size_t>(text_col)];
    long v = 0;
    const std::string key = numeric && parses_as_integer(raw[i], v) ? std::to_string(v) : raw[i];
    r.label = index.at(key);
    if (split_col >= 0) {
      r.split = row[static_cast<std::size_t>(split_col)];
      require(r.split == "train" || r.split == "test" || r.split.empty(),
              csv.where(i) + ": split must be 'train' or 'test'");
    }
    corpus.records.push_back(std::move(r));
  }
  require(corpus.num_classes >= 2,
          source + ": need at least two distinct labels, found " +
              std::to_string(corpus.num_classes));
  return corpus;
}

Corpus load_corpus(const std::string& path) { return parse_corpus(read_text_file(path), path); }

std::string corpus_csv(const Corpus& corpus) {
  bool with_split = false;
  for (const auto& r : corpus.records) with_split = with_split || !r.split.empty();
  std::vector<std::string> header{"id", "text", "label"};
  if (with_split) header.push_back("split");
  std::string out = csv_row(header);
  for (const auto& r : corpus.records) {
    std::vector<std::string> f{r.id, r.text,
                               corpus.label_names[static_cast<std::size_t>(r.label)]};
    if (with_split) f.push_back(r.split);
    out += csv_row(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::FixedTest:
      return "fixed-test";
    case SplitMode::Holdout:
      return "holdout-80-20";
    case SplitMode::StratifiedKFold:
      return "stratified-5-fold";
  }
  return "unknown";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "fixed-test") return SplitMode::FixedTest;
  if (s == "holdout-80-20" || s == "holdout") return SplitMode::Holdout;
  if (s == "stratified-5-fold" || s == "stratified-k-fold" || s == "crossval")
    return SplitMode::StratifiedKFold;
  throw ValidationError("unknown split mode '" + s + "'");
}

namespace {

std::vector<std::vector<std::size_t>> by_class(const std::vector<std::size_t>& idx,
                                               const std::vector<int>& labels, int K) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(K));
  for (auto i : idx) out[static_cast<std::size_t>(labels[i])].push_back(i);
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::string class_name(const std::vector<std::string>& names, int k) {
  return k < static_cast<int>(names.size()) ? "'" + names[static_cast<std::size_t>(k)] + "'"
                                            : std::to_string(k);
}

}  // namespace

std::vector<int> stratified_folds(const std::vector<int>& labels, int K, int folds,
                                  std::uint64_t seed) {
  require(folds >= 2, "cross-validation needs at least two folds");
  auto classes = by_class(all_indices(labels.size()), labels, K);
  std::vector<int> fold(labels.size(), -1);
  std::size_t deal = 0;
  for (int k = 0; k < K; ++k) {
    auto& members = classes[static_cast<std::size_t>(k)];
    if (members.size() < static_cast<std::size_t>(folds))
      throw ValidationError("class " + std::to_string(k) + " has " +
                            std::to_string(members.size()) + " samples; " +
                            std::to_string(folds) + "-fold cross-validation needs at least " +
                            std::to_string(folds));
    Rng rng(mix_seed(seed, 0xF01D0000ULL + static_cast<std::uint64_t>(k)));
    rng.shuffle(members.begin(), members.end());
    for (auto i : members) fold[i] = static_cast<int>(deal++ % static_cast<std::size_t>(folds));
  }
  return fold;
}

std::vector<std::size_t> carve_stratified(std::vector<std::size_t>& pool,
                                          const std::vector<int>& labels, int K,
                                          double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "split fraction must lie in (0, 1)");
  auto classes = by_class(pool, labels, K);
  std::vector<std::size_t> taken, kept;
  for (int k = 0; k < K; ++k) {
    auto& members = classes[static_cast<std::size_t>(k)];
    if (members.empty()) continue;
    if (members.size() < 2)
      throw ValidationError("class " + std::to_string(k) + " has " +
                            std::to_string(members.size()) +
                            " sample(s) in a partition that must be split further");
    Rng rng(mix_seed(seed, 0xCA7E0000ULL + static_cast<std::uint64_t>(k)));
    rng.shuffle(members.begin(), members.end());
    auto count = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(members.size())));
    count = std::clamp<std::size_t>(count, 1, members.size() - 1);
    taken.insert(taken.end(), members.begin(), members.begin() + static_cast<long>(count));
    kept.insert(kept.end(), members.begin() + static_cast<long>(count), members.end());
  }
  std::sort(taken.begin(), taken.end());
  std::sort(kept.begin(), kept.end());
  pool = std::move(kept);
  return taken;
}

std::vector<Partition> stratified_split(const Corpus& corpus, const SplitPlan& plan) {
  const auto labels = corpus.labels();
  const int K = corpus.num_classes;
  const auto n = corpus.records.size();
  auto counts = std::vector<std::size_t>(static_cast<std::size_t>(K), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];

  std::vector<Partition> parts;
  auto finish = [&](Partition p, std::uint64_t tag) {
    try {
      p.val = carve_stratified(p.train, labels, K, plan.val_fraction, mix_seed(plan.seed, tag));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("validation split: ") + e.what());
    }
    parts.push_back(std::move(p));
  };

  switch (plan.mode) {
    case SplitMode::FixedTest: {
      Partition p;
      for (std::size_t i = 0; i < n; ++i)
        (corpus.records[i].split == "test" ? p.test : p.train).push_back(i);
      require(!p.test.empty(), "fixed-test split needs rows with split=test");
      finish(std::move(p), 0x7E57);
      break;
    }
    case SplitMode::Holdout: {
      for (int k = 0; k < K; ++k)
        if (counts[static_cast<std::size_t>(k)] < 3)
          throw ValidationError("class " + class_name(corpus.label_names, k) + " has " +
                                std::to_string(counts[static_cast<std::size_t>(k)]) +
                                " samples; holdout with validation needs at least 3");
      Partition p;
      p.train = all_indices(n);
      p.test = carve_stratified(p.train, labels, K, plan.test_fraction,
                                mix_seed(plan.seed, 0x4010));
      finish(std::move(p), 0x7E57);
      break;
    }
    case SplitMode::StratifiedKFold: {
      for (int k = 0; k < K; ++k)
        if (counts[static_cast<std::size_t>(k)] < static_cast<std::size_t>(plan.folds))
          throw ValidationError("class " + class_name(corpus.label_names, k) + " has " +
                                std::to_string(counts[static_cast<std::size_t>(k)]) +
                                " samples; " + std::to_string(plan.folds) +
                                "-fold cross-validation needs at least " +
                                std::to_string(plan.folds));
      const auto fold = stratified_folds(labels, K, plan.folds, plan.seed);
      for (int f = 0; f < plan.folds; ++f) {
        Partition p;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? p.test : p.train).push_back(i);
        finish(std::move(p), 0x7E57 + static_cast<std::uint64_t>(f));
      }
      break;
    }
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Experiment configuration

const char* to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::Lexicon:
      return "lexicon";
    case FeatureSet::Dictionary:
      return "dictionary";
    case FeatureSet::Goss:
      return "goss";
    case FeatureSet::Dense:
      return "dense";
    case FeatureSet::None:
      return "none";
  }
  return "unknown";
}

FeatureSet feature_set_from_string(const std::string& s) {
  if (s == "lexicon") return FeatureSet::Lexicon;
  if (s == "dictionary") return FeatureSet::Dictionary;
  if (s == "goss") return FeatureSet::Goss;
  if (s == "dense") return FeatureSet::Dense;
  if (s == "none") return FeatureSet::None;
  throw ValidationError("unknown feature set '" + s +
                        "' (expected lexicon, dictionary, goss, dense or none)");
}

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

void reject_unknown(const ojson& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read(const ojson& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(std::string_view text, const std::string& base) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  ExperimentConfig c;
  try {
    reject_unknown(j,
                   {"corpus", "feature_set", "dict", "topics", "features", "smoothing_alpha",
                    "fusion_beta", "split", "train", "model", "calibration", "out"},
                   "");
    std::string s;
    read(j, "corpus", c.corpus_path);
    if (j.contains("feature_set")) c.feature_set = feature_set_from_string(j.at("feature_set"));
    read(j, "dict", c.dict_path);
    read(j, "topics", c.topics_path);
    read(j, "features", c.features_path);
    read(j, "smoothing_alpha", c.smoothing_alpha);
    read(j, "fusion_beta", c.beta);
    read(j, "out", c.out_dir);
    if (j.contains("split")) {
      const auto& sj = j.at("split");
      reject_unknown(sj, {"mode", "seed", "folds", "test_fraction", "val_fraction"}, "split.");
      if (sj.contains("mode")) c.split.mode = split_mode_from_string(sj.at("mode"));
      read(sj, "seed", c.split.seed);
      read(sj, "folds", c.split.folds);
      read(sj, "test_fraction", c.split.test_fraction);
      read(sj, "val_fraction", c.split.val_fraction);
    }
    if (j.contains("train")) {
      const auto& tj = j.at("train");
      reject_unknown(tj,
                     {"learning_rate", "step_size", "gamma", "batch_size", "max_epochs",
                      "patience", "selection_mode", "seed"},
                     "train.");
      read(tj, "learning_rate", c.train.learning_rate);
      read(tj, "step_size", c.train.step_size);
      read(tj, "gamma", c.train.gamma);
      read(tj, "batch_size", c.train.batch_size);
      read(tj, "max_epochs", c.train.max_epochs);
      read(tj, "patience", c.train.patience);
      if (tj.contains("selection_mode"))
        c.train.selection = selection_mode_from_string(tj.at("selection_mode"));
      read(tj, "seed", c.train.seed);
    }
    if (j.contains("model")) {
      const auto& mj = j.at("model");
      reject_unknown(mj, {"vocab_size", "dim", "feature_proj_dim", "hidden_dim", "dropout"},
                     "model.");
      read(mj, "vocab_size", c.model.vocab_size);
      read(mj, "dim", c.model.dim);
      read(mj, "feature_proj_dim", c.model.feature_proj_dim);
      read(mj, "hidden_dim", c.model.hidden_dim);
      read(mj, "dropout", c.model.dropout);
    }
    if (j.contains("calibration")) {
      const auto& cj = j.at("calibration");
      reject_unknown(cj, {"bins", "ranges"}, "calibration.");
      read(cj, "bins", c.calibration.bins);
      read(cj, "ranges", c.calibration.ranges);
    }
  } catch (const ojson::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  c.corpus_path = resolve(base, c.corpus_path);
  c.dict_path = resolve(base, c.dict_path);
  c.topics_path = resolve(base, c.topics_path);
  c.features_path = resolve(base, c.features_path);
  c.out_dir = resolve(base, c.out_dir);
  return c;
}

std::string ExperimentConfig::to_json() const {
  ojson j;
  j["corpus"] = corpus_path;
  j["feature_set"] = to_string(feature_set);
  j["dict"] = dict_path;
  j["topics"] = topics_path;
  j["features"] = features_path;
  j["smoothing_alpha"] = smoothing_alpha;
  j["fusion_beta"] = beta;
  j["split"] = {{"mode", to_string(split.mode)},
                {"seed", split.seed},
                {"folds", split.folds},
                {"test_fraction", split.test_fraction},
                {"val_fraction", split.val_fraction}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"step_size", train.step_size},
                {"gamma", train.gamma},
                {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},
                {"patience", train.patience},
                {"selection_mode", to_string(train.selection)},
                {"seed", train.seed}};
  j["model"] = {{"vocab_size", model.vocab_size},
                {"dim", model.dim},
                {"feature_proj_dim", model.feature_proj_dim},
                {"hidden_dim", model.hidden_dim},
                {"dropout", model.dropout}};
  j["calibration"] = {{"bins", calibration.bins}, {"ranges", calibration.ranges}};
  j["out"] = out_dir;
  return j.dump(2);
}

void ExperimentConfig::validate() const {
  require(!corpus_path.empty(), "config: 'corpus' is required");
  require(fs::exists(corpus_path), "config: corpus file not found: " + corpus_path);
  auto need = [](const std::string& p, const char* key, FeatureSet f) {
    require(!p.empty(), std::string("config: feature_set '") + to_string(f) + "' needs '" +
                            key + "'");
    require(fs::exists(p), std::string("config: ") + key + " file not found: " + p);
  };
  switch (feature_set) {
    case FeatureSet::Lexicon:
    case FeatureSet::Dictionary:
      need(dict_path, "dict", feature_set);
      break;
    case FeatureSet::Goss:
      need(topics_path, "topics", feature_set);
      break;
    case FeatureSet::Dense:
      need(features_path, "features", feature_set);
      break;
    case FeatureSet::None:
      break;
  }
  require(std::isfinite(beta) && beta > 0, "config: fusion_beta must be positive");
  SmoothingConfig{smoothing_alpha, 2}.validate();
  train.validate();
  calibration.validate();
  require(split.folds >= 2, "config: split.folds must be at least 2");
  require(split.test_fraction > 0 && split.test_fraction < 1,
          "config: split.test_fraction must lie in (0, 1)");
  require(split.val_fraction > 0 && split.val_fraction < 1,
          "config: split.val_fraction must lie in (0, 1)");
  require(model.vocab_size >= 2 && model.dim >= 1 && model.feature_proj_dim >= 1 &&
              model.hidden_dim >= 1,
          "config: model dimensions must be positive");
  require(model.dropout >= 0 && model.dropout < 1, "config: model.dropout must lie in [0, 1)");
}

Matrix extract_features(const Corpus& corpus, FeatureSet set, const std::string& dict_path,
                        const std::string& topics_path, const std::string& features_path) {
  switch (set) {
    case FeatureSet::Lexicon:
    case FeatureSet::Dictionary:
      return lexicon_feature_matrix(corpus.texts(), LexiconDictionary::load(dict_path));
    case FeatureSet::Goss:
      return goss(load_topic_matrix(topics_path, corpus.ids()));
    case FeatureSet::Dense:
      return load_dense_features(features_path, corpus.ids());
    case FeatureSet::None:
      return Matrix::Zero(static_cast<Index>(corpus.records.size()), 1);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Running

namespace {

ojson metrics_json(const MetricReport& m) {
  ojson j;
  j["accuracy"] = m.accuracy;
  if (m.precision) j["precision"] = *m.precision;
  if (m.recall) j["recall"] = *m.recall;
  if (m.f1) j["f1"] = *m.f1;
  j["weighted_precision"] = m.weighted_precision;
  j["weighted_recall"] = m.weighted_recall;
  j["weighted_f1"] = m.weighted_f1;
  return j;
}

std::vector<Sample> samples_for(const std::vector<std::size_t>& idx,
                                const std::vector<std::vector<std::size_t>>& tokens,
                                const Matrix& features, const std::vector<int>& labels) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx)
    out.push_back(Sample{tokens[i], features.row(static_cast<Index>(i)).transpose(), labels[i]});
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& timestamp) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.corpus_path);
  const Matrix features = extract_features(corpus, cfg.feature_set, cfg.dict_path,
                                           cfg.topics_path, cfg.features_path);
  require(features.allFinite(), "extracted features contain non-finite values");
  const auto labels = corpus.labels();
  const int K = corpus.num_classes;

  ModelDims dims = cfg.model;
  dims.feature_raw_dim = features.cols();
  dims.num_classes = K;
  dims.beta = cfg.beta;
  const SmoothingConfig smoothing{cfg.smoothing_alpha, K};

  std::vector<std::vector<std::size_t>> tokens;
  tokens.reserve(corpus.records.size());
  for (const auto& r : corpus.records) tokens.push_back(token_ids(r.text, dims.vocab_size));

  const auto parts = stratified_split(corpus, cfg.split);

  ExperimentResult result{{}, PredictionSet(Matrix::Constant(1, 2, 0.5), {0}), {}, {}};
  std::vector<std::size_t> pooled_idx;
  Matrix pooled_probs(static_cast<Index>(corpus.records.size()), K);
  Index pooled_rows = 0;

  ojson folds = ojson::array();
  double sum_ece = 0, sum_ace = 0;
  ojson metric_sums = ojson::object();
  for (std::size_t f = 0; f < parts.size(); ++f) {
    const Partition& part = parts[f];
    try {
      FoldOutcome out;
      out.fold = static_cast<int>(f);
      out.partition = part;
      TrainConfig tc = cfg.train;
      tc.seed = mix_seed(cfg.train.seed, f);
      out.training = train(samples_for(part.train, tokens, features, labels),
                           samples_for(part.val, tokens, features, labels), dims, tc,
                           smoothing);
      const auto test = samples_for(part.test, tokens, features, labels);
      const Matrix probs = predict(out.training.params, test);
      std::vector<int> truth;
      std::vector<std::string> ids;
      for (auto i : part.test) {
        truth.push_back(labels[i]);
        ids.push_back(corpus.records[i].id);
      }
      const PredictionSet preds(probs, truth, ids);
      out.metrics = classification_metrics(truth, preds.predicted_labels(), K);
      out.ece = ece(preds, cfg.calibration).ece;
      out.ace = ace(preds, cfg.calibration).ace;

      pooled_probs.middleRows(pooled_rows, probs.rows()) = probs;
      pooled_rows += probs.rows();
      pooled_idx.insert(pooled_idx.end(), part.test.begin(), part.test.end());

      ojson fj;
      fj["fold"] = out.fold;
      fj["n_train"] = part.train.size();
      fj["n_val"] = part.val.size();
      fj["n_test"] = part.test.size();
      fj["selected_epoch"] = out.training.selected_epoch;
      ojson hist = ojson::array();
      for (const auto& h : out.training.history)
        hist.push_back({{"epoch", h.epoch},
                        {"learning_rate", h.learning_rate},
                        {"train_loss", h.train_loss},
                        {"val_loss", h.val_loss}});
      fj["history"] = hist;
      fj["metrics"] = metrics_json(out.metrics);
      fj["calibration"] = {{"ece", out.ece},
                           {"ace", out.ace},
                           {"M", cfg.calibration.bins},
                           {"R", cfg.calibration.ranges},
                           {"N", part.test.size()},
                           {"K", K}};
      folds.push_back(fj);

      const ojson mj = metrics_json(out.metrics);
      for (const auto& [k, v] : mj.items())
        metric_sums[k] = metric_sums.value(k, 0.0) + v.get<double>();
      sum_ece += out.ece;
      sum_ace += out.ace;
      result.models.push_back(out.training.params);
      result.folds.push_back(std::move(out));
    } catch (const ValidationError& e) {
      throw ValidationError("fold " + std::to_string(f) + ": " + e.what());
    } catch (const RuntimeError& e) {
      throw RuntimeError("fold " + std::to_string(f) + ": " + e.what());
    }
  }

  std::vector<int> pooled_truth;
  std::vector<std::string> pooled_ids;
  for (auto i : pooled_idx) {
    pooled_truth.push_back(labels[i]);
    pooled_ids.push_back(corpus.records[i].id);
  }
  result.predictions =
      PredictionSet(pooled_probs.topRows(pooled_rows), pooled_truth, pooled_ids);

  const double nf = static_cast<double>(parts.size());
  ojson mean;
  for (const auto& [k, v] : metric_sums.items()) mean[k] = v.get<double>() / nf;
  mean["ece"] = sum_ece / nf;
  mean["ace"] = sum_ace / nf;

  ojson report;
  report["schema"] = "calfuse-experiment-report";
  report["version"] = 1;
  report["timestamp"] = timestamp;
  report["config"] = ojson::parse(cfg.to_json());
  ojson mapping = ojson::array();
  for (std::size_t k = 0; k < corpus.label_names.size(); ++k)
    mapping.push_back({{"label", corpus.label_names[k]}, {"index", k}});
  report["corpus"] = {{"path", cfg.corpus_path},
                      {"n", corpus.records.size()},
                      {"K", K},
                      {"label_mapping", mapping}};
  report["feature_dim"] = features.cols();
  report["split_mode"] = to_string(cfg.split.mode);
  report["folds"] = folds;
  report["mean"] = mean;
  result.report_json = report.dump(2);
  return result;
}

CorrelationReport run_linguistic_analysis(const Corpus& corpus, const LexiconDictionary& dict,
                                          double q) {
  require(corpus.num_classes == 2,
          "linguistic analysis needs a binary corpus, found K = " +
              std::to_string(corpus.num_classes));
  const Matrix raw = lexicon_feature_matrix(corpus.texts(), dict);
  return linguistic_analysis(normalize_sum_to_one(raw), dict.category_names(), corpus.labels(),
                             q);
}

// ---------------------------------------------------------------------------
// Synthetic data

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  require(spec.samples >= 2 && spec.num_classes >= 2 && spec.feature_dim >= 1 &&
              spec.tokens_per_text >= 1 && spec.noise_vocab >= 1,
          "synthetic spec sizes must be positive");
  require(spec.label_noise >= 0 && spec.label_noise < 1, "label_noise must lie in [0, 1)");
  Rng rng(mix_seed(spec.seed, 0x5A17));

  // One +/-1 code per class; regenerate until the codes are distinct.
  std::vector<Vector> codes;
  while (static_cast<int>(codes.size()) < spec.num_classes) {
    Vector c(spec.feature_dim);
    for (Index j = 0; j < spec.feature_dim; ++j) c(j) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    bool fresh = true;
    for (const auto& o : codes) fresh = fresh && o != c;
    if (fresh) codes.push_back(c);
  }

  SyntheticData data;
  data.corpus.source = "synthetic";
  data.corpus.num_classes = spec.num_classes;
  for (int k = 0; k < spec.num_classes; ++k) data.corpus.label_names.push_back(std::to_string(k));
  data.features.values.resize(static_cast<Index>(spec.samples), spec.feature_dim);
  const auto K = static_cast<std::uint64_t>(spec.num_classes);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    // Balanced clean classes.
    const int clean = static_cast<int>(i % K);
    int observed = clean;
    if (rng.uniform() < spec.label_noise)
      observed = static_cast<int>((static_cast<std::uint64_t>(clean) + 1 + rng.below(K - 1)) % K);
    std::string text;
    for (std::size_t t = 0; t < spec.tokens_per_text; ++t) {
      if (t) text += ' ';
      text += "w" + std::to_string(rng.below(spec.noise_vocab));
    }
    Record r;
    r.id = "s" + std::to_string(i);
    r.text = std::move(text);
    r.label = observed;
    data.corpus.records.push_back(std::move(r));
    data.clean_labels.push_back(clean);
    data.features.ids.push_back("s" + std::to_string(i));
    for (Index j = 0; j < spec.feature_dim; ++j)
      data.features.values(static_cast<Index>(i), j) =
          codes[static_cast<std::size_t>(clean)](j) + spec.feature_noise * rng.normal();
  }
  return data;
}

}  // namespace calfuse
