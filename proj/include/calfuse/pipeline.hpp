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
#include <string_view>
#include <vector>

#include "calfuse/analysis.hpp"
#include "calfuse/calibration.hpp"
#include "calfuse/features.hpp"
#include "calfuse/model.hpp"

namespace calfuse {

// ---------------------------------------------------------------------------
// Corpus

struct Record {
  std::string id;
  std::string text;
  int label = 0;
  std::string split;  // optional "train"/"test" column, empty when absent
};

struct Corpus {
  std::vector<Record> records;
  int num_classes = 0;
  /// label_names[k] is the raw label mapped to k.
  std::vector<std::string> label_names;
  std::string source;

  std::vector<std::string> ids() const;
  std::vector<std::string> texts() const;
  std::vector<int> labels() const;
};

/// CSV with `text` and `label` columns, optional `id` (row index otherwise)
/// and optional `split`. Integer labels keep their numeric order; any other
/// labels are numbered in order of first appearance.
Corpus parse_corpus(std::string_view csv_text, const std::string& source = "<memory>");
Corpus load_corpus(const std::string& path);
std::string corpus_csv(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { FixedTest, Holdout, StratifiedKFold };
const char* to_string(SplitMode m);
SplitMode split_mode_from_string(const std::string& s);

struct SplitPlan {
  SplitMode mode = SplitMode::Holdout;
  std::uint64_t seed = 0;
  int folds = 5;
  double test_fraction = 0.2;
  double val_fraction = 0.1;
};

/// Indices into the corpus.
struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Fold of every sample: within each class, indices are shuffled by seed and
/// dealt round-robin, continuing the deal position from class to class.
std::vector<int> stratified_folds(const std::vector<int>& labels, int num_classes,
                                  int folds, std::uint64_t seed);

/// Moves a stratified `fraction` of `pool` (at least one per class) into the
/// returned vector; `pool` keeps the rest. Order within both is ascending.
std::vector<std::size_t> carve_stratified(std::vector<std::size_t>& pool,
                                          const std::vector<int>& labels,
                                          int num_classes, double fraction,
                                          std::uint64_t seed);

/// One partition for fixed-test and holdout, one per fold for k-fold.
std::vector<Partition> stratified_split(const Corpus& corpus, const SplitPlan& plan);

// ---------------------------------------------------------------------------
// Experiments

enum class FeatureSet { Lexicon, Dictionary, Goss, Dense, None };
const char* to_string(FeatureSet f);
FeatureSet feature_set_from_string(const std::string& s);

struct ExperimentConfig {
  std::string corpus_path;
  FeatureSet feature_set = FeatureSet::None;
  std::string dict_path;
  std::string topics_path;
  std::string features_path;
  double smoothing_alpha = 0.001;
  double beta = 1e-4;
  ModelDims model;  // feature_raw_dim and num_classes are filled from the data
  TrainConfig train;
  CalibrationConfig calibration;
  SplitPlan split;
  std::string out_dir;

  /// Relative paths are resolved against base_dir. Unknown keys are rejected.
  static ExperimentConfig from_json(std::string_view json, const std::string& base_dir = "");
  std::string to_json() const;
  void validate() const;
};

/// Per-text raw feature matrix for a feature set (n x f); `none` gives a
/// single zero column.
Matrix extract_features(const Corpus& corpus, FeatureSet set,
                        const std::string& dict_path, const std::string& topics_path,
                        const std::string& features_path);

struct FoldOutcome {
  int fold = 0;
  Partition partition;
  TrainResult training;
  MetricReport metrics;
  double ece = 0.0;
  double ace = 0.0;
};

struct ExperimentResult {
  std::vector<FoldOutcome> folds;
  PredictionSet predictions;  // test predictions pooled over folds
  std::string report_json;
  std::vector<ToyModelParams> models;  // one per fold
};

/// Trains and evaluates per the split plan. `timestamp` fills the report's
/// single timestamp field; every other byte is a function of the config.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& timestamp = "");

/// Dictionary features, sum-to-one normalization, point-biserial and BH.
/// Requires a binary corpus.
CorrelationReport run_linguistic_analysis(const Corpus& corpus,
                                          const LexiconDictionary& dict, double q);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t samples = 1000;
  int num_classes = 2;
  Index feature_dim = 8;
  double label_noise = 0.05;  // probability the observed label is flipped
  std::size_t tokens_per_text = 12;
  std::size_t noise_vocab = 2000;
  double feature_noise = 0.5;  // std of Gaussian noise around the class code
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Corpus corpus;
  FeatureTable features;
  std::vector<int> clean_labels;
};

/// Texts are random tokens carrying no label information; the feature vector
/// is a noisy +/-1 code of the clean class, and observed labels are flipped
/// to a different class with probability label_noise.
SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace calfuse
