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

#include <string>
#include <string_view>
#include <vector>

#include "calfuse/fusion.hpp"

namespace calfuse {

/// Per-sample class probabilities with true labels. Predicted labels and
/// confidences are derived (argmax, lowest index on ties).
class PredictionSet {
 public:
  /// Throws ValidationError unless N >= 1, K >= 2, every row lies on the
  /// simplex within 1e-9 and every label is in [0, K). Empty `ids` are
  /// replaced by row numbers.
  PredictionSet(Matrix probs, std::vector<int> true_labels,
                std::vector<std::string> ids = {});

  const Matrix& probs() const { return probs_; }
  const std::vector<int>& true_labels() const { return true_labels_; }
  const std::vector<int>& predicted_labels() const { return predicted_; }
  const Vector& confidences() const { return confidences_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return true_labels_.size(); }
  int num_classes() const { return static_cast<int>(probs_.cols()); }
  bool correct(std::size_t i) const { return predicted_[i] == true_labels_[i]; }

 private:
  Matrix probs_;
  std::vector<int> true_labels_;
  std::vector<int> predicted_;
  Vector confidences_;
  std::vector<std::string> ids_;
};

struct CalibrationConfig {
  int bins = 10;    // M, equal-width confidence bins
  int ranges = 10;  // R, equal-count ranges per class

  void validate() const;
};

struct BinStat {
  double lo = 0.0;  // interval (lo, hi]
  double hi = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;    // 0 for empty bins
  double confidence = 0.0;  // 0 for empty bins
};

struct EceResult {
  double ece = 0.0;
  std::vector<BinStat> bins;
};

/// Expected calibration error over M bins ((m-1)/M, m/M]. Empty bins
/// contribute nothing.
EceResult ece(const PredictionSet& preds, const CalibrationConfig& cfg);

/// 0-based bin of a confidence value for M equal-width bins.
int confidence_bin(double confidence, int bins);

struct RangeStat {
  int label = 0;
  int range = 0;  // 0-based
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

struct AceResult {
  double ace = 0.0;
  std::vector<RangeStat> ranges;  // K * R entries, class-major
};

/// Adaptive calibration error: per class, probabilities sorted ascending
/// (ties by sample index) and split into R contiguous groups whose sizes
/// differ by at most one (the last N mod R groups get the extra element).
AceResult ace(const PredictionSet& preds, const CalibrationConfig& cfg);

/// Rows (bin_lo, bin_hi, count, accuracy, confidence) for reliability plots.
std::vector<BinStat> reliability_table(const PredictionSet& preds,
                                       const CalibrationConfig& cfg);
std::string reliability_table_csv(const std::vector<BinStat>& rows);

/// {"ece", "ace", "M", "R", "N", "K"} as a JSON object string.
std::string calibration_summary_json(const PredictionSet& preds,
                                     const CalibrationConfig& cfg);

/// CSV with header `id,true_label,p0,...,p{K-1}`.
PredictionSet parse_prediction_csv(std::string_view text,
                                   const std::string& source = "<memory>");
PredictionSet read_prediction_csv(const std::string& path);
std::string prediction_csv(const PredictionSet& preds);

}  // namespace calfuse
