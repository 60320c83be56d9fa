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

#include "calfuse/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "calfuse/csv.hpp"
#include "calfuse/error.hpp"
#include "json.hpp"

namespace calfuse {

PredictionSet::PredictionSet(Matrix probs, std::vector<int> true_labels,
                             std::vector<std::string> ids)
    : probs_(std::move(probs)), true_labels_(std::move(true_labels)), ids_(std::move(ids)) {
  const auto n = static_cast<std::size_t>(probs_.rows());
  require(n >= 1, "prediction set is empty");
  require(probs_.cols() >= 2, "prediction set needs at least two classes");
  require_dim("true label count (N)", static_cast<long>(n),
              static_cast<long>(true_labels_.size()));
  if (ids_.empty()) {
    for (std::size_t i = 0; i < n; ++i) ids_.push_back(std::to_string(i));
  }
  require_dim("id count (N)", static_cast<long>(n), static_cast<long>(ids_.size()));
  require(probs_.allFinite(), "probabilities contain non-finite values");

  predicted_.resize(n);
  confidences_.resize(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = probs_.row(static_cast<Index>(i));
    require((r.array() >= 0.0).all() && (r.array() <= 1.0).all(),
            "sample " + ids_[i] + ": probabilities outside [0, 1]");
    require(std::abs(r.sum() - 1.0) <= 1e-9,
            "sample " + ids_[i] + ": probabilities do not sum to 1 within 1e-9");
    require(true_labels_[i] >= 0 && true_labels_[i] < probs_.cols(),
            "sample " + ids_[i] + ": true label out of range");
    Index best = 0;
    for (Index k = 1; k < r.size(); ++k)
      if (r(k) > r(best)) best = k;
    predicted_[i] = static_cast<int>(best);
    confidences_(static_cast<Index>(i)) = r(best);
  }
}

void CalibrationConfig::validate() const {
  require(bins >= 1, "number of bins M must be at least 1");
  require(ranges >= 1, "number of ranges R must be at least 1");
}

int confidence_bin(double c, int bins) {
  const double m_total = static_cast<double>(bins);
  int m = static_cast<int>(std::ceil(c * m_total));
  m = std::clamp(m, 1, bins);
  // Edges are m / M evaluated in double; correct any rounding in c * M.
  while (m > 1 && c <= static_cast<double>(m - 1) / m_total) --m;
  while (m < bins && c > static_cast<double>(m) / m_total) ++m;
  return m - 1;
}

EceResult ece(const PredictionSet& preds, const CalibrationConfig& cfg) {
  cfg.validate();
  const int M = cfg.bins;
  std::vector<double> conf_sum(static_cast<std::size_t>(M), 0.0);
  std::vector<double> correct(static_cast<std::size_t>(M), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(M), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double c = preds.confidences()(static_cast<Index>(i));
    const auto b = static_cast<std::size_t>(confidence_bin(c, M));
    ++count[b];
    conf_sum[b] += c;
    if (preds.correct(i)) correct[b] += 1.0;
  }
  EceResult out;
  const double n = static_cast<double>(preds.size());
  for (int m = 0; m < M; ++m) {
    const auto b = static_cast<std::size_t>(m);
    BinStat s;
    s.lo = static_cast<double>(m) / M;
    s.hi = static_cast<double>(m + 1) / M;
    s.count = count[b];
    if (count[b] > 0) {
      s.accuracy = correct[b] / static_cast<double>(count[b]);
      s.confidence = conf_sum[b] / static_cast<double>(count[b]);
      out.ece += static_cast<double>(count[b]) / n * std::abs(s.accuracy - s.confidence);
    }
    out.bins.push_back(s);
  }
  return out;
}

AceResult ace(const PredictionSet& preds, const CalibrationConfig& cfg) {
  cfg.validate();
  const std::size_t n = preds.size();
  const auto R = static_cast<std::size_t>(cfg.ranges);
  require(n >= R, "ACE needs at least R = " + std::to_string(R) + " samples, got " +
                      std::to_string(n));
  const int K = preds.num_classes();
  const std::size_t base = n / R;
  const std::size_t extra = n % R;

  AceResult out;
  std::vector<std::size_t> order(n);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto col = preds.probs().col(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return col(static_cast<Index>(a)) < col(static_cast<Index>(b));
    });
    std::size_t pos = 0;
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t size = base + (r >= R - extra ? 1 : 0);
      double conf = 0.0;
      double hits = 0.0;
      for (std::size_t j = pos; j < pos + size; ++j) {
        conf += col(static_cast<Index>(order[j]));
        if (preds.true_labels()[order[j]] == k) hits += 1.0;
      }
      pos += size;
      RangeStat s;
      s.label = k;
      s.range = static_cast<int>(r);
      s.count = size;
      s.accuracy = hits / static_cast<double>(size);
      s.confidence = conf / static_cast<double>(size);
      total += std::abs(s.accuracy - s.confidence);
      out.ranges.push_back(s);
    }
  }
  out.ace = total / static_cast<double>(static_cast<std::size_t>(K) * R);
  return out;
}

std::vector<BinStat> reliability_table(const PredictionSet& preds,
                                       const CalibrationConfig& cfg) {
  return ece(preds, cfg).bins;
}

std::string reliability_table_csv(const std::vector<BinStat>& rows) {
  std::string out = csv_row({"bin_lo", "bin_hi", "count", "accuracy", "confidence"});
  for (const auto& r : rows)
    out += csv_row({format_double(r.lo), format_double(r.hi), std::to_string(r.count),
                    format_double(r.accuracy), format_double(r.confidence)});
  return out;
}

std::string calibration_summary_json(const PredictionSet& preds,
                                     const CalibrationConfig& cfg) {
  nlohmann::ordered_json j;
  j["ece"] = ece(preds, cfg).ece;
  j["ace"] = ace(preds, cfg).ace;
  j["M"] = cfg.bins;
  j["R"] = cfg.ranges;
  j["N"] = preds.size();
  j["K"] = preds.num_classes();
  return j.dump(2);
}

PredictionSet parse_prediction_csv(std::string_view text, const std::string& source) {
  const CsvTable csv = parse_csv(text, source);
  const auto& h = csv.header;
  require(h.size() >= 4 && h[0] == "id" && h[1] == "true_label",
          source + ": header must be id,true_label,p0,...,p{K-1} with K >= 2");
  const std::size_t K = h.size() - 2;
  for (std::size_t k = 0; k < K; ++k)
    require(h[k + 2] == "p" + std::to_string(k),
            source + ": header column " + std::to_string(k + 3) + " should be 'p" +
                std::to_string(k) + "'");
  require(!csv.rows.empty(), source + ": no data rows");

  Matrix probs(static_cast<Index>(csv.rows.size()), static_cast<Index>(K));
  std::vector<int> labels;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    ids.push_back(r[0]);
    labels.push_back(static_cast<int>(parse_long(r[1], csv.where(i))));
    for (std::size_t k = 0; k < K; ++k)
      probs(static_cast<Index>(i), static_cast<Index>(k)) = parse_double(r[k + 2], csv.where(i));
  }
  return PredictionSet(std::move(probs), std::move(labels), std::move(ids));
}

PredictionSet read_prediction_csv(const std::string& path) {
  return parse_prediction_csv(read_text_file(path), path);
}

std::string prediction_csv(const PredictionSet& preds) {
  std::vector<std::string> header{"id", "true_label"};
  for (int k = 0; k < preds.num_classes(); ++k) header.push_back("p" + std::to_string(k));
  std::string out = csv_row(header);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::vector<std::string> f{preds.ids()[i], std::to_string(preds.true_labels()[i])};
    for (int k = 0; k < preds.num_classes(); ++k)
      f.push_back(format_double(preds.probs()(static_cast<Index>(i), k)));
    out += csv_row(f);
  }
  return out;
}

}  // namespace calfuse
