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
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "calfuse/fusion.hpp"

namespace calfuse {

/// Category -> word patterns. A pattern ending in '*' matches every token
/// with that prefix; anything else must match the whole token. Categories are
/// not exclusive: a token counts toward every category it matches.
class LexiconDictionary {
 public:
  /// Adds a pattern, creating the category (in first-seen order) if needed.
  void add(std::string_view category, std::string_view pattern);

  /// Tab-separated `category<TAB>pattern` lines; '#' starts a comment line.
  static LexiconDictionary parse(std::string_view text,
                                 const std::string& source = "<memory>");
  static LexiconDictionary load(const std::string& path);

  std::size_t size() const { return categories_.size(); }
  std::vector<std::string> category_names() const;
  bool matches(std::size_t category, std::string_view token) const;

 private:
  struct Category {
    std::string name;
    std::unordered_set<std::string> words;
    std::vector<std::string> stems;
  };
  std::vector<Category> categories_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-category share of the text's tokens; zeros for a text with no tokens.
Vector lexicon_features(std::string_view text, const LexiconDictionary& dict);
Matrix lexicon_feature_matrix(const std::vector<std::string>& texts,
                              const LexiconDictionary& dict);

/// Row-stochastic n x T matrix of per-text topic probabilities.
class TopicMatrix {
 public:
  /// Rows must sum to 1 within 1e-6 and entries lie in [0, 1].
  explicit TopicMatrix(Matrix data);
  const Matrix& data() const { return data_; }
  Index texts() const { return data_.rows(); }
  Index topics() const { return data_.cols(); }

 private:
  Matrix data_;
};

/// Global outlier standard score per column: (x - mean) / ||x - mean||_2.
/// Constant columns map to zeros. Requires at least two rows.
Matrix goss(const TopicMatrix& topics);
/// Same transform on an arbitrary real matrix.
Matrix goss_columns(const Matrix& values);

/// Each row divided by its sum; all-zero rows are left as zeros.
Matrix normalize_sum_to_one(const Matrix& features);

/// Per-text feature rows keyed by string id, as stored in CSV files with a
/// header `id,<prefix>0,<prefix>1,...`.
struct FeatureTable {
  std::vector<std::string> ids;
  Matrix values;
};

FeatureTable parse_feature_csv(std::string_view text, char column_prefix,
                               const std::string& source = "<memory>");
FeatureTable read_feature_csv(const std::string& path, char column_prefix = 'f');
std::string feature_csv(const FeatureTable& table, char column_prefix = 'f');

/// Rows reordered to `ids`; every missing id is named in the error.
Matrix align_features(const FeatureTable& table, const std::vector<std::string>& ids);

/// Dense externally computed vectors (`id,f0,...`) aligned to corpus order.
Matrix load_dense_features(const std::string& path, const std::vector<std::string>& ids);

/// Topic-probability file (`id,t0,...`) aligned to corpus order.
TopicMatrix load_topic_matrix(const std::string& path, const std::vector<std::string>& ids);

}  // namespace calfuse
