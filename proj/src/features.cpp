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

#include "calfuse/features.hpp"

#include <algorithm>
#include <cmath>

#include "calfuse/csv.hpp"
#include "calfuse/error.hpp"
#include "calfuse/text.hpp"

namespace calfuse {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

void LexiconDictionary::add(std::string_view category, std::string_view pattern) {
  const auto name = std::string(strip(category));
  const auto pat = lower(strip(pattern));
  require(!name.empty(), "dictionary category name is empty");
  require(!pat.empty(), "dictionary pattern for '" + name + "' is empty");
  const auto star = pat.find('*');
  require(star == std::string::npos || star == pat.size() - 1,
          "pattern '" + pat + "': '*' is only allowed at the end");
  require(pat != "*", "pattern '*' would match every token");

  auto it = index_.find(name);
  if (it == index_.end()) {
    it = index_.emplace(name, categories_.size()).first;
    categories_.push_back(Category{name, {}, {}});
  }
  Category& cat = categories_[it->second];
  if (star == std::string::npos) {
    cat.words.insert(pat);
  } else {
    cat.stems.push_back(pat.substr(0, star));
  }
}

LexiconDictionary LexiconDictionary::parse(std::string_view text,
                                           const std::string& source) {
  LexiconDictionary dict;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    const auto body = strip(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos)
      throw ValidationError(source + " line " + std::to_string(line_no) +
                            ": expected 'category<TAB>pattern'");
    try {
      dict.add(body.substr(0, tab), body.substr(tab + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(source + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(dict.size() > 0, source + ": dictionary has no entries");
  return dict;
}

LexiconDictionary LexiconDictionary::load(const std::string& path) {
  return parse(read_text_file(path), path);
}

std::vector<std::string> LexiconDictionary::category_names() const {
  std::vector<std::string> names;
  names.reserve(categories_.size());
  for (const auto& c : categories_) names.push_back(c.name);
  return names;
}

bool LexiconDictionary::matches(std::size_t category, std::string_view token) const {
  const Category& c = categories_.at(category);
  if (c.words.count(std::string(token))) return true;
  for (const auto& stem : c.stems)
    if (token.size() >= stem.size() && token.compare(0, stem.size(), stem) == 0)
      return true;
  return false;
}

Vector lexicon_features(std::string_view text, const LexiconDictionary& dict) {
  const auto tokens = tokenize(text);
  Vector out = Vector::Zero(static_cast<Index>(dict.size()));
  if (tokens.empty()) return out;
  for (const auto& tok : tokens)
    for (std::size_t c = 0; c < dict.size(); ++c)
      if (dict.matches(c, tok)) out(static_cast<Index>(c)) += 1.0;
  return out / static_cast<double>(tokens.size());
}

Matrix lexicon_feature_matrix(const std::vector<std::string>& texts,
                              const LexiconDictionary& dict) {
  Matrix m(static_cast<Index>(texts.size()), static_cast<Index>(dict.size()));
  for (std::size_t i = 0; i < texts.size(); ++i)
    m.row(static_cast<Index>(i)) = lexicon_features(texts[i], dict).transpose();
  return m;
}

TopicMatrix::TopicMatrix(Matrix data) : data_(std::move(data)) {
  require(data_.rows() >= 1 && data_.cols() >= 1, "topic matrix is empty");
  require(data_.allFinite(), "topic matrix contains non-finite values");
  for (Index i = 0; i < data_.rows(); ++i) {
    require((data_.row(i).array() >= 0.0).all() && (data_.row(i).array() <= 1.0).all(),
            "topic matrix row " + std::to_string(i + 1) + " has entries outside [0, 1]");
    require(std::abs(data_.row(i).sum() - 1.0) <= 1e-6,
            "topic matrix row " + std::to_string(i + 1) + " does not sum to 1");
  }
}

Matrix goss_columns(const Matrix& x) {
  require(x.rows() >= 2, "GOSS needs at least two texts");
  require(x.allFinite(), "GOSS input contains non-finite values");
  Matrix out(x.rows(), x.cols());
  for (Index k = 0; k < x.cols(); ++k) {
    const double mean = x.col(k).mean();
    const Vector dev = x.col(k).array() - mean;
    const double norm = dev.norm();
    if (norm > 0.0) {
      out.col(k) = dev / norm;
    } else {
      out.col(k).setZero();
    }
  }
  return out;
}

Matrix goss(const TopicMatrix& topics) { return goss_columns(topics.data()); }

Matrix normalize_sum_to_one(const Matrix& features) {
  require(features.allFinite(), "features contain non-finite values");
  require((features.array() >= 0.0).all(),
          "sum-to-one normalization needs non-negative features");
  Matrix out = features;
  for (Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
  }
  return out;
}

FeatureTable parse_feature_csv(std::string_view text, char prefix,
                               const std::string& source) {
  const CsvTable csv = parse_csv(text, source);
  require(!csv.header.empty() && csv.header[0] == "id",
          source + ": first column must be 'id'");
  const std::size_t dims = csv.header.size() - 1;
  require(dims >= 1, source + ": no feature columns");
  for (std::size_t j = 0; j < dims; ++j) {
    const std::string expect = std::string(1, prefix) + std::to_string(j);
    require(csv.header[j + 1] == expect,
            source + ": header column " + std::to_string(j + 2) + " should be '" +
                expect + "', found '" + csv.header[j + 1] + "'");
  }
  require(!csv.rows.empty(), source + ": no data rows");

  FeatureTable t;
  t.values.resize(static_cast<Index>(csv.rows.size()), static_cast<Index>(dims));
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    require(!r[0].empty(), csv.where(i) + ": empty id");
    require(seen.insert(r[0]).second, csv.where(i) + ": duplicate id '" + r[0] + "'");
    t.ids.push_back(r[0]);
    for (std::size_t j = 0; j < dims; ++j) {
      const double v = parse_double(r[j + 1], csv.where(i));
      require(std::isfinite(v), csv.where(i) + ": non-finite value");
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = v;
    }
  }
  return t;
}

FeatureTable read_feature_csv(const std::string& path, char prefix) {
  return parse_feature_csv(read_text_file(path), prefix, path);
}

std::string feature_csv(const FeatureTable& table, char prefix) {
  require_dim("feature rows vs ids", static_cast<long>(table.ids.size()),
              table.values.rows());
  std::vector<std::string> header{"id"};
  for (Index j = 0; j < table.values.cols(); ++j)
    header.push_back(std::string(1, prefix) + std::to_string(j));
  std::string out = csv_row(header);
  std::vector<std::string> fields;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    fields.assign(1, table.ids[i]);
    for (Index j = 0; j < table.values.cols(); ++j)
      fields.push_back(format_double(table.values(static_cast<Index>(i), j)));
    out += csv_row(fields);
  }
  return out;
}

Matrix align_features(const FeatureTable& table, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, Index> where;
  for (std::size_t i = 0; i < table.ids.size(); ++i)
    where.emplace(table.ids[i], static_cast<Index>(i));
  Matrix out(static_cast<Index>(ids.size()), table.values.cols());
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = where.find(ids[i]);
    if (it == where.end()) {
      missing.push_back(ids[i]);
      continue;
    }
    out.row(static_cast<Index>(i)) = table.values.row(it->second);
  }
  if (!missing.empty()) {
    std::string msg = "feature file lacks " + std::to_string(missing.size()) + " id(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }
  return out;
}

Matrix load_dense_features(const std::string& path, const std::vector<std::string>& ids) {
  return align_features(read_feature_csv(path, 'f'), ids);
}

TopicMatrix load_topic_matrix(const std::string& path, const std::vector<std::string>& ids) {
  return TopicMatrix(align_features(read_feature_csv(path, 't'), ids));
}

}  // namespace calfuse
