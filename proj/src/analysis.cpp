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

#include "calfuse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "calfuse/csv.hpp"
#include "calfuse/error.hpp"

namespace calfuse {

MetricReport classification_metrics(const std::vector<int>& truth,
                                    const std::vector<int>& pred, int num_classes) {
  require(num_classes >= 2, "metrics need at least two classes");
  require_dim("predicted label count", static_cast<long>(truth.size()),
              static_cast<long>(pred.size()));
  require(!truth.empty(), "metrics need at least one sample");
  const auto K = static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> tp(K, 0), predicted(K, 0), support(K, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < num_classes && pred[i] >= 0 &&
                pred[i] < num_classes,
            "label out of range at sample " + std::to_string(i));
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(pred[i]);
    ++support[t];
    ++predicted[p];
    if (t == p) {
      ++tp[t];
      ++hits;
    }
  }

  MetricReport rep;
  rep.num_classes = num_classes;
  rep.samples = truth.size();
  const double n = static_cast<double>(truth.size());
  rep.accuracy = static_cast<double>(hits) / n;
  for (std::size_t c = 0; c < K; ++c) {
    ClassStats s;
    s.support = support[c];
    s.precision = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    s.recall = support[c] ? static_cast<double>(tp[c]) / static_cast<double>(support[c]) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    const double w = static_cast<double>(support[c]) / n;
    rep.weighted_precision += w * s.precision;
    rep.weighted_recall += w * s.recall;
    rep.weighted_f1 += w * s.f1;
    rep.per_class.push_back(s);
  }
  if (num_classes == 2) {
    rep.precision = rep.per_class[1].precision;
    rep.recall = rep.per_class[1].recall;
    rep.f1 = rep.per_class[1].f1;
  }
  return rep;
}

namespace {

// Continued fraction for I_x(a, b); converges fast for x < (a+1)/(a+b+2).
double beta_continued_fraction(double x, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw RuntimeError("incomplete beta continued fraction did not converge");
}

// I_x(a, b) given both x and 1 - x, so callers can pass an accurate
// complement.
double incomplete_beta_split(double x, double one_minus_x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (one_minus_x <= 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log(one_minus_x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * beta_continued_fraction(x, a, b) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(one_minus_x, b, a) / b;
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
  require(a > 0 && b > 0, "incomplete beta needs positive shape parameters");
  require(x >= 0.0 && x <= 1.0, "incomplete beta argument must lie in [0, 1]");
  return incomplete_beta_split(x, 1.0 - x, a, b);
}

double student_t_two_sided(double t, double dof) {
  require(dof > 0, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double x = dof / (dof + t2);
  const double one_minus_x = t2 / (dof + t2);
  return std::clamp(incomplete_beta_split(x, one_minus_x, dof / 2.0, 0.5), 0.0, 1.0);
}

PointBiserial point_biserial(const std::vector<double>& values,
                             const std::vector<int>& labels) {
  require_dim("label count", static_cast<long>(values.size()),
              static_cast<long>(labels.size()));
  const std::size_t n = values.size();
  if (n < 3) throw ValidationError("correlation undefined: need at least 3 samples");
  double sum1 = 0, sum0 = 0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(values[i]), "correlation input contains non-finite values");
    if (labels[i] == 1) {
      sum1 += values[i];
      ++n1;
    } else if (labels[i] == 0) {
      sum0 += values[i];
      ++n0;
    } else {
      throw ValidationError("point-biserial labels must be 0 or 1");
    }
  }
  if (n1 == 0 || n0 == 0)
    throw ValidationError("correlation undefined: only one label group present");

  const double dn = static_cast<double>(n);
  const double mean = (sum1 + sum0) / dn;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / dn);
  if (!(sd > 0.0)) throw ValidationError("correlation undefined: constant values");

  const double m1 = sum1 / static_cast<double>(n1);
  const double m0 = sum0 / static_cast<double>(n0);
  PointBiserial out;
  out.r = std::clamp((m1 - m0) / sd *
                         std::sqrt(static_cast<double>(n1) * static_cast<double>(n0) / (dn * dn)),
                     -1.0, 1.0);
  if (std::abs(out.r) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double dof = dn - 2.0;
    const double t = out.r * std::sqrt(dof) / std::sqrt(1.0 - out.r * out.r);
    out.p_value = student_t_two_sided(t, dof);
  }
  return out;
}

std::vector<bool> benjamini_hochberg(const std::vector<double>& p, double q) {
  require(!p.empty(), "Benjamini-Hochberg needs at least one p-value");
  require(q > 0.0 && q <= 1.0, "FDR level q must lie in (0, 1]");
  for (double v : p) require(v >= 0.0 && v <= 1.0, "p-values must lie in [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::size_t k = 0;  // number rejected
  for (std::size_t rank = m; rank >= 1; --rank) {
    if (p[order[rank - 1]] <= static_cast<double>(rank) * q / static_cast<double>(m)) {
      k = rank;
      break;
    }
  }
  std::vector<bool> reject(m, false);
  if (k == 0) return reject;
  const double cutoff = p[order[k - 1]];
  for (std::size_t i = 0; i < m; ++i) reject[i] = p[i] <= cutoff;
  return reject;
}

const char* to_string(Direction d) {
  return d == Direction::PositiveClass ? "positive-class" : "negative-class";
}

CorrelationReport linguistic_analysis(const Matrix& features,
                                      const std::vector<std::string>& names,
                                      const std::vector<int>& labels, double q) {
  require_dim("feature names (C)", features.cols(), static_cast<long>(names.size()));
  require_dim("labels (n)", features.rows(), static_cast<long>(labels.size()));
  require(q > 0.0 && q <= 1.0, "FDR level q must lie in (0, 1]");
  CorrelationReport rep;
  rep.q = q;
  std::vector<double> column(static_cast<std::size_t>(features.rows()));
  for (Index c = 0; c < features.cols(); ++c) {
    for (Index i = 0; i < features.rows(); ++i)
      column[static_cast<std::size_t>(i)] = features(i, c);
    const auto& name = names[static_cast<std::size_t>(c)];
    bool constant = true;
    for (double v : column) constant = constant && v == column.front();
    if (constant) {
      rep.undefined.push_back(name);
      continue;
    }
    const PointBiserial pb = point_biserial(column, labels);
    CorrelationRow row;
    row.feature = name;
    row.r = pb.r;
    row.p_value = pb.p_value;
    row.direction = pb.r > 0 ? Direction::PositiveClass : Direction::NegativeClass;
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty()) {
    std::vector<double> ps;
    for (const auto& r : rep.rows) ps.push_back(r.p_value);
    const auto flags = benjamini_hochberg(ps, q);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) rep.rows[i].significant = flags[i];
  }
  std::sort(rep.rows.begin(), rep.rows.end(),
            [](const CorrelationRow& a, const CorrelationRow& b) {
              const double fa = std::abs(a.r), fb = std::abs(b.r);
              if (fa != fb) return fa > fb;
              return a.feature < b.feature;
            });
  return rep;
}

std::string correlation_report_csv(const CorrelationReport& report) {
  std::string out =
      csv_row({"class_direction", "feature", "correlation", "p_value", "significant"});
  for (const auto& r : report.rows)
    out += csv_row({to_string(r.direction), r.feature, format_double(r.r),
                    format_double(r.p_value), r.significant ? "true" : "false"});
  for (const auto& name : report.undefined)
    out += csv_row({"undefined", name, "NA", "NA", "false"});
  return out;
}

}  // namespace calfuse
